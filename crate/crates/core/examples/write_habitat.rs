//! Regenerates the shipped habitat model, diagnosis model and scenarios.
//!
//! `cargo run -p vsm-core --example write_habitat [DIR]` (default `scenarios/`).

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from("scenarios"), PathBuf::from);
    std::fs::create_dir_all(&dir)?;
    for (name, text) in vsm_core::habitat::shipped_files() {
        std::fs::write(dir.join(&name), text)?;
        println!("wrote {}", dir.join(&name).display());
    }
    Ok(())
}
