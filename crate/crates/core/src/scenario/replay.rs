use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{CYCLES_LOG, TELEMETRY_LOG, TRANSITIONS_LOG};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Replay {
    Identical,
    Divergent { log: String, line: u64, cycle: u64 },
}

/// Leading cycle number of a log line: the first CSV field, or the
/// `"cycle"` member of a JSON record.
fn cycle_of(line: &str) -> u64 {
    if line.starts_with('{') {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(line) {
            return v.get("cycle").and_then(|c| c.as_u64()).unwrap_or(0);
        }
    }
    line.split(',')
        .next()
        .and_then(|f| f.trim().parse().ok())
        .unwrap_or(0)
}

/// Line-by-line byte comparison of two logs.
pub fn replay_check(a: &Path, b: &Path) -> std::io::Result<Replay> {
    let open = |p: &Path| std::fs::File::open(p).map(BufReader::new);
    let mut la = open(a)?.lines();
    let mut lb = open(b)?.lines();
    let mut n = 0;
    loop {
        n += 1;
        match (la.next().transpose()?, lb.next().transpose()?) {
            (None, None) => return Ok(Replay::Identical),
            (Some(x), Some(y)) if x == y => continue,
            (x, y) => {
                let cycle = match (&x, &y) {
                    (Some(x), Some(y)) => cycle_of(x).min(cycle_of(y)),
                    (Some(l), None) | (None, Some(l)) => cycle_of(l),
                    (None, None) => unreachable!(),
                };
                let log = a
                    .file_name()
                    .map_or_else(String::new, |f| f.to_string_lossy().into_owned());
                return Ok(Replay::Divergent {
                    log,
                    line: n,
                    cycle,
                });
            }
        }
    }
}

/// Compares the telemetry, transition and cycle logs of two run
/// directories; reports the earliest divergent cycle across them.
pub fn replay_check_dirs(a: &Path, b: &Path) -> std::io::Result<Replay> {
    let mut first: Option<Replay> = None;
    for name in [TELEMETRY_LOG, TRANSITIONS_LOG, CYCLES_LOG] {
        let r = replay_check(&a.join(name), &b.join(name))?;
        if let Replay::Divergent { cycle, .. } = r {
            let earlier = match &first {
                Some(Replay::Divergent { cycle: c, .. }) => cycle < *c,
                _ => true,
            };
            if earlier {
                first = Some(r);
            }
        }
    }
    Ok(first.unwrap_or(Replay::Identical))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn identical_divergent_and_truncated() {
        let d = tempfile::tempdir().unwrap();
        let a = write(d.path(), "a", "1,x,1\n2,x,2\n3,x,3\n");
        let b = write(d.path(), "b", "1,x,1\n2,x,2\n3,x,3\n");
        let c = write(d.path(), "c", "1,x,1\n2,x,9\n3,x,3\n");
        let t = write(d.path(), "t", "1,x,1\n");
        assert_eq!(replay_check(&a, &b).unwrap(), Replay::Identical);
        assert_eq!(
            replay_check(&a, &c).unwrap(),
            Replay::Divergent {
                log: "a".into(),
                line: 2,
                cycle: 2
            }
        );
        assert_eq!(
            replay_check(&a, &t).unwrap(),
            Replay::Divergent {
                log: "a".into(),
                line: 2,
                cycle: 2
            }
        );
    }

    #[test]
    fn json_lines_report_their_cycle() {
        assert_eq!(cycle_of(r#"{"cycle":17,"sim_time_s":17.0}"#), 17);
    }

    #[test]
    fn unreadable_log_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        assert!(replay_check(&d.path().join("nope"), &d.path().join("nope2")).is_err());
    }
}
