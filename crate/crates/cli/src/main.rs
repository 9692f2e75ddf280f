use std::fs::File;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vsm_cli::gateway::{self, Shared};
use vsm_core::diagnosis::DiagnosisModel;
use vsm_core::isolation::{bench::bench_isolation, isolate, isolate_multi, parse_results};
use vsm_core::scenario::{
    parse_scenario, replay_check, replay_check_dirs, Replay, Run, RunArtifacts, RunOptions,
};
use vsm_core::scheduler::{parse_problem, render_schedule, solve, SolveBudget};

#[derive(Parser)]
#[command(name = "vsm", version, about = "Habitat vehicle system manager")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write telemetry, transition, cycle and metrics files.
    Run(RunArgs),
    /// Solve a scheduling problem file and print the schedule.
    Solve {
        problem: PathBuf,
        /// Search node budget.
        #[arg(long, default_value_t = SolveBudget::default().max_nodes)]
        max_nodes: u64,
    },
    /// Isolate faults from a D-matrix model and a test results file.
    Diagnose {
        model: PathBuf,
        results: PathBuf,
        /// Largest multi-fault diagnosis to search for.
        #[arg(long, default_value_t = 2)]
        max_cardinality: usize,
    },
    /// Compare two logs, or the logs of two run directories.
    ReplayCheck { a: PathBuf, b: PathBuf },
    /// Time isolation against a synthetic D-matrix.
    BenchIsolation {
        #[arg(long, default_value_t = 3500)]
        modes: usize,
        #[arg(long, default_value_t = 2500)]
        tests: usize,
        #[arg(long, default_value_t = 300)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Serve the operator gateway on this port.
    #[arg(long)]
    serve: Option<u16>,
    /// Simulated seconds per wall second while serving; 0 runs unpaced.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Exit once the run ends instead of serving until interrupted.
    #[arg(long)]
    exit_when_done: bool,
    /// Configuration override, `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Make a component panic at a simulated time, `component@seconds`.
    #[arg(long, hide = true)]
    sabotage: Option<String>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match std::panic::catch_unwind(|| dispatch(cli)) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            1
        }
        Err(_) => 1,
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Solve { problem, max_nodes } => {
            let text = read(&problem)?;
            let p = parse_problem(&problem.display().to_string(), &text)?;
            let result = solve(&p, SolveBudget::nodes(max_nodes))?;
            print!("{}", render_schedule(&p, &result));
            Ok(if result.schedule.is_some() { 0 } else { 1 })
        }
        Command::Diagnose {
            model,
            results,
            max_cardinality,
        } => {
            let dm = DiagnosisModel::parse(&model.display().to_string(), &read(&model)?)?.dmatrix;
            let r = parse_results(&dm, &results.display().to_string(), &read(&results)?)?;
            let out = serde_json::json!({
                "isolation": isolate(&dm, &r),
                "diagnoses": isolate_multi(&dm, &r, max_cardinality),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(0)
        }
        Command::ReplayCheck { a, b } => {
            let verdict = if a.is_dir() && b.is_dir() {
                replay_check_dirs(&a, &b)
            } else {
                replay_check(&a, &b)
            }
            .with_context(|| format!("comparing {} and {}", a.display(), b.display()))?;
            match verdict {
                Replay::Identical => {
                    println!("IDENTICAL");
                    Ok(0)
                }
                Replay::Divergent { log, line, cycle } => {
                    println!("DIVERGENT at cycle {cycle} ({log} line {line})");
                    Ok(1)
                }
            }
        }
        Command::BenchIsolation {
            modes,
            tests,
            frames,
            seed,
        } => {
            if modes == 0 || tests == 0 {
                bail!("--modes and --tests must be positive");
            }
            let r = bench_isolation(modes, tests, frames, seed);
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(0)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    let scenario = parse_scenario(&args.scenario)?;
    let overrides = args
        .overrides
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .with_context(|| format!("--set expects key=value, got `{kv}`"))
        })
        .collect::<Result<Vec<_>>>()?;
    let sabotage = match &args.sabotage {
        Some(s) => {
            let (name, at) = s
                .split_once('@')
                .context("--sabotage expects component@seconds")?;
            Some((
                name.to_string(),
                at.parse::<f64>().context("--sabotage time")?,
            ))
        }
        None => None,
    };
    let opts = RunOptions {
        seed: args.seed,
        duration_s: args.duration,
        out_dir: args.out.clone(),
        overrides,
    };
    let mut run = Run::new(&scenario, &opts)?;

    let artifacts = match args.serve {
        None => {
            let mut sabotage = sabotage;
            while !run.is_done() {
                if let Some((name, _)) = sabotage
                    .as_ref()
                    .filter(|(_, at)| run.sim().time_s() >= *at)
                {
                    run.vsm_mut().sabotage(name);
                    sabotage = None;
                }
                run.step()?;
            }
            let artifacts = run.finish()?;
            summarize(&artifacts);
            artifacts
        }
        Some(port) => {
            if let Some((name, _)) = sabotage {
                run.vsm_mut().sabotage(&name);
            }
            serve(run, port, &args)?
        }
    };
    Ok(artifacts.metrics.exit_code)
}

fn serve(run: Run, port: u16, args: &RunArgs) -> Result<RunArtifacts> {
    let access = File::create(args.out.join("access.log")).context("creating access log")?;
    let (shared, actions) = Shared::new(&run, Some(access));
    let rt = tokio::runtime::Runtime::new()?;
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let listener = rt
        .block_on(tokio::net::TcpListener::bind(addr))
        .with_context(|| format!("binding {addr}"))?;
    eprintln!("gateway listening on http://{}", listener.local_addr()?);
    let app = gateway::router(Arc::clone(&shared));
    let server = rt.spawn(async move { axum::serve(listener, app).await });

    let pace = (args.speed > 0.0).then(|| Duration::from_secs_f64(1.0 / args.speed));
    let artifacts = gateway::drive(run, &shared, &actions, pace)?;
    summarize(&artifacts);
    if !args.exit_when_done {
        eprintln!("run complete; serving until interrupted");
        rt.block_on(async {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                r = server => { r??; }
            }
            anyhow::Ok(())
        })?;
    }
    Ok(artifacts)
}

fn summarize(a: &RunArtifacts) {
    let m = &a.metrics;
    let l = &m.ledger;
    println!(
        "{} seed={} frames={} faults={} replans={}+{} (failed {}) commands={} status={:?} exit={}",
        m.scenario,
        m.seed,
        l.frames_processed,
        l.faults_confirmed,
        l.replans_periodic,
        l.replans_event,
        l.replans_failed,
        l.commands_issued,
        m.exit_status,
        m.exit_code,
    );
    println!(
        "artifacts: {}",
        a.metrics_file.parent().unwrap_or(Path::new(".")).display()
    );
}
