use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use super::Scenario;
use crate::orchestrator::{
    CycleReport, MissionLedger, OperatorAction, ReplanRecord, Vsm, VsmError, VsmSnapshot,
};
use crate::sim::{Command, FaultInjection, SensorFrame, SimError, SimState};

pub const TELEMETRY_LOG: &str = "telemetry.csv";
pub const TRANSITIONS_LOG: &str = "transitions.csv";
pub const CYCLES_LOG: &str = "cycles.jsonl";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Vsm(#[from] VsmError),
    #[error("override `{key}`: {message}")]
    Override { key: String, message: String },
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub duration_s: Option<f64>,
    pub out_dir: PathBuf,
    /// `VsmConfig` overrides applied after the scenario's own.
    pub overrides: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExitStatus {
    Ok,
    /// A component panicked and was degraded.
    ComponentFailure,
    DiagnosisProblems,
    ValidatorViolations,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Ok => 0,
            ExitStatus::ComponentFailure => 1,
            ExitStatus::DiagnosisProblems => 2,
            ExitStatus::ValidatorViolations => 3,
        }
    }

    fn from_ledger(ledger: &MissionLedger, degraded: bool) -> Self {
        if ledger.diagnosis_problems > 0 {
            ExitStatus::DiagnosisProblems
        } else if ledger.validator_violations > 0 {
            ExitStatus::ValidatorViolations
        } else if degraded {
            ExitStatus::ComponentFailure
        } else {
            ExitStatus::Ok
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub solves: u64,
    pub total_nodes: u64,
    pub max_nodes: u64,
    pub by_status: BTreeMap<String, u64>,
}

impl SolverStats {
    fn add(&mut self, r: &ReplanRecord) {
        self.solves += 1;
        self.total_nodes += r.nodes;
        self.max_nodes = self.max_nodes.max(r.nodes);
        *self.by_status.entry(r.status.clone()).or_default() += 1;
    }
}

/// Frames from fault activation to the first fault event naming the mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsolationLatency {
    pub fault_mode_id: String,
    pub at_time_s: f64,
    pub active_cycle: Option<u64>,
    pub confirmed_cycle: Option<u64>,
    pub latency_cycles: Option<u64>,
    pub latency_wall_us: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ComponentTiming {
    pub mean_us: f64,
    pub max_us: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WallStats {
    pub total_s: f64,
    pub cycle_mean_us: f64,
    pub cycle_p99_us: f64,
    pub cycle_max_us: f64,
    pub components: BTreeMap<String, ComponentTiming>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LogLines {
    pub telemetry: u64,
    pub transitions: u64,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub duration_s: f64,
    pub exit_code: i32,
    pub exit_status: ExitStatus,
    pub ledger: MissionLedger,
    pub degraded: Vec<String>,
    pub initial_plan: ReplanRecord,
    pub solver: SolverStats,
    pub isolation_latency: Vec<IsolationLatency>,
    pub log_lines: LogLines,
    pub wall: WallStats,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub telemetry: PathBuf,
    pub transitions: PathBuf,
    pub cycles: PathBuf,
    pub metrics_file: PathBuf,
    pub metrics: Metrics,
}

impl RunArtifacts {
    pub fn exit_status(&self) -> ExitStatus {
        self.metrics.exit_status
    }
}

struct Log {
    path: PathBuf,
    w: BufWriter<File>,
    lines: u64,
}

impl Log {
    fn create(dir: &Path, name: &str) -> Result<Self, RunError> {
        let path = dir.join(name);
        let f = File::create(&path).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self {
            path,
            w: BufWriter::new(f),
            lines: 0,
        })
    }

    fn line(&mut self, s: &str) -> Result<(), RunError> {
        self.lines += 1;
        writeln!(self.w, "{s}").map_err(|source| RunError::Io {
            path: self.path.display().to_string(),
            source,
        })
    }

    fn flush(&mut self) -> Result<(), RunError> {
        self.w.flush().map_err(|source| RunError::Io {
            path: self.path.display().to_string(),
            source,
        })
    }
}

struct Tracked {
    latency: IsolationLatency,
    wall_since_active_us: f64,
}

/// One scenario execution, advanced a cycle at a time.
pub struct Run {
    name: String,
    seed: u64,
    duration_s: f64,
    dt_s: f64,
    out_dir: PathBuf,
    sim: SimState,
    vsm: Vsm,
    commands: Vec<Command>,
    telemetry: Log,
    transitions: Log,
    cycles: Log,
    tracked: Vec<Tracked>,
    solver: SolverStats,
    cycle_wall_us: Vec<f64>,
    component_wall: BTreeMap<String, (u64, f64, f64)>,
    started: Instant,
    last_frame: Option<SensorFrame>,
}

impl Run {
    pub fn new(scenario: &Scenario, opts: &RunOptions) -> Result<Self, RunError> {
        let started = Instant::now();
        let mut cfg = scenario.config.clone();
        for (key, value) in &opts.overrides {
            cfg.set(key, value).map_err(|message| RunError::Override {
                key: key.clone(),
                message,
            })?;
        }
        let seed = opts.seed.unwrap_or(scenario.seed);
        let duration_s = opts.duration_s.unwrap_or(scenario.duration_s);
        std::fs::create_dir_all(&opts.out_dir).map_err(|source| RunError::Io {
            path: opts.out_dir.display().to_string(),
            source,
        })?;
        let models = &scenario.models;
        let mut sim = SimState::new(
            models.habitat.clone(),
            std::sync::Arc::new(models.diagnosis.catalog.clone()),
            seed,
        );
        let mut tracked = Vec::new();
        for inj in &scenario.injections {
            sim.inject_fault(inj.clone())?;
            tracked.push(Self::track(inj));
        }
        let vsm = Vsm::new(models, cfg, scenario.dt_s)?;
        let mut solver = SolverStats::default();
        solver.add(vsm.initial_replan());
        Ok(Self {
            name: scenario.name.clone(),
            seed,
            duration_s,
            dt_s: scenario.dt_s,
            out_dir: opts.out_dir.clone(),
            sim,
            vsm,
            commands: Vec::new(),
            telemetry: Log::create(&opts.out_dir, TELEMETRY_LOG)?,
            transitions: Log::create(&opts.out_dir, TRANSITIONS_LOG)?,
            cycles: Log::create(&opts.out_dir, CYCLES_LOG)?,
            tracked,
            solver,
            cycle_wall_us: Vec::new(),
            component_wall: BTreeMap::new(),
            started,
            last_frame: None,
        })
    }

    fn track(inj: &FaultInjection) -> Tracked {
        Tracked {
            latency: IsolationLatency {
                fault_mode_id: inj.fault_mode_id.clone(),
                at_time_s: inj.at_time_s,
                active_cycle: None,
                confirmed_cycle: None,
                latency_cycles: None,
                latency_wall_us: None,
            },
            wall_since_active_us: 0.0,
        }
    }

    pub fn is_done(&self) -> bool {
        self.sim.time_s() + self.dt_s * 1e-6 >= self.duration_s
    }

    pub fn vsm(&self) -> &Vsm {
        &self.vsm
    }

    pub fn vsm_mut(&mut self) -> &mut Vsm {
        &mut self.vsm
    }

    pub fn sim(&self) -> &SimState {
        &self.sim
    }

    pub fn last_frame(&self) -> Option<&SensorFrame> {
        self.last_frame.as_ref()
    }

    pub fn snapshot(&self) -> VsmSnapshot {
        self.vsm.snapshot()
    }

    /// Injects a fault that becomes active on the next frame.
    pub fn inject_now(&mut self, fault_mode_id: &str) -> Result<(), RunError> {
        let inj = FaultInjection::new(fault_mode_id, self.sim.time_s() + self.dt_s);
        self.sim.inject_fault(inj.clone())?;
        self.tracked.push(Self::track(&inj));
        self.vsm.note_operator_injection();
        Ok(())
    }

    pub fn operator(&mut self, action: OperatorAction) {
        self.vsm.operator(action);
    }

    /// Advances the simulator one step and runs one autonomy cycle.
    pub fn step(&mut self) -> Result<CycleReport, RunError> {
        let t0 = Instant::now();
        let commands = std::mem::take(&mut self.commands);
        let frame = self.sim.step(self.dt_s, &commands, &[])?;
        let mut report = self.vsm.run_cycle(&frame);
        report.warnings.extend(self.sim.take_warnings());
        for r in &frame.rejected_commands {
            report.warnings.push(format!(
                "command {} {} rejected: {}",
                r.command.target,
                r.command.action.as_str(),
                r.reason
            ));
        }
        self.commands = report.commands.clone();
        let wall_us = t0.elapsed().as_secs_f64() * 1e6;

        for (id, v, _) in frame.iter() {
            let line = format!(
                "{},{},{},{}",
                frame.cycle,
                fmt_sig9(frame.sim_time_s),
                id,
                fmt_sig9(v)
            );
            self.telemetry.line(&line)?;
        }
        for t in &report.transitions {
            self.transitions.line(&t.log_line())?;
        }
        self.cycles.line(&report.to_json_line())?;

        self.cycle_wall_us.push(wall_us);
        for (name, us) in &self.vsm.last_timing().per_component_us {
            let e = self
                .component_wall
                .entry(name.clone())
                .or_insert((0, 0.0, 0.0));
            e.0 += 1;
            e.1 += us;
            e.2 = e.2.max(*us);
        }
        if let Some(r) = &report.replan {
            self.solver.add(r);
        }
        for tr in &mut self.tracked {
            let l = &mut tr.latency;
            if l.active_cycle.is_none() && frame.sim_time_s + 1e-9 >= l.at_time_s {
                l.active_cycle = Some(frame.cycle);
            }
            let Some(active) = l.active_cycle else {
                continue;
            };
            if l.confirmed_cycle.is_some() {
                continue;
            }
            tr.wall_since_active_us += wall_us;
            let named = report.fault.as_ref().is_some_and(|f| {
                f.group.contains(&l.fault_mode_id)
                    || f.diagnoses.iter().flatten().any(|m| m == &l.fault_mode_id)
            });
            if named {
                l.confirmed_cycle = Some(frame.cycle);
                l.latency_cycles = Some(frame.cycle - active);
                l.latency_wall_us = Some(tr.wall_since_active_us);
            }
        }
        self.last_frame = Some(frame);
        Ok(report)
    }

    /// Runs to the end of the scenario, invoking `each` after every cycle.
    pub fn run_to_end(
        mut self,
        mut each: impl FnMut(&CycleReport),
    ) -> Result<RunArtifacts, RunError> {
        while !self.is_done() {
            let r = self.step()?;
            each(&r);
        }
        self.finish()
    }

    pub fn metrics(&self) -> Metrics {
        let ledger = self.vsm.ledger().clone();
        let degraded = self.vsm.snapshot().degraded;
        let status = ExitStatus::from_ledger(&ledger, !degraded.is_empty());
        let mut sorted = self.cycle_wall_us.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let wall = WallStats {
            total_s: self.started.elapsed().as_secs_f64(),
            cycle_mean_us: if n == 0 {
                0.0
            } else {
                sorted.iter().sum::<f64>() / n as f64
            },
            cycle_p99_us: if n == 0 {
                0.0
            } else {
                sorted[((n as f64 * 0.99).ceil() as usize).clamp(1, n) - 1]
            },
            cycle_max_us: sorted.last().copied().unwrap_or(0.0),
            components: self
                .component_wall
                .iter()
                .map(|(k, &(c, sum, max))| {
                    (
                        k.clone(),
                        ComponentTiming {
                            mean_us: sum / c as f64,
                            max_us: max,
                        },
                    )
                })
                .collect(),
        };
        Metrics {
            scenario: self.name.clone(),
            seed: self.seed,
            duration_s: self.duration_s,
            exit_code: status.code(),
            exit_status: status,
            ledger,
            degraded,
            initial_plan: self.vsm.initial_replan().clone(),
            solver: self.solver.clone(),
            isolation_latency: self.tracked.iter().map(|t| t.latency.clone()).collect(),
            log_lines: LogLines {
                telemetry: self.telemetry.lines,
                transitions: self.transitions.lines,
                cycles: self.cycles.lines,
            },
            wall,
        }
    }

    /// Flushes the logs and writes the metrics summary.
    pub fn finish(mut self) -> Result<RunArtifacts, RunError> {
        self.telemetry.flush()?;
        self.transitions.flush()?;
        self.cycles.flush()?;
        let metrics = self.metrics();
        let metrics_file = self.out_dir.join(METRICS_FILE);
        let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
        std::fs::write(&metrics_file, json + "\n").map_err(|source| RunError::Io {
            path: metrics_file.display().to_string(),
            source,
        })?;
        Ok(RunArtifacts {
            telemetry: self.telemetry.path.clone(),
            transitions: self.transitions.path.clone(),
            cycles: self.cycles.path.clone(),
            metrics_file,
            metrics,
        })
    }
}

/// Decimal rendering with exactly nine significant digits.
pub fn fmt_sig9(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.8e}", v);
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = mantissa
        .strip_prefix('-')
        .map_or(("", mantissa), |m| ("-", m));
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let point = exp + 1;
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        format!(
            "{}.{}",
            &digits[..point as usize],
            &digits[point as usize..]
        )
    };
    format!("{sign}{body}")
}
