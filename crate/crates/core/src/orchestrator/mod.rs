//! The autonomy loop. Each frame is published on the bus and the components
//! are stepped once, in registration order:
//!
//! `anomaly → fdir → impacts → estimator → executive → planner`
//!
//! FDIR evaluates and debounces the D-matrix tests and isolates; impacts
//! reacts to confirmed faults; the estimator advances on the commands the
//! simulator applied this frame (published by the executive last cycle);
//! the executive runs one macro-step; the planner checks the replan trigger
//! and publishes a new plan, which the executive loads next cycle.
//! Commands leave through an external bridge subscription and are applied
//! by the simulator on the next step.
//!
//! A component that panics is flagged degraded and skipped from then on;
//! the cycle still completes.

mod config;
mod monitor;
mod planner;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::anomaly::{Score, Verdict};
use crate::bus::{Bus, BusError, ComponentId, Kinded, Message, Outbox};
use crate::diagnosis::DiagnosisModel;
use crate::estimator::{self, CandidateSet, TransitionModel};
use crate::executive::{Executive, FrameLookup, NodeState, NodeTransition, PlanTree};
use crate::expr::EvalContext;
use crate::impacts::ImpactReport;
use crate::isolation::{
    isolate, isolate_multi, AmbiguityGroup, Debouncer, Isolation, TestEvaluator, TestResults,
};
use crate::scheduler::ConstraintSet;
use crate::sim::{Command, EffectKind, HabitatModel, SensorFrame};

pub use config::VsmConfig;
pub use monitor::{AnomalySettings, Monitor};
pub use planner::{
    replan_trigger, respond_to_fault, Accommodation, DecisionKind, Disposition, PlanDecision,
    PlanProposal, Planner, ReplanRecord, Trigger,
};

/// Everything the loop needs besides its settings.
#[derive(Clone)]
pub struct VsmModels {
    pub habitat: Arc<HabitatModel>,
    pub diagnosis: Arc<DiagnosisModel>,
    pub constraints: ConstraintSet,
    pub transitions: Option<TransitionModel>,
    pub anomaly: Option<AnomalySettings>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultStatus {
    /// Single-fault isolation produced an ambiguity group.
    Isolated,
    /// No single mode explains the tests; minimal multi-fault diagnoses.
    Multiple,
    /// No diagnosis within the cardinality bound explains the tests.
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultEvent {
    pub cycle: u64,
    pub sim_time_s: f64,
    pub status: FaultStatus,
    pub group: AmbiguityGroup,
    pub diagnoses: Vec<Vec<String>>,
    pub failed_tests: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyEvent {
    pub cycle: u64,
    pub sim_time_s: f64,
    pub delta: f64,
    pub threshold: f64,
    pub empirical_quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeEstimate {
    pub cycle: u64,
    /// Components whose best-candidate mode is a fault mode.
    pub faulted: BTreeMap<String, String>,
    pub fault_count: u32,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanRequest {
    pub cycle: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum OperatorAction {
    Approve { plan_id: String },
    Hold { plan_id: String },
    Session { attached: bool },
}

#[derive(Debug, Clone)]
pub enum Payload {
    Telemetry(SensorFrame),
    Anomaly(AnomalyEvent),
    TestResults(TestResults),
    Fault(FaultEvent),
    Impacts(ImpactReport),
    Estimate(ModeEstimate),
    PlanRequest(PlanRequest),
    Plan(PlanTree),
    Proposal(PlanProposal),
    Commands(Vec<Command>),
    Transitions(Vec<NodeTransition>),
    Operator(OperatorAction),
}

impl Kinded for Payload {
    fn kind(&self) -> &'static str {
        match self {
            Payload::Telemetry(_) => "TelemetryFrame",
            Payload::Anomaly(_) => "AnomalyEvent",
            Payload::TestResults(_) => "TestResults",
            Payload::Fault(_) => "FaultEvent",
            Payload::Impacts(_) => "ImpactReport",
            Payload::Estimate(_) => "ModeEstimate",
            Payload::PlanRequest(_) => "PlanRequest",
            Payload::Plan(_) => "PlanTree",
            Payload::Proposal(_) => "PlanProposal",
            Payload::Commands(_) => "Command",
            Payload::Transitions(_) => "NodeTransition",
            Payload::Operator(_) => "OperatorAction",
        }
    }
}

const TOPICS: [(&str, &str); 12] = [
    ("telemetry", "TelemetryFrame"),
    ("anomaly", "AnomalyEvent"),
    ("test_results", "TestResults"),
    ("faults", "FaultEvent"),
    ("impacts", "ImpactReport"),
    ("mode_estimate", "ModeEstimate"),
    ("plan_request", "PlanRequest"),
    ("plan", "PlanTree"),
    ("proposal", "PlanProposal"),
    ("commands", "Command"),
    ("transitions", "NodeTransition"),
    ("operator", "OperatorAction"),
];

/// Monotone mission counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MissionLedger {
    pub frames_processed: u64,
    /// Fault events naming at least one newly confirmed mode.
    pub faults_confirmed: u64,
    pub replans_periodic: u64,
    pub replans_event: u64,
    /// Replans that left the current plan in force.
    pub replans_failed: u64,
    pub plans_committed: u64,
    pub commands_issued: u64,
    pub transitions: u64,
    pub operator_actions: u64,
    pub anomaly_events: u64,
    /// INCONSISTENT isolations and EXHAUSTED estimator steps.
    pub diagnosis_problems: u64,
    pub validator_violations: u64,
}

/// Structured summary of one cycle, written as one JSON line.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CycleReport {
    pub cycle: u64,
    pub sim_time_s: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub operator: Vec<OperatorAction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anomaly: Option<Score>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anomaly_event: Option<AnomalyEvent>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failed_tests: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub impacts: Option<ImpactReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<ModeEstimate>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub estimator_disagrees: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub commands: Vec<Command>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub transitions: Vec<NodeTransition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan_request: Option<PlanRequest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replan: Option<ReplanRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposal: Option<PlanProposal>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub plan_decisions: Vec<PlanDecision>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub degraded: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub deliveries: usize,
}

impl CycleReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("cycle reports always serialize")
    }
}

/// Wall time spent in each component during the last cycle, microseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CycleTiming {
    pub per_component_us: BTreeMap<String, f64>,
}

struct FrameCtx<'a>(&'a SensorFrame);

impl EvalContext for FrameCtx<'_> {
    fn lookup(&self, param: &str) -> Option<f64> {
        self.0.fresh(param)
    }
    fn time(&self) -> f64 {
        self.0.sim_time_s
    }
}

struct Cx<'a> {
    frame: &'a SensorFrame,
    report: CycleReport,
    ledger: &'a mut MissionLedger,
}

struct AnomalyComp {
    monitor: Monitor,
    anomalous: bool,
}

impl AnomalyComp {
    fn step(&mut self, cx: &mut Cx<'_>, out: &mut Outbox<Payload>) {
        let s = self.monitor.score(cx.frame);
        let now = s.verdict == Verdict::Anomaly;
        if now && !self.anomalous {
            cx.ledger.anomaly_events += 1;
            let event = AnomalyEvent {
                cycle: cx.frame.cycle,
                sim_time_s: cx.frame.sim_time_s,
                delta: s.delta,
                threshold: self.monitor.calibration.threshold_distance,
                empirical_quantile: s.empirical_quantile,
            };
            cx.report.anomaly_event = Some(event.clone());
            out.publish("anomaly", Payload::Anomaly(event));
        }
        self.anomalous = now;
        cx.report.anomaly = Some(s);
    }
}

struct Fdir {
    dm: Arc<DiagnosisModel>,
    evaluator: TestEvaluator,
    debouncer: Debouncer,
    max_cardinality: usize,
    last: Option<(FaultStatus, Vec<String>)>,
    confirmed: BTreeSet<String>,
}

impl Fdir {
    fn step(&mut self, cx: &mut Cx<'_>, out: &mut Outbox<Payload>) {
        let dm = &self.dm.dmatrix;
        let raw = self.evaluator.evaluate(&cx.frame.values, &cx.frame.stale);
        let results = self.debouncer.update(&raw);
        let failed: Vec<String> = results.failed().map(|t| dm.tests()[t].id.clone()).collect();
        let outcome = if failed.is_empty() {
            None
        } else {
            Some(match isolate(dm, &results) {
                Isolation::Group(g) => {
                    let diagnoses = g.modes.iter().map(|m| vec![m.clone()]).collect();
                    (FaultStatus::Isolated, g, diagnoses)
                }
                _ => {
                    let diagnoses = isolate_multi(dm, &results, self.max_cardinality);
                    let all: BTreeSet<String> = diagnoses.iter().flatten().cloned().collect();
                    let status = if diagnoses.is_empty() {
                        FaultStatus::Inconsistent
                    } else {
                        FaultStatus::Multiple
                    };
                    (
                        status,
                        AmbiguityGroup::new(all.into_iter().collect()),
                        diagnoses,
                    )
                }
            })
        };
        let key = outcome.as_ref().map(|(s, g, _)| (*s, g.modes.clone()));
        if key != self.last {
            if let Some((status, group, diagnoses)) = outcome {
                let fresh = group
                    .modes
                    .iter()
                    .filter(|m| self.confirmed.insert((*m).clone()))
                    .count();
                if fresh > 0 {
                    cx.ledger.faults_confirmed += 1;
                }
                if status == FaultStatus::Inconsistent {
                    cx.ledger.diagnosis_problems += 1;
                }
                let event = FaultEvent {
                    cycle: cx.frame.cycle,
                    sim_time_s: cx.frame.sim_time_s,
                    status,
                    group,
                    diagnoses,
                    failed_tests: failed.clone(),
                };
                cx.report.fault = Some(event.clone());
                out.publish("faults", Payload::Fault(event));
            }
            self.last = key;
        }
        cx.report.failed_tests = failed;
        out.publish("test_results", Payload::TestResults(results));
    }
}

struct ImpactsComp {
    dm: Arc<DiagnosisModel>,
    latched: BTreeSet<String>,
}

impl ImpactsComp {
    fn step(&mut self, cx: &mut Cx<'_>, inbox: &[Message<Payload>], out: &mut Outbox<Payload>) {
        let mut any = false;
        for m in inbox {
            if let Payload::Fault(e) = &*m.payload {
                self.latched.extend(e.group.modes.iter().cloned());
                any = true;
            }
        }
        if !any {
            return;
        }
        let failed = self.dm.lost_components(&self.latched);
        match self.dm.graph.report(&failed) {
            Ok(r) => {
                cx.report.impacts = Some(r.clone());
                out.publish("impacts", Payload::Impacts(r));
            }
            Err(e) => cx.report.warnings.push(format!("impacts: {e}")),
        }
    }
}

struct EstimatorComp {
    model: TransitionModel,
    set: CandidateSet,
    budget: usize,
    fault_modes: Vec<BTreeSet<usize>>,
    dm: Arc<DiagnosisModel>,
    confirmed: BTreeSet<String>,
    last: Option<(BTreeMap<String, String>, u32)>,
    exhausted: bool,
}

impl EstimatorComp {
    fn new(
        model: TransitionModel,
        cap: usize,
        budget: usize,
        dm: Arc<DiagnosisModel>,
    ) -> Result<Self, String> {
        let set = estimator::init(&model, &BTreeMap::new(), cap).map_err(|e| e.to_string())?;
        let fault_modes = model
            .components
            .iter()
            .map(|c| c.faults.iter().map(|&(_, to)| to).collect())
            .collect();
        Ok(Self {
            model,
            set,
            budget,
            fault_modes,
            dm,
            confirmed: BTreeSet::new(),
            last: None,
            exhausted: false,
        })
    }

    fn step(&mut self, cx: &mut Cx<'_>, inbox: &[Message<Payload>], out: &mut Outbox<Payload>) {
        let mut commands = Vec::new();
        for m in inbox {
            match &*m.payload {
                Payload::Commands(c) => commands.extend(c.iter().cloned()),
                Payload::Fault(e) => {
                    for mode in &e.group.modes {
                        if let Some(spec) = self.dm.catalog.get(mode) {
                            if matches!(
                                spec.effect,
                                EffectKind::StuckOn | EffectKind::StuckOff | EffectKind::BusTrip
                            ) {
                                self.confirmed.insert(spec.component.clone());
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        match estimator::advance(
            &self.model,
            &self.set,
            &commands,
            &FrameCtx(cx.frame),
            self.budget,
        ) {
            Ok(set) => {
                self.set = set;
                self.exhausted = false;
            }
            Err(e) => {
                if !self.exhausted {
                    cx.ledger.diagnosis_problems += 1;
                    cx.report.warnings.push(format!("estimator: {e}"));
                }
                self.exhausted = true;
            }
        }
        let Some((_, fault_count, best)) = estimator::best_diagnosis(&self.model, &self.set) else {
            return;
        };
        let faulted: BTreeMap<String, String> = self
            .model
            .components
            .iter()
            .enumerate()
            .filter(|(i, _)| self.fault_modes[*i].contains(&best.modes[*i]))
            .map(|(i, c)| (c.name.clone(), c.modes[best.modes[i]].clone()))
            .collect();
        let estimated: BTreeSet<&String> = faulted.keys().collect();
        cx.report.estimator_disagrees = estimated != self.confirmed.iter().collect();
        let key = Some((faulted.clone(), fault_count));
        if key != self.last {
            let est = ModeEstimate {
                cycle: cx.frame.cycle,
                faulted,
                fault_count,
                candidates: self.set.candidates.len(),
            };
            cx.report.estimate = Some(est.clone());
            out.publish("mode_estimate", Payload::Estimate(est));
            self.last = key;
        }
    }
}

struct ExecComp {
    exec: Executive,
}

impl ExecComp {
    fn step(&mut self, cx: &mut Cx<'_>, inbox: &[Message<Payload>], out: &mut Outbox<Payload>) {
        let cycle = cx.frame.cycle;
        let mut transitions = Vec::new();
        for m in inbox {
            if let Payload::Plan(tree) = &*m.payload {
                transitions.extend(self.exec.load_plan(tree.clone(), cycle));
            }
        }
        let was_running = self.exec.is_running();
        let step = self
            .exec
            .macro_step(cycle, &FrameLookup(cx.frame), cx.frame.sim_time_s);
        transitions.extend(step.transitions);
        let reason = if step.root_failed {
            Some("plan_failed")
        } else if was_running && step.halted.is_some() {
            Some("plan_halted")
        } else {
            None
        };
        if let Some(reason) = reason {
            let req = PlanRequest {
                cycle,
                reason: reason.into(),
            };
            cx.report.plan_request = Some(req.clone());
            out.publish("plan_request", Payload::PlanRequest(req));
        }
        cx.ledger.commands_issued += step.commands.len() as u64;
        cx.ledger.transitions += transitions.len() as u64;
        if !step.commands.is_empty() {
            out.publish("commands", Payload::Commands(step.commands.clone()));
        }
        if !transitions.is_empty() {
            out.publish("transitions", Payload::Transitions(transitions.clone()));
        }
        cx.report.commands = step.commands;
        cx.report.transitions = transitions;
    }
}

struct PlannerComp {
    planner: Planner,
}

impl PlannerComp {
    fn step(&mut self, cx: &mut Cx<'_>, inbox: &[Message<Payload>], out: &mut Outbox<Payload>) {
        let mut reasons = Vec::new();
        let mut approvals = Vec::new();
        for m in inbox {
            match &*m.payload {
                Payload::Fault(e) => {
                    if self.planner.note_fault(&e.group.modes) {
                        reasons.push(format!("fault {}", e.group.modes.join("|")));
                    }
                }
                Payload::Impacts(r) => {
                    if self.planner.note_impacts(r.lost.clone()) {
                        reasons.push("impacts".into());
                    }
                }
                Payload::PlanRequest(r) => reasons.push(r.reason.clone()),
                Payload::Operator(a) => match a {
                    OperatorAction::Approve { plan_id } => approvals.push((plan_id.clone(), true)),
                    OperatorAction::Hold { plan_id } => approvals.push((plan_id.clone(), false)),
                    OperatorAction::Session { attached } => self.planner.set_session(*attached),
                },
                _ => {}
            }
        }
        let result = self.planner.step(cx.frame, reasons, &approvals);
        if let Some(tree) = result.commit {
            cx.ledger.plans_committed += 1;
            out.publish("plan", Payload::Plan(tree));
        }
        if let Some(p) = result.proposal {
            cx.report.proposal = Some(p.clone());
            out.publish("proposal", Payload::Proposal(p));
        }
        if let Some(r) = &result.replan {
            match r.trigger {
                Trigger::Periodic => cx.ledger.replans_periodic += 1,
                Trigger::Event => cx.ledger.replans_event += 1,
                Trigger::None => {}
            }
            if r.disposition == Disposition::KeptCurrent {
                cx.ledger.replans_failed += 1;
            }
            cx.ledger.validator_violations += r.violations.len() as u64;
        }
        cx.report.replan = result.replan;
        cx.report.plan_decisions = result.decisions;
    }
}

struct Components {
    anomaly: Option<AnomalyComp>,
    fdir: Fdir,
    impacts: ImpactsComp,
    estimator: Option<EstimatorComp>,
    exec: ExecComp,
    planner: PlannerComp,
}

impl Components {
    fn step(
        &mut self,
        name: &str,
        cx: &mut Cx<'_>,
        inbox: &[Message<Payload>],
        out: &mut Outbox<Payload>,
    ) {
        match name {
            "anomaly" => {
                if let Some(a) = self.anomaly.as_mut() {
                    a.step(cx, out);
                }
            }
            "fdir" => self.fdir.step(cx, out),
            "impacts" => self.impacts.step(cx, inbox, out),
            "estimator" => {
                if let Some(e) = self.estimator.as_mut() {
                    e.step(cx, inbox, out);
                }
            }
            "executive" => self.exec.step(cx, inbox, out),
            "planner" => self.planner.step(cx, inbox, out),
            other => unreachable!("unregistered component `{other}`"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VsmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("anomaly training failed: {0}")]
    Anomaly(#[from] crate::anomaly::AnomalyError),
    #[error("mode estimator: {0}")]
    Estimator(String),
}

/// Read-only view for operator displays.
#[derive(Debug, Clone, Serialize)]
pub struct VsmSnapshot {
    pub cycle: u64,
    pub sim_time_s: f64,
    pub plan_id: Option<String>,
    pub node_states: Vec<(String, NodeState)>,
    pub active_faults: Vec<String>,
    pub last_fault: Option<FaultEvent>,
    pub last_impacts: Option<ImpactReport>,
    pub amendments: Vec<String>,
    pub pending_approval: Option<PlanProposal>,
    pub degraded: Vec<String>,
    pub ledger: MissionLedger,
}

pub struct Vsm {
    cfg: VsmConfig,
    bus: Bus<Payload>,
    names: Vec<&'static str>,
    order: Vec<ComponentId>,
    bridge: ComponentId,
    comps: Components,
    ledger: MissionLedger,
    degraded: Vec<String>,
    sabotage: Option<String>,
    operator_queue: Vec<OperatorAction>,
    timing: CycleTiming,
    initial_replan: ReplanRecord,
    last_cycle: (u64, f64),
    last_fault: Option<FaultEvent>,
    last_impacts: Option<ImpactReport>,
}

impl Vsm {
    /// Wires the components, trains the anomaly monitor and loads the
    /// initial plan.
    pub fn new(models: &VsmModels, cfg: VsmConfig, dt_s: f64) -> Result<Self, VsmError> {
        cfg.validate(dt_s).map_err(VsmError::Config)?;
        let mut bus = Bus::new(cfg.bus_budget);
        for (topic, kind) in TOPICS {
            bus.register_topic(topic, kind)?;
        }
        let subs: [(&'static str, &[&str]); 6] = [
            ("anomaly", &["telemetry"]),
            ("fdir", &["telemetry"]),
            ("impacts", &["faults"]),
            ("estimator", &["telemetry", "commands", "faults"]),
            ("executive", &["telemetry", "plan"]),
            (
                "planner",
                &["telemetry", "faults", "impacts", "plan_request", "operator"],
            ),
        ];
        let mut names = Vec::new();
        for (name, topics) in subs {
            let enabled = match name {
                "anomaly" => cfg.anomaly_enabled && models.anomaly.is_some(),
                "estimator" => cfg.estimator_enabled && models.transitions.is_some(),
                _ => true,
            };
            if !enabled {
                continue;
            }
            let id = bus.register_component(name)?;
            for t in topics {
                bus.subscribe(id, t)?;
            }
            names.push(name);
        }
        let bridge = bus.register_external("sim_bridge")?;
        bus.subscribe(bridge, "commands")?;
        let order = bus.stepped_components();

        let anomaly = match (&models.anomaly, names.contains(&"anomaly")) {
            (Some(s), true) => Some(AnomalyComp {
                monitor: Monitor::train(&models.habitat, s.clone())?,
                anomalous: false,
            }),
            _ => None,
        };
        let estimator = match (&models.transitions, names.contains(&"estimator")) {
            (Some(t), true) => Some(
                EstimatorComp::new(
                    t.clone(),
                    cfg.estimator_cap,
                    cfg.estimator_fault_budget,
                    models.diagnosis.clone(),
                )
                .map_err(VsmError::Estimator)?,
            ),
            _ => None,
        };
        let dict = models.habitat.param_dict();
        let dm = &models.diagnosis.dmatrix;
        let fdir = Fdir {
            dm: models.diagnosis.clone(),
            evaluator: TestEvaluator::new(dm, &dict),
            debouncer: Debouncer::new(dm.tests().len(), cfg.fault_debounce_frames),
            max_cardinality: cfg.max_fault_cardinality,
            last: None,
            confirmed: BTreeSet::new(),
        };
        let mut planner = Planner::new(
            models.habitat.clone(),
            models.constraints.clone(),
            Arc::new(models.diagnosis.catalog.clone()),
            cfg.clone(),
        );
        let (initial_replan, tree) = planner.initial_plan();
        let mut exec = Executive::new();
        let mut ledger = MissionLedger::default();
        if let Some(tree) = tree {
            exec.load_plan(tree, 0);
            ledger.plans_committed += 1;
        }
        ledger.validator_violations += initial_replan.violations.len() as u64;
        Ok(Self {
            cfg,
            bus,
            names,
            order,
            bridge,
            comps: Components {
                anomaly,
                fdir,
                impacts: ImpactsComp {
                    dm: models.diagnosis.clone(),
                    latched: BTreeSet::new(),
                },
                estimator,
                exec: ExecComp { exec },
                planner: PlannerComp { planner },
            },
            ledger,
            degraded: Vec::new(),
            sabotage: None,
            operator_queue: Vec::new(),
            timing: CycleTiming::default(),
            initial_replan,
            last_cycle: (0, 0.0),
            last_fault: None,
            last_impacts: None,
        })
    }

    pub fn config(&self) -> &VsmConfig {
        &self.cfg
    }

    /// Component names in step order.
    pub fn components(&self) -> &[&'static str] {
        &self.names
    }

    pub fn ledger(&self) -> &MissionLedger {
        &self.ledger
    }

    pub fn initial_replan(&self) -> &ReplanRecord {
        &self.initial_replan
    }

    pub fn last_timing(&self) -> &CycleTiming {
        &self.timing
    }

    pub fn executive(&self) -> &Executive {
        &self.comps.exec.exec
    }

    pub fn planner(&self) -> &Planner {
        &self.comps.planner.planner
    }

    /// Queues an operator action for the next cycle.
    pub fn operator(&mut self, action: OperatorAction) {
        self.operator_queue.push(action);
    }

    /// Counts an operator-initiated fault injection.
    pub fn note_operator_injection(&mut self) {
        self.ledger.operator_actions += 1;
    }

    /// Makes the named component panic on its next step.
    pub fn sabotage(&mut self, component: &str) {
        self.sabotage = Some(component.to_string());
    }

    pub fn snapshot(&self) -> VsmSnapshot {
        let exec = &self.comps.exec.exec;
        let node_states = exec
            .tree()
            .map(|t| {
                t.nodes
                    .iter()
                    .zip(exec.states())
                    .map(|(n, s)| (n.id.clone(), *s))
                    .collect()
            })
            .unwrap_or_default();
        let planner = &self.comps.planner.planner;
        VsmSnapshot {
            cycle: self.last_cycle.0,
            sim_time_s: self.last_cycle.1,
            plan_id: planner.current_plan().map(String::from),
            node_states,
            active_faults: planner.latched().iter().cloned().collect(),
            last_fault: self.last_fault.clone(),
            last_impacts: self.last_impacts.clone(),
            amendments: planner.accommodation().notes.clone(),
            pending_approval: planner.pending().cloned(),
            degraded: self.degraded.clone(),
            ledger: self.ledger.clone(),
        }
    }

    /// Processes one frame. The returned report's `commands` are what the
    /// simulator must apply on its next step.
    pub fn run_cycle(&mut self, frame: &SensorFrame) -> CycleReport {
        let mut report = CycleReport {
            cycle: frame.cycle,
            sim_time_s: frame.sim_time_s,
            ..Default::default()
        };
        for action in std::mem::take(&mut self.operator_queue) {
            if !matches!(action, OperatorAction::Session { .. }) {
                self.ledger.operator_actions += 1;
            }
            if let Err(e) = self
                .bus
                .publish("operator", Payload::Operator(action.clone()))
            {
                report.warnings.push(e.to_string());
            }
            report.operator.push(action);
        }
        if let Err(e) = self
            .bus
            .publish("telemetry", Payload::Telemetry(frame.clone()))
        {
            report.warnings.push(e.to_string());
        }

        let mut cx = Cx {
            frame,
            report,
            ledger: &mut self.ledger,
        };
        let names = &self.names;
        let comps = &mut self.comps;
        let degraded = &mut self.degraded;
        let sabotage = &mut self.sabotage;
        let timing = &mut self.timing;
        timing.per_component_us.clear();
        let order = self.order.clone();
        let log = self.bus.step_cycle(&order, &mut |c, inbox, out| {
            let name = names[c];
            if degraded.iter().any(|d| d == name) {
                return;
            }
            let doomed = sabotage.as_deref() == Some(name);
            let start = Instant::now();
            let r = catch_unwind(AssertUnwindSafe(|| {
                if doomed {
                    panic!("component `{name}` sabotaged");
                }
                comps.step(name, &mut cx, inbox, out)
            }));
            timing
                .per_component_us
                .insert(name.to_string(), start.elapsed().as_secs_f64() * 1e6);
            if r.is_err() {
                if doomed {
                    *sabotage = None;
                }
                degraded.push(name.to_string());
                cx.report
                    .warnings
                    .push(format!("component `{name}` failed and is now degraded"));
            }
        });
        let mut report = cx.report;
        match log {
            Ok(log) => {
                report.deliveries = log.deliveries.len();
                report.warnings.extend(log.truncated);
                report.warnings.extend(log.errors);
            }
            Err(e) => report.warnings.push(e.to_string()),
        }
        // the bridge carries exactly the commands reported by the executive
        self.bus.take_queue(self.bridge);
        report.degraded.clone_from(&self.degraded);
        self.ledger.frames_processed += 1;
        self.last_cycle = (frame.cycle, frame.sim_time_s);
        if let Some(f) = &report.fault {
            self.last_fault = Some(f.clone());
        }
        if let Some(i) = &report.impacts {
            self.last_impacts = Some(i.clone());
        }
        report
    }
}
