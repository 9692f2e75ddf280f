//! Replanning: trigger policy, fault accommodation, horizon bookkeeping and
//! the operator approval gate.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;

use crate::executive::PlanTree;
use crate::scheduler::{
    build_problem, solve, to_plan, validate, ConstraintSet, NowState, PlanOptions,
    SchedulingProblem, SolveBudget, Violation,
};
use crate::sim::{EffectKind, FaultCatalog, HabitatModel, SensorFrame};

use super::VsmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Trigger {
    None,
    Periodic,
    Event,
}

fn is_multiple(t: f64, period: f64) -> bool {
    let k = (t / period).round();
    k >= 1.0 && (k * period - t).abs() < 1e-6
}

/// EVENT outranks PERIODIC; PERIODIC fires at every positive multiple of
/// the replan period.
pub fn replan_trigger(sim_time_s: f64, replan_period_s: f64, event: bool) -> Trigger {
    if event {
        Trigger::Event
    } else if is_multiple(sim_time_s, replan_period_s) {
        Trigger::Periodic
    } else {
        Trigger::None
    }
}

/// Scheduling amendments derived from confirmed failure modes.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Accommodation {
    pub forced: BTreeMap<String, bool>,
    pub bus_capacity_w: BTreeMap<String, f64>,
    pub bus_of: BTreeMap<String, String>,
    pub draw_w: BTreeMap<String, f64>,
    /// One line per amendment, for operator display.
    pub notes: Vec<String>,
}

impl Accommodation {
    pub fn is_empty(&self) -> bool {
        self.forced.is_empty()
            && self.bus_capacity_w.is_empty()
            && self.bus_of.is_empty()
            && self.draw_w.is_empty()
    }

    /// Same amendments, ignoring the notes.
    pub fn same_effect(&self, other: &Self) -> bool {
        self.forced == other.forced
            && self.bus_capacity_w == other.bus_capacity_w
            && self.bus_of == other.bus_of
            && self.draw_w == other.draw_w
    }

    pub fn apply(&self, now: &mut NowState) {
        now.forced.clone_from(&self.forced);
        now.bus_capacity_w.clone_from(&self.bus_capacity_w);
        now.bus_of.clone_from(&self.bus_of);
        now.draw_w.clone_from(&self.draw_w);
    }
}

/// Maps confirmed failure modes and the `(component, function)` pairs the
/// impacts reasoner reports lost onto scheduling amendments:
///
/// - stuck ON → load forced ON; stuck OFF → forced OFF;
/// - degraded draw → planned draw scaled by the mode's multiplier;
/// - bus trip → bus capacity 0, loads with a live alternate feed move to
///   it, the rest are forced OFF;
/// - any load whose supply is lost is forced OFF;
/// - sensor modes change nothing.
pub fn respond_to_fault(
    model: &HabitatModel,
    catalog: &FaultCatalog,
    modes: &BTreeSet<String>,
    lost: &[(String, String)],
) -> Accommodation {
    let mut acc = Accommodation::default();
    let mut tripped = BTreeSet::new();
    for m in modes {
        let Some(spec) = catalog.get(m) else { continue };
        let target = spec.target.clone();
        match spec.effect {
            EffectKind::StuckOn => {
                acc.forced.insert(target.clone(), true);
                acc.notes.push(format!("{m}: {target} held ON"));
            }
            EffectKind::StuckOff => {
                acc.forced.insert(target.clone(), false);
                acc.notes.push(format!("{m}: {target} excluded"));
            }
            EffectKind::DegradedDraw => {
                if let Some(l) = model.load_index(&target) {
                    let w = model.loads[l].power_draw_w
                        * spec.params.get("multiplier").copied().unwrap_or(2.0);
                    acc.draw_w.insert(target.clone(), w);
                    acc.notes.push(format!("{m}: {target} planned at {w} W"));
                }
            }
            EffectKind::BusTrip => {
                acc.bus_capacity_w.insert(target.clone(), 0.0);
                acc.notes.push(format!("{m}: {target} capacity 0 W"));
                tripped.insert(target);
            }
            EffectKind::SensorBias | EffectKind::SensorStale => {
                acc.notes
                    .push(format!("{m}: sensor fault, schedule unchanged"));
            }
        }
    }
    for load in &model.loads {
        if !tripped.contains(&load.bus_id) {
            continue;
        }
        match &load.alt_bus_id {
            Some(alt) if !tripped.contains(alt) => {
                acc.bus_of.insert(load.id.clone(), alt.clone());
                acc.notes.push(format!("{} moved to {alt}", load.id));
            }
            _ => {
                acc.forced.insert(load.id.clone(), false);
                acc.notes
                    .push(format!("{} excluded: no live feed", load.id));
            }
        }
    }
    for (component, function) in lost {
        if model.load_index(component).is_some() && acc.forced.get(component) != Some(&false) {
            acc.forced.insert(component.clone(), false);
            acc.notes
                .push(format!("{component} excluded: {function} lost"));
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Disposition {
    Committed,
    Proposed,
    /// No usable schedule; the current plan stays in force.
    KeptCurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplanRecord {
    pub trigger: Trigger,
    pub reasons: Vec<String>,
    pub status: String,
    pub plan_id: Option<String>,
    pub objective_value: Option<i64>,
    pub mode_changes: Option<usize>,
    pub steps: Option<usize>,
    pub frozen_slots: usize,
    pub nodes: u64,
    pub violations: Vec<Violation>,
    pub amendments: Vec<String>,
    /// Loads whose duty was dropped to reach a schedule.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub shed: Vec<String>,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionKind {
    Approved,
    Held,
    AutoCommitted,
    Superseded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanDecision {
    pub plan_id: String,
    pub decision: DecisionKind,
}

/// An event replan awaiting an operator decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanProposal {
    pub plan_id: String,
    pub proposed_at_s: f64,
    pub expires_at_s: f64,
    pub objective_value: i64,
    pub steps: usize,
    pub amendments: Vec<String>,
    #[serde(skip)]
    pub tree: PlanTree,
    #[serde(skip)]
    pub modes: Vec<Vec<bool>>,
}

/// What the planner wants published this cycle.
#[derive(Debug, Default)]
pub struct PlannerOutput {
    pub commit: Option<PlanTree>,
    pub proposal: Option<PlanProposal>,
    pub replan: Option<ReplanRecord>,
    pub decisions: Vec<PlanDecision>,
}

pub struct Planner {
    model: Arc<HabitatModel>,
    constraints: ConstraintSet,
    catalog: Arc<FaultCatalog>,
    cfg: VsmConfig,
    epoch_start: f64,
    epoch_initial: Vec<bool>,
    schedule: Option<Vec<Vec<bool>>>,
    latched: BTreeSet<String>,
    lost: Vec<(String, String)>,
    accommodation: Accommodation,
    plans_made: u64,
    pending: Option<PlanProposal>,
    session: bool,
    current_plan: Option<String>,
}

struct FrameInfo {
    time_s: f64,
    soc_wh: f64,
    modes: Vec<bool>,
}

impl Planner {
    pub fn new(
        model: Arc<HabitatModel>,
        constraints: ConstraintSet,
        catalog: Arc<FaultCatalog>,
        cfg: VsmConfig,
    ) -> Self {
        let epoch_initial = model.loads.iter().map(|l| l.mode.is_on()).collect();
        Self {
            model,
            constraints,
            catalog,
            cfg,
            epoch_start: 0.0,
            epoch_initial,
            schedule: None,
            latched: BTreeSet::new(),
            lost: Vec::new(),
            accommodation: Accommodation::default(),
            plans_made: 0,
            pending: None,
            session: false,
            current_plan: None,
        }
    }

    pub fn pending(&self) -> Option<&PlanProposal> {
        self.pending.as_ref()
    }

    pub fn current_plan(&self) -> Option<&str> {
        self.current_plan.as_deref()
    }

    pub fn latched(&self) -> &BTreeSet<String> {
        &self.latched
    }

    pub fn accommodation(&self) -> &Accommodation {
        &self.accommodation
    }

    /// Current epoch's committed schedule.
    pub fn schedule(&self) -> Option<&Vec<Vec<bool>>> {
        self.schedule.as_ref()
    }

    pub fn set_session(&mut self, attached: bool) {
        self.session = attached;
    }

    /// Plan for the start of the run, committed immediately.
    pub fn initial_plan(&mut self) -> (ReplanRecord, Option<PlanTree>) {
        let info = FrameInfo {
            time_s: 0.0,
            soc_wh: self.model.power.battery_soc_wh,
            modes: self.epoch_initial.clone(),
        };
        let (mut record, made) = self.replan(Trigger::None, vec!["initial".into()], &info);
        match made {
            Some((tree, modes)) => {
                self.commit(&tree, modes);
                record.disposition = Disposition::Committed;
                (record, Some(tree))
            }
            None => (record, None),
        }
    }

    /// Latches newly confirmed modes; returns whether the amendments
    /// changed.
    pub fn note_fault(&mut self, modes: &[String]) -> bool {
        for m in modes {
            self.latched.insert(m.clone());
        }
        self.refresh()
    }

    pub fn note_impacts(&mut self, lost: Vec<(String, String)>) -> bool {
        self.lost = lost;
        self.refresh()
    }

    fn refresh(&mut self) -> bool {
        let next = respond_to_fault(&self.model, &self.catalog, &self.latched, &self.lost);
        let changed = !next.same_effect(&self.accommodation);
        self.accommodation = next;
        changed
    }

    fn commit(&mut self, tree: &PlanTree, modes: Vec<Vec<bool>>) {
        self.schedule = Some(modes);
        self.current_plan = Some(tree.root().id.clone());
    }

    /// One planner turn: approval bookkeeping, then the trigger check and
    /// any replan. `event_reasons` is empty when nothing event-worthy
    /// happened this cycle.
    pub fn step(
        &mut self,
        frame: &SensorFrame,
        event_reasons: Vec<String>,
        approvals: &[(String, bool)],
    ) -> PlannerOutput {
        let mut out = PlannerOutput::default();
        let info = FrameInfo {
            time_s: frame.sim_time_s,
            soc_wh: frame
                .fresh("battery.soc_wh")
                .unwrap_or(self.model.power.battery_soc_wh),
            modes: self
                .model
                .loads
                .iter()
                .map(|l| frame.get(&format!("{}.cmd", l.id)).is_some_and(|v| v > 0.5))
                .collect(),
        };

        for (plan_id, approve) in approvals {
            let Some(p) = self.pending.take_if(|p| &p.plan_id == plan_id) else {
                continue;
            };
            if *approve {
                self.commit(&p.tree, p.modes.clone());
                out.commit = Some(p.tree);
                out.decisions.push(PlanDecision {
                    plan_id: p.plan_id,
                    decision: DecisionKind::Approved,
                });
            } else {
                out.decisions.push(PlanDecision {
                    plan_id: p.plan_id,
                    decision: DecisionKind::Held,
                });
            }
        }
        if let Some(p) = self
            .pending
            .take_if(|p| info.time_s >= p.expires_at_s - 1e-9)
        {
            self.commit(&p.tree, p.modes.clone());
            out.commit = Some(p.tree);
            out.decisions.push(PlanDecision {
                plan_id: p.plan_id,
                decision: DecisionKind::AutoCommitted,
            });
        }

        let trigger = replan_trigger(
            info.time_s,
            self.cfg.replan_period_s,
            !event_reasons.is_empty(),
        );
        if trigger == Trigger::None {
            return out;
        }
        let reasons = if trigger == Trigger::Periodic {
            vec!["periodic".to_string()]
        } else {
            event_reasons
        };
        let (mut record, made) = self.replan(trigger, reasons, &info);
        if let Some((tree, modes)) = made {
            if trigger == Trigger::Event && self.session {
                let proposal = PlanProposal {
                    plan_id: tree.root().id.clone(),
                    proposed_at_s: info.time_s,
                    expires_at_s: info.time_s + self.cfg.approval_timeout_s,
                    objective_value: record.objective_value.unwrap_or(0),
                    steps: tree.step_count(),
                    amendments: record.amendments.clone(),
                    tree,
                    modes,
                };
                if let Some(old) = self.pending.replace(proposal.clone()) {
                    out.decisions.push(PlanDecision {
                        plan_id: old.plan_id,
                        decision: DecisionKind::Superseded,
                    });
                }
                out.proposal = Some(proposal);
                record.disposition = Disposition::Proposed;
            } else {
                if let Some(old) = self.pending.take() {
                    out.decisions.push(PlanDecision {
                        plan_id: old.plan_id,
                        decision: DecisionKind::Superseded,
                    });
                }
                self.commit(&tree, modes);
                out.commit = Some(tree);
                record.disposition = Disposition::Committed;
            }
        }
        out.replan = Some(record);
        out
    }

    fn slots(&self) -> usize {
        (self.cfg.horizon_s / self.cfg.slot_s).round() as usize
    }

    /// Builds the problem for `now` under the current amendments.
    fn problem(&mut self, info: &FrameInfo) -> SchedulingProblem {
        if info.time_s >= self.epoch_start + self.cfg.horizon_s - 1e-9 {
            self.epoch_start = info.time_s;
            self.epoch_initial.clone_from(&info.modes);
            self.schedule = None;
        }
        let n = self.slots();
        let frozen = (((info.time_s - self.epoch_start) / self.cfg.slot_s) - 1e-9)
            .ceil()
            .max(0.0) as usize;
        let frozen = frozen.min(n);
        let frozen_modes = match &self.schedule {
            Some(rows) => rows.clone(),
            None => info.modes.iter().map(|&m| vec![m; n]).collect(),
        };
        let mut now = NowState::fresh(
            self.epoch_start,
            self.cfg.horizon_s,
            self.cfg.slot_s,
            info.soc_wh,
            self.epoch_initial.clone(),
        );
        now.frozen_slots = frozen;
        now.frozen_modes = frozen_modes;
        self.accommodation.apply(&mut now);
        build_problem(&self.model, &self.constraints, &now)
    }

    fn replan(
        &mut self,
        trigger: Trigger,
        reasons: Vec<String>,
        info: &FrameInfo,
    ) -> (ReplanRecord, Option<(PlanTree, Vec<Vec<bool>>)>) {
        let mut problem = self.problem(info);
        let mut record = ReplanRecord {
            trigger,
            reasons,
            status: String::new(),
            plan_id: None,
            objective_value: None,
            mode_changes: None,
            steps: None,
            frozen_slots: problem.frozen_slots,
            nodes: 0,
            violations: Vec::new(),
            amendments: self.accommodation.notes.clone(),
            shed: Vec::new(),
            disposition: Disposition::KeptCurrent,
        };
        let mut candidates = shed_order(&problem).into_iter();
        let schedule = loop {
            let result = match solve(&problem, SolveBudget::nodes(self.cfg.solver_max_nodes)) {
                Ok(r) => r,
                Err(e) => {
                    record.status = format!("ERROR: {e}");
                    return (record, None);
                }
            };
            record.status = serde_json::to_value(result.status)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            record.nodes += result.nodes;
            if let Some(s) = result.schedule {
                break s;
            }
            let Some(group) = candidates.next() else {
                return (record, None);
            };
            shed(&mut problem, &group);
            record.shed.extend(group);
        };
        record.objective_value = Some(schedule.objective_value);
        record.mode_changes = Some(schedule.mode_changes);
        let check = validate(&problem, &schedule.modes);
        if !check.ok() {
            record.violations = check.violations;
            return (record, None);
        }
        self.plans_made += 1;
        let plan_id = format!("plan{:04}", self.plans_made);
        let tree = to_plan(
            &problem,
            &schedule,
            &PlanOptions {
                plan_id: plan_id.clone(),
                horizon_start_s: self.epoch_start,
                current_modes: info.modes.clone(),
                verify_timeout_s: self.cfg.verify_timeout_s,
            },
        );
        record.plan_id = Some(plan_id);
        record.steps = Some(tree.step_count());
        (record, Some((tree, schedule.modes)))
    }
}

/// Sync groups of loads with duty, cheapest first: total weight, then id.
fn shed_order(p: &SchedulingProblem) -> Vec<Vec<String>> {
    let mut groups: Vec<Vec<String>> = Vec::new();
    for d in &p.duty_constraints {
        if groups.iter().any(|g| g.contains(&d.load)) {
            continue;
        }
        let mut g = vec![d.load.clone()];
        let mut grew = true;
        while grew {
            grew = false;
            for c in &p.sync_constraints {
                for (x, y) in [(&c.a, &c.b), (&c.b, &c.a)] {
                    if g.contains(x) && !g.contains(y) {
                        g.push(y.clone());
                        grew = true;
                    }
                }
            }
        }
        g.sort();
        groups.push(g);
    }
    let weight = |g: &Vec<String>| -> i64 {
        g.iter()
            .filter_map(|id| p.load_index(id))
            .map(|l| p.loads[l].weight)
            .sum()
    };
    groups.sort_by(|a, b| weight(a).cmp(&weight(b)).then_with(|| a.cmp(b)));
    groups
}

/// Drops the duty-style constraints of `loads` and holds them OFF over the
/// free slots.
fn shed(p: &mut SchedulingProblem, loads: &[String]) {
    let hit = |id: &String| loads.contains(id);
    p.duty_constraints.retain(|d| !hit(&d.load));
    p.max_off_constraints.retain(|c| !hit(&c.load));
    p.min_on_after_on.retain(|c| !hit(&c.load));
    p.sync_constraints.retain(|c| !hit(&c.a) && !hit(&c.b));
    for id in loads {
        if let Some(l) = p.load_index(id) {
            for s in p.frozen_slots..p.fixed[l].len() {
                p.fixed[l][s] = Some(false);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::habitat;

    #[test]
    fn trigger_policy() {
        assert_eq!(replan_trigger(600.0, 300.0, false), Trigger::Periodic);
        assert_eq!(replan_trigger(599.0, 300.0, true), Trigger::Event);
        assert_eq!(replan_trigger(900.0, 300.0, true), Trigger::Event);
        assert_eq!(replan_trigger(0.0, 300.0, false), Trigger::None);
        assert_eq!(replan_trigger(301.0, 300.0, false), Trigger::None);
    }

    #[test]
    fn bus_trip_reroutes_or_excludes() {
        let model = HabitatModel::parse("habitat.model", &habitat::model_text()).unwrap();
        let dm =
            crate::diagnosis::DiagnosisModel::parse("habitat.dmx", &habitat::dmx_text()).unwrap();
        let modes: BTreeSet<String> = ["bus2.trip".to_string()].into();
        let acc = respond_to_fault(&model, &dm.catalog, &modes, &[]);
        assert_eq!(acc.bus_capacity_w["bus2"], 0.0);
        assert_eq!(acc.forced.get("load4"), Some(&false));
        assert_eq!(acc.forced.get("load5"), Some(&false));
        assert_eq!(acc.bus_of.get("load6").map(String::as_str), Some("bus3"));
        assert!(!acc.forced.contains_key("load6"));

        let sensor: BTreeSet<String> = ["lab.co2_ppm.bias".to_string()].into();
        let acc = respond_to_fault(&model, &dm.catalog, &sensor, &[]);
        assert!(acc.is_empty());
        assert_eq!(acc.notes.len(), 1);
    }
}
