//! Time-slotted load scheduling.
//!
//! Each load is a binary job: ON or OFF in every slot of the horizon. Hard
//! constraints cover duty cycles, synchronized pairs, maximum OFF time,
//! minimum ON time after switching on, mutual exclusion, per-bus capacity,
//! a per-slot peak power profile and a total energy budget. The objective
//! maximizes `Σ weight · ON slots` over loads with a duty constraint, with
//! fewer mode changes as the lexicographic tie-break.
//!
//! Slot-indexed conventions shared by the solver and the validator:
//!
//! * The first `frozen_slots` slots already happened. Their modes are given
//!   in `fixed` and per-slot constraints (peak, bus capacity, mutex, sync,
//!   energy) are only checked on free slots. Window and run constraints are
//!   checked whenever they include at least one free slot.
//! * Duty windows are `[k·period, (k+1)·period)` from horizon start; a
//!   trailing partial window is unconstrained.
//! * An OFF run may not exceed `max_off` slots. OFF time before the horizon
//!   is not counted.
//! * A run of ON slots that begins with a turn-on inside the horizon must
//!   last `min_on` slots or reach the horizon end.
//! * Mode changes and the objective count free slots only; the change at
//!   slot 0 is measured against `initial_modes`.

mod build;
mod format;
mod plan;
mod solve;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{build_problem, ConstraintSet, NowState};
pub use format::{parse_problem, render_problem, render_schedule};
pub use plan::{to_plan, PlanOptions};
pub use solve::{solve, SolveBudget, SolveResult, SolveStatus};
pub use validate::{validate, ConstraintReport, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("horizon {horizon_s} s is not a positive multiple of slot {slot_s} s")]
    Horizon { horizon_s: f64, slot_s: f64 },
    #[error("constraint references unknown load `{0}`")]
    UnknownLoad(String),
    #[error("peak power profile has {got} entries, expected {expected}")]
    PeakLength { got: usize, expected: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedLoad {
    pub id: String,
    pub power_draw_w: f64,
    pub bus_id: Option<String>,
    /// Objective weight per ON slot (used only for loads with duty).
    pub weight: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DutyConstraint {
    pub load: String,
    pub min_on_s: f64,
    pub period_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairConstraint {
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxOffConstraint {
    pub load: String,
    pub max_off_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinOnConstraint {
    pub load: String,
    pub min_on_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusCapacity {
    pub bus_id: String,
    pub capacity_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingProblem {
    pub horizon_s: f64,
    pub slot_s: f64,
    pub loads: Vec<SchedLoad>,
    pub duty_constraints: Vec<DutyConstraint>,
    pub sync_constraints: Vec<PairConstraint>,
    pub max_off_constraints: Vec<MaxOffConstraint>,
    pub min_on_after_on: Vec<MinOnConstraint>,
    pub mutex_constraints: Vec<PairConstraint>,
    pub bus_capacities: Vec<BusCapacity>,
    /// Watts allowed per slot; `None` leaves peak power unconstrained.
    pub peak_power_profile: Option<Vec<f64>>,
    /// `None` leaves total energy unconstrained.
    pub energy_budget_wh: Option<f64>,
    /// Mode of each load just before slot 0 (true = ON).
    pub initial_modes: Vec<bool>,
    pub frozen_slots: usize,
    /// Load × slot forced modes.
    pub fixed: Vec<Vec<Option<bool>>>,
}

/// Tolerance for power and energy comparisons.
pub const POWER_EPS: f64 = 1e-9;

impl SchedulingProblem {
    pub fn empty(horizon_s: f64, slot_s: f64) -> Self {
        Self {
            horizon_s,
            slot_s,
            loads: Vec::new(),
            duty_constraints: Vec::new(),
            sync_constraints: Vec::new(),
            max_off_constraints: Vec::new(),
            min_on_after_on: Vec::new(),
            mutex_constraints: Vec::new(),
            bus_capacities: Vec::new(),
            peak_power_profile: None,
            energy_budget_wh: None,
            initial_modes: Vec::new(),
            frozen_slots: 0,
            fixed: Vec::new(),
        }
    }

    pub fn add_load(
        &mut self,
        id: &str,
        power_draw_w: f64,
        bus_id: Option<&str>,
        weight: i64,
        initial_on: bool,
    ) {
        let slots = self.slots();
        self.loads.push(SchedLoad {
            id: id.to_string(),
            power_draw_w,
            bus_id: bus_id.map(str::to_string),
            weight,
        });
        self.initial_modes.push(initial_on);
        self.fixed.push(vec![None; slots]);
    }

    pub fn slots(&self) -> usize {
        if self.slot_s > 0.0 {
            (self.horizon_s / self.slot_s).round() as usize
        } else {
            0
        }
    }

    pub fn load_index(&self, id: &str) -> Option<usize> {
        self.loads.iter().position(|l| l.id == id)
    }

    /// Energy of one ON slot of `load`, in watt-hours.
    pub fn slot_energy_wh(&self, load: usize) -> f64 {
        self.loads[load].power_draw_w * self.slot_s / 3600.0
    }

    pub fn to_slots(&self, seconds: f64) -> usize {
        (seconds / self.slot_s).ceil() as usize
    }

    /// Number of constraints: duty, bus capacity, peak, energy, sync,
    /// max-off, min-on-after-on and mutex entries.
    pub fn constraint_count(&self) -> usize {
        self.duty_constraints.len()
            + self.bus_capacities.len()
            + usize::from(self.peak_power_profile.is_some())
            + usize::from(self.energy_budget_wh.is_some())
            + self.sync_constraints.len()
            + self.max_off_constraints.len()
            + self.min_on_after_on.len()
            + self.mutex_constraints.len()
    }

    pub fn has_duty(&self, load: usize) -> bool {
        let id = &self.loads[load].id;
        self.duty_constraints.iter().any(|d| &d.load == id)
    }

    pub fn check(&self) -> Result<(), ProblemError> {
        let ratio = self.horizon_s / self.slot_s;
        if !(self.slot_s > 0.0 && self.horizon_s >= 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(ProblemError::Horizon {
                horizon_s: self.horizon_s,
                slot_s: self.slot_s,
            });
        }
        let n = self.slots();
        let known = |id: &String| {
            if self.load_index(id).is_some() {
                Ok(())
            } else {
                Err(ProblemError::UnknownLoad(id.clone()))
            }
        };
        for d in &self.duty_constraints {
            known(&d.load)?;
            let p = d.period_s / self.slot_s;
            if !(d.period_s > 0.0) || (p - p.round()).abs() > 1e-9 {
                return Err(ProblemError::Invalid(format!(
                    "duty period of `{}` must be a positive multiple of the slot",
                    d.load
                )));
            }
            if d.min_on_s > d.period_s || d.min_on_s < 0.0 {
                return Err(ProblemError::Invalid(format!(
                    "duty min_on_s of `{}` must lie in [0, period_s]",
                    d.load
                )));
            }
        }
        for p in self.sync_constraints.iter().chain(&self.mutex_constraints) {
            known(&p.a)?;
            known(&p.b)?;
        }
        for m in &self.max_off_constraints {
            known(&m.load)?;
        }
        for m in &self.min_on_after_on {
            known(&m.load)?;
        }
        if let Some(peak) = &self.peak_power_profile {
            if peak.len() != n {
                return Err(ProblemError::PeakLength {
                    got: peak.len(),
                    expected: n,
                });
            }
        }
        if self.initial_modes.len() != self.loads.len() || self.fixed.len() != self.loads.len() {
            return Err(ProblemError::Invalid(
                "initial_modes and fixed must have one entry per load".into(),
            ));
        }
        if self.fixed.iter().any(|row| row.len() != n) {
            return Err(ProblemError::Invalid(
                "fixed rows must have one entry per slot".into(),
            ));
        }
        if self.frozen_slots > n {
            return Err(ProblemError::Invalid(
                "frozen_slots exceeds the slot count".into(),
            ));
        }
        for (l, row) in self.fixed.iter().enumerate() {
            if row[..self.frozen_slots].iter().any(Option::is_none) {
                return Err(ProblemError::Invalid(format!(
                    "frozen slots of `{}` must all be fixed",
                    self.loads[l].id
                )));
            }
        }
        Ok(())
    }
}

/// Load × slot mode matrix with its objective and change count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub modes: Vec<Vec<bool>>,
    pub objective_value: i64,
    pub mode_changes: usize,
}

impl Schedule {
    /// Recomputes objective and change count for `modes` under `problem`.
    pub fn from_modes(problem: &SchedulingProblem, modes: Vec<Vec<bool>>) -> Self {
        let f = problem.frozen_slots;
        let mut objective_value = 0;
        let mut mode_changes = 0;
        for (l, row) in modes.iter().enumerate() {
            let duty = problem.has_duty(l);
            for s in f..row.len() {
                if duty && row[s] {
                    objective_value += problem.loads[l].weight;
                }
                let prev = if s == 0 {
                    problem.initial_modes[l]
                } else {
                    row[s - 1]
                };
                if prev != row[s] {
                    mode_changes += 1;
                }
            }
        }
        Self {
            modes,
            objective_value,
            mode_changes,
        }
    }
}
