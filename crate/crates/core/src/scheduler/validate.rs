//! Constraint checking for a complete schedule, written independently of
//! the solver so each can catch the other's mistakes.

use serde::Serialize;

use super::{SchedulingProblem, POWER_EPS};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Constraint label, e.g. `duty(load3)` or `peak`.
    pub constraint: String,
    pub slots: Vec<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub constraints_checked: usize,
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn slots_ceil(seconds: f64, slot_s: f64) -> usize {
    let q = seconds / slot_s;
    let r = q.round();
    if (q - r).abs() < 1e-9 {
        r.max(0.0) as usize
    } else {
        q.ceil().max(0.0) as usize
    }
}

fn slots_floor(seconds: f64, slot_s: f64) -> usize {
    let q = seconds / slot_s;
    let r = q.round();
    if (q - r).abs() < 1e-9 {
        r.max(0.0) as usize
    } else {
        q.floor().max(0.0) as usize
    }
}

/// Checks `modes` (load × slot, true = ON) against every constraint.
pub fn validate(problem: &SchedulingProblem, modes: &[Vec<bool>]) -> ConstraintReport {
    let n = problem.slots();
    let f = problem.frozen_slots;
    let mut violations = Vec::new();
    let mut push = |constraint: String, slots: Vec<usize>, detail: String| {
        violations.push(Violation {
            constraint,
            slots,
            detail,
        });
    };
    let row = |id: &str| -> &[bool] {
        match problem.load_index(id) {
            Some(i) => &modes[i],
            None => &[],
        }
    };

    if modes.len() != problem.loads.len() || modes.iter().any(|r| r.len() != n) {
        push(
            "shape".into(),
            vec![],
            format!("expected {} loads × {} slots", problem.loads.len(), n),
        );
        return ConstraintReport {
            constraints_checked: 0,
            violations,
        };
    }

    for (l, load) in problem.loads.iter().enumerate() {
        let bad: Vec<usize> = (0..n)
            .filter(|&s| problem.fixed[l][s].is_some_and(|v| v != modes[l][s]))
            .collect();
        if !bad.is_empty() {
            push(
                format!("fixed({})", load.id),
                bad,
                "mode differs from a fixed value".into(),
            );
        }
    }

    for d in &problem.duty_constraints {
        let r = row(&d.load);
        let period = slots_ceil(d.period_s, problem.slot_s);
        let need = slots_ceil(d.min_on_s, problem.slot_s);
        let mut start = 0;
        while period > 0 && start + period <= n {
            let end = start + period;
            if end > f {
                let on = r[start..end].iter().filter(|v| **v).count();
                if on < need {
                    push(
                        format!("duty({})", d.load),
                        (start..end).collect(),
                        format!("{on} ON slots in window, need {need}"),
                    );
                }
            }
            start = end;
        }
    }

    for p in &problem.sync_constraints {
        let (a, b) = (row(&p.a), row(&p.b));
        let bad: Vec<usize> = (f..n).filter(|&s| a[s] != b[s]).collect();
        if !bad.is_empty() {
            push(format!("sync({},{})", p.a, p.b), bad, "modes differ".into());
        }
    }

    for p in &problem.mutex_constraints {
        let (a, b) = (row(&p.a), row(&p.b));
        let bad: Vec<usize> = (f..n).filter(|&s| a[s] && b[s]).collect();
        if !bad.is_empty() {
            push(format!("mutex({},{})", p.a, p.b), bad, "both ON".into());
        }
    }

    for m in &problem.max_off_constraints {
        let r = row(&m.load);
        let limit = slots_floor(m.max_off_s, problem.slot_s);
        let mut s = 0;
        while s < n {
            if r[s] {
                s += 1;
                continue;
            }
            let start = s;
            while s < n && !r[s] {
                s += 1;
            }
            if s - start > limit && s > f {
                push(
                    format!("max_off({})", m.load),
                    (start..s).collect(),
                    format!("OFF for {} slots, limit {limit}", s - start),
                );
            }
        }
    }

    for m in &problem.min_on_after_on {
        let l = problem.load_index(&m.load).unwrap_or(0);
        let r = row(&m.load);
        let need = slots_ceil(m.min_on_s, problem.slot_s);
        let mut s = 0;
        while s < n {
            if !r[s] {
                s += 1;
                continue;
            }
            let start = s;
            while s < n && r[s] {
                s += 1;
            }
            let turned_on = if start == 0 {
                !problem.initial_modes[l]
            } else {
                true
            };
            let reaches_end = s == n;
            if turned_on && !reaches_end && s - start < need && s > f {
                push(
                    format!("min_on_after_on({})", m.load),
                    (start..s).collect(),
                    format!("ON for {} slots, need {need}", s - start),
                );
            }
        }
    }

    for cap in &problem.bus_capacities {
        let mut bad = Vec::new();
        for s in f..n {
            let draw: f64 = problem
                .loads
                .iter()
                .enumerate()
                .filter(|(l, load)| {
                    load.bus_id.as_deref() == Some(cap.bus_id.as_str()) && modes[*l][s]
                })
                .map(|(_, load)| load.power_draw_w)
                .sum();
            if draw > cap.capacity_w + POWER_EPS {
                bad.push(s);
            }
        }
        if !bad.is_empty() {
            push(
                format!("bus_capacity({})", cap.bus_id),
                bad,
                format!("draw above {} W", cap.capacity_w),
            );
        }
    }

    let slot_draw = |s: usize| -> f64 {
        problem
            .loads
            .iter()
            .enumerate()
            .filter(|(l, _)| modes[*l][s])
            .map(|(_, load)| load.power_draw_w)
            .sum()
    };

    if let Some(peak) = &problem.peak_power_profile {
        let bad: Vec<usize> = (f..n)
            .filter(|&s| slot_draw(s) > peak[s] + POWER_EPS)
            .collect();
        if !bad.is_empty() {
            push(
                "peak".into(),
                bad,
                "draw above the peak power profile".into(),
            );
        }
    }

    if let Some(budget) = problem.energy_budget_wh {
        let used: f64 = (f..n).map(|s| slot_draw(s) * problem.slot_s / 3600.0).sum();
        if used > budget + POWER_EPS * 1e3 {
            push(
                "energy".into(),
                vec![],
                format!("{used:.3} Wh used, budget {budget:.3} Wh"),
            );
        }
    }

    ConstraintReport {
        constraints_checked: problem.constraint_count(),
        violations,
    }
}
