//! Executable plans from schedules.

use std::fmt::Write as _;

use crate::executive::{parse_plan, PlanTree};
use crate::expr::fmt_number;

use super::{Schedule, SchedulingProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOptions {
    pub plan_id: String,
    /// Absolute time of slot 0.
    pub horizon_start_s: f64,
    /// Commanded mode of each load right now; the first free slot is
    /// compared against this rather than the frozen prefix.
    pub current_modes: Vec<bool>,
    /// How long the relay may take to confirm a command.
    pub verify_timeout_s: f64,
}

/// One COMMAND plus one verifying WAIT per mode change in the free slots,
/// grouped under a LIST per load. Every generated node is safe to abandon
/// so a replacement plan can take over mid-flight.
pub fn to_plan(problem: &SchedulingProblem, schedule: &Schedule, opts: &PlanOptions) -> PlanTree {
    let mut text = String::new();
    let _ = writeln!(text, "LIST {} {{\n  safe_to_abandon;", opts.plan_id);
    for (l, load) in problem.loads.iter().enumerate() {
        let row = &schedule.modes[l];
        let mut prev = opts.current_modes.get(l).copied().unwrap_or(false);
        let mut body = String::new();
        for (s, &on) in row.iter().enumerate().skip(problem.frozen_slots) {
            if on != prev {
                let t = opts.horizon_start_s + s as f64 * problem.slot_s;
                let (word, value) = if on { ("on", 1) } else { ("off", 0) };
                let cmd = format!("{}_s{s}_{word}", load.id);
                let _ = writeln!(
                    body,
                    "    COMMAND {cmd} {{ command: {id} {word}; start: time >= {t}; end: lookup({id}.cmd) == {value}; safe_to_abandon; }}",
                    id = load.id,
                    t = fmt_number(t),
                );
                let _ = writeln!(
                    body,
                    "    WAIT {id}_s{s}_verify {{ start: finished({cmd}); end: lookup({id}.relay) == {value}; invariant: time < {deadline}; safe_to_abandon; }}",
                    id = load.id,
                    deadline = fmt_number(t + opts.verify_timeout_s),
                );
            }
            prev = on;
        }
        if !body.is_empty() {
            let _ = writeln!(
                text,
                "  LIST {}_seq {{\n    safe_to_abandon;\n{body}  }}",
                load.id
            );
        }
    }
    text.push_str("}\n");
    parse_plan(&text).expect("generated plan text parses")
}
