//! Text form of scheduling problems and results.
//!
//! ```text
//! [problem]
//! horizon_s = 7200
//! slot_s = 60
//! energy_budget_wh = 5000
//!
//! [loads]
//! heater power_w=150 bus=bus1 weight=3 initial=off
//!
//! [peak]
//! 0..55 1200
//! 55..120 600
//!
//! [duty]
//! heater min_on_s=600 period_s=1200
//!
//! [fixed]
//! heater 100..120 off
//! ```
//!
//! Pair sections (`[sync]`, `[mutex]`) hold two load ids per line; `[max_off]`,
//! `[min_on_after_on]` and `[bus_capacity]` use `max_off_s=`, `min_on_s=` and
//! `capacity_w=` attributes.

use std::fmt::Write as _;

use crate::sections::{Fields, ParseError, SectionedText};

use super::{
    BusCapacity, DutyConstraint, MaxOffConstraint, MinOnConstraint, PairConstraint,
    SchedulingProblem, SolveResult,
};

const SECTIONS: &[&str] = &[
    "problem",
    "loads",
    "peak",
    "duty",
    "sync",
    "mutex",
    "max_off",
    "min_on_after_on",
    "bus_capacity",
    "fixed",
];

fn parse_mode(word: &str) -> Option<bool> {
    match word.to_ascii_lowercase().as_str() {
        "on" | "1" | "true" => Some(true),
        "off" | "0" | "false" => Some(false),
        _ => None,
    }
}

fn parse_range(word: &str, slots: usize) -> Option<(usize, usize)> {
    if word == "*" {
        return Some((0, slots));
    }
    let (a, b) = word.split_once("..")?;
    let (a, b) = (a.parse().ok()?, b.parse().ok()?);
    (a <= b && b <= slots).then_some((a, b))
}

pub fn parse_problem(file: &str, text: &str) -> Result<SchedulingProblem, ParseError> {
    let doc = SectionedText::parse(file, text)?;
    for s in &doc.sections {
        if !SECTIONS.contains(&s.name.as_str()) {
            return Err(doc.error(s.header_line, format!("unknown section [{}]", s.name)));
        }
    }
    let kv = doc.key_values("problem")?;
    let horizon_s = kv.require_f64("horizon_s", "problem")?;
    let slot_s = kv.require_f64("slot_s", "problem")?;
    let mut p = SchedulingProblem::empty(horizon_s, slot_s);
    p.energy_budget_wh = kv.f64("energy_budget_wh")?;
    let frozen = kv.u64("frozen_slots")?.unwrap_or(0) as usize;
    if p.check().is_err() {
        return Err(doc.error(
            kv.line_of("slot_s"),
            "horizon_s must be a positive multiple of slot_s",
        ));
    }
    let n = p.slots();

    for line in doc.lines_of("loads") {
        let f = Fields::parse(&line.text);
        let [id] = f.words.as_slice() else {
            return Err(doc.error(
                line.number,
                "expected `<load> power_w=<W> [bus=<id>] [weight=<n>] [initial=on|off]`",
            ));
        };
        let power = f
            .attr_f64("power_w")
            .map_err(|e| doc.error(line.number, e))?;
        let Some(power) = power else {
            return Err(doc.error(line.number, format!("load `{id}` is missing power_w")));
        };
        let weight = match f.attr("weight") {
            Some(w) => w
                .parse()
                .map_err(|_| doc.error(line.number, format!("bad weight `{w}`")))?,
            None => 1,
        };
        let initial = match f.attr("initial") {
            Some(m) => parse_mode(m)
                .ok_or_else(|| doc.error(line.number, format!("bad initial mode `{m}`")))?,
            None => false,
        };
        if p.load_index(id).is_some() {
            return Err(doc.error(line.number, format!("duplicate load `{id}`")));
        }
        p.add_load(id, power, f.attr("bus"), weight, initial);
    }
    let ids: Vec<String> = p.loads.iter().map(|l| l.id.clone()).collect();
    let load_known = |id: &str, line: usize| -> Result<(), ParseError> {
        match ids.iter().position(|x| x == id) {
            Some(_) => Ok(()),
            None => Err(doc.error(line, format!("unknown load `{id}`"))),
        }
    };

    if doc.has("peak") {
        let mut profile = vec![f64::NAN; n];
        for line in doc.lines_of("peak") {
            let f = Fields::parse(&line.text);
            let parsed = match f.words.as_slice() {
                [range, watts] => parse_range(range, n).zip(watts.parse::<f64>().ok()),
                _ => None,
            };
            let Some(((a, b), w)) = parsed else {
                return Err(doc.error(
                    line.number,
                    "expected `<from>..<to> <watts>` or `* <watts>`",
                ));
            };
            profile[a..b].iter_mut().for_each(|v| *v = w);
        }
        if let Some(missing) = profile.iter().position(|v| v.is_nan()) {
            return Err(doc.error(
                doc.all("peak").next().map_or(0, |s| s.header_line),
                format!("[peak] does not cover slot {missing}"),
            ));
        }
        p.peak_power_profile = Some(profile);
    }

    for line in doc.lines_of("duty") {
        let f = Fields::parse(&line.text);
        let (Some(id), Ok(Some(min_on_s)), Ok(Some(period_s))) = (
            f.words.first().filter(|_| f.words.len() == 1),
            f.attr_f64("min_on_s"),
            f.attr_f64("period_s"),
        ) else {
            return Err(doc.error(line.number, "expected `<load> min_on_s=<s> period_s=<s>`"));
        };
        load_known(id, line.number)?;
        p.duty_constraints.push(DutyConstraint {
            load: id.clone(),
            min_on_s,
            period_s,
        });
    }
    for (section, target) in [("sync", 0), ("mutex", 1)] {
        for line in doc.lines_of(section) {
            let f = Fields::parse(&line.text);
            let [a, b] = f.words.as_slice() else {
                return Err(doc.error(line.number, "expected two load ids"));
            };
            load_known(a, line.number)?;
            load_known(b, line.number)?;
            let pair = PairConstraint {
                a: a.clone(),
                b: b.clone(),
            };
            if target == 0 {
                p.sync_constraints.push(pair);
            } else {
                p.mutex_constraints.push(pair);
            }
        }
    }
    for line in doc.lines_of("max_off") {
        let f = Fields::parse(&line.text);
        let (Some(id), Ok(Some(max_off_s))) = (f.words.first(), f.attr_f64("max_off_s")) else {
            return Err(doc.error(line.number, "expected `<load> max_off_s=<s>`"));
        };
        load_known(id, line.number)?;
        p.max_off_constraints.push(MaxOffConstraint {
            load: id.clone(),
            max_off_s,
        });
    }
    for line in doc.lines_of("min_on_after_on") {
        let f = Fields::parse(&line.text);
        let (Some(id), Ok(Some(min_on_s))) = (f.words.first(), f.attr_f64("min_on_s")) else {
            return Err(doc.error(line.number, "expected `<load> min_on_s=<s>`"));
        };
        load_known(id, line.number)?;
        p.min_on_after_on.push(MinOnConstraint {
            load: id.clone(),
            min_on_s,
        });
    }
    for line in doc.lines_of("bus_capacity") {
        let f = Fields::parse(&line.text);
        let (Some(id), Ok(Some(capacity_w))) = (f.words.first(), f.attr_f64("capacity_w")) else {
            return Err(doc.error(line.number, "expected `<bus> capacity_w=<W>`"));
        };
        p.bus_capacities.push(BusCapacity {
            bus_id: id.clone(),
            capacity_w,
        });
    }
    for line in doc.lines_of("fixed") {
        let f = Fields::parse(&line.text);
        let parsed = match f.words.as_slice() {
            [id, range, mode] => Some((id, parse_range(range, n), parse_mode(mode))),
            _ => None,
        };
        let Some((id, Some((a, b)), Some(v))) = parsed else {
            return Err(doc.error(line.number, "expected `<load> <from>..<to> on|off`"));
        };
        load_known(id, line.number)?;
        let l = p.load_index(id).expect("known");
        p.fixed[l][a..b].iter_mut().for_each(|x| *x = Some(v));
    }
    p.frozen_slots = frozen;
    p.check().map_err(|e| doc.error(0, e.to_string()))?;
    Ok(p)
}

fn mode_word(v: bool) -> &'static str {
    if v {
        "on"
    } else {
        "off"
    }
}

/// Canonical text for `problem`; parses back to an equal problem.
pub fn render_problem(p: &SchedulingProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "[problem]\nhorizon_s = {}\nslot_s = {}",
        p.horizon_s, p.slot_s
    );
    if let Some(e) = p.energy_budget_wh {
        let _ = writeln!(out, "energy_budget_wh = {e}");
    }
    if p.frozen_slots > 0 {
        let _ = writeln!(out, "frozen_slots = {}", p.frozen_slots);
    }
    let _ = writeln!(out, "\n[loads]");
    for (l, load) in p.loads.iter().enumerate() {
        let _ = write!(out, "{} power_w={}", load.id, load.power_draw_w);
        if let Some(b) = &load.bus_id {
            let _ = write!(out, " bus={b}");
        }
        let _ = writeln!(
            out,
            " weight={} initial={}",
            load.weight,
            mode_word(p.initial_modes[l])
        );
    }
    if let Some(peak) = &p.peak_power_profile {
        let _ = writeln!(out, "\n[peak]");
        let mut a = 0;
        while a < peak.len() {
            let mut b = a + 1;
            while b < peak.len() && peak[b] == peak[a] {
                b += 1;
            }
            let _ = writeln!(out, "{a}..{b} {}", peak[a]);
            a = b;
        }
    }
    let mut section = |name: &str, lines: Vec<String>| {
        if !lines.is_empty() {
            let _ = writeln!(out, "\n[{name}]");
            for l in lines {
                let _ = writeln!(out, "{l}");
            }
        }
    };
    section(
        "duty",
        p.duty_constraints
            .iter()
            .map(|d| format!("{} min_on_s={} period_s={}", d.load, d.min_on_s, d.period_s))
            .collect(),
    );
    section(
        "sync",
        p.sync_constraints
            .iter()
            .map(|c| format!("{} {}", c.a, c.b))
            .collect(),
    );
    section(
        "mutex",
        p.mutex_constraints
            .iter()
            .map(|c| format!("{} {}", c.a, c.b))
            .collect(),
    );
    section(
        "max_off",
        p.max_off_constraints
            .iter()
            .map(|c| format!("{} max_off_s={}", c.load, c.max_off_s))
            .collect(),
    );
    section(
        "min_on_after_on",
        p.min_on_after_on
            .iter()
            .map(|c| format!("{} min_on_s={}", c.load, c.min_on_s))
            .collect(),
    );
    section(
        "bus_capacity",
        p.bus_capacities
            .iter()
            .map(|c| format!("{} capacity_w={}", c.bus_id, c.capacity_w))
            .collect(),
    );
    let mut fixed = Vec::new();
    for (l, row) in p.fixed.iter().enumerate() {
        let mut a = 0;
        while a < row.len() {
            let Some(v) = row[a] else {
                a += 1;
                continue;
            };
            let mut b = a + 1;
            while b < row.len() && row[b] == Some(v) {
                b += 1;
            }
            fixed.push(format!("{} {a}..{b} {}", p.loads[l].id, mode_word(v)));
            a = b;
        }
    }
    section("fixed", fixed);
    out
}

/// Solver verdict plus one `0`/`1` string per load.
pub fn render_schedule(p: &SchedulingProblem, result: &SolveResult) -> String {
    let mut out = String::new();
    let status = serde_json::to_value(result.status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let _ = writeln!(
        out,
        "[result]\nstatus = {status}\noptimal = {}\nnodes = {}",
        result.optimal, result.nodes
    );
    if let Some(s) = &result.schedule {
        let _ = writeln!(
            out,
            "objective_value = {}\nmode_changes = {}\n\n[modes]",
            s.objective_value, s.mode_changes
        );
        for (l, row) in s.modes.iter().enumerate() {
            let bits: String = row.iter().map(|&b| if b { '1' } else { '0' }).collect();
            let _ = writeln!(out, "{} {bits}", p.loads[l].id);
        }
    }
    out
}
