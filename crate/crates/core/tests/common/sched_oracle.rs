//! Exact scheduling optimum by forward dynamic programming over slot
//! states, plus literal enumeration for cross-checking the DP itself.

use std::collections::HashMap;

use rand::Rng;
use vsm_core::scheduler::{
    validate, BusCapacity, DutyConstraint, MaxOffConstraint, MinOnConstraint, PairConstraint,
    Schedule, SchedulingProblem,
};

fn slots_of(seconds: f64, slot_s: f64) -> usize {
    (seconds / slot_s).round() as usize
}

/// Best `(objective, mode_changes)`, or `None` when infeasible.
pub fn dp_optimum(p: &SchedulingProblem) -> Option<(i64, usize)> {
    let n = p.slots();
    let f = p.frozen_slots;
    let loads = p.loads.len();
    assert!(loads <= 8);
    let idx = |id: &str| p.load_index(id).unwrap();
    let power_mw: Vec<i64> = p
        .loads
        .iter()
        .map(|l| (l.power_draw_w * 1000.0).round() as i64)
        .collect();
    let has_duty: Vec<bool> = (0..loads)
        .map(|l| p.duty_constraints.iter().any(|d| d.load == p.loads[l].id))
        .collect();
    let duties: Vec<(usize, usize, usize)> = p
        .duty_constraints
        .iter()
        .map(|d| {
            (
                idx(&d.load),
                slots_of(d.period_s, p.slot_s),
                slots_of(d.min_on_s, p.slot_s),
            )
        })
        .collect();
    let mut max_off: Vec<Option<usize>> = vec![None; loads];
    for m in &p.max_off_constraints {
        let k = slots_of(m.max_off_s, p.slot_s);
        let e = &mut max_off[idx(&m.load)];
        *e = Some(e.map_or(k, |o: usize| o.min(k)));
    }
    let mut min_on: Vec<Option<usize>> = vec![None; loads];
    for m in &p.min_on_after_on {
        let k = slots_of(m.min_on_s, p.slot_s);
        let e = &mut min_on[idx(&m.load)];
        *e = Some(e.map_or(k, |o: usize| o.max(k)));
    }
    let pairs = |v: &[PairConstraint]| -> Vec<(usize, usize)> {
        v.iter().map(|c| (idx(&c.a), idx(&c.b))).collect()
    };
    let sync = pairs(&p.sync_constraints);
    let mutex = pairs(&p.mutex_constraints);

    // State: prev modes, off runs, on runs, turn-on flags, duty window counts.
    #[derive(Clone, PartialEq, Eq, Hash)]
    struct State {
        modes: u32,
        off: Vec<u8>,
        on: Vec<u8>,
        turned: u32,
        win: Vec<u8>,
        energy: i64,
    }
    let mut init_modes = 0u32;
    for l in 0..loads {
        if p.initial_modes[l] {
            init_modes |= 1 << l;
        }
    }
    let mut layer: HashMap<State, (i64, usize)> = HashMap::new();
    layer.insert(
        State {
            modes: init_modes,
            off: vec![0; loads],
            on: vec![0; loads],
            turned: 0,
            win: vec![0; duties.len()],
            energy: 0,
        },
        (0, 0),
    );
    for s in 0..n {
        let free = s >= f;
        let mut patterns = Vec::new();
        'pat: for m in 0u32..(1 << loads) {
            let on = |l: usize| m >> l & 1 == 1;
            for l in 0..loads {
                if let Some(v) = p.fixed[l][s] {
                    if v != on(l) {
                        continue 'pat;
                    }
                }
            }
            if free {
                if sync.iter().any(|&(a, b)| on(a) != on(b))
                    || mutex.iter().any(|&(a, b)| on(a) && on(b))
                {
                    continue;
                }
                let draw: f64 = (0..loads)
                    .filter(|&l| on(l))
                    .map(|l| p.loads[l].power_draw_w)
                    .sum();
                if let Some(peak) = &p.peak_power_profile {
                    if draw > peak[s] + 1e-6 {
                        continue;
                    }
                }
                for cap in &p.bus_capacities {
                    let bus_draw: f64 = (0..loads)
                        .filter(|&l| {
                            on(l) && p.loads[l].bus_id.as_deref() == Some(cap.bus_id.as_str())
                        })
                        .map(|l| p.loads[l].power_draw_w)
                        .sum();
                    if bus_draw > cap.capacity_w + 1e-6 {
                        continue 'pat;
                    }
                }
            }
            patterns.push(m);
        }
        let mut next: HashMap<State, (i64, usize)> = HashMap::new();
        for (st, &(obj, ch)) in &layer {
            'next: for &m in &patterns {
                let on = |l: usize| m >> l & 1 == 1;
                let mut ns = st.clone();
                ns.modes = m;
                let mut obj2 = obj;
                let mut ch2 = ch;
                for l in 0..loads {
                    let was = st.modes >> l & 1 == 1;
                    let now = on(l);
                    if free {
                        if now != was {
                            ch2 += 1;
                        }
                        if now && has_duty[l] {
                            obj2 += p.loads[l].weight;
                        }
                        if now {
                            ns.energy += power_mw[l];
                        }
                    }
                    if now {
                        ns.off[l] = 0;
                        if was && s > 0 || (s == 0 && was) {
                            ns.on[l] = ns.on[l].saturating_add(1);
                        } else {
                            ns.on[l] = 1;
                            ns.turned |= 1 << l;
                        }
                    } else {
                        if was {
                            let turned = st.turned >> l & 1 == 1;
                            if let Some(mm) = min_on[l] {
                                if turned && (st.on[l] as usize) < mm && s > f {
                                    continue 'next;
                                }
                            }
                        }
                        ns.on[l] = 0;
                        ns.turned &= !(1 << l);
                        ns.off[l] = ns.off[l].saturating_add(1);
                        if let Some(k) = max_off[l] {
                            if ns.off[l] as usize > k && free {
                                continue 'next;
                            }
                            ns.off[l] = ns.off[l].min(k as u8 + 1);
                        }
                    }
                    if let Some(mm) = min_on[l] {
                        ns.on[l] = ns.on[l].min(mm as u8);
                    } else {
                        ns.on[l] = ns.on[l].min(1);
                    }
                    if max_off[l].is_none() {
                        ns.off[l] = 0;
                    }
                }
                for (d, &(l, period, req)) in duties.iter().enumerate() {
                    if s % period == 0 {
                        ns.win[d] = 0;
                    }
                    if on(l) {
                        ns.win[d] = (ns.win[d] + 1).min(req as u8);
                    }
                    let start = s - s % period;
                    if s % period == period - 1
                        && start + period <= n
                        && s + 1 > f
                        && (ns.win[d] as usize) < req
                    {
                        continue 'next;
                    }
                }
                if let Some(budget) = p.energy_budget_wh {
                    if ns.energy as f64 / 1000.0 * p.slot_s / 3600.0 > budget + 1e-6 {
                        continue;
                    }
                }
                let e = next.entry(ns).or_insert((i64::MIN, usize::MAX));
                if obj2 > e.0 || (obj2 == e.0 && ch2 < e.1) {
                    *e = (obj2, ch2);
                }
            }
        }
        layer = next;
        if layer.is_empty() {
            return None;
        }
    }
    layer
        .values()
        .copied()
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
}

/// Literal enumeration of every assignment of the undetermined cells.
pub fn brute_force(p: &SchedulingProblem) -> Option<(i64, usize)> {
    let n = p.slots();
    let cells: Vec<(usize, usize)> = (0..p.loads.len())
        .flat_map(|l| (0..n).map(move |s| (l, s)))
        .filter(|&(l, s)| p.fixed[l][s].is_none())
        .collect();
    assert!(cells.len() <= 20, "too many free cells for enumeration");
    let mut best: Option<(i64, usize)> = None;
    for mask in 0u64..(1 << cells.len()) {
        let mut modes: Vec<Vec<bool>> = (0..p.loads.len())
            .map(|l| (0..n).map(|s| p.fixed[l][s].unwrap_or(false)).collect())
            .collect();
        for (i, &(l, s)) in cells.iter().enumerate() {
            modes[l][s] = mask >> i & 1 == 1;
        }
        if !validate(p, &modes).ok() {
            continue;
        }
        let sch = Schedule::from_modes(p, modes);
        let cand = (sch.objective_value, sch.mode_changes);
        if best.is_none_or(|b| cand.0 > b.0 || (cand.0 == b.0 && cand.1 < b.1)) {
            best = Some(cand);
        }
    }
    best
}

/// Random instance with at most `max_loads` loads and `max_slots` slots.
pub fn random_problem(rng: &mut impl Rng, max_loads: usize, max_slots: usize) -> SchedulingProblem {
    let slot_s = 60.0;
    let slots = rng.random_range(1..=max_slots);
    let loads = rng.random_range(1..=max_loads);
    let mut p = SchedulingProblem::empty(slots as f64 * slot_s, slot_s);
    let ids: Vec<String> = (0..loads).map(|i| format!("l{i}")).collect();
    for id in &ids {
        let power = rng.random_range(5..=40) as f64 * 10.0;
        let bus = if rng.random_bool(0.5) { "busA" } else { "busB" };
        p.add_load(
            id,
            power,
            Some(bus),
            rng.random_range(1..=5),
            rng.random_bool(0.4),
        );
    }
    for id in &ids {
        if rng.random_bool(0.6) {
            let period = *[2usize, 3, 4, 6].get(rng.random_range(0..4)).unwrap();
            let min_on = rng.random_range(0..=period);
            p.duty_constraints.push(DutyConstraint {
                load: id.clone(),
                min_on_s: min_on as f64 * slot_s,
                period_s: period as f64 * slot_s,
            });
        }
        if rng.random_bool(0.35) {
            p.max_off_constraints.push(MaxOffConstraint {
                load: id.clone(),
                max_off_s: rng.random_range(1..=4) as f64 * slot_s,
            });
        }
        if rng.random_bool(0.3) {
            p.min_on_after_on.push(MinOnConstraint {
                load: id.clone(),
                min_on_s: rng.random_range(2..=4) as f64 * slot_s,
            });
        }
    }
    if loads >= 2 {
        for _ in 0..2 {
            let a = rng.random_range(0..loads);
            let b = rng.random_range(0..loads);
            if a == b {
                continue;
            }
            let pair = PairConstraint {
                a: ids[a].clone(),
                b: ids[b].clone(),
            };
            match rng.random_range(0..4) {
                0 => p.sync_constraints.push(pair),
                1 | 2 => p.mutex_constraints.push(pair),
                _ => {}
            }
        }
    }
    for bus in ["busA", "busB"] {
        if rng.random_bool(0.4) {
            p.bus_capacities.push(BusCapacity {
                bus_id: bus.into(),
                capacity_w: rng.random_range(10..=80) as f64 * 10.0 + 5.0,
            });
        }
    }
    if rng.random_bool(0.5) {
        p.peak_power_profile = Some(
            (0..slots)
                .map(|_| rng.random_range(20..=120) as f64 * 10.0 + 5.0)
                .collect(),
        );
    }
    if rng.random_bool(0.5) {
        let full: f64 =
            p.loads.iter().map(|l| l.power_draw_w).sum::<f64>() * slots as f64 * slot_s / 3600.0;
        p.energy_budget_wh = Some(full * rng.random_range(0.2..0.9) + 0.0137);
    }
    for l in 0..loads {
        for s in 0..slots {
            if rng.random_bool(0.04) {
                p.fixed[l][s] = Some(rng.random_bool(0.5));
            }
        }
    }
    if slots > 2 && rng.random_bool(0.2) {
        let frozen = rng.random_range(1..=2);
        for l in 0..loads {
            for s in 0..frozen {
                p.fixed[l][s] = Some(rng.random_bool(0.5));
            }
        }
        p.frozen_slots = frozen;
    }
    p
}
