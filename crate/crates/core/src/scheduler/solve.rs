//! Branch-and-bound search over the slot-major assignment order.

use std::time::Instant;

use serde::Serialize;

use super::{ProblemError, Schedule, SchedulingProblem, POWER_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SolveBudget {
    /// Search nodes (single assignments) before giving up. Deterministic.
    pub max_nodes: u64,
    /// Optional wall-clock cap; makes the result timing dependent.
    pub max_wall_ms: Option<u64>,
}

impl Default for SolveBudget {
    fn default() -> Self {
        Self {
            max_nodes: 400_000,
            max_wall_ms: None,
        }
    }
}

impl SolveBudget {
    pub fn nodes(max_nodes: u64) -> Self {
        Self {
            max_nodes,
            max_wall_ms: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Optimal,
    /// Budget exhausted with a feasible incumbent.
    Feasible,
    Infeasible,
    /// Budget exhausted before any feasible schedule was found.
    Timeout,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub optimal: bool,
    pub schedule: Option<Schedule>,
    pub nodes: u64,
    #[serde(skip)]
    pub elapsed_ms: f64,
}

pub fn solve(
    problem: &SchedulingProblem,
    budget: SolveBudget,
) -> Result<SolveResult, ProblemError> {
    problem.check()?;
    let started = Instant::now();
    let compiled = Compiled::new(problem);
    let mut search = Search::new(&compiled, budget, started);
    let mut filled = false;
    let complete = match compiled.conflict {
        true => true,
        false => {
            search.dfs(0);
            if search.aborted && search.best.is_none() {
                // Lazy pass with a fresh budget: every group OFF unless a
                // constraint forces it ON, stopping at the first schedule.
                // It is exhaustive, so failing without aborting proves
                // infeasibility.
                search.aborted = false;
                search.budget.max_nodes = search.nodes.saturating_add(budget.max_nodes);
                search.lazy = true;
                search.dfs(0);
                filled = search.best.is_some();
                !search.aborted && !filled
            } else {
                !search.aborted
            }
        }
    };
    if filled {
        if let Some(modes) = search.best.as_mut() {
            greedy_fill(problem, &compiled, modes);
        }
    }
    let schedule = search
        .best
        .take()
        .map(|modes| Schedule::from_modes(problem, modes));
    let status = match (complete, schedule.is_some()) {
        (true, true) => SolveStatus::Optimal,
        (true, false) => SolveStatus::Infeasible,
        (false, true) => SolveStatus::Feasible,
        (false, false) => SolveStatus::Timeout,
    };
    Ok(SolveResult {
        status,
        optimal: status == SolveStatus::Optimal,
        schedule,
        nodes: search.nodes,
        elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
    })
}

/// Turns groups ON slot by slot, in objective order, wherever the whole
/// schedule stays valid.
fn greedy_fill(problem: &SchedulingProblem, c: &Compiled, modes: &mut [Vec<bool>]) {
    for s in c.frozen..c.slots {
        for &g in &c.order {
            if c.group_weight[g] <= 0 || !c.can_be_on(g, s) || modes[c.groups[g][0]][s] {
                continue;
            }
            for &l in &c.groups[g] {
                modes[l][s] = true;
            }
            if !super::validate(problem, modes).ok() {
                for &l in &c.groups[g] {
                    modes[l][s] = false;
                }
            }
        }
    }
}

struct Compiled {
    slots: usize,
    frozen: usize,
    loads: usize,
    initial: Vec<bool>,
    fixed: Vec<Vec<Option<bool>>>,
    power: Vec<f64>,
    /// Group membership from sync pairs; decision variables are group × slot.
    groups: Vec<Vec<usize>>,
    /// Groups in decision order within a slot.
    order: Vec<usize>,
    group_weight: Vec<i64>,
    group_power: Vec<f64>,
    group_fixed: Vec<Vec<Option<bool>>>,
    group_never_on: Vec<bool>,
    /// (period slots, required ON slots) per load.
    duties: Vec<Vec<(usize, usize)>>,
    max_off: Vec<Option<usize>>,
    min_on: Vec<Option<usize>>,
    mutex: Vec<Vec<usize>>,
    bus_of: Vec<Option<usize>>,
    bus_cap: Vec<f64>,
    peak: Option<Vec<f64>>,
    energy: Option<f64>,
    slot_h: f64,
    /// Static per-slot objective bound under the peak profile, suffix-summed.
    peak_bound_suffix: Vec<f64>,
    /// Per group, number of slots `>= s` where it may be ON.
    on_capable_suffix: Vec<Vec<usize>>,
    /// Prefix sums of per-slot peak headroom left by forced-ON loads
    /// without duty; empty without a peak profile.
    peak_prefix: Vec<f64>,
    /// Same per bus.
    bus_prefix: Vec<Vec<f64>>,
    conflict: bool,
}

impl Compiled {
    fn new(p: &SchedulingProblem) -> Self {
        let slots = p.slots();
        let loads = p.loads.len();
        let idx = |id: &str| p.load_index(id).expect("checked");

        let mut parent: Vec<usize> = (0..loads).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            let mut c = x;
            while parent[c] != r {
                let next = parent[c];
                parent[c] = r;
                c = next;
            }
            r
        }
        for s in &p.sync_constraints {
            let (a, b) = (find(&mut parent, idx(&s.a)), find(&mut parent, idx(&s.b)));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut group_of = vec![usize::MAX; loads];
        for l in 0..loads {
            let r = find(&mut parent, l);
            if group_of[r] == usize::MAX {
                group_of[r] = groups.len();
                groups.push(Vec::new());
            }
            group_of[l] = group_of[r];
            groups[group_of[l]].push(l);
        }

        let weight: Vec<i64> = (0..loads)
            .map(|l| if p.has_duty(l) { p.loads[l].weight } else { 0 })
            .collect();
        let power: Vec<f64> = p.loads.iter().map(|l| l.power_draw_w).collect();
        let group_weight: Vec<i64> = groups
            .iter()
            .map(|g| g.iter().map(|&l| weight[l]).sum())
            .collect();
        let group_power: Vec<f64> = groups
            .iter()
            .map(|g| g.iter().map(|&l| power[l]).sum())
            .collect();

        let mut conflict = false;
        let group_fixed: Vec<Vec<Option<bool>>> = groups
            .iter()
            .map(|g| {
                (0..slots)
                    .map(|s| {
                        let mut v = None;
                        for &l in g {
                            match (v, p.fixed[l][s]) {
                                (_, None) => {}
                                (None, f) => v = f,
                                (Some(a), Some(b)) if a != b && s >= p.frozen_slots => {
                                    conflict = true
                                }
                                _ => {}
                            }
                        }
                        v
                    })
                    .collect()
            })
            .collect();

        let mut mutex = vec![Vec::new(); loads];
        let mut group_never_on = vec![false; groups.len()];
        for m in &p.mutex_constraints {
            let (a, b) = (idx(&m.a), idx(&m.b));
            if group_of[a] == group_of[b] {
                group_never_on[group_of[a]] = true;
            }
            mutex[a].push(b);
            mutex[b].push(a);
        }

        let mut duties = vec![Vec::new(); loads];
        for d in &p.duty_constraints {
            let period = (d.period_s / p.slot_s).round() as usize;
            let req = p.to_slots(d.min_on_s - 1e-9).min(period);
            duties[idx(&d.load)].push((period, req));
        }
        let mut max_off: Vec<Option<usize>> = vec![None; loads];
        for m in &p.max_off_constraints {
            let k = (m.max_off_s / p.slot_s + 1e-9).floor() as usize;
            let e = &mut max_off[idx(&m.load)];
            *e = Some(e.map_or(k, |o| o.min(k)));
        }
        let mut min_on: Vec<Option<usize>> = vec![None; loads];
        for m in &p.min_on_after_on {
            let k = p.to_slots(m.min_on_s - 1e-9);
            let e = &mut min_on[idx(&m.load)];
            *e = Some(e.map_or(k, |o| o.max(k)));
        }

        let mut bus_cap: Vec<f64> = Vec::new();
        let mut bus_names: Vec<&str> = Vec::new();
        for b in &p.bus_capacities {
            match bus_names.iter().position(|n| *n == b.bus_id) {
                Some(i) => bus_cap[i] = bus_cap[i].min(b.capacity_w),
                None => {
                    bus_names.push(&b.bus_id);
                    bus_cap.push(b.capacity_w);
                }
            }
        }
        let bus_of: Vec<Option<usize>> = p
            .loads
            .iter()
            .map(|l| {
                l.bus_id
                    .as_deref()
                    .and_then(|b| bus_names.iter().position(|n| *n == b))
            })
            .collect();

        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = group_weight[a] as f64 / group_power[a].max(1e-9);
            let rb = group_weight[b] as f64 / group_power[b].max(1e-9);
            rb.total_cmp(&ra).then(a.cmp(&b))
        });

        let mut c = Self {
            slots,
            frozen: p.frozen_slots,
            loads,
            initial: p.initial_modes.clone(),
            fixed: p.fixed.clone(),
            power,
            groups,
            order,
            group_weight,
            group_power,
            group_fixed,
            group_never_on,
            duties,
            max_off,
            min_on,
            mutex,
            bus_of,
            bus_cap,
            peak: p.peak_power_profile.clone(),
            energy: p.energy_budget_wh,
            slot_h: p.slot_s / 3600.0,
            peak_bound_suffix: Vec::new(),
            on_capable_suffix: Vec::new(),
            peak_prefix: Vec::new(),
            bus_prefix: Vec::new(),
            conflict,
        };
        let mut forced_w = vec![0.0; slots];
        let mut forced_bus_w = vec![vec![0.0; slots]; c.bus_cap.len()];
        for (g, members) in c.groups.iter().enumerate() {
            if members
                .iter()
                .any(|&l| c.duties[l].iter().any(|&(_, req)| req > 0))
            {
                continue;
            }
            for s in 0..slots {
                if c.group_fixed[g][s] == Some(true) {
                    for &l in members {
                        forced_w[s] += c.power[l];
                        if let Some(b) = c.bus_of[l] {
                            forced_bus_w[b][s] += c.power[l];
                        }
                    }
                }
            }
        }
        let prefix = |cap: &dyn Fn(usize) -> f64| {
            let mut v = vec![0.0; slots + 1];
            for s in 0..slots {
                v[s + 1] = v[s] + cap(s).max(0.0);
            }
            v
        };
        if let Some(peak) = &c.peak {
            c.peak_prefix = prefix(&|s| peak[s] - forced_w[s]);
        }
        c.bus_prefix = (0..c.bus_cap.len())
            .map(|b| prefix(&|s| c.bus_cap[b] - forced_bus_w[b][s]))
            .collect();
        let mut suffix = vec![0.0; slots + 1];
        for s in (0..slots).rev() {
            suffix[s] = suffix[s + 1] + c.slot_bound(s, 0, 0.0);
        }
        c.peak_bound_suffix = suffix;
        c.on_capable_suffix = (0..c.groups.len())
            .map(|g| {
                let mut counts = vec![0; slots + 1];
                for s in (0..slots).rev() {
                    counts[s] = counts[s + 1] + usize::from(c.can_be_on(g, s));
                }
                counts
            })
            .collect();
        c
    }

    fn can_be_on(&self, g: usize, s: usize) -> bool {
        !self.group_never_on[g] && self.group_fixed[g][s] != Some(false)
    }

    /// Fractional-knapsack objective bound for groups at decision positions
    /// `from..` of slot `s`, given `used` watts already committed there.
    fn slot_bound(&self, s: usize, from: usize, used: f64) -> f64 {
        let mut cap = match &self.peak {
            Some(p) => p[s] - used,
            None => f64::INFINITY,
        };
        let mut bound = 0.0;
        for &g in &self.order[from..] {
            let w = self.group_weight[g];
            let fixed_on = self.group_fixed[g][s] == Some(true);
            if fixed_on {
                cap -= self.group_power[g];
                bound += w as f64;
            }
        }
        // Groups are already sorted by weight per watt.
        for &g in &self.order[from..] {
            let w = self.group_weight[g];
            if w <= 0 || !self.can_be_on(g, s) || self.group_fixed[g][s] == Some(true) {
                continue;
            }
            if cap <= 0.0 {
                break;
            }
            let pw = self.group_power[g];
            if pw <= cap + POWER_EPS {
                bound += w as f64;
                cap -= pw;
            } else {
                bound += w as f64 * cap / pw;
                cap = 0.0;
            }
        }
        bound
    }
}

struct Search<'a> {
    c: &'a Compiled,
    x: Vec<Vec<bool>>,
    slot_power: Vec<f64>,
    bus_power: Vec<Vec<f64>>,
    energy_used: f64,
    objective: i64,
    changes: usize,
    best: Option<Vec<Vec<bool>>>,
    best_objective: i64,
    best_changes: usize,
    nodes: u64,
    budget: SolveBudget,
    started: Instant,
    aborted: bool,
    lazy: bool,
}

impl<'a> Search<'a> {
    fn new(c: &'a Compiled, budget: SolveBudget, started: Instant) -> Self {
        let mut x = vec![vec![false; c.slots]; c.loads];
        for (l, row) in x.iter_mut().enumerate() {
            for (s, v) in row.iter_mut().enumerate().take(c.frozen) {
                *v = c.fixed[l][s].unwrap_or(false);
            }
        }
        Self {
            c,
            x,
            slot_power: vec![0.0; c.slots],
            bus_power: vec![vec![0.0; c.bus_cap.len()]; c.slots],
            energy_used: 0.0,
            objective: 0,
            changes: 0,
            best: None,
            best_objective: i64::MIN,
            best_changes: usize::MAX,
            nodes: 0,
            budget,
            started,
            aborted: false,
            lazy: false,
        }
    }

    fn out_of_budget(&mut self) -> bool {
        if self.aborted {
            return true;
        }
        if self.nodes >= self.budget.max_nodes {
            self.aborted = true;
        } else if let Some(ms) = self.budget.max_wall_ms {
            if self.nodes % 1024 == 0 && self.started.elapsed().as_millis() as u64 >= ms {
                self.aborted = true;
            }
        }
        self.aborted
    }

    fn dfs(&mut self, pos: usize) {
        let c = self.c;
        let per_slot = c.order.len();
        let free = c.slots - c.frozen;
        if pos == per_slot * free {
            if self.objective > self.best_objective
                || (self.objective == self.best_objective && self.changes < self.best_changes)
            {
                self.best_objective = self.objective;
                self.best_changes = self.changes;
                self.best = Some(self.x.clone());
            }
            return;
        }
        if self.best.is_some() {
            let ub = self.objective as f64 + self.upper_bound(pos) + 1e-6;
            let ub = ub.floor() as i64;
            if ub < self.best_objective
                || (ub == self.best_objective && self.changes >= self.best_changes)
            {
                return;
            }
        }
        let s = c.frozen + pos / per_slot;
        let k = pos % per_slot;
        let g = c.order[k];
        let prev_on = {
            let l = c.groups[g][0];
            if s == 0 {
                c.initial[l]
            } else {
                self.x[l][s - 1]
            }
        };
        let first = if self.lazy {
            false
        } else if c.group_weight[g] > 0 {
            true
        } else {
            prev_on
        };
        for v in [first, !first] {
            if self.out_of_budget() || (self.lazy && self.best.is_some()) {
                return;
            }
            self.nodes += 1;
            if !self.feasible(g, s, v) {
                continue;
            }
            let saved_energy = self.energy_used;
            let saved_power = self.slot_power[s];
            let saved_bus = self.bus_power[s].clone();
            let saved_obj = self.objective;
            let saved_changes = self.changes;
            self.assign(g, s, v);
            if self.energy_lookahead_ok(s, k) && self.capacity_lookahead_ok(s, k) {
                self.dfs(pos + 1);
            }
            self.energy_used = saved_energy;
            self.slot_power[s] = saved_power;
            self.bus_power[s] = saved_bus;
            self.objective = saved_obj;
            self.changes = saved_changes;
            for &l in &c.groups[g] {
                self.x[l][s] = false;
            }
        }
    }

    fn assign(&mut self, g: usize, s: usize, v: bool) {
        let c = self.c;
        for &l in &c.groups[g] {
            let prev = if s == 0 {
                c.initial[l]
            } else {
                self.x[l][s - 1]
            };
            if prev != v {
                self.changes += 1;
            }
            self.x[l][s] = v;
            if v {
                if let Some(b) = c.bus_of[l] {
                    self.bus_power[s][b] += c.power[l];
                }
            }
        }
        if v {
            self.slot_power[s] += c.group_power[g];
            self.energy_used += c.group_power[g] * c.slot_h;
            self.objective += c.group_weight[g];
        }
    }

    fn feasible(&self, g: usize, s: usize, v: bool) -> bool {
        let c = self.c;
        if let Some(f) = c.group_fixed[g][s] {
            if f != v {
                return false;
            }
        }
        if v {
            if c.group_never_on[g] {
                return false;
            }
            if let Some(peak) = &c.peak {
                if self.slot_power[s] + c.group_power[g] > peak[s] + POWER_EPS {
                    return false;
                }
            }
            if let Some(budget) = c.energy {
                if self.energy_used + c.group_power[g] * c.slot_h > budget + POWER_EPS {
                    return false;
                }
            }
            let mut extra = vec![0.0; c.bus_cap.len()];
            for &l in &c.groups[g] {
                if let Some(b) = c.bus_of[l] {
                    extra[b] += c.power[l];
                }
                // Partners decided earlier in this slot are already set;
                // later ones are still false.
                if c.mutex[l].iter().any(|&m| self.x[m][s]) {
                    return false;
                }
            }
            for (b, e) in extra.iter().enumerate() {
                if *e > 0.0 && self.bus_power[s][b] + e > c.bus_cap[b] + POWER_EPS {
                    return false;
                }
            }
        }
        for &l in &c.groups[g] {
            for &(period, req) in &c.duties[l] {
                let start = (s / period) * period;
                let end = start + period;
                if end > c.slots {
                    continue;
                }
                let on = self.x[l][start..s].iter().filter(|&&b| b).count() + usize::from(v);
                if on + (end - 1 - s) < req {
                    return false;
                }
            }
        }
        if v {
            return true;
        }
        for &l in &c.groups[g] {
            if let Some(k) = c.max_off[l] {
                let mut run = 1;
                let mut t = s;
                while t > 0 && !self.x[l][t - 1] {
                    run += 1;
                    t -= 1;
                    if run > k {
                        break;
                    }
                }
                if run > k {
                    return false;
                }
            }
            if let Some(m) = c.min_on[l] {
                if s > c.frozen && self.x[l][s - 1] {
                    let mut a = s - 1;
                    while a > 0 && self.x[l][a - 1] {
                        a -= 1;
                    }
                    let turned_on = a > 0 || !c.initial[l];
                    if turned_on && s - a < m {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Minimum further energy implied by duty constraints must fit the budget.
    fn energy_lookahead_ok(&self, s: usize, k: usize) -> bool {
        let Some(budget) = self.c.energy else {
            return true;
        };
        let c = self.c;
        let mut decided_now = vec![false; c.loads];
        for &g in &c.order[..=k] {
            for &l in &c.groups[g] {
                decided_now[l] = true;
            }
        }
        let mut need_wh = 0.0;
        for l in 0..c.loads {
            let next = if decided_now[l] { s + 1 } else { s };
            let mut need = 0usize;
            for &(period, req) in &c.duties[l] {
                if req == 0 {
                    continue;
                }
                let mut n = 0;
                let mut start = (next / period) * period;
                if start + period <= c.slots {
                    let on = self.x[l][start..next].iter().filter(|&&b| b).count();
                    n += req.saturating_sub(on);
                    start += period;
                } else {
                    start = c.slots;
                }
                while start + period <= c.slots {
                    n += req;
                    start += period;
                }
                need = need.max(n);
            }
            need_wh += need as f64 * c.power[l] * c.slot_h;
        }
        self.energy_used + need_wh <= budget + POWER_EPS
    }

    /// Remaining ON slots owed to the current and next duty window of each
    /// load must fit, cumulatively by window end, under the peak profile
    /// and each bus capacity.
    fn capacity_lookahead_ok(&self, s: usize, k: usize) -> bool {
        let c = self.c;
        let mut decided_now = vec![false; c.loads];
        for &g in &c.order[..=k] {
            for &l in &c.groups[g] {
                decided_now[l] = true;
            }
        }
        // (window end, watt-slots, bus)
        let mut items: Vec<(usize, f64, Option<usize>)> = Vec::new();
        for l in 0..c.loads {
            let Some(&(period, req)) = c.duties[l].first() else {
                continue;
            };
            if req == 0 {
                continue;
            }
            let next = if decided_now[l] { s + 1 } else { s };
            let start = (next / period) * period;
            let end = start + period;
            if end > c.slots {
                continue;
            }
            let on = self.x[l][start..next].iter().filter(|&&b| b).count();
            let need = req.saturating_sub(on);
            if need > 0 {
                items.push((end, need as f64 * c.power[l], c.bus_of[l]));
            }
            if end + period <= c.slots {
                items.push((end + period, req as f64 * c.power[l], c.bus_of[l]));
            }
        }
        if items.is_empty() {
            return true;
        }
        items.sort_by_key(|i| i.0);
        let fits = |base: f64, prefix: &[f64], bus: Option<Option<usize>>| {
            let mut acc = 0.0;
            for (i, &(end, e, b)) in items.iter().enumerate() {
                if bus.is_none_or(|want| want == b) {
                    acc += e;
                }
                if items.get(i + 1).is_some_and(|n| n.0 == end) {
                    continue;
                }
                let cap = base.max(0.0) + prefix[end] - prefix[s + 1];
                if acc > cap + POWER_EPS * (end - s) as f64 {
                    return false;
                }
            }
            true
        };
        if let Some(peak) = &c.peak {
            if !fits(peak[s] - self.slot_power[s], &c.peak_prefix, None) {
                return false;
            }
        }
        if !(0..c.bus_cap.len()).all(|b| {
            fits(
                c.bus_cap[b] - self.bus_power[s][b],
                &c.bus_prefix[b],
                Some(Some(b)),
            )
        }) {
            return false;
        }
        // Mutex partners share one unit of capacity per slot.
        for (a, partners) in c.mutex.iter().enumerate() {
            for &b in partners.iter().filter(|&&b| b > a) {
                let mut acc: Vec<(usize, usize)> = Vec::new();
                for l in [a, b] {
                    let Some(&(period, req)) = c.duties[l].first() else {
                        continue;
                    };
                    let next = if decided_now[l] { s + 1 } else { s };
                    let start = (next / period) * period;
                    let end = start + period;
                    if req == 0 || end > c.slots {
                        continue;
                    }
                    let on = self.x[l][start..next].iter().filter(|&&v| v).count();
                    acc.push((end, req.saturating_sub(on)));
                    if end + period <= c.slots {
                        acc.push((end + period, req));
                    }
                }
                if acc.is_empty() {
                    continue;
                }
                acc.sort_unstable();
                let slot_s_free =
                    !(self.x[a][s] || self.x[b][s] || (decided_now[a] && decided_now[b]));
                let mut need = 0;
                for (end, n) in acc {
                    need += n;
                    if need > usize::from(slot_s_free) + (end - s - 1) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Objective still obtainable after decision position `pos`.
    fn upper_bound(&self, pos: usize) -> f64 {
        let c = self.c;
        let per_slot = c.order.len();
        let s = c.frozen + pos / per_slot;
        let k = pos % per_slot;
        let peak_bound = c.slot_bound(s, k, self.slot_power[s]) + c.peak_bound_suffix[s + 1];
        let Some(budget) = c.energy else {
            return peak_bound;
        };
        // Fractional knapsack over remaining energy.
        let mut remaining = budget - self.energy_used;
        let mut bound = 0.0;
        for (rank, &g) in c.order.iter().enumerate() {
            let w = c.group_weight[g];
            if w <= 0 {
                continue;
            }
            let mut count = c.on_capable_suffix[g][s + 1];
            if rank >= k && c.can_be_on(g, s) {
                count += 1;
            }
            if count == 0 || remaining <= 0.0 {
                continue;
            }
            let e = c.group_power[g] * c.slot_h;
            let take = if e <= 0.0 {
                count as f64
            } else {
                (remaining / e).min(count as f64)
            };
            bound += take * w as f64;
            remaining -= take * e;
        }
        bound.min(peak_bound)
    }
}
