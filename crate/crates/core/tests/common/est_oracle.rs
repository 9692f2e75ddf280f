//! Brute-force mode estimation over the full product of component modes.
//!
//! Where the tracker expands candidates one fault transition at a time,
//! the oracle enumerates every mode assignment and asks whether it is
//! reachable in exactly `d` fault steps, splitting `d` across components
//! and using per-component exact-length reachability tables.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};

/// A small model in the oracle's own terms.
#[derive(Debug, Clone)]
pub struct Comp {
    pub name: String,
    pub modes: Vec<String>,
    pub initial: Option<usize>,
    pub nominal: BTreeMap<(usize, String), usize>,
    pub faults: Vec<(usize, usize)>,
    /// Mode → `(param, expected value)`.
    pub obs: BTreeMap<usize, (String, f64)>,
}

pub struct Oracle {
    pub comps: Vec<Comp>,
    /// `reach[i][k][from][to]`: component `i` walks `from → to` in exactly
    /// `k` fault steps.
    reach: Vec<Vec<Vec<Vec<bool>>>>,
}

impl Oracle {
    pub fn new(comps: Vec<Comp>, max_steps: usize) -> Self {
        let reach = comps
            .iter()
            .map(|c| {
                let n = c.modes.len();
                let mut step = vec![vec![false; n]; n];
                for &(f, t) in &c.faults {
                    step[f][t] = true;
                }
                let mut tables = vec![(0..n)
                    .map(|i| (0..n).map(|j| i == j).collect())
                    .collect::<Vec<Vec<bool>>>()];
                for k in 1..=max_steps {
                    let prev = &tables[k - 1];
                    let next = (0..n)
                        .map(|i| {
                            (0..n)
                                .map(|j| (0..n).any(|m| prev[i][m] && step[m][j]))
                                .collect()
                        })
                        .collect();
                    tables.push(next);
                }
                tables
            })
            .collect();
        Self { comps, reach }
    }

    pub fn render(&self) -> String {
        let mut s = String::from("[modes]\n");
        for c in &self.comps {
            s += &format!("{} modes={}", c.name, c.modes.join("|"));
            if let Some(i) = c.initial {
                s += &format!(" initial={}", c.modes[i]);
            }
            s += "\n";
        }
        s += "[transitions]\n";
        for c in &self.comps {
            for ((f, cmd), t) in &c.nominal {
                s += &format!("{} {} {cmd} -> {}\n", c.name, c.modes[*f], c.modes[*t]);
            }
        }
        s += "[faults]\n";
        for c in &self.comps {
            for (f, t) in &c.faults {
                s += &format!("{} {} -> {}\n", c.name, c.modes[*f], c.modes[*t]);
            }
        }
        s += "[observations]\n";
        for c in &self.comps {
            for (m, (p, v)) in &c.obs {
                s += &format!("{} {} : lookup({p}) == {v}\n", c.name, c.modes[*m]);
            }
        }
        s
    }

    fn all_assignments(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for c in &self.comps {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..c.modes.len()).map(move |m| {
                        let mut q = p.clone();
                        q.push(m);
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn initial(&self) -> Vec<(Vec<usize>, u32)> {
        self.all_assignments()
            .into_iter()
            .filter(|a| {
                self.comps
                    .iter()
                    .zip(a)
                    .all(|(c, &m)| c.initial.is_none_or(|i| i == m))
            })
            .map(|a| (a, 0))
            .collect()
    }

    fn consistent(&self, a: &[usize], frame: &BTreeMap<String, f64>) -> bool {
        self.comps.iter().zip(a).all(|(c, &m)| match c.obs.get(&m) {
            Some((p, v)) => frame.get(p).is_none_or(|x| x == v),
            None => true,
        })
    }

    /// Whether `to` is reachable from `from` in exactly `d` single-component
    /// fault steps, by trying every split of `d` across components.
    fn exact(&self, from: &[usize], to: &[usize], d: usize) -> bool {
        fn go(o: &Oracle, i: usize, from: &[usize], to: &[usize], left: usize) -> bool {
            if i == o.comps.len() {
                return left == 0;
            }
            (0..=left).any(|k| o.reach[i][k][from[i]][to[i]] && go(o, i + 1, from, to, left - k))
        }
        go(self, 0, from, to, d)
    }

    /// One frame. `None` when no assignment within the budget is consistent.
    pub fn advance(
        &self,
        set: &[(Vec<usize>, u32)],
        commands: &[(String, String)],
        frame: &BTreeMap<String, f64>,
        budget: usize,
    ) -> Option<Vec<(Vec<usize>, u32)>> {
        let moved: Vec<(Vec<usize>, u32)> = set
            .iter()
            .map(|(a, f)| {
                let mut a = a.clone();
                for (target, action) in commands {
                    if let Some(i) = self.comps.iter().position(|c| &c.name == target) {
                        if let Some(&t) = self.comps[i].nominal.get(&(a[i], action.clone())) {
                            a[i] = t;
                        }
                    }
                }
                (a, *f)
            })
            .collect();
        let all = self.all_assignments();
        for d in 0..=budget {
            let mut found: BTreeMap<Vec<usize>, u32> = BTreeMap::new();
            for target in all.iter().filter(|t| self.consistent(t, frame)) {
                for (src, f) in &moved {
                    if self.exact(src, target, d) {
                        let e = found.entry(target.clone()).or_insert(u32::MAX);
                        *e = (*e).min(f + d as u32);
                    }
                }
            }
            if !found.is_empty() {
                let mut v: Vec<(Vec<usize>, u32)> = found.into_iter().collect();
                let names = |a: &[usize]| -> Vec<String> {
                    self.comps
                        .iter()
                        .zip(a)
                        .map(|(c, &m)| c.modes[m].clone())
                        .collect()
                };
                v.sort_by(|x, y| (x.1, names(&x.0)).cmp(&(y.1, names(&y.0))));
                return Some(v);
            }
        }
        None
    }
}

pub const COMMANDS: [&str; 2] = ["on", "off"];

/// Random model: up to 3 components of 2–4 modes observing params `x0..x2`.
pub fn gen_model<R: Rng>(rng: &mut R) -> Vec<Comp> {
    (0..rng.random_range(1..=3))
        .map(|i| {
            let n = rng.random_range(2..=4);
            let modes: Vec<String> = (0..n).map(|m| format!("m{m}")).collect();
            let mut nominal = BTreeMap::new();
            for f in 0..n {
                for cmd in COMMANDS {
                    if rng.random_bool(0.5) {
                        nominal.insert((f, cmd.to_string()), rng.random_range(0..n));
                    }
                }
            }
            let mut faults = Vec::new();
            for f in 0..n {
                for t in 0..n {
                    if f != t && rng.random_bool(0.3) {
                        faults.push((f, t));
                    }
                }
            }
            let obs = (0..n)
                .filter_map(|m| {
                    rng.random_bool(0.7).then(|| {
                        (
                            m,
                            (
                                format!("x{}", rng.random_range(0..3)),
                                rng.random_range(0..3) as f64,
                            ),
                        )
                    })
                })
                .collect();
            Comp {
                name: format!("c{i}"),
                modes,
                initial: rng.random_bool(0.7).then(|| rng.random_range(0..n)),
                nominal,
                faults,
                obs,
            }
        })
        .collect()
}

pub fn gen_step<R: Rng>(
    rng: &mut R,
    comps: usize,
) -> (Vec<(String, String)>, BTreeMap<String, f64>) {
    let commands = (0..rng.random_range(0..=2))
        .map(|_| {
            (
                format!("c{}", rng.random_range(0..comps)),
                COMMANDS[rng.random_range(0..2)].to_string(),
            )
        })
        .collect();
    let frame = (0..3)
        .filter_map(|p| {
            rng.random_bool(0.8)
                .then(|| (format!("x{p}"), rng.random_range(0..3) as f64))
        })
        .collect();
    (commands, frame)
}

/// Extracts the named components from a model file's estimator sections.
/// Observations must be of the form `lookup(<param>) == <number>`.
pub fn components_from_text(text: &str, names: &[&str]) -> Vec<Comp> {
    let mut section = "";
    let mut comps: Vec<Comp> = Vec::new();
    let idx = |c: &Comp, m: &str| c.modes.iter().position(|x| x == m).expect("mode listed");
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(s) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = if ["modes", "transitions", "faults", "observations"].contains(&s) {
                s
            } else {
                ""
            };
            continue;
        }
        let w: Vec<&str> = line.split_whitespace().collect();
        if section == "modes" {
            if !names.contains(&w[0]) {
                continue;
            }
            let modes: Vec<String> = w[1]
                .trim_start_matches("modes=")
                .split('|')
                .map(str::to_string)
                .collect();
            let initial = w
                .get(2)
                .and_then(|i| i.strip_prefix("initial="))
                .map(|i| modes.iter().position(|m| m == i).unwrap());
            comps.push(Comp {
                name: w[0].into(),
                modes,
                initial,
                nominal: BTreeMap::new(),
                faults: vec![],
                obs: BTreeMap::new(),
            });
            continue;
        }
        let Some(c) = comps.iter_mut().find(|c| c.name == w[0]) else {
            continue;
        };
        match section {
            "transitions" => {
                let (f, t) = (idx(c, w[1]), idx(c, w[4]));
                c.nominal.insert((f, w[2].to_string()), t);
            }
            "faults" => {
                let (f, t) = (idx(c, w[1]), idx(c, w[3]));
                c.faults.push((f, t));
            }
            "observations" => {
                let m = idx(c, w[1]);
                let param = w[3]
                    .trim_start_matches("lookup(")
                    .trim_end_matches(')')
                    .to_string();
                assert_eq!(w[4], "==", "unsupported observation `{line}`");
                c.obs
                    .insert(m, (param, w[5].parse().expect("numeric observation")));
            }
            _ => {}
        }
    }
    assert_eq!(comps.len(), names.len(), "all components found");
    comps
}

/// Frames over the relay and switch readings the components observe.
pub fn habitat_steps(
    comps: &[Comp],
    seed: u64,
) -> Vec<(Vec<(String, String)>, BTreeMap<String, f64>)> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<String> = comps
        .iter()
        .flat_map(|c| c.obs.values().map(|(p, _)| p.clone()))
        .collect();
    (0..8)
        .map(|_| {
            let commands = comps
                .iter()
                .filter_map(|c| {
                    rng.random_bool(0.3).then(|| {
                        (
                            c.name.clone(),
                            ["on", "off", "open", "close"][rng.random_range(0..4)].to_string(),
                        )
                    })
                })
                .collect();
            let frame = params
                .iter()
                .filter_map(|p| {
                    rng.random_bool(0.9)
                        .then(|| (p.clone(), rng.random_range(0..2) as f64))
                })
                .collect();
            (commands, frame)
        })
        .collect()
}

struct Ctx<'a>(&'a BTreeMap<String, f64>);

impl vsm_core::expr::EvalContext for Ctx<'_> {
    fn lookup(&self, p: &str) -> Option<f64> {
        self.0.get(p).copied()
    }
    fn time(&self) -> f64 {
        0.0
    }
}

/// What a compared run went through.
#[derive(Debug, Default, Clone, Copy)]
pub struct Coverage {
    pub max_faults: u32,
    pub exhausted: bool,
}

/// Drives the tracker and the oracle through the same frames and compares
/// full candidate sets after every one.
pub fn compare_tracker(
    comps: Vec<Comp>,
    steps: &[(Vec<(String, String)>, BTreeMap<String, f64>)],
    budget: usize,
) -> Result<Coverage, String> {
    use vsm_core::estimator::{advance, init, TransitionModel};
    use vsm_core::sections::SectionedText;
    use vsm_core::sim::{Action, Command};

    let oracle = Oracle::new(comps, budget);
    let text = oracle.render();
    let doc = SectionedText::parse("oracle.model", &text).map_err(|e| e.to_string())?;
    let model = TransitionModel::from_doc(&doc).map_err(|e| format!("{e}\n{text}"))?;
    let mut set = init(&model, &BTreeMap::new(), 1 << 20).map_err(|e| e.to_string())?;
    let mut want = oracle.initial();
    let mut cov = Coverage::default();
    for (n, (commands, frame)) in steps.iter().enumerate() {
        let cmds: Vec<Command> = commands
            .iter()
            .map(|(t, a)| Command::new(t.clone(), Action::parse(a).expect("known action")))
            .collect();
        let got = advance(&model, &set, &cmds, &Ctx(frame), budget);
        match (got, oracle.advance(&want, commands, frame, budget)) {
            (Ok(s), Some(w)) => {
                let g: Vec<(Vec<usize>, u32)> = s
                    .candidates
                    .iter()
                    .map(|c| (c.modes.clone(), c.fault_count))
                    .collect();
                if g != w {
                    return Err(format!("step {n}: tracker {g:?} oracle {w:?}\n{text}"));
                }
                cov.max_faults = cov.max_faults.max(w.iter().map(|c| c.1).max().unwrap_or(0));
                set = s;
                want = w;
            }
            (Err(_), None) => {
                cov.exhausted = true;
                return Ok(cov);
            }
            (g, w) => return Err(format!("step {n}: tracker {g:?} oracle {w:?}\n{text}")),
        }
    }
    Ok(cov)
}

/// Habitat components whose candidate sets are checked against the oracle:
/// single loads and buses plus coupled load/bus pairs.
pub const HABITAT_SUBMODELS: [&[&str]; 7] = [
    &["load1"],
    &["load4"],
    &["load13"],
    &["bus2"],
    &["load1", "bus1"],
    &["load4", "load7"],
    &["load10", "bus3"],
];
