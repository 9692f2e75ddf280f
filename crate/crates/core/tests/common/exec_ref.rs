//! Reference plan interpreter over its own condition AST, plus a random
//! plan generator that renders plans to source text for the real parser.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vsm_core::executive::{parse_plan, Executive};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum St {
    Inactive,
    Waiting,
    Executing,
    Finished,
    Failed,
    Skipped,
}

impl St {
    pub fn name(self) -> &'static str {
        match self {
            St::Inactive => "INACTIVE",
            St::Waiting => "WAITING",
            St::Executing => "EXECUTING",
            St::Finished => "FINISHED",
            St::Failed => "FAILED",
            St::Skipped => "SKIPPED",
        }
    }

    fn done(self) -> bool {
        matches!(self, St::Finished | St::Failed | St::Skipped)
    }
}

/// `Some(bool)` is a definite value; `None` is unknown.
type K = Option<bool>;

#[derive(Debug, Clone)]
pub enum Term {
    Num(f64),
    Lookup(String),
    Time,
    Var(String),
}

#[derive(Debug, Clone)]
pub enum Cond {
    Const(bool),
    Cmp(Term, &'static str, Term),
    State(&'static str, String),
    Not(Box<Cond>),
    All(Vec<Cond>),
    Any(Vec<Cond>),
}

impl Cond {
    pub fn render(&self) -> String {
        let term = |t: &Term| match t {
            Term::Num(v) => format!("{v}"),
            Term::Lookup(p) => format!("lookup({p})"),
            Term::Time => "time".into(),
            Term::Var(v) => format!("var({v})"),
        };
        match self {
            Cond::Const(b) => b.to_string(),
            Cond::Cmp(a, op, b) => format!("{} {op} {}", term(a), term(b)),
            Cond::State(p, n) => format!("{p}({n})"),
            Cond::Not(c) => format!("!({})", c.render()),
            Cond::All(v) => format!(
                "({})",
                v.iter().map(Cond::render).collect::<Vec<_>>().join(" && ")
            ),
            Cond::Any(v) => format!(
                "({})",
                v.iter().map(Cond::render).collect::<Vec<_>>().join(" || ")
            ),
        }
    }

    fn eval(&self, w: &World<'_>) -> K {
        match self {
            Cond::Const(b) => Some(*b),
            Cond::Cmp(a, op, b) => {
                let (x, y) = (w.term(a)?, w.term(b)?);
                Some(match *op {
                    "<" => x < y,
                    "<=" => x <= y,
                    ">" => x > y,
                    ">=" => x >= y,
                    "==" => x == y,
                    _ => x != y,
                })
            }
            Cond::State(p, n) => {
                let s = *w.states.get(n.as_str())?;
                Some(match *p {
                    "inactive" => s == St::Inactive,
                    "waiting" => s == St::Waiting,
                    "executing" => s == St::Executing,
                    "finished" => s == St::Finished,
                    "failed" => s == St::Failed,
                    "skipped" => s == St::Skipped,
                    _ => s.done(),
                })
            }
            Cond::Not(c) => c.eval(w).map(|b| !b),
            Cond::All(v) => {
                let vals: Vec<K> = v.iter().map(|c| c.eval(w)).collect();
                if vals.contains(&Some(false)) {
                    Some(false)
                } else if vals.contains(&None) {
                    None
                } else {
                    Some(true)
                }
            }
            Cond::Any(v) => {
                let vals: Vec<K> = v.iter().map(|c| c.eval(w)).collect();
                if vals.contains(&Some(true)) {
                    Some(true)
                } else if vals.contains(&None) {
                    None
                } else {
                    Some(false)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    List,
    Command,
    Assignment,
    Wait,
}

#[derive(Debug, Clone)]
pub struct RNode {
    pub id: String,
    pub kind: Kind,
    pub start: Option<Cond>,
    pub end: Option<Cond>,
    pub invariant: Option<Cond>,
    pub skip: Option<Cond>,
    pub command: Option<(String, &'static str)>,
    pub set: Option<(String, f64)>,
    pub children: Vec<RNode>,
}

impl RNode {
    pub fn count(&self) -> usize {
        1 + self.children.iter().map(RNode::count).sum::<usize>()
    }

    pub fn render(&self, out: &mut String, depth: usize) {
        let pad = "  ".repeat(depth);
        let kw = match self.kind {
            Kind::List => "LIST",
            Kind::Command => "COMMAND",
            Kind::Assignment => "ASSIGNMENT",
            Kind::Wait => "WAIT",
        };
        let _ = writeln!(out, "{pad}{kw} {} {{", self.id);
        for (slot, c) in [
            ("start", &self.start),
            ("end", &self.end),
            ("invariant", &self.invariant),
            ("skip", &self.skip),
        ] {
            if let Some(c) = c {
                let _ = writeln!(out, "{pad}  {slot}: {};", c.render());
            }
        }
        if let Some((t, a)) = &self.command {
            let _ = writeln!(out, "{pad}  command: {t} {a};");
        }
        if let Some((v, x)) = &self.set {
            let _ = writeln!(out, "{pad}  set: {v} = {x};");
        }
        for c in &self.children {
            c.render(out, depth + 1);
        }
        let _ = writeln!(out, "{pad}}}");
    }
}

pub struct Frame {
    pub time: f64,
    /// Absent parameters read as unknown.
    pub values: BTreeMap<String, f64>,
}

struct World<'a> {
    states: &'a BTreeMap<String, St>,
    vars: &'a BTreeMap<String, f64>,
    frame: &'a Frame,
}

impl World<'_> {
    fn term(&self, t: &Term) -> Option<f64> {
        match t {
            Term::Num(v) => Some(*v),
            Term::Lookup(p) => self.frame.values.get(p).copied(),
            Term::Time => Some(self.frame.time),
            Term::Var(v) => self.vars.get(v).copied(),
        }
    }
}

/// Per-frame record: transitions `(id, from, to)` and commands, in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameTrace {
    pub transitions: Vec<(String, &'static str, &'static str)>,
    pub commands: Vec<String>,
}

pub struct Reference<'a> {
    root: &'a RNode,
    states: BTreeMap<String, St>,
    vars: BTreeMap<String, f64>,
    halted: bool,
}

impl<'a> Reference<'a> {
    pub fn new(root: &'a RNode) -> Self {
        let mut states = BTreeMap::new();
        fn init(n: &RNode, m: &mut BTreeMap<String, St>) {
            m.insert(n.id.clone(), St::Inactive);
            n.children.iter().for_each(|c| init(c, m));
        }
        init(root, &mut states);
        Self {
            root,
            states,
            vars: BTreeMap::new(),
            halted: false,
        }
    }

    pub fn state(&self, id: &str) -> St {
        self.states[id]
    }

    /// One frame: repeated pre-order sweeps, each applying node rules
    /// against the states as already updated earlier in the same sweep.
    pub fn frame(&mut self, frame: &Frame) -> FrameTrace {
        let mut trace = FrameTrace::default();
        if self.halted {
            return trace;
        }
        let limit = 4 * self.root.count();
        let mut sweeps = 0;
        loop {
            let before = trace.transitions.len();
            self.sweep(self.root, None, frame, &mut trace);
            if trace.transitions.len() == before {
                return trace;
            }
            sweeps += 1;
            if sweeps >= limit {
                let mut order = Vec::new();
                fn pre<'n>(n: &'n RNode, o: &mut Vec<&'n str>) {
                    o.push(&n.id);
                    n.children.iter().for_each(|c| pre(c, o));
                }
                pre(self.root, &mut order);
                for id in order {
                    let s = self.states[id];
                    if !s.done() {
                        trace.transitions.push((id.to_string(), s.name(), "FAILED"));
                        self.states.insert(id.to_string(), St::Failed);
                    }
                }
                self.halted = true;
                return trace;
            }
        }
    }

    fn sweep(&mut self, n: &RNode, parent: Option<&str>, frame: &Frame, trace: &mut FrameTrace) {
        let next = self.rule(n, parent, frame);
        if let Some(to) = next {
            let from = self.states[&n.id];
            if from == St::Waiting && to == St::Executing {
                if let Some((t, a)) = &n.command {
                    trace.commands.push(format!("{t} {a}"));
                }
                if let Some((v, x)) = &n.set {
                    self.vars.insert(v.clone(), *x);
                }
            }
            self.states.insert(n.id.clone(), to);
            trace
                .transitions
                .push((n.id.clone(), from.name(), to.name()));
        }
        for c in &n.children {
            self.sweep(c, Some(&n.id), frame, trace);
        }
    }

    fn rule(&self, n: &RNode, parent: Option<&str>, frame: &Frame) -> Option<St> {
        let w = World {
            states: &self.states,
            vars: &self.vars,
            frame,
        };
        let ps = parent.map(|p| self.states[p]);
        let parent_done = ps.is_some_and(St::done);
        let holds =
            |c: &Option<Cond>, default: bool| c.as_ref().map_or(Some(default), |c| c.eval(&w));
        match self.states[&n.id] {
            St::Inactive => match ps {
                None | Some(St::Executing) => Some(St::Waiting),
                Some(p) if p.done() => Some(St::Skipped),
                _ => None,
            },
            St::Waiting if parent_done || holds(&n.skip, false) == Some(true) => Some(St::Skipped),
            St::Waiting if holds(&n.start, true) == Some(true) => Some(St::Executing),
            St::Executing if parent_done => Some(St::Failed),
            St::Executing if holds(&n.invariant, true) == Some(false) => Some(St::Failed),
            St::Executing if n.children.iter().any(|c| self.states[&c.id] == St::Failed) => {
                Some(St::Failed)
            }
            St::Executing
                if n.children.iter().all(|c| self.states[&c.id].done())
                    && holds(&n.end, true) == Some(true) =>
            {
                Some(St::Finished)
            }
            _ => None,
        }
    }
}

pub const PARAMS: [&str; 3] = ["p0", "p1", "p2"];
pub const VARS: [&str; 2] = ["k", "m"];

fn gen_term<R: Rng>(rng: &mut R) -> (Term, Term) {
    match rng.random_range(0..4) {
        0 => (
            Term::Lookup(PARAMS[rng.random_range(0..3)].into()),
            Term::Num(rng.random_range(0..3) as f64),
        ),
        1 => (Term::Time, Term::Num((rng.random_range(0..20) * 10) as f64)),
        2 => (
            Term::Var(VARS[rng.random_range(0..2)].into()),
            Term::Num(rng.random_range(0..3) as f64),
        ),
        _ => (
            Term::Num(rng.random_range(0..3) as f64),
            Term::Lookup(PARAMS[rng.random_range(0..3)].into()),
        ),
    }
}

pub fn gen_cond<R: Rng>(rng: &mut R, ids: &[String], depth: u32) -> Cond {
    const OPS: [&str; 6] = ["<", "<=", ">", ">=", "==", "!="];
    const PREDS: [&str; 7] = [
        "inactive",
        "waiting",
        "executing",
        "finished",
        "failed",
        "skipped",
        "terminal",
    ];
    let leaf = depth == 0 || rng.random_bool(0.6);
    if leaf {
        match rng.random_range(0..10) {
            0 => Cond::Const(rng.random_bool(0.5)),
            1..=5 => {
                let (a, b) = gen_term(rng);
                Cond::Cmp(a, OPS[rng.random_range(0..6)], b)
            }
            _ => Cond::State(
                PREDS[rng.random_range(0..7)],
                ids[rng.random_range(0..ids.len())].clone(),
            ),
        }
    } else {
        match rng.random_range(0..3) {
            0 => Cond::Not(Box::new(gen_cond(rng, ids, depth - 1))),
            1 => Cond::All(
                (0..rng.random_range(2..4))
                    .map(|_| gen_cond(rng, ids, depth - 1))
                    .collect(),
            ),
            _ => Cond::Any(
                (0..rng.random_range(2..4))
                    .map(|_| gen_cond(rng, ids, depth - 1))
                    .collect(),
            ),
        }
    }
}

/// Random plan of at most `max_nodes` nodes rooted at a LIST.
pub fn gen_plan<R: Rng>(rng: &mut R, max_nodes: usize) -> RNode {
    let n = rng.random_range(1..=max_nodes);
    let ids: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let kinds: Vec<Kind> = (0..n)
        .map(|i| match (i, rng.random_range(0..4)) {
            (0, _) | (_, 0) => Kind::List,
            (_, 1) => Kind::Command,
            (_, 2) => Kind::Assignment,
            _ => Kind::Wait,
        })
        .collect();
    // Each node hangs off a LIST with a smaller index.
    let lists: Vec<usize> = (0..n).filter(|&i| kinds[i] == Kind::List).collect();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 1..n {
        let candidates: Vec<usize> = lists.iter().copied().filter(|&l| l < i).collect();
        children[candidates[rng.random_range(0..candidates.len())]].push(i);
    }
    let slot = |rng: &mut R, p: f64| rng.random_bool(p).then(|| gen_cond(rng, &ids, 2));
    let mut nodes: Vec<Option<RNode>> = (0..n)
        .map(|i| {
            let kind = kinds[i];
            Some(RNode {
                id: ids[i].clone(),
                kind,
                start: slot(rng, 0.5),
                end: slot(rng, 0.5),
                invariant: slot(rng, 0.2),
                skip: slot(rng, 0.15),
                command: (kind == Kind::Command).then(|| {
                    (
                        format!("load{}", rng.random_range(1..4)),
                        if rng.random_bool(0.5) { "on" } else { "off" },
                    )
                }),
                set: (kind == Kind::Assignment).then(|| {
                    (
                        VARS[rng.random_range(0..2)].to_string(),
                        rng.random_range(0..3) as f64,
                    )
                }),
                children: Vec::new(),
            })
        })
        .collect();
    fn build(i: usize, nodes: &mut Vec<Option<RNode>>, children: &[Vec<usize>]) -> RNode {
        let mut node = nodes[i].take().expect("each node placed once");
        node.children = children[i]
            .iter()
            .map(|&c| build(c, nodes, children))
            .collect();
        node
    }
    build(0, &mut nodes, &children)
}

pub fn gen_frames<R: Rng>(rng: &mut R, max_frames: usize) -> Vec<Frame> {
    let count = rng.random_range(1..=max_frames);
    (0..count)
        .map(|f| Frame {
            time: (f * 10) as f64,
            values: PARAMS
                .iter()
                .filter_map(|p| {
                    rng.random_bool(0.85)
                        .then(|| (p.to_string(), rng.random_range(0..3) as f64))
                })
                .collect(),
        })
        .collect()
}

/// Runs one generated plan through the parser and executive and through
/// the reference; `Err` describes the first differing frame.
pub fn compare(seed: u64, max_nodes: usize, max_frames: usize) -> Result<Vec<FrameTrace>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = gen_plan(&mut rng, max_nodes);
    let frames = gen_frames(&mut rng, max_frames);
    let mut text = String::new();
    plan.render(&mut text, 0);
    let tree = parse_plan(&text).map_err(|e| format!("seed {seed}: {e}\n{text}"))?;
    let mut exec = Executive::new();
    exec.load_plan(tree, 0);
    let mut reference = Reference::new(&plan);
    let mut traces = Vec::new();
    for (f, frame) in frames.iter().enumerate() {
        let lookup = |p: &str| frame.values.get(p).copied();
        let out = exec.macro_step(f as u64 + 1, &lookup, frame.time);
        let got = FrameTrace {
            transitions: out
                .transitions
                .iter()
                .map(|t| (t.node_id.clone(), t.from.as_str(), t.to.as_str()))
                .collect(),
            commands: out.commands.iter().map(|c| c.to_string()).collect(),
        };
        let want = reference.frame(frame);
        if got != want {
            return Err(format!(
                "seed {seed} frame {f}:\n  executive {got:?}\n  reference {want:?}\n{text}"
            ));
        }
        traces.push(want);
    }
    Ok(traces)
}
