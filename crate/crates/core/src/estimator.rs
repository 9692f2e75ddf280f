//! Discrete consistency-based mode estimation.
//!
//! Every component has a finite set of modes, deterministic nominal
//! transitions driven by commands, spontaneous fault transitions, and an
//! observation predicate per mode. The tracker keeps the candidate mode
//! assignments consistent with all observations so far, preferring
//! explanations with the fewest fault transitions:
//!
//! 1. advance each candidate by the nominal transitions for this cycle's
//!    commands;
//! 2. keep the candidates whose observation predicates are not contradicted
//!    by the frame (an UNKNOWN predicate does not contradict);
//! 3. if none survive, insert one more fault transition into every advanced
//!    candidate and filter again, up to `fault_budget` extra transitions per
//!    step. All consistent candidates of the first successful level are kept.
//!
//! Identical mode assignments are merged keeping the lowest fault count;
//! the set is ordered by `(fault_count, mode names)` and truncated to `cap`.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalContext, Expr, Truth};
use crate::sections::{Fields, ParseError, SectionedText};
use crate::sim::Command;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("transition model has no components")]
    EmptyModel,
    #[error("component `{component}` has no mode `{mode}`")]
    InvalidMode { component: String, mode: String },
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("no candidate with at most {budget} new fault transitions explains the frame")]
    Exhausted { budget: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentModel {
    pub name: String,
    pub modes: Vec<String>,
    pub initial: Option<usize>,
    /// `(from, command) → to`.
    pub nominal: BTreeMap<(usize, String), usize>,
    /// Spontaneous `from → to` fault transitions.
    pub faults: Vec<(usize, usize)>,
    pub observations: Vec<Option<Expr>>,
}

impl ComponentModel {
    pub fn new(name: &str, modes: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            modes: modes.iter().map(|s| s.to_string()).collect(),
            initial: None,
            nominal: BTreeMap::new(),
            faults: Vec::new(),
            observations: vec![None; modes.len()],
        }
    }

    pub fn mode_index(&self, mode: &str) -> Option<usize> {
        self.modes.iter().position(|m| m == mode)
    }

    fn idx(&self, mode: &str) -> Result<usize, EstimatorError> {
        self.mode_index(mode)
            .ok_or_else(|| EstimatorError::InvalidMode {
                component: self.name.clone(),
                mode: mode.to_string(),
            })
    }

    pub fn with_nominal(
        mut self,
        from: &str,
        command: &str,
        to: &str,
    ) -> Result<Self, EstimatorError> {
        let (f, t) = (self.idx(from)?, self.idx(to)?);
        self.nominal.insert((f, command.to_string()), t);
        Ok(self)
    }

    pub fn with_fault(mut self, from: &str, to: &str) -> Result<Self, EstimatorError> {
        let (f, t) = (self.idx(from)?, self.idx(to)?);
        if !self.faults.contains(&(f, t)) {
            self.faults.push((f, t));
        }
        Ok(self)
    }

    pub fn with_observation(mut self, mode: &str, predicate: Expr) -> Result<Self, EstimatorError> {
        let m = self.idx(mode)?;
        self.observations[m] = Some(predicate);
        Ok(self)
    }

    pub fn with_initial(mut self, mode: &str) -> Result<Self, EstimatorError> {
        self.initial = Some(self.idx(mode)?);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    pub components: Vec<ComponentModel>,
}

impl TransitionModel {
    pub fn new(components: Vec<ComponentModel>) -> Result<Self, EstimatorError> {
        if components.is_empty() {
            return Err(EstimatorError::EmptyModel);
        }
        Ok(Self { components })
    }

    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }

    /// Modes after the nominal response to `commands`; a command with no
    /// transition from the current mode leaves it unchanged.
    pub fn apply_commands(&self, modes: &[usize], commands: &[Command]) -> Vec<usize> {
        let mut out = modes.to_vec();
        for cmd in commands {
            if let Some(c) = self.component_index(&cmd.target) {
                if let Some(&to) = self.components[c]
                    .nominal
                    .get(&(out[c], cmd.action.as_str().to_string()))
                {
                    out[c] = to;
                }
            }
        }
        out
    }

    /// Whether no component's observation predicate is false on `ctx`.
    pub fn consistent(&self, modes: &[usize], ctx: &dyn EvalContext) -> bool {
        self.components.iter().zip(modes).all(|(c, &m)| {
            c.observations[m]
                .as_ref()
                .is_none_or(|p| p.eval(ctx) != Truth::False)
        })
    }

    pub fn names(&self, modes: &[usize]) -> Vec<String> {
        self.components
            .iter()
            .zip(modes)
            .map(|(c, &m)| c.modes[m].clone())
            .collect()
    }

    /// Parses `[modes]`, `[transitions]`, `[faults]` and `[observations]`:
    ///
    /// ```text
    /// [modes]
    /// load1 modes=on|off|stuck_on|stuck_off initial=off
    /// [transitions]
    /// load1 off on -> on          # component, from, command -> to
    /// [faults]
    /// load1 on -> stuck_off
    /// [observations]
    /// load1 on : lookup(load1.relay) == 1
    /// ```
    pub fn from_doc(doc: &SectionedText) -> Result<Self, ParseError> {
        let mut comps: Vec<ComponentModel> = Vec::new();
        for line in doc.lines_of("modes") {
            let f = Fields::parse(&line.text);
            let [name] = f.words.as_slice() else {
                return Err(doc.error(
                    line.number,
                    "mode line must be `<component> modes=a|b [initial=a]`",
                ));
            };
            let modes = f.attr_list("modes");
            if modes.is_empty() {
                return Err(doc.error(line.number, format!("component `{name}` lists no modes")));
            }
            if comps.iter().any(|c| &c.name == name) {
                return Err(doc.error(line.number, format!("duplicate component `{name}`")));
            }
            let refs: Vec<&str> = modes.iter().map(String::as_str).collect();
            let mut c = ComponentModel::new(name, &refs);
            if let Some(init) = f.attr("initial") {
                c = c
                    .with_initial(init)
                    .map_err(|e| doc.error(line.number, e.to_string()))?;
            }
            comps.push(c);
        }
        let find = |comps: &[ComponentModel], name: &str, line: usize| {
            comps
                .iter()
                .position(|c| c.name == name)
                .ok_or_else(|| doc.error(line, format!("unknown component `{name}`")))
        };
        for line in doc.lines_of("transitions") {
            let w: Vec<&str> = line.text.split_whitespace().collect();
            let [comp, from, command, "->", to] = w.as_slice() else {
                return Err(doc.error(
                    line.number,
                    "transition line must be `<component> <from> <command> -> <to>`",
                ));
            };
            let i = find(&comps, comp, line.number)?;
            comps[i] = comps[i]
                .clone()
                .with_nominal(from, command, to)
                .map_err(|e| doc.error(line.number, e.to_string()))?;
        }
        for line in doc.lines_of("faults") {
            let w: Vec<&str> = line.text.split_whitespace().collect();
            let [comp, from, "->", to] = w.as_slice() else {
                return Err(doc.error(
                    line.number,
                    "fault line must be `<component> <from> -> <fault_mode>`",
                ));
            };
            let i = find(&comps, comp, line.number)?;
            comps[i] = comps[i]
                .clone()
                .with_fault(from, to)
                .map_err(|e| doc.error(line.number, e.to_string()))?;
        }
        for line in doc.lines_of("observations") {
            let Some((head, pred)) = line.text.split_once(':') else {
                return Err(doc.error(
                    line.number,
                    "observation line must be `<component> <mode> : <condition>`",
                ));
            };
            let w: Vec<&str> = head.split_whitespace().collect();
            let [comp, mode] = w.as_slice() else {
                return Err(doc.error(
                    line.number,
                    "observation line must be `<component> <mode> : <condition>`",
                ));
            };
            let expr =
                Expr::parse(pred.trim()).map_err(|e| doc.error(line.number, e.to_string()))?;
            let i = find(&comps, comp, line.number)?;
            comps[i] = comps[i]
                .clone()
                .with_observation(mode, expr)
                .map_err(|e| doc.error(line.number, e.to_string()))?;
        }
        TransitionModel::new(comps).map_err(|e| doc.error(1, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Candidate {
    pub modes: Vec<usize>,
    pub fault_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    pub cap: usize,
    /// Candidates before the last truncation.
    pub untruncated: usize,
}

pub const DEFAULT_CAP: usize = 64;
pub const DEFAULT_FAULT_BUDGET: usize = 2;

/// Initial candidates; a component with no known initial mode contributes
/// one candidate per mode.
pub fn init(
    model: &TransitionModel,
    initial: &BTreeMap<String, String>,
    cap: usize,
) -> Result<CandidateSet, EstimatorError> {
    for name in initial.keys() {
        if model.component_index(name).is_none() {
            return Err(EstimatorError::UnknownComponent(name.clone()));
        }
    }
    let mut choices: Vec<Vec<usize>> = Vec::new();
    for c in &model.components {
        let known = match initial.get(&c.name) {
            Some(m) => Some(c.idx(m)?),
            None => c.initial,
        };
        choices.push(match known {
            Some(m) => vec![m],
            None => (0..c.modes.len()).collect(),
        });
    }
    let mut assignments: Vec<Vec<usize>> = vec![Vec::new()];
    for options in &choices {
        assignments = assignments
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |&m| {
                    let mut p = prefix.clone();
                    p.push(m);
                    p
                })
            })
            .collect();
    }
    let candidates = assignments
        .into_iter()
        .map(|modes| Candidate {
            modes,
            fault_count: 0,
        })
        .collect();
    Ok(finish(model, candidates, cap))
}

fn finish(model: &TransitionModel, candidates: Vec<Candidate>, cap: usize) -> CandidateSet {
    let mut best: BTreeMap<Vec<usize>, u32> = BTreeMap::new();
    for c in candidates {
        best.entry(c.modes)
            .and_modify(|f| *f = (*f).min(c.fault_count))
            .or_insert(c.fault_count);
    }
    let mut list: Vec<(u32, Vec<String>, Vec<usize>)> = best
        .into_iter()
        .map(|(modes, f)| (f, model.names(&modes), modes))
        .collect();
    list.sort();
    let untruncated = list.len();
    list.truncate(cap);
    CandidateSet {
        candidates: list
            .into_iter()
            .map(|(fault_count, _, modes)| Candidate { modes, fault_count })
            .collect(),
        cap,
        untruncated,
    }
}

/// Advances the candidate set by one frame.
pub fn advance(
    model: &TransitionModel,
    set: &CandidateSet,
    commands: &[Command],
    ctx: &dyn EvalContext,
    fault_budget: usize,
) -> Result<CandidateSet, EstimatorError> {
    let mut level: Vec<Candidate> = set
        .candidates
        .iter()
        .map(|c| Candidate {
            modes: model.apply_commands(&c.modes, commands),
            fault_count: c.fault_count,
        })
        .collect();
    for depth in 0..=fault_budget {
        if depth > 0 {
            let mut next = BTreeSet::new();
            for c in &level {
                for (i, comp) in model.components.iter().enumerate() {
                    for &(from, to) in &comp.faults {
                        if c.modes[i] == from {
                            let mut modes = c.modes.clone();
                            modes[i] = to;
                            next.insert(Candidate {
                                modes,
                                fault_count: c.fault_count + 1,
                            });
                        }
                    }
                }
            }
            level = next.into_iter().collect();
        }
        let consistent: Vec<Candidate> = level
            .iter()
            .filter(|c| model.consistent(&c.modes, ctx))
            .cloned()
            .collect();
        if !consistent.is_empty() {
            return Ok(finish(model, consistent, set.cap));
        }
    }
    Err(EstimatorError::Exhausted {
        budget: fault_budget,
    })
}

/// Lowest fault count, ties broken by mode names.
pub fn best_diagnosis<'a>(
    model: &TransitionModel,
    set: &'a CandidateSet,
) -> Option<(Vec<String>, u32, &'a Candidate)> {
    set.candidates
        .iter()
        .map(|c| (model.names(&c.modes), c.fault_count, c))
        .min_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)))
}
