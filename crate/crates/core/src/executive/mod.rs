//! Hierarchical plan execution with gated node conditions.
//!
//! A plan is a tree of LIST, COMMAND, ASSIGNMENT and WAIT nodes. Each frame
//! the executive runs a macro-step: depth-first passes over the tree apply
//! the transition relation below until no node changes state.
//!
//! | from      | to        | when                                                   |
//! |-----------|-----------|--------------------------------------------------------|
//! | INACTIVE  | WAITING   | node is the root, or its parent is EXECUTING           |
//! | INACTIVE  | SKIPPED   | parent is terminal                                     |
//! | WAITING   | SKIPPED   | parent is terminal, or `skip` is true                  |
//! | WAITING   | EXECUTING | `start` is true (COMMAND emits, ASSIGNMENT assigns)    |
//! | EXECUTING | FAILED    | parent terminal, `invariant` false, or a child FAILED  |
//! | EXECUTING | FINISHED  | `end` true (LIST: and every child terminal)            |

mod parse;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::{EvalContext, Expr, Truth};
use crate::sim::{Command, SensorFrame};

pub use parse::{parse_plan, parse_plan_checked, render_plan, PlanError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum NodeKind {
    List,
    Command,
    Assignment,
    Wait,
}

impl NodeKind {
    pub fn keyword(self) -> &'static str {
        match self {
            NodeKind::List => "LIST",
            NodeKind::Command => "COMMAND",
            NodeKind::Assignment => "ASSIGNMENT",
            NodeKind::Wait => "WAIT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum NodeState {
    Inactive,
    Waiting,
    Executing,
    Finished,
    Failed,
    Skipped,
}

impl NodeState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            NodeState::Finished | NodeState::Failed | NodeState::Skipped
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeState::Inactive => "INACTIVE",
            NodeState::Waiting => "WAITING",
            NodeState::Executing => "EXECUTING",
            NodeState::Finished => "FINISHED",
            NodeState::Failed => "FAILED",
            NodeState::Skipped => "SKIPPED",
        }
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureReason {
    InvariantViolated,
    ChildFailed,
    ParentTerminated,
    Superseded,
    Halted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: String,
    pub kind: NodeKind,
    pub parent: Option<usize>,
    /// Indices into [`PlanTree::nodes`], in plan order.
    pub children: Vec<usize>,
    pub start: Option<Expr>,
    pub end: Option<Expr>,
    pub invariant: Option<Expr>,
    pub skip: Option<Expr>,
    pub command: Option<Command>,
    pub assignment: Option<(String, f64)>,
    /// Replacing the plan skips this node instead of failing it.
    pub safe_to_abandon: bool,
}

impl PlanNode {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Self {
        Self {
            id: id.into(),
            kind,
            parent: None,
            children: Vec::new(),
            start: None,
            end: None,
            invariant: None,
            skip: None,
            command: None,
            assignment: None,
            safe_to_abandon: false,
        }
    }
}

/// A parsed plan. Nodes are stored in depth-first pre-order; index 0 is
/// the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTree {
    pub nodes: Vec<PlanNode>,
    pub source_text: String,
}

impl PlanTree {
    pub fn root(&self) -> &PlanNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Nodes that do real work: everything except LIST containers.
    pub fn step_count(&self) -> usize {
        self.nodes.len() - self.count_kind(NodeKind::List)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTransition {
    pub cycle: u64,
    pub node_id: String,
    pub from: NodeState,
    pub to: NodeState,
}

impl NodeTransition {
    /// `cycle,node_id,from,to`
    pub fn log_line(&self) -> String {
        format!("{},{},{},{}", self.cycle, self.node_id, self.from, self.to)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepOutput {
    pub commands: Vec<Command>,
    pub transitions: Vec<NodeTransition>,
    /// Set when the macro-step did not reach quiescence.
    pub halted: Option<String>,
    /// The root failed during this step.
    pub root_failed: bool,
    pub root_finished: bool,
}

/// Telemetry view of a frame: stale values read as absent.
pub struct FrameLookup<'a>(pub &'a SensorFrame);

pub trait Telemetry {
    fn value(&self, param: &str) -> Option<f64>;
}

impl Telemetry for FrameLookup<'_> {
    fn value(&self, param: &str) -> Option<f64> {
        self.0.fresh(param)
    }
}

impl<F: Fn(&str) -> Option<f64>> Telemetry for F {
    fn value(&self, param: &str) -> Option<f64> {
        self(param)
    }
}

struct Ctx<'a> {
    tree: &'a PlanTree,
    states: &'a [NodeState],
    vars: &'a BTreeMap<String, f64>,
    telemetry: &'a dyn Telemetry,
    now: f64,
}

impl EvalContext for Ctx<'_> {
    fn lookup(&self, param: &str) -> Option<f64> {
        self.telemetry.value(param)
    }
    fn time(&self) -> f64 {
        self.now
    }
    fn node_state(&self, node: &str) -> Option<NodeState> {
        self.tree.index_of(node).map(|i| self.states[i])
    }
    fn var(&self, name: &str) -> Option<f64> {
        self.vars.get(name).copied()
    }
}

fn cond(expr: &Option<Expr>, ctx: &Ctx<'_>, default: Truth) -> Truth {
    expr.as_ref().map_or(default, |e| e.eval(ctx))
}

#[derive(Debug, Clone, Default)]
pub struct Executive {
    tree: Option<PlanTree>,
    states: Vec<NodeState>,
    reasons: Vec<Option<FailureReason>>,
    vars: BTreeMap<String, f64>,
    halted: Option<String>,
}

/// Pass limit per macro-step, as a multiple of the node count.
pub const QUIESCENCE_FACTOR: usize = 4;

impl Executive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tree(&self) -> Option<&PlanTree> {
        self.tree.as_ref()
    }

    pub fn states(&self) -> &[NodeState] {
        &self.states
    }

    pub fn state_of(&self, id: &str) -> Option<NodeState> {
        let tree = self.tree.as_ref()?;
        tree.index_of(id).map(|i| self.states[i])
    }

    pub fn reason_of(&self, id: &str) -> Option<FailureReason> {
        let tree = self.tree.as_ref()?;
        tree.index_of(id).and_then(|i| self.reasons[i])
    }

    pub fn halted(&self) -> Option<&str> {
        self.halted.as_deref()
    }

    pub fn var(&self, name: &str) -> Option<f64> {
        self.vars.get(name).copied()
    }

    /// Whether a tree is loaded and its root is not yet terminal.
    pub fn is_running(&self) -> bool {
        self.tree.is_some() && !self.states[0].is_terminal() && self.halted.is_none()
    }

    /// Installs `tree`, halting any running plan. Returns the transitions of
    /// the superseded plan.
    pub fn load_plan(&mut self, tree: PlanTree, cycle: u64) -> Vec<NodeTransition> {
        let mut log = Vec::new();
        if let Some(old) = self.tree.take() {
            for (i, node) in old.nodes.iter().enumerate() {
                let from = self.states[i];
                let to = match from {
                    NodeState::Executing if !node.safe_to_abandon => {
                        self.reasons[i] = Some(FailureReason::Superseded);
                        NodeState::Failed
                    }
                    s if s.is_terminal() => continue,
                    _ => NodeState::Skipped,
                };
                log.push(NodeTransition {
                    cycle,
                    node_id: node.id.clone(),
                    from,
                    to,
                });
            }
        }
        self.states = vec![NodeState::Inactive; tree.len()];
        self.reasons = vec![None; tree.len()];
        self.vars.clear();
        self.halted = None;
        self.tree = Some(tree);
        log
    }

    pub fn macro_step(&mut self, cycle: u64, telemetry: &dyn Telemetry, now_s: f64) -> StepOutput {
        let mut out = StepOutput::default();
        let Some(tree) = self.tree.as_ref() else {
            return out;
        };
        if self.halted.is_some() {
            return out;
        }
        let root_was_terminal = self.states[0].is_terminal();
        let limit = QUIESCENCE_FACTOR * tree.len();
        let mut passes = 0;
        loop {
            let mut changed = false;
            for i in 0..tree.len() {
                let next = {
                    let ctx = Ctx {
                        tree,
                        states: &self.states,
                        vars: &self.vars,
                        telemetry,
                        now: now_s,
                    };
                    transition(tree, i, &self.states, &ctx)
                };
                let Some((to, reason)) = next else { continue };
                let node = &tree.nodes[i];
                let from = self.states[i];
                if from == NodeState::Waiting && to == NodeState::Executing {
                    if let Some(cmd) = &node.command {
                        out.commands.push(cmd.clone());
                    }
                    if let Some((name, value)) = &node.assignment {
                        self.vars.insert(name.clone(), *value);
                    }
                }
                self.states[i] = to;
                self.reasons[i] = reason;
                out.transitions.push(NodeTransition {
                    cycle,
                    node_id: node.id.clone(),
                    from,
                    to,
                });
                changed = true;
            }
            if !changed {
                break;
            }
            passes += 1;
            if passes >= limit {
                let msg = format!(
                    "no quiescence after {passes} passes over {} nodes; plan halted",
                    tree.len()
                );
                log::error!("{msg}");
                for (i, s) in self.states.iter_mut().enumerate() {
                    if !s.is_terminal() {
                        out.transitions.push(NodeTransition {
                            cycle,
                            node_id: tree.nodes[i].id.clone(),
                            from: *s,
                            to: NodeState::Failed,
                        });
                        *s = NodeState::Failed;
                        self.reasons[i] = Some(FailureReason::Halted);
                    }
                }
                self.halted = Some(msg.clone());
                out.halted = Some(msg);
                break;
            }
        }
        if !root_was_terminal {
            out.root_failed = self.states[0] == NodeState::Failed;
            out.root_finished = self.states[0] == NodeState::Finished;
        }
        out
    }
}

/// The transition relation for one node given the current states.
fn transition(
    tree: &PlanTree,
    i: usize,
    states: &[NodeState],
    ctx: &Ctx<'_>,
) -> Option<(NodeState, Option<FailureReason>)> {
    let node = &tree.nodes[i];
    let parent = node.parent.map(|p| states[p]);
    let parent_terminal = parent.is_some_and(NodeState::is_terminal);
    match states[i] {
        NodeState::Inactive => match parent {
            None | Some(NodeState::Executing) => Some((NodeState::Waiting, None)),
            Some(p) if p.is_terminal() => Some((NodeState::Skipped, None)),
            _ => None,
        },
        NodeState::Waiting => {
            if parent_terminal || cond(&node.skip, ctx, Truth::False).is_true() {
                Some((NodeState::Skipped, None))
            } else if cond(&node.start, ctx, Truth::True).is_true() {
                Some((NodeState::Executing, None))
            } else {
                None
            }
        }
        NodeState::Executing => {
            if parent_terminal {
                return Some((NodeState::Failed, Some(FailureReason::ParentTerminated)));
            }
            if cond(&node.invariant, ctx, Truth::True).is_false() {
                return Some((NodeState::Failed, Some(FailureReason::InvariantViolated)));
            }
            if node
                .children
                .iter()
                .any(|&c| states[c] == NodeState::Failed)
            {
                return Some((NodeState::Failed, Some(FailureReason::ChildFailed)));
            }
            let children_done = node.children.iter().all(|&c| states[c].is_terminal());
            if children_done && cond(&node.end, ctx, Truth::True).is_true() {
                Some((NodeState::Finished, None))
            } else {
                None
            }
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_telemetry(_: &str) -> Option<f64> {
        None
    }

    #[test]
    fn root_with_false_start_stays_waiting() {
        let tree = parse_plan("LIST root { start: false; }").unwrap();
        let mut ex = Executive::new();
        ex.load_plan(tree, 0);
        let out = ex.macro_step(1, &no_telemetry, 0.0);
        assert!(out.commands.is_empty());
        assert_eq!(ex.state_of("root"), Some(NodeState::Waiting));
    }

    #[test]
    fn command_emits_once_and_finishes_on_ack() {
        let src = "LIST root {\n  COMMAND c { command: load1 on; end: lookup(load1.cmd) == 1; }\n}";
        let mut ex = Executive::new();
        ex.load_plan(parse_plan(src).unwrap(), 0);
        let out = ex.macro_step(1, &|_: &str| Some(0.0), 1.0);
        assert_eq!(out.commands.len(), 1);
        assert_eq!(ex.state_of("c"), Some(NodeState::Executing));
        let out = ex.macro_step(2, &|_: &str| Some(0.0), 2.0);
        assert!(out.commands.is_empty());
        let out = ex.macro_step(3, &|_: &str| Some(1.0), 3.0);
        assert!(out.commands.is_empty());
        assert_eq!(ex.state_of("c"), Some(NodeState::Finished));
        assert_eq!(ex.state_of("root"), Some(NodeState::Finished));
        assert!(out.root_finished);
    }

    #[test]
    fn invariant_failure_propagates_to_root() {
        let src = "LIST root {\n  WAIT w { end: time >= 100; invariant: lookup(x) > 0; }\n  WAIT after { start: finished(w); }\n}";
        let mut ex = Executive::new();
        ex.load_plan(parse_plan(src).unwrap(), 0);
        ex.macro_step(1, &|_: &str| Some(1.0), 1.0);
        assert_eq!(ex.state_of("w"), Some(NodeState::Executing));
        let out = ex.macro_step(2, &|_: &str| Some(-1.0), 2.0);
        assert_eq!(ex.state_of("w"), Some(NodeState::Failed));
        assert_eq!(ex.reason_of("w"), Some(FailureReason::InvariantViolated));
        assert_eq!(ex.state_of("root"), Some(NodeState::Failed));
        assert_eq!(ex.state_of("after"), Some(NodeState::Skipped));
        assert!(out.root_failed);
    }

    #[test]
    fn unknown_lookup_blocks_start_and_negation() {
        let src = "LIST root { COMMAND a { command: x on; start: lookup(p) > 0; } COMMAND b { command: y on; start: !(lookup(p) > 0); } }";
        let mut ex = Executive::new();
        ex.load_plan(parse_plan(src).unwrap(), 0);
        let out = ex.macro_step(1, &no_telemetry, 0.0);
        assert!(out.commands.is_empty());
        assert_eq!(ex.state_of("a"), Some(NodeState::Waiting));
        assert_eq!(ex.state_of("b"), Some(NodeState::Waiting));
    }

    #[test]
    fn load_plan_supersedes_running_nodes() {
        let src = "LIST root {\n  COMMAND c { command: load1 on; end: false; }\n  WAIT w { end: false; safe_to_abandon; }\n}";
        let mut ex = Executive::new();
        ex.load_plan(parse_plan(src).unwrap(), 0);
        ex.macro_step(1, &no_telemetry, 0.0);
        let log = ex.load_plan(parse_plan("LIST next { }").unwrap(), 2);
        let find = |id: &str| log.iter().find(|t| t.node_id == id).map(|t| t.to);
        assert_eq!(find("c"), Some(NodeState::Failed));
        assert_eq!(find("w"), Some(NodeState::Skipped));
        assert_eq!(find("root"), Some(NodeState::Failed));
        assert_eq!(ex.state_of("next"), Some(NodeState::Inactive));
        // last load wins
        ex.load_plan(parse_plan("LIST third { }").unwrap(), 3);
        assert_eq!(ex.tree().unwrap().root().id, "third");
    }

    #[test]
    fn assignment_sets_variable() {
        let src = "LIST root { ASSIGNMENT a { set: k = 3; } WAIT w { start: var(k) == 3; } }";
        let mut ex = Executive::new();
        ex.load_plan(parse_plan(src).unwrap(), 0);
        ex.macro_step(1, &no_telemetry, 0.0);
        assert_eq!(ex.var("k"), Some(3.0));
        assert_eq!(ex.state_of("root"), Some(NodeState::Finished));
    }

    #[test]
    fn transition_log_format() {
        let t = NodeTransition {
            cycle: 7,
            node_id: "n1".into(),
            from: NodeState::Waiting,
            to: NodeState::Executing,
        };
        assert_eq!(t.log_line(), "7,n1,WAITING,EXECUTING");
    }
}
