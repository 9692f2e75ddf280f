//! Plan language parser and canonical renderer.
//!
//! ```text
//! LIST root {
//!   invariant: lookup(bus1.voltage_v) > 100;
//!   COMMAND c1 {
//!     command: load3 on;
//!     start: time >= 600;
//!     end: lookup(load3.cmd) == 1;
//!   }
//!   WAIT v1 {
//!     start: finished(c1);
//!     end: lookup(load3.relay) == 1;
//!     safe_to_abandon;
//!   }
//!   ASSIGNMENT a1 { set: retries = 0; }
//! }
//! ```
//!
//! Slots are `start`, `end`, `invariant`, `skip`, `command` (COMMAND only),
//! `set` (ASSIGNMENT only) and the `safe_to_abandon` flag. Child nodes are
//! allowed only inside LIST.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use super::{NodeKind, PlanNode, PlanTree};
use crate::expr::{fmt_number, lex, SyntaxError, Token, TokenCursor, TokenKind};
use crate::sim::{Action, Command};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("line {line}, column {column}: duplicate node id `{id}`")]
    DuplicateNode {
        id: String,
        line: usize,
        column: usize,
    },
    #[error("line {line}, column {column}: unknown telemetry parameter `{param}`")]
    UnknownParameter {
        param: String,
        line: usize,
        column: usize,
    },
    #[error("line {line}, column {column}: condition references unknown node `{node}`")]
    UnknownNode {
        node: String,
        line: usize,
        column: usize,
    },
}

/// Parses plan text without a parameter dictionary check.
pub fn parse_plan(text: &str) -> Result<PlanTree, PlanError> {
    parse_plan_checked(text, &|_| true)
}

/// Parses plan text, rejecting lookups of parameters `known` refuses.
pub fn parse_plan_checked(text: &str, known: &dyn Fn(&str) -> bool) -> Result<PlanTree, PlanError> {
    let tokens = lex(text, 1)?;
    let mut cur = TokenCursor::new(&tokens);
    let mut nodes = Vec::new();
    let mut positions = Vec::new();
    parse_node(&mut cur, None, &mut nodes, &mut positions)?;
    if let Some(tok) = cur.peek() {
        return Err(SyntaxError::at(
            tok,
            format!("unexpected `{}` after the root node", tok.kind),
        )
        .into());
    }

    let mut seen = HashSet::new();
    for (node, tok) in nodes.iter().zip(&positions) {
        if !seen.insert(node.id.as_str()) {
            return Err(PlanError::DuplicateNode {
                id: node.id.clone(),
                line: tok.line,
                column: tok.column,
            });
        }
    }
    for (node, tok) in nodes.iter().zip(&positions) {
        for e in [&node.start, &node.end, &node.invariant, &node.skip]
            .into_iter()
            .flatten()
        {
            if let Some(param) = e.lookups().into_iter().find(|p| !known(p)) {
                return Err(PlanError::UnknownParameter {
                    param: param.to_string(),
                    line: tok.line,
                    column: tok.column,
                });
            }
            if let Some(n) = e.node_refs().into_iter().find(|n| !seen.contains(n)) {
                return Err(PlanError::UnknownNode {
                    node: n.to_string(),
                    line: tok.line,
                    column: tok.column,
                });
            }
        }
    }
    Ok(PlanTree {
        nodes,
        source_text: text.to_string(),
    })
}

fn parse_node(
    cur: &mut TokenCursor<'_>,
    parent: Option<usize>,
    nodes: &mut Vec<PlanNode>,
    positions: &mut Vec<Token>,
) -> Result<usize, PlanError> {
    let (kw, kw_tok) = cur.expect_ident()?;
    let kind = node_kind(kw)
        .ok_or_else(|| SyntaxError::at(kw_tok, format!("expected node kind, found `{kw}`")))?;
    let (id, id_tok) = cur.expect_ident()?;
    let index = nodes.len();
    let mut node = PlanNode::new(id, kind);
    node.parent = parent;
    nodes.push(node);
    positions.push(id_tok.clone());
    cur.expect_punct("{")?;

    loop {
        let Some(tok) = cur.peek() else {
            return Err(cur.eof_error(format!("unclosed node `{id}`")).into());
        };
        if cur.is_punct("}") {
            cur.next();
            break;
        }
        let TokenKind::Ident(word) = &tok.kind else {
            return Err(SyntaxError::at(
                tok,
                format!("expected slot or child node, found `{}`", tok.kind),
            )
            .into());
        };
        if node_kind(word).is_some() {
            if kind != NodeKind::List {
                return Err(SyntaxError::at(
                    tok,
                    format!(
                        "only LIST nodes may have children; `{id}` is {}",
                        kind.keyword()
                    ),
                )
                .into());
            }
            let child = parse_node(cur, Some(index), nodes, positions)?;
            nodes[index].children.push(child);
            continue;
        }
        cur.next();
        if word == "safe_to_abandon" {
            cur.expect_punct(";")?;
            nodes[index].safe_to_abandon = true;
            continue;
        }
        cur.expect_punct(":")?;
        let dup = |present: bool| -> Result<(), PlanError> {
            if present {
                Err(SyntaxError::at(tok, format!("duplicate `{word}` slot in `{id}`")).into())
            } else {
                Ok(())
            }
        };
        match word.as_str() {
            "start" | "end" | "invariant" | "skip" => {
                let e = cur.expr()?;
                let node = &mut nodes[index];
                let slot = match word.as_str() {
                    "start" => &mut node.start,
                    "end" => &mut node.end,
                    "invariant" => &mut node.invariant,
                    _ => &mut node.skip,
                };
                dup(slot.is_some())?;
                *slot = Some(e);
            }
            "command" => {
                if kind != NodeKind::Command {
                    return Err(SyntaxError::at(
                        tok,
                        "`command` slot is only valid in COMMAND nodes",
                    )
                    .into());
                }
                dup(nodes[index].command.is_some())?;
                let (target, _) = cur.expect_ident()?;
                let (action, action_tok) = cur.expect_ident()?;
                let action = Action::parse(action).ok_or_else(|| {
                    SyntaxError::at(action_tok, format!("unknown action `{action}`"))
                })?;
                nodes[index].command = Some(Command::new(target, action));
            }
            "set" => {
                if kind != NodeKind::Assignment {
                    return Err(SyntaxError::at(
                        tok,
                        "`set` slot is only valid in ASSIGNMENT nodes",
                    )
                    .into());
                }
                dup(nodes[index].assignment.is_some())?;
                let (name, _) = cur.expect_ident()?;
                cur.expect_punct("=")?;
                let value = match cur.next() {
                    Some(Token {
                        kind: TokenKind::Number(v),
                        ..
                    }) => *v,
                    Some(t) => {
                        return Err(SyntaxError::at(
                            t,
                            format!("expected number, found `{}`", t.kind),
                        )
                        .into())
                    }
                    None => return Err(cur.eof_error("expected number").into()),
                };
                nodes[index].assignment = Some((name.to_string(), value));
            }
            other => return Err(SyntaxError::at(tok, format!("unknown slot `{other}`")).into()),
        }
        cur.expect_punct(";")?;
    }

    let node = &nodes[index];
    if kind == NodeKind::Command && node.command.is_none() {
        return Err(SyntaxError::at(
            &positions[index],
            format!("COMMAND `{id}` has no `command` slot"),
        )
        .into());
    }
    if kind == NodeKind::Assignment && node.assignment.is_none() {
        return Err(SyntaxError::at(
            &positions[index],
            format!("ASSIGNMENT `{id}` has no `set` slot"),
        )
        .into());
    }
    Ok(index)
}

fn node_kind(word: &str) -> Option<NodeKind> {
    match word {
        "LIST" => Some(NodeKind::List),
        "COMMAND" => Some(NodeKind::Command),
        "ASSIGNMENT" => Some(NodeKind::Assignment),
        "WAIT" => Some(NodeKind::Wait),
        _ => None,
    }
}

/// Canonical text for a tree. Parsing the output yields an equal tree
/// (apart from `source_text`).
pub fn render_plan(tree: &PlanTree) -> String {
    let mut out = String::new();
    render_node(tree, 0, 0, &mut out);
    out
}

fn render_node(tree: &PlanTree, i: usize, depth: usize, out: &mut String) {
    let node = &tree.nodes[i];
    let pad = "  ".repeat(depth);
    let inner = "  ".repeat(depth + 1);
    let _ = writeln!(out, "{pad}{} {} {{", node.kind.keyword(), node.id);
    if let Some(cmd) = &node.command {
        let _ = writeln!(
            out,
            "{inner}command: {} {};",
            cmd.target,
            cmd.action.as_str()
        );
    }
    if let Some((name, value)) = &node.assignment {
        let _ = writeln!(out, "{inner}set: {name} = {};", fmt_number(*value));
    }
    for (label, slot) in [
        ("start", &node.start),
        ("end", &node.end),
        ("invariant", &node.invariant),
        ("skip", &node.skip),
    ] {
        if let Some(e) = slot {
            let _ = writeln!(out, "{inner}{label}: {e};");
        }
    }
    if node.safe_to_abandon {
        let _ = writeln!(out, "{inner}safe_to_abandon;");
    }
    for &c in &node.children {
        render_node(tree, c, depth + 1, out);
    }
    let _ = writeln!(out, "{pad}}}");
}
