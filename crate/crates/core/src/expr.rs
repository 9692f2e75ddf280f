//! Boolean condition language with three-valued (Kleene) logic.
//!
//! Conditions combine comparisons over telemetry lookups, simulation time
//! and plan variables with node-state predicates:
//!
//! ```text
//! time >= 300 && lookup(load3.relay) == 1
//! finished(step_2) || !(var(retries) < 3)
//! ```
//!
//! A lookup of a stale or absent parameter is UNKNOWN, and UNKNOWN satisfies
//! neither a condition nor its negation.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executive::NodeState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    pub fn is_true(self) -> bool {
        self == Truth::True
    }

    pub fn is_false(self) -> bool {
        self == Truth::False
    }

    pub fn not(self) -> Truth {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Unknown => Truth::Unknown,
        }
    }

    pub fn from_bool(b: bool) -> Truth {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Number(f64),
    Lookup(String),
    Time,
    Var(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatePredicate {
    Inactive,
    Waiting,
    Executing,
    Finished,
    Failed,
    Skipped,
    /// Any of FINISHED, FAILED, SKIPPED.
    Terminal,
}

impl StatePredicate {
    const ALL: [(&'static str, StatePredicate); 7] = [
        ("inactive", StatePredicate::Inactive),
        ("waiting", StatePredicate::Waiting),
        ("executing", StatePredicate::Executing),
        ("finished", StatePredicate::Finished),
        ("failed", StatePredicate::Failed),
        ("skipped", StatePredicate::Skipped),
        ("terminal", StatePredicate::Terminal),
    ];

    fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL.iter().find(|(k, _)| *k == word).map(|(_, p)| *p)
    }

    fn keyword(self) -> &'static str {
        Self::ALL
            .iter()
            .find(|(_, p)| *p == self)
            .map(|(k, _)| *k)
            .unwrap_or("terminal")
    }

    pub fn holds(self, state: NodeState) -> bool {
        match self {
            StatePredicate::Inactive => state == NodeState::Inactive,
            StatePredicate::Waiting => state == NodeState::Waiting,
            StatePredicate::Executing => state == NodeState::Executing,
            StatePredicate::Finished => state == NodeState::Finished,
            StatePredicate::Failed => state == NodeState::Failed,
            StatePredicate::Skipped => state == NodeState::Skipped,
            StatePredicate::Terminal => state.is_terminal(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(bool),
    Cmp(Term, CmpOp, Term),
    State(StatePredicate, String),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

/// What a condition can observe while being evaluated.
pub trait EvalContext {
    /// Current value of a telemetry parameter; `None` when stale or absent.
    fn lookup(&self, param: &str) -> Option<f64>;
    fn time(&self) -> f64;
    fn node_state(&self, _node: &str) -> Option<NodeState> {
        None
    }
    fn var(&self, _name: &str) -> Option<f64> {
        None
    }
}

impl Expr {
    pub fn eval(&self, ctx: &dyn EvalContext) -> Truth {
        match self {
            Expr::Const(b) => Truth::from_bool(*b),
            Expr::Cmp(a, op, b) => match (term_value(a, ctx), term_value(b, ctx)) {
                (Some(x), Some(y)) => Truth::from_bool(op.apply(x, y)),
                _ => Truth::Unknown,
            },
            Expr::State(pred, node) => match ctx.node_state(node) {
                Some(state) => Truth::from_bool(pred.holds(state)),
                None => Truth::Unknown,
            },
            Expr::Not(inner) => inner.eval(ctx).not(),
            Expr::And(items) => {
                let mut out = Truth::True;
                for item in items {
                    match item.eval(ctx) {
                        Truth::False => return Truth::False,
                        Truth::Unknown => out = Truth::Unknown,
                        Truth::True => {}
                    }
                }
                out
            }
            Expr::Or(items) => {
                let mut out = Truth::False;
                for item in items {
                    match item.eval(ctx) {
                        Truth::True => return Truth::True,
                        Truth::Unknown => out = Truth::Unknown,
                        Truth::False => {}
                    }
                }
                out
            }
        }
    }

    /// Telemetry parameters referenced anywhere in the expression.
    pub fn lookups(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_terms(&mut |t| {
            if let Term::Lookup(p) = t {
                out.push(p.as_str());
            }
        });
        out
    }

    /// Node ids referenced by state predicates.
    pub fn node_refs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_nodes(&mut out);
        out
    }

    fn collect_nodes<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::State(_, n) => out.push(n),
            Expr::Not(e) => e.collect_nodes(out),
            Expr::And(v) | Expr::Or(v) => v.iter().for_each(|e| e.collect_nodes(out)),
            _ => {}
        }
    }

    fn visit_terms<'a>(&'a self, f: &mut dyn FnMut(&'a Term)) {
        match self {
            Expr::Cmp(a, _, b) => {
                f(a);
                f(b);
            }
            Expr::Not(e) => e.visit_terms(f),
            Expr::And(v) | Expr::Or(v) => v.iter().for_each(|e| e.visit_terms(f)),
            _ => {}
        }
    }

    pub fn and(items: Vec<Expr>) -> Expr {
        let mut flat = Vec::new();
        for item in items {
            match item {
                Expr::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Expr::And(flat)
        }
    }

    pub fn or(items: Vec<Expr>) -> Expr {
        let mut flat = Vec::new();
        for item in items {
            match item {
                Expr::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Expr::Or(flat)
        }
    }

    /// Parses a standalone expression (line 1, column 1 based).
    pub fn parse(text: &str) -> Result<Expr, SyntaxError> {
        let tokens = lex(text, 1)?;
        let mut cursor = TokenCursor::new(&tokens);
        let expr = cursor.expr()?;
        if let Some(tok) = cursor.peek() {
            return Err(SyntaxError::at(
                tok,
                format!("unexpected `{}` after expression", tok.kind),
            ));
        }
        Ok(expr)
    }
}

fn term_value(term: &Term, ctx: &dyn EvalContext) -> Option<f64> {
    match term {
        Term::Number(v) => Some(*v),
        Term::Lookup(p) => ctx.lookup(p),
        Term::Time => Some(ctx.time()),
        Term::Var(v) => ctx.var(v),
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_number(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('e') || s.contains("inf") || s.contains("NaN") {
        format!("{v:?}")
    } else {
        s
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Number(v) => write!(f, "{}", fmt_number(*v)),
            Term::Lookup(p) => write!(f, "lookup({p})"),
            Term::Time => write!(f, "time"),
            Term::Var(v) => write!(f, "var({v})"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(b) => write!(f, "{b}"),
            Expr::Cmp(a, op, b) => write!(f, "{a} {} {b}", op.symbol()),
            Expr::State(p, n) => write!(f, "{}({n})", p.keyword()),
            Expr::Not(inner) => match inner.as_ref() {
                Expr::And(_) | Expr::Or(_) => write!(f, "!({inner})"),
                _ => write!(f, "!{inner}"),
            },
            Expr::And(items) => {
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " && ")?;
                    }
                    match item {
                        Expr::Or(_) | Expr::And(_) => write!(f, "({item})")?,
                        _ => write!(f, "{item}")?,
                    }
                }
                Ok(())
            }
            Expr::Or(items) => {
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " || ")?;
                    }
                    match item {
                        Expr::Or(_) => write!(f, "({item})")?,
                        _ => write!(f, "{item}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Lexing and parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl SyntaxError {
    pub(crate) fn at(tok: &Token, message: impl Into<String>) -> Self {
        Self {
            line: tok.line,
            column: tok.column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokenKind {
    Ident(String),
    Number(f64),
    Punct(&'static str),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "{s}"),
            TokenKind::Number(v) => write!(f, "{v}"),
            TokenKind::Punct(p) => write!(f, "{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
}

const PUNCTS: [&str; 16] = [
    "&&", "||", "<=", ">=", "==", "!=", "<", ">", "!", "(", ")", "{", "}", ";", ":", "=",
];

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-'
}

/// Tokenizes `text`; `#` comments run to end of line.
pub(crate) fn lex(text: &str, first_line: usize) -> Result<Vec<Token>, SyntaxError> {
    let mut tokens = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let line_no = first_line + li;
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_digit()
                || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
            {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '-' || chars[i] == '+')
                            && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let value = s.parse::<f64>().map_err(|_| SyntaxError {
                    line: line_no,
                    column,
                    message: format!("malformed number `{s}`"),
                })?;
                tokens.push(Token {
                    kind: TokenKind::Number(value),
                    line: line_no,
                    column,
                });
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                tokens.push(Token {
                    kind: TokenKind::Ident(s),
                    line: line_no,
                    column,
                });
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
                Some(p) => {
                    tokens.push(Token {
                        kind: TokenKind::Punct(p),
                        line: line_no,
                        column,
                    });
                    i += p.len();
                }
                None => {
                    return Err(SyntaxError {
                        line: line_no,
                        column,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            }
        }
    }
    Ok(tokens)
}

pub(crate) struct TokenCursor<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> TokenCursor<'a> {
    pub fn new(tokens: &'a [Token]) -> Self {
        Self { tokens, pos: 0 }
    }

    pub fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    pub fn peek_at(&self, offset: usize) -> Option<&'a Token> {
        self.tokens.get(self.pos + offset)
    }

    pub fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    /// Location used for errors at end of input.
    pub fn eof_error(&self, message: impl Into<String>) -> SyntaxError {
        let (line, column) = self
            .tokens
            .last()
            .map(|t| (t.line, t.column + 1))
            .unwrap_or((1, 1));
        SyntaxError {
            line,
            column,
            message: message.into(),
        }
    }

    pub fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Token { kind: TokenKind::Punct(q), .. }) if *q == p)
    }

    pub fn is_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Token { kind: TokenKind::Ident(w), .. }) if w == word)
    }

    pub fn expect_punct(&mut self, p: &str) -> Result<&'a Token, SyntaxError> {
        match self.next() {
            Some(
                tok @ Token {
                    kind: TokenKind::Punct(q),
                    ..
                },
            ) if *q == p => Ok(tok),
            Some(tok) => Err(SyntaxError::at(
                tok,
                format!("expected `{p}`, found `{}`", tok.kind),
            )),
            None => Err(self.eof_error(format!("expected `{p}`, found end of input"))),
        }
    }

    pub fn expect_ident(&mut self) -> Result<(&'a str, &'a Token), SyntaxError> {
        match self.next() {
            Some(
                tok @ Token {
                    kind: TokenKind::Ident(w),
                    ..
                },
            ) => Ok((w.as_str(), tok)),
            Some(tok) => Err(SyntaxError::at(
                tok,
                format!("expected identifier, found `{}`", tok.kind),
            )),
            None => Err(self.eof_error("expected identifier, found end of input")),
        }
    }

    pub fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut items = vec![self.conj()?];
        while self.is_punct("||") || self.is_ident("or") {
            self.next();
            items.push(self.conj()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Expr::or(items)
        })
    }

    fn conj(&mut self) -> Result<Expr, SyntaxError> {
        let mut items = vec![self.unary()?];
        while self.is_punct("&&") || self.is_ident("and") {
            self.next();
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Expr::and(items)
        })
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.is_punct("!") || self.is_ident("not") {
            self.next();
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let Some(tok) = self.peek() else {
            return Err(self.eof_error("expected condition, found end of input"));
        };
        match &tok.kind {
            TokenKind::Punct("(") => {
                self.next();
                let inner = self.expr()?;
                self.expect_punct(")")?;
                Ok(inner)
            }
            TokenKind::Ident(w) if w == "true" || w == "false" => {
                self.next();
                Ok(Expr::Const(w == "true"))
            }
            TokenKind::Ident(w)
                if StatePredicate::from_keyword(w).is_some()
                    && matches!(
                        self.peek_at(1),
                        Some(Token {
                            kind: TokenKind::Punct("("),
                            ..
                        })
                    ) =>
            {
                let pred = StatePredicate::from_keyword(w).unwrap();
                self.next();
                self.expect_punct("(")?;
                let (node, _) = self.expect_ident()?;
                self.expect_punct(")")?;
                Ok(Expr::State(pred, node.to_string()))
            }
            _ => {
                let lhs = self.term()?;
                let op_tok = self
                    .next()
                    .ok_or_else(|| self.eof_error("expected comparison operator"))?;
                let op = match &op_tok.kind {
                    TokenKind::Punct("<") => CmpOp::Lt,
                    TokenKind::Punct("<=") => CmpOp::Le,
                    TokenKind::Punct(">") => CmpOp::Gt,
                    TokenKind::Punct(">=") => CmpOp::Ge,
                    TokenKind::Punct("==") => CmpOp::Eq,
                    TokenKind::Punct("!=") => CmpOp::Ne,
                    other => {
                        return Err(SyntaxError::at(
                            op_tok,
                            format!("expected comparison operator, found `{other}`"),
                        ))
                    }
                };
                let rhs = self.term()?;
                Ok(Expr::Cmp(lhs, op, rhs))
            }
        }
    }

    fn term(&mut self) -> Result<Term, SyntaxError> {
        let tok = self
            .next()
            .ok_or_else(|| self.eof_error("expected value, found end of input"))?;
        match &tok.kind {
            TokenKind::Number(v) => Ok(Term::Number(*v)),
            TokenKind::Ident(w) if w == "time" => Ok(Term::Time),
            TokenKind::Ident(w) if w == "lookup" || w == "var" => {
                self.expect_punct("(")?;
                let (name, _) = self.expect_ident()?;
                self.expect_punct(")")?;
                Ok(if w == "lookup" {
                    Term::Lookup(name.to_string())
                } else {
                    Term::Var(name.to_string())
                })
            }
            other => Err(SyntaxError::at(
                tok,
                format!("expected value (number, time, lookup(..), var(..)), found `{other}`"),
            )),
        }
    }
}
