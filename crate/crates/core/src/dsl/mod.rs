//! The constraint expression language: a closed, deterministic replacement
//! for LLM-generated verifier programs.
//!
//! Pipeline: [`parse`] source text into an [`Expr`], [`check`] it against a
//! [`DomainSpec`](crate::domain::DomainSpec) to obtain a [`TypedExpr`], then
//! [`eval`] it on conformant arrangements. Evaluation is total, pure, and
//! integer-only; positions are 1-based.
//!
//! The grammar ships as EBNF in `docs/dsl-grammar.ebnf` at the repository
//! root. Operator precedence, loosest first: `iff`/`implies`, `or`, `and`,
//! comparisons, `not`, additive `+`/`-`.

mod check;
mod eval;
mod lexer;
mod parser;
mod print;

pub use check::{check, TypedExpr};
pub use eval::eval;
pub use parser::parse;
pub use print::print;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Byte range into the source text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        Span { start, end }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DslError {
    #[error("syntax error at byte {}: {message}", span.start)]
    Syntax { span: Span, message: String },
    #[error("unknown identifier {name:?} at byte {}", span.start)]
    UnknownIdentifier { span: Span, name: String },
    #[error("type error at byte {}: {message} (expected {expected}, found {actual})", span.start)]
    Type {
        span: Span,
        message: String,
        expected: String,
        actual: String,
    },
    #[error("{name} takes {expected} arguments, found {actual} at byte {}", span.start)]
    Arity {
        span: Span,
        name: String,
        expected: usize,
        actual: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    And,
    Or,
    Implies,
    Iff,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Implies => "implies",
            BinOp::Iff => "iff",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantKind {
    All,
    Exists,
    Exactly,
    AtLeast,
    AtMost,
    Count,
}

impl QuantKind {
    pub fn name(self) -> &'static str {
        match self {
            QuantKind::All => "all",
            QuantKind::Exists => "exists",
            QuantKind::Exactly => "exactly",
            QuantKind::AtLeast => "atleast",
            QuantKind::AtMost => "atmost",
            QuantKind::Count => "count",
        }
    }
}

/// Parsed expression with source spans. Equality ignores spans so that a
/// pretty-printed and re-parsed tree compares equal to the original.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for Expr {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Bool(bool),
    Int(i64),
    Str(String),
    /// Unresolved name: a bound variable, a slot, or a token literal.
    Ident(String),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Function application: pos, at, val, member, size, before, abs.
    Call { name: String, args: Vec<Expr> },
    Quant {
        kind: QuantKind,
        /// Count bound for exactly/atleast/atmost.
        bound: Option<Box<Expr>>,
        var: String,
        coll: Box<Expr>,
        body: Box<Expr>,
    },
    /// Inclusive integer range, valid only in collection position.
    Range(Box<Expr>, Box<Expr>),
}
