//! Error types shared across the crate.

use thiserror::Error;

/// What went wrong while parsing a program, fact database, or glossary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnsafeNegation,
    UnboundVariable,
    UnboundHeadVariable,
    Unstratifiable,
    ArityConflict,
    DuplicateRuleId,
    Aggregate,
    DuplicateEntry,
    UnknownSlot,
    MissingSlot,
}

impl std::fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::UnsafeNegation => "unsafe negation",
            ParseErrorKind::UnboundVariable => "unbound variable",
            ParseErrorKind::UnboundHeadVariable => "unbound head variable",
            ParseErrorKind::Unstratifiable => "unstratifiable program",
            ParseErrorKind::ArityConflict => "arity conflict",
            ParseErrorKind::DuplicateRuleId => "duplicate rule id",
            ParseErrorKind::Aggregate => "invalid aggregate",
            ParseErrorKind::DuplicateEntry => "duplicate glossary entry",
            ParseErrorKind::UnknownSlot => "unknown template slot",
            ParseErrorKind::MissingSlot => "missing template slot",
        };
        f.write_str(s)
    }
}

/// A parse failure with its source location.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{kind} at line {line}, column {col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub kind: ParseErrorKind,
    pub msg: String,
}

impl ParseError {
    pub fn new(line: u32, col: u32, kind: ParseErrorKind, msg: impl Into<String>) -> Self {
        ParseError { line, col, kind, msg: msg.into() }
    }
}

/// Failures raised while computing the chase.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ChaseError {
    #[error("step bound of {0} exceeded; existential or arithmetic runaway")]
    StepBoundExceeded(usize),
    #[error("division by zero")]
    DivisionByZero,
    #[error("arithmetic over a labeled null")]
    NullOperand,
    #[error("non-numeric operand in arithmetic")]
    NonNumericOperand,
    #[error("arithmetic overflow")]
    Overflow,
    #[error("type error in comparison: {0}")]
    ComparisonType(String),
    #[error("unbound variable {0}")]
    UnboundVariable(String),
    #[error("predicate {predicate} used with arity {used} but stored with arity {stored}")]
    ArityMismatch { predicate: String, used: usize, stored: usize },
    #[error("aggregate error: {0}")]
    Aggregate(String),
    #[error("step {0} does not belong to an aggregate rule")]
    NotAggregateStep(usize),
    #[error("unknown rule id {0}")]
    UnknownRule(String),
}

/// Failures raised while turning facts, steps, or rules into text.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum VerbalizeError {
    #[error("no glossary entry for predicate {0}")]
    MissingEntry(String),
    #[error("glossary entry for {predicate} has {slots} slots but the atom has arity {arity}")]
    SlotArityMismatch { predicate: String, slots: usize, arity: usize },
    #[error("no binding for variable {0}")]
    MissingBinding(String),
    #[error("contribution list inconsistent with rule shape: {0}")]
    ContributionMismatch(String),
    #[error(transparent)]
    Chase(#[from] ChaseError),
}

/// Failures at the generator-backend boundary.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend transport failure: {0}")]
    Transport(String),
    #[error("backend returned no valid template for node {node}, task {task}")]
    EmptyExpansion { node: String, task: String },
    #[error("ground value {value:?} would be disclosed in request for node {node}")]
    GroundLeak { node: String, value: String },
    #[error("backend response malformed: {0}")]
    Malformed(String),
}
