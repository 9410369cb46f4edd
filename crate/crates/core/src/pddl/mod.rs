//! Typed STRIPS with action costs: parsing, grounding and plan validation.

pub mod ast;
mod ground;
mod lexer;
mod parser;
mod task;
mod validate;

pub use ast::{DomainAst, GroundAtom, ProblemAst, Requirement, Span};
pub use ground::{ground, ground_with, GroundingOptions, MAX_BINDINGS};
pub use parser::{parse_domain, parse_problem, MAX_NESTING};
pub use task::{apply, ActionId, FactId, FactLiteral, GroundAction, GroundedTask, Plan, PlanFileError, State};
pub use validate::{validate_plan, InvalidReason, ValidationReport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PddlError {
    #[error("{pos}: unexpected character {ch:?}")]
    Lex { pos: Span, ch: char },
    #[error("{pos}: expected {expected}, found {found}")]
    Parse { pos: Span, expected: String, found: String },
    #[error("input is not valid UTF-8 (byte {offset})")]
    Encoding { offset: usize },
    #[error("{pos}: unsupported requirement {requirement}")]
    UnsupportedRequirement { pos: Span, requirement: String },
    #[error("{pos}: unsupported construct {construct}")]
    Unsupported { pos: Span, construct: String },
    #[error("{pos}: {name} expects {expected} arguments, got {found}")]
    Arity { pos: Span, name: String, expected: usize, found: usize },
    #[error("{pos}: unknown type {name}")]
    UnknownType { pos: Span, name: String },
    #[error("{pos}: unknown predicate {name}")]
    UnknownPredicate { pos: Span, name: String },
    #[error("{pos}: unknown function {name}")]
    UnknownFunction { pos: Span, name: String },
    #[error("{pos}: variable ?{name} is not a parameter")]
    UnboundVariable { pos: Span, name: String },
    #[error("{pos}: duplicate {kind} {name}")]
    Duplicate { pos: Span, kind: &'static str, name: String },
    #[error("problem is for domain {found}, expected {expected}")]
    DomainMismatch { expected: String, found: String },
    #[error("{pos}: negative action cost {value}")]
    NegativeCost { pos: Span, value: String },
}

impl PddlError {
    pub fn position(&self) -> Option<Span> {
        use PddlError::*;
        match self {
            Lex { pos, .. }
            | Parse { pos, .. }
            | UnsupportedRequirement { pos, .. }
            | Unsupported { pos, .. }
            | Arity { pos, .. }
            | UnknownType { pos, .. }
            | UnknownPredicate { pos, .. }
            | UnknownFunction { pos, .. }
            | UnboundVariable { pos, .. }
            | Duplicate { pos, .. }
            | NegativeCost { pos, .. } => Some(*pos),
            Encoding { .. } | DomainMismatch { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroundError {
    #[error("object {name} is not declared")]
    UndeclaredObject { name: String },
    #[error("cost fluent {fluent} has no initial value")]
    CostFluentUndefined { fluent: String },
    #[error("cost fluent {fluent} is negative")]
    NegativeCost { fluent: String },
    #[error("action {action} has too many bindings to enumerate")]
    TooLarge { action: String },
}

fn utf8(bytes: &[u8]) -> Result<&str, PddlError> {
    std::str::from_utf8(bytes).map_err(|e| PddlError::Encoding {
        offset: e.valid_up_to(),
    })
}

/// [`parse_domain`] over raw bytes.
pub fn parse_domain_bytes(bytes: &[u8]) -> Result<DomainAst, PddlError> {
    parse_domain(utf8(bytes)?)
}

/// [`parse_problem`] over raw bytes.
pub fn parse_problem_bytes(bytes: &[u8], domain: &DomainAst) -> Result<ProblemAst, PddlError> {
    parse_problem(utf8(bytes)?, domain)
}
