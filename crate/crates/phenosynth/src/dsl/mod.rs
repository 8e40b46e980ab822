//! A sandboxed expression language for computable phenotypes.
//!
//! Candidate classifiers are requested from the model and executed in this
//! restricted DSL rather than a general-purpose language: evaluation is
//! deterministic, cannot touch the host, has an exact node-count size
//! metric, and still produces genuine parse and runtime errors for the
//! debugging branch of the refinement loop.
//!
//! A program maps one patient row to a probability in [0, 1]:
//!
//! ```text
//! phenotype atrh {
//!     let p = 0.0;
//!     if (high_BP_during_htn_meds_3 >= 2) {
//!         p = p + 0.6;
//!     }
//!     return clamp(p, 0.0, 1.0);
//! }
//! ```

use std::fmt;

use thiserror::Error;

mod analysis;
mod ast;
mod interp;
mod lexer;
mod parser;
mod render;

pub use analysis::{apply_params, extract_params, size, stats, ParamSlot, ParamSlots, ProgramStats};
pub use ast::{BinaryOp, Builtin, Expr, IdentTarget, Program, Span, Stmt, UnaryOp};
pub use interp::evaluate;
pub use parser::{parse, DEPTH_LIMIT};
pub use render::render;

use crate::cohort::CohortTable;

/// Grammar and semantics summary embedded verbatim in prompts.
pub const GRAMMAR_TEXT: &str = r#"program := "phenotype" IDENT "{" stmt* "return" expr ";" "}"
stmt    := "let" IDENT "=" expr ";"
         | IDENT "=" expr ";"
         | "if" "(" expr ")" block ("else" block)?
block   := "{" stmt* "}"
expr    := arithmetic and logic over NUMBER, IDENT, builtin calls, and
           parenthesized expressions, with the usual precedence:
           or < and < not < (< <= > >= == !=) < (+ -) < (* /) < unary -
builtin := min(a, b) | max(a, b) | clamp(x, lo, hi) | abs(x)

Rules: no loops and no functions other than the four builtins. Identifiers
must be let-bound variables or feature names from the data dictionary.
Assignment targets must be let-bound variables. An `if` guard treats a
nonzero number as true. Comparisons yield booleans, which become 1.0/0.0
inside arithmetic. The value of the final `return` is clamped to [0, 1] and
is the predicted probability. Nesting depth is limited to 64."#;

/// Rejected source text, reported with a 1-based position.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at {span}: expected {expected}, found {found}")]
    Syntax { span: Span, expected: String, found: String },
    #[error("unknown identifier `{name}` at {span}: identifiers must be let-bound variables or feature names from the data dictionary")]
    UnknownIdentifier { name: String, span: Span },
    #[error("cannot assign to `{name}` at {span}: features are read-only")]
    AssignToFeature { name: String, span: Span },
    #[error("number literal out of range at {span}")]
    NumberOutOfRange { span: Span },
    #[error("unexpected character `{ch}` at {span}")]
    UnexpectedChar { ch: char, span: Span },
    #[error("nesting depth exceeds {limit} at {span}")]
    DepthOverflow { span: Span, limit: u32 },
    #[error("{builtin} expects {expected} argument(s) but got {got} at {span}")]
    Arity { builtin: &'static str, expected: usize, got: usize, span: Span },
}

#[derive(Clone, Debug, PartialEq)]
pub enum RuntimeErrorKind {
    DivisionByZero,
    NonFinite,
    MissingValue { feature: String },
    UnknownFeature { feature: String },
    UnboundVariable { name: String },
    ClampBounds { lo: f64, hi: f64 },
}

impl fmt::Display for RuntimeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeErrorKind::DivisionByZero => f.write_str("division by zero"),
            RuntimeErrorKind::NonFinite => f.write_str("non-finite intermediate value"),
            RuntimeErrorKind::MissingValue { feature } => {
                write!(f, "feature `{feature}` has no value for this row")
            }
            RuntimeErrorKind::UnknownFeature { feature } => {
                write!(f, "feature `{feature}` is not present in the table")
            }
            RuntimeErrorKind::UnboundVariable { name } => {
                write!(f, "variable `{name}` is not bound")
            }
            RuntimeErrorKind::ClampBounds { lo, hi } => {
                write!(f, "clamp bounds are inverted (lo {lo} > hi {hi})")
            }
        }
    }
}

/// Evaluation fault at a specific row; the text feeds the debugging prompt.
#[derive(Clone, Debug, Error, PartialEq)]
#[error("runtime error on row {row_index} (id {row_id}) at {span}: {kind}")]
pub struct RuntimeError {
    pub row_index: usize,
    pub row_id: String,
    pub span: Span,
    pub kind: RuntimeErrorKind,
}

/// Invalid parameter vector passed to [`apply_params`].
#[derive(Clone, Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("expected {expected} parameter value(s), got {got}")]
    Arity { expected: usize, got: usize },
    #[error("parameter value {value} is not finite")]
    NonFinite { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Parse,
    Runtime,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Parse => "parse",
            Phase::Runtime => "runtime",
        })
    }
}

/// Why a candidate failed to produce probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalFailure {
    pub phase: Phase,
    pub message: String,
    pub location: String,
}

impl fmt::Display for EvalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ParseError> for EvalFailure {
    fn from(err: ParseError) -> Self {
        let location = match &err {
            ParseError::Syntax { span, .. }
            | ParseError::UnknownIdentifier { span, .. }
            | ParseError::AssignToFeature { span, .. }
            | ParseError::NumberOutOfRange { span }
            | ParseError::UnexpectedChar { span, .. }
            | ParseError::DepthOverflow { span, .. }
            | ParseError::Arity { span, .. } => span.to_string(),
        };
        EvalFailure { phase: Phase::Parse, message: err.to_string(), location }
    }
}

impl From<RuntimeError> for EvalFailure {
    fn from(err: RuntimeError) -> Self {
        let location = format!("row {}, {}", err.row_index, err.span);
        EvalFailure { phase: Phase::Runtime, message: err.to_string(), location }
    }
}

/// Result of running candidate source end to end on a table.
#[derive(Clone, Debug, PartialEq)]
pub enum EvalOutcome {
    /// One probability per row, all finite and in [0, 1].
    Success(Vec<f64>),
    Failure(EvalFailure),
}

impl EvalOutcome {
    pub fn probabilities(&self) -> Option<&[f64]> {
        match self {
            EvalOutcome::Success(p) => Some(p),
            EvalOutcome::Failure(_) => None,
        }
    }
}

/// Parses and evaluates in one step, folding both failure phases into
/// [`EvalOutcome`]; this is what the refinement loop calls.
pub fn run_source(source: &str, table: &CohortTable) -> (Option<Program>, EvalOutcome) {
    match parse(source, &table.schema) {
        Ok(program) => match evaluate(&program, table) {
            Ok(probs) => (Some(program), EvalOutcome::Success(probs)),
            Err(err) => (Some(program), EvalOutcome::Failure(err.into())),
        },
        Err(err) => (None, EvalOutcome::Failure(err.into())),
    }
}
