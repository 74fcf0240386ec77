//! Reward programs: named, scaled scalar terms over a declared observation schema.

mod ast;
mod eval;
mod homomorphism;
mod parser;
mod printer;
mod schema;
mod validate;

pub use ast::{BinaryOp, Expr, RewardProgram, RewardTerm, UnaryOp};
pub use eval::{accumulate, eval_step, summarize, EvalError, RewardSummary, StepEvalError, TermValues};
pub use homomorphism::{
    apply_homomorphism, HomomorphismMap, IsomorphismReport, MapEntry, MappingError, MismatchReport,
};
pub use parser::{parse_program, ParseError, ParseErrorKind, DEFAULT_SCHEMA};
pub use printer::{expr_to_string, pretty_print};
pub use schema::{FrameError, ObservationFrame, ObservationSchema, SchemaError, SignalSpec};
pub use validate::{validate_program, Diagnostic, ValidationReport};
