//! The JSON interchange format and Graphviz export.
//!
//! Function documents (`*.gf.json`) list nodes with their op, attributes and
//! input wiring; output descriptors are never stored and are re-inferred on
//! load. Tensor documents (`*.tensor.json`) carry one tensor in buffer order
//! under an explicit axis order. Non-finite floats are written as the strings
//! `"NaN"`, `"Inf"` and `"-Inf"`.

mod dot;
mod function;
mod number;
mod tensor;

pub use dot::export_dot;
pub use function::{parse_function, print_function};
pub use tensor::{parse_tensor, print_tensor};

use thiserror::Error;

use crate::ir::Diagnostic;
use crate::passes::join;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown op `{0}`")]
    UnknownOp(String),
    #[error("{0}")]
    Schema(String),
    #[error("invalid function: {}", join(.0))]
    Validation(Vec<Diagnostic>),
}

impl From<serde_json::Error> for ParseError {
    fn from(e: serde_json::Error) -> Self {
        ParseError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

fn schema(message: impl Into<String>) -> ParseError {
    ParseError::Schema(message.into())
}
