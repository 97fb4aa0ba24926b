//! The `.pm` text language, term syntax and the portable `.pmb` format.

pub mod compile;
pub mod lexer;
pub mod portable;
pub mod program;
pub mod term_syntax;

use thiserror::Error;

pub use compile::{compile_program, CompileError, CompileErrorKind};
pub use lexer::{Pos, SyntaxError};
pub use portable::{deserialize_ruleset, serialize_ruleset, PortableError};
pub use program::{parse_program, SurfaceProgram};
pub use term_syntax::{literal_op, parse_term, print_term, TermParseError};

use crate::rewrite::RuleSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// Parses and compiles `.pm` source.
pub fn compile_source(text: &str) -> Result<RuleSet, FrontendError> {
    Ok(compile_program(&parse_program(text)?)?)
}
