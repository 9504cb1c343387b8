//! Lexing, parsing, and cleaning of the supported Modelica subset.
//!
//! The lexer is lossless: tokens plus recorded whitespace gaps reproduce the
//! input byte-for-byte. The parser is recursive descent with single-token
//! lookahead over class definitions, component declarations, extends,
//! equation sections (connect / der / when / simple), and within/import
//! clauses. Constructs outside the subset are preserved verbatim in the
//! cleaned source but excluded from structured fields.

mod ast;
mod clean;
mod lexer;
mod parser;
mod token;

pub use ast::{
    is_builtin_type, Component, ComponentKind, Connect, Equation, Instantiation, Parameter,
    Variable, WhenAction, BUILTIN_TYPES,
};
pub use clean::{clean_source, strip_annotations, CleanedUnit};
pub use lexer::{lex, LexedSource};
pub use parser::{first_class_name, parse_unit, squash_ws, string_content};
pub use token::{Token, TokenKind, KEYWORDS};

use thiserror::Error;

/// Errors produced by the lexer, parser, and cleaner. Syntax errors keep a
/// precise position so they can be fed back verbatim to a repair prompt.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FrontendError {
    #[error("unterminated string starting at {line}:{column}")]
    UnterminatedString { line: u32, column: u32 },
    #[error("unterminated comment starting at {line}:{column}")]
    UnterminatedComment { line: u32, column: u32 },
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: u32, column: u32, message: String },
    #[error("unbalanced annotation starting at line {line}")]
    UnbalancedAnnotation { line: u32 },
}

impl FrontendError {
    pub fn position(&self) -> Option<(u32, u32)> {
        match self {
            FrontendError::UnterminatedString { line, column }
            | FrontendError::UnterminatedComment { line, column }
            | FrontendError::Syntax { line, column, .. } => Some((*line, *column)),
            FrontendError::UnbalancedAnnotation { line } => Some((*line, 1)),
        }
    }
}

/// Tokenize `source`, dropping the whitespace bookkeeping. Comments are
/// ordinary tokens, never silently dropped.
pub fn tokenize(source: &str) -> Result<Vec<Token>, FrontendError> {
    Ok(lex(source)?.tokens)
}
