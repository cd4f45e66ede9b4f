//! Diagnostics shared by the lexer, parser, and semantic checks.

use thiserror::Error;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// A front-end diagnostic. Rendered as `line:col: message`; the CLI prefixes
/// the file path to produce `file:line:col: message`.
#[derive(Debug, Clone, Error)]
pub enum Diagnostic {
    #[error("{pos}: syntax error: {message}")]
    Syntax { pos: Pos, message: String },
    /// The construct is valid OpenCL-C but outside the supported subset.
    #[error("{pos}: unsupported construct: {construct}")]
    Unsupported { pos: Pos, construct: String },
    #[error("{pos}: {message}")]
    Invalid { pos: Pos, message: String },
}

impl Diagnostic {
    pub fn syntax(pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic::Syntax { pos, message: message.into() }
    }

    pub fn unsupported(pos: Pos, construct: impl Into<String>) -> Self {
        Diagnostic::Unsupported { pos, construct: construct.into() }
    }

    pub fn invalid(pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic::Invalid { pos, message: message.into() }
    }
}

/// Errors raised by semantic passes that operate on an already-parsed AST
/// (type checking, transform preconditions, analysis preconditions).
#[derive(Debug, Clone, Error)]
#[error("{message}")]
pub struct SemanticError {
    pub message: String,
}

impl SemanticError {
    pub fn new(message: impl Into<String>) -> Self {
        SemanticError { message: message.into() }
    }
}
