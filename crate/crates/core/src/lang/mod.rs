//! The specification language: module parser, model configuration and the
//! resolver that turns both into a [`CheckUnit`].

pub mod ast;
mod config;
mod lexer;
mod parser;
mod printer;
mod resolve;

pub use ast::{BinOp, Binding, Definition, Expr, ExprId, ExprKind, SourceRange, SpecModule};
pub(crate) use config::is_identifier;
pub use config::{parse_config, render_config, ModelConfig};
pub use parser::{parse_expr, parse_module};
pub(crate) use parser::Scope;
pub use printer::{render_expr, render_module};
pub use resolve::{resolve, Action, CheckUnit, ResolveError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, col {col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl ParseError {
    pub fn at(line: u32, col: u32, message: impl Into<String>) -> Self {
        ParseError { line, col, message: message.into() }
    }
}
