//! Mini-language front end: tokenizer, parser, printer and the lowering of
//! function ASTs into [`Program`]s.

mod lexer;
mod lower;
mod parser;
mod print;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Expr, Program};

pub use lower::lower;
pub use print::{format_expr, print_function};

/// A named piece of source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceUnit {
    pub name: String,
    pub text: String,
}

impl SourceUnit {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> SourceUnit {
        SourceUnit { name: name.into(), text: text.into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub line: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub line: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StmtKind {
    Assign(String, Expr),
    If(Expr, Vec<Stmt>, Vec<Stmt>),
    While(Expr, Vec<Stmt>),
    /// `for var in range(start, end): body`
    For(String, Expr, Expr, Vec<Stmt>),
    Return(Expr),
    Pass,
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrontendError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: u32, column: u32, message: String },
    #[error("unsupported construct at line {line}: {construct}")]
    Unsupported { line: u32, construct: String },
    #[error("cannot lower program at line {line}: {message}")]
    Lowering { line: u32, message: String },
}

impl FrontendError {
    pub fn line(&self) -> u32 {
        match self {
            FrontendError::Syntax { line, .. }
            | FrontendError::Unsupported { line, .. }
            | FrontendError::Lowering { line, .. } => *line,
        }
    }

    pub fn column(&self) -> Option<u32> {
        match self {
            FrontendError::Syntax { column, .. } => Some(*column),
            _ => None,
        }
    }
}

/// Parses a source unit holding exactly one function definition.
pub fn parse(src: &SourceUnit) -> Result<Function, FrontendError> {
    parser::Parser::new(&src.text, false)?.parse_function()
}

/// Parses a single expression in the internal syntax, which additionally
/// accepts primed variables (`x′`) and `$`-prefixed special names.
pub fn parse_expr(text: &str) -> Result<Expr, FrontendError> {
    let mut p = parser::Parser::new(text, true)?;
    let e = p.parse_expr()?;
    p.expect_end()?;
    Ok(e)
}

/// Parses and lowers in one step; the program is named after the unit.
pub fn compile(src: &SourceUnit) -> Result<Program, FrontendError> {
    let f = parse(src)?;
    let mut p = lower(&f)?;
    p.name = src.name.clone();
    Ok(p)
}
