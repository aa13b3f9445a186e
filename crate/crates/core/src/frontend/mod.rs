//! MiniC frontend: lexing, object-like macro expansion, parsing and type
//! resolution into a typed AST, plus a stable textual AST dump.

mod ast;
mod dump;
mod lexer;
mod macros;
mod parser;
mod types;

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{
    type_size, AstNode, BaseType, FieldLayout, NodeId, NodeKind, RecordLayout, TranslationUnit,
    TypeRef,
};
pub use dump::dump_ast;
pub use lexer::{decode_string_literal, tokenize};
pub use macros::{expand_macros, MacroTable};
pub use parser::parse;
pub use types::{resolve_program, resolve_types};

/// A 1-based file position. Columns count characters, not bytes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceLocation {
    pub file: Arc<str>,
    pub line: u32,
    pub column: u32,
}

impl SourceLocation {
    pub fn new(file: impl Into<Arc<str>>, line: u32, column: u32) -> Self {
        SourceLocation {
            file: file.into(),
            line,
            column,
        }
    }
}

impl fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    IntegerLiteral,
    StringLiteral,
    CharLiteral,
    Punctuator,
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub loc: SourceLocation,
    /// Location of the token's last character.
    pub end: SourceLocation,
}

impl Token {
    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punctuator && self.text == p
    }

    pub fn is_keyword(&self, k: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text == k
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{loc}: {message}")]
pub struct LexError {
    pub loc: SourceLocation,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MacroError {
    #[error("{loc}: macro `{name}` redefined with a different body")]
    Redefinition { name: String, loc: SourceLocation },
    #[error("{loc}: macro `{name}` expands to itself")]
    Recursive { name: String, loc: SourceLocation },
    #[error("{loc}: malformed directive: {message}")]
    BadDirective { loc: SourceLocation, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{loc}: expected {expected}, found {found}")]
pub struct ParseError {
    pub loc: SourceLocation,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{loc}: {message}")]
pub struct TypeError {
    pub loc: SourceLocation,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Macro(#[from] MacroError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// Tokenize, expand and parse one source text (types not yet resolved).
pub fn parse_source(source: &str, file: &str) -> Result<TranslationUnit, FrontendError> {
    let tokens = tokenize(source, file)?;
    let tokens = expand_macros(tokens)?;
    let mut tu = parse(&tokens, file)?;
    tu.source = Arc::from(source);
    Ok(tu)
}

/// Parse and type-resolve a set of MiniC files as one program. Records and
/// functions declared in any file are visible from every other file.
pub fn load_program<P: AsRef<Path> + Sync>(
    paths: &[P],
) -> Result<Vec<TranslationUnit>, FrontendError> {
    let parsed: Vec<TranslationUnit> = paths
        .par_iter()
        .map(|p| {
            let p = p.as_ref();
            let name = p.to_string_lossy().into_owned();
            let text = std::fs::read_to_string(p).map_err(|source| FrontendError::Io {
                path: name.clone(),
                source,
            })?;
            parse_source(&text, &name)
        })
        .collect::<Result<_, _>>()?;
    Ok(resolve_program(parsed)?)
}

/// In-memory variant of [`load_program`] taking `(file, source)` pairs.
pub fn load_sources(files: &[(&str, &str)]) -> Result<Vec<TranslationUnit>, FrontendError> {
    let parsed = files
        .iter()
        .map(|(name, text)| parse_source(text, name))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(resolve_program(parsed)?)
}

pub fn find_tu<'a>(tus: &'a [TranslationUnit], file: &str) -> Option<&'a TranslationUnit> {
    tus.iter().find(|t| &*t.file == file)
}
