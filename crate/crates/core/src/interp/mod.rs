//! Tree-walking interpreter for MiniC that records line-level execution
//! slices and function coverage, and reports memory-safety faults in a
//! sanitizer-style format.

mod machine;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{render_trace, ExecutionSlice};
use crate::frontend::{SourceLocation, TranslationUnit};

pub use machine::{fnv1a64, STATEMENT_BUDGET};

/// A function identified by the file that defines it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionKey {
    pub file: String,
    pub function: String,
}

impl FunctionKey {
    pub fn new(file: impl Into<String>, function: impl Into<String>) -> Self {
        FunctionKey {
            file: file.into(),
            function: function.into(),
        }
    }
}

impl fmt::Display for FunctionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.function)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrashKind {
    Abort,
    AssertionFailure,
    BufferOverflowRead,
    BufferOverflowWrite,
}

impl CrashKind {
    pub const ALL: [CrashKind; 4] = [
        CrashKind::Abort,
        CrashKind::AssertionFailure,
        CrashKind::BufferOverflowRead,
        CrashKind::BufferOverflowWrite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CrashKind::Abort => "abort",
            CrashKind::AssertionFailure => "assertion-failure",
            CrashKind::BufferOverflowRead => "buffer-overflow-read",
            CrashKind::BufferOverflowWrite => "buffer-overflow-write",
        }
    }

    pub fn is_buffer_overflow(self) -> bool {
        matches!(
            self,
            CrashKind::BufferOverflowRead | CrashKind::BufferOverflowWrite
        )
    }
}

impl fmt::Display for CrashKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CrashKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        CrashKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame {
    pub function: String,
    pub file: String,
    pub line: u32,
    pub column: u32,
}

impl Frame {
    pub fn function_key(&self) -> FunctionKey {
        FunctionKey::new(self.file.clone(), self.function.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrashReport {
    pub kind: CrashKind,
    pub site: SourceLocation,
    /// Innermost frame first.
    pub stack: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ok(i64),
    Crash(CrashReport),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub outcome: Outcome,
    pub slice: ExecutionSlice,
    pub functions: BTreeSet<FunctionKey>,
}

impl RunResult {
    pub fn crash(&self) -> Option<&CrashReport> {
        match &self.outcome {
            Outcome::Crash(r) => Some(r),
            Outcome::Ok(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("statement budget of {limit} exhausted (non-terminating input?)")]
    RuntimeLimit { limit: u64 },
    #[error("call depth limit of {limit} exceeded")]
    CallDepth { limit: usize },
    #[error("{loc}: call to undefined function `{name}`")]
    UndefinedName { name: String, loc: SourceLocation },
    #[error("entry function `{name}` not found")]
    EntryNotFound { name: String },
    #[error("entry function `{name}` must take (char *buf, size_t len)")]
    BadEntry { name: String },
    #[error("{loc}: {message}")]
    Unsupported { loc: SourceLocation, message: String },
    #[error("{loc}: division by zero")]
    DivisionByZero { loc: SourceLocation },
    #[error("{loc}: dereference of a non-pointer value")]
    InvalidPointer { loc: SourceLocation },
}

/// Run `entry(buf, len)` over `input`. `tu` is searched first for functions,
/// then `extra_tus` in order.
pub fn execute(
    tu: &TranslationUnit,
    extra_tus: &[TranslationUnit],
    input: &[u8],
    entry: &str,
) -> Result<RunResult, InterpError> {
    let mut units = vec![tu];
    units.extend(extra_tus);
    machine::run(&units, input, entry)
}

/// Run over a whole program, picking the unit that defines `entry`.
pub fn execute_program(
    tus: &[TranslationUnit],
    input: &[u8],
    entry: &str,
) -> Result<RunResult, InterpError> {
    let Some(pos) = tus.iter().position(|t| t.function(entry).is_some()) else {
        return Err(InterpError::EntryNotFound {
            name: entry.to_string(),
        });
    };
    let mut units: Vec<&TranslationUnit> = vec![&tus[pos]];
    units.extend(tus.iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, t)| t));
    machine::run(&units, input, entry)
}

pub fn write_trace(result: &RunResult, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, render_trace(&result.slice, &result.functions))
}

/// `ERROR: MiniSan: <kind> at <site>` followed by one `#<i> in <fn> <loc>` line per frame.
pub fn render_report(report: &CrashReport) -> String {
    let mut out = format!("ERROR: MiniSan: {} at {}\n", report.kind, report.site);
    for (i, f) in report.stack.iter().enumerate() {
        out.push_str(&format!(
            "#{i} in {} {}:{}:{}\n",
            f.function, f.file, f.line, f.column
        ));
    }
    out
}

pub fn write_report(report: &CrashReport, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, render_report(report))
}
