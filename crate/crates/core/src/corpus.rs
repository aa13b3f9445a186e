//! Fuzz corpora with parent-mutation links, trace files, and the coverset of
//! functions exercised by fuzzing.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::FunctionKey;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("{path}:{line}: malformed trace record: {message}")]
    TraceFormat {
        path: String,
        line: usize,
        message: String,
    },
    #[error("entry `{id}` has no non-crashing ancestor")]
    NoParent { id: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Source lines executed by one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionSlice {
    pub lines: BTreeSet<(String, u32)>,
}

impl ExecutionSlice {
    pub fn contains(&self, file: &str, line: u32) -> bool {
        self.lines.contains(&(file.to_string(), line))
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

impl FromIterator<(String, u32)> for ExecutionSlice {
    fn from_iter<T: IntoIterator<Item = (String, u32)>>(iter: T) -> Self {
        ExecutionSlice {
            lines: iter.into_iter().collect(),
        }
    }
}

/// Contents of a trace file: the line slice plus the functions entered.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub slice: ExecutionSlice,
    pub functions: BTreeSet<FunctionKey>,
}

/// Render `L <file> <line>` and `F <file> <function>` records, sorted and unique.
pub fn render_trace(slice: &ExecutionSlice, functions: &BTreeSet<FunctionKey>) -> String {
    let mut lines: Vec<String> = slice
        .lines
        .iter()
        .map(|(file, line)| format!("L {file} {line}"))
        .chain(
            functions
                .iter()
                .map(|k| format!("F {} {}", k.file, k.function)),
        )
        .collect();
    lines.sort();
    lines.dedup();
    let mut out = String::new();
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
    out
}

/// Parse trace text. `origin` names the file in error messages.
pub fn parse_trace(text: &str, origin: &str) -> Result<Trace, CorpusError> {
    let mut trace = Trace::default();
    for (i, raw) in text.lines().enumerate() {
        let err = |message: &str| CorpusError::TraceFormat {
            path: origin.to_string(),
            line: i + 1,
            message: message.to_string(),
        };
        if raw.is_empty() {
            continue;
        }
        let parts: Vec<&str> = raw.split(' ').collect();
        match parts.as_slice() {
            ["L", file, line] if !file.is_empty() => {
                let line: u32 = line.parse().map_err(|_| err("line is not a number"))?;
                if line == 0 {
                    return Err(err("line numbers start at 1"));
                }
                trace.slice.lines.insert((file.to_string(), line));
            }
            ["F", file, function] if !file.is_empty() && !function.is_empty() => {
                trace.functions.insert(FunctionKey::new(*file, *function));
            }
            _ => return Err(err("expected `L <file> <line>` or `F <file> <function>`")),
        }
    }
    Ok(trace)
}

pub fn read_trace(path: &Path) -> Result<Trace, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_trace(&text, &path.display().to_string())
}

/// One manifest line as written on disk (paths relative to the manifest).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub parent_id: Option<String>,
    pub input_path: String,
    pub trace_path: String,
    pub crash: bool,
    pub report_path: Option<String>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CorpusError::Manifest {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("manifest records serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub id: String,
    pub parent_id: Option<String>,
    pub input_path: PathBuf,
    pub trace_path: PathBuf,
    pub crash: bool,
    pub report_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzCorpus {
    pub entries: BTreeMap<String, CorpusEntry>,
}

impl FuzzCorpus {
    /// Build a corpus from manifest records, checking ids, parent links and
    /// crash/report consistency. Relative paths are resolved against `base`.
    pub fn from_records(records: &[ManifestRecord], base: &Path) -> Result<Self, CorpusError> {
        let fail = |line: usize, message: String| CorpusError::Manifest { line, message };
        if records.is_empty() {
            return Err(fail(0, "manifest has no entries".into()));
        }
        let mut entries = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.crash != r.report_path.is_some() {
                return Err(fail(
                    i + 1,
                    format!("entry `{}`: report_path must be present exactly when crash is true", r.id),
                ));
            }
            let entry = CorpusEntry {
                id: r.id.clone(),
                parent_id: r.parent_id.clone(),
                input_path: base.join(&r.input_path),
                trace_path: base.join(&r.trace_path),
                crash: r.crash,
                report_path: r.report_path.as_ref().map(|p| base.join(p)),
            };
            if entries.insert(r.id.clone(), entry).is_some() {
                return Err(fail(i + 1, format!("duplicate id `{}`", r.id)));
            }
        }
        for (i, r) in records.iter().enumerate() {
            if let Some(p) = &r.parent_id {
                if !entries.contains_key(p) {
                    return Err(fail(i + 1, format!("entry `{}` has dangling parent `{p}`", r.id)));
                }
            }
        }
        let corpus = FuzzCorpus { entries };
        for (i, r) in records.iter().enumerate() {
            let mut seen = HashSet::new();
            let mut cur = Some(r.id.as_str());
            while let Some(id) = cur {
                if !seen.insert(id) {
                    return Err(fail(i + 1, format!("parent links of `{}` form a cycle", r.id)));
                }
                cur = corpus.entries[id].parent_id.as_deref();
            }
        }
        Ok(corpus)
    }

    pub fn get(&self, id: &str) -> Option<&CorpusEntry> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn crashes(&self) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.values().filter(|e| e.crash)
    }
}

pub fn load_corpus(manifest: &Path) -> Result<FuzzCorpus, CorpusError> {
    let records = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    FuzzCorpus::from_records(&records, base)
}

pub fn obtain_slice(entry: &CorpusEntry) -> Result<ExecutionSlice, CorpusError> {
    Ok(read_trace(&entry.trace_path)?.slice)
}

/// Nearest ancestor of `entry` that did not crash.
pub fn obtain_parent_mutation<'c>(
    entry: &CorpusEntry,
    corpus: &'c FuzzCorpus,
) -> Result<&'c CorpusEntry, CorpusError> {
    let mut cur = entry.parent_id.as_deref();
    while let Some(id) = cur {
        let parent = corpus.entries.get(id).ok_or_else(|| CorpusError::NoParent {
            id: entry.id.clone(),
        })?;
        if !parent.crash {
            return Ok(parent);
        }
        cur = parent.parent_id.as_deref();
    }
    Err(CorpusError::NoParent {
        id: entry.id.clone(),
    })
}

/// Functions entered by fuzzing, with average constant-time membership.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Coverset {
    pub functions: HashSet<FunctionKey>,
}

impl Coverset {
    pub fn contains(&self, key: &FunctionKey) -> bool {
        self.functions.contains(key)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

impl FromIterator<FunctionKey> for Coverset {
    fn from_iter<T: IntoIterator<Item = FunctionKey>>(iter: T) -> Self {
        Coverset {
            functions: iter.into_iter().collect(),
        }
    }
}

/// Union of the `F` records of every entry, crashing or not.
pub fn compute_coverset(corpus: &FuzzCorpus) -> Result<Coverset, CorpusError> {
    let per_entry: Vec<Trace> = corpus
        .entries
        .values()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|e| read_trace(&e.trace_path))
        .collect::<Result<_, _>>()?;
    Ok(per_entry.into_iter().flat_map(|t| t.functions).collect())
}
