//! Fault localization: sanitizer-report parsing and execution-slice dicing.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{obtain_parent_mutation, obtain_slice, CorpusEntry, CorpusError, ExecutionSlice, FuzzCorpus};
use crate::frontend::{find_tu, AstNode, NodeKind, SourceLocation, TranslationUnit};
use crate::interp::{CrashKind, CrashReport, Frame, FunctionKey};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("crash report line {line}: {message}")]
pub struct ReportFormatError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum LocalizeError {
    #[error("entry `{id}` is not a crash")]
    NotACrash { id: String },
    #[error("entry `{id}`: fault dice is empty and no crash report is available")]
    EmptyDice { id: String },
    #[error("entry `{id}`: no analyzed function encloses the fault lines")]
    NoFocus { id: String },
    #[error(transparent)]
    Report(#[from] ReportFormatError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Lines executed by a failing run but not by its passing parent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultDice {
    pub lines: BTreeSet<(String, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocusMethod {
    Report,
    Dice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultLocus {
    pub lines: BTreeSet<(String, u32)>,
    pub focus_function: FunctionKey,
    /// Absent when the crash left no report behind.
    pub crash_kind: Option<CrashKind>,
    pub stack: Vec<Frame>,
    /// `(record, field)` of the member access at a buffer-overflow site.
    pub faulty_member: Option<(String, String)>,
    pub method: LocusMethod,
}

fn parse_location(text: &str, line: usize) -> Result<SourceLocation, ReportFormatError> {
    let bad = || ReportFormatError {
        line,
        message: format!("malformed location `{text}`"),
    };
    let mut parts = text.rsplitn(3, ':');
    let col = parts.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
    let ln = parts.next().and_then(|l| l.parse().ok()).ok_or_else(bad)?;
    let file = parts.next().filter(|f| !f.is_empty()).ok_or_else(bad)?;
    if ln == 0 || col == 0 {
        return Err(bad());
    }
    Ok(SourceLocation::new(file, ln, col))
}

/// Parse a MiniSan report as produced by [`crate::interp::render_report`].
pub fn parse_crash_report(text: &str) -> Result<CrashReport, ReportFormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (n, header) = lines.next().ok_or(ReportFormatError {
        line: 1,
        message: "empty report".into(),
    })?;
    let rest = header
        .strip_prefix("ERROR: MiniSan: ")
        .ok_or_else(|| ReportFormatError {
            line: n,
            message: "missing `ERROR: MiniSan:` header".into(),
        })?;
    let (kind, site) = rest.split_once(" at ").ok_or_else(|| ReportFormatError {
        line: n,
        message: "header lacks `<kind> at <location>`".into(),
    })?;
    let kind: CrashKind = kind.parse().map_err(|()| ReportFormatError {
        line: n,
        message: format!("unknown crash kind `{kind}`"),
    })?;
    let site = parse_location(site, n)?;

    let mut stack = Vec::new();
    for (n, l) in lines {
        if l.is_empty() {
            continue;
        }
        let bad = |message: &str| ReportFormatError {
            line: n,
            message: message.to_string(),
        };
        let body = l.strip_prefix('#').ok_or_else(|| bad("expected a `#<i> in` frame"))?;
        let (index, body) = body.split_once(" in ").ok_or_else(|| bad("expected ` in `"))?;
        if index.parse::<usize>().ok() != Some(stack.len()) {
            return Err(bad("frame numbers must count up from 0"));
        }
        let (function, loc) = body.split_once(' ').ok_or_else(|| bad("expected `<fn> <location>`"))?;
        let loc = parse_location(loc, n)?;
        stack.push(Frame {
            function: function.to_string(),
            file: loc.file.to_string(),
            line: loc.line,
            column: loc.column,
        });
    }
    if stack.is_empty() {
        return Err(ReportFormatError {
            line: n + 1,
            message: "report has no stack frames".into(),
        });
    }
    Ok(CrashReport { kind, site, stack })
}

pub fn obtain_dice(slice1: &ExecutionSlice, slice2: &ExecutionSlice) -> FaultDice {
    FaultDice {
        lines: slice1.lines.difference(&slice2.lines).cloned().collect(),
    }
}

fn read_report(entry: &CorpusEntry) -> Result<Option<CrashReport>, LocalizeError> {
    let Some(path) = &entry.report_path else {
        return Ok(None);
    };
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(Some(parse_crash_report(&text)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
        .into()),
    }
}

/// The member access at `line` whose column equals `column`, else the leftmost.
pub fn member_at(tu: &TranslationUnit, line: u32, column: u32) -> Option<(String, String)> {
    let mut on_line: Vec<&AstNode> = Vec::new();
    tu.root.walk(&mut |n| {
        if n.kind == NodeKind::MemberExpr && n.loc.line == line && n.object_record.is_some() {
            on_line.push(n);
        }
    });
    let chosen = on_line
        .iter()
        .find(|n| n.loc.column == column)
        .or_else(|| on_line.iter().min_by_key(|n| n.loc.column))?;
    Some((chosen.object_record.clone()?, chosen.name.clone()?))
}

fn function_key_at(tus: &[TranslationUnit], file: &str, line: u32) -> Option<FunctionKey> {
    let f = find_tu(tus, file)?.enclosing_function(line)?;
    Some(FunctionKey::new(file, f.name()?))
}

pub fn localize_failure(
    crash_entry: &CorpusEntry,
    corpus: &FuzzCorpus,
    tus: &[TranslationUnit],
) -> Result<FaultLocus, LocalizeError> {
    if !crash_entry.crash {
        return Err(LocalizeError::NotACrash {
            id: crash_entry.id.clone(),
        });
    }
    let report = read_report(crash_entry)?;

    if let Some(r) = report.as_ref().filter(|r| r.kind.is_buffer_overflow()) {
        let top = &r.stack[0];
        let faulty_member = find_tu(tus, &top.file).and_then(|tu| member_at(tu, top.line, top.column));
        return Ok(FaultLocus {
            lines: BTreeSet::from([(top.file.clone(), top.line)]),
            focus_function: top.function_key(),
            crash_kind: Some(r.kind),
            stack: r.stack.clone(),
            faulty_member,
            method: LocusMethod::Report,
        });
    }

    let files: HashSet<&str> = tus.iter().map(|t| &*t.file).collect();
    let dice = match obtain_parent_mutation(crash_entry, corpus) {
        Ok(parent) => {
            let mut d = obtain_dice(&obtain_slice(crash_entry)?, &obtain_slice(parent)?);
            d.lines.retain(|(f, _)| files.contains(f.as_str()));
            d
        }
        Err(CorpusError::NoParent { .. }) => FaultDice::default(),
        Err(e) => return Err(e.into()),
    };

    let (lines, method) = match (&report, dice.lines.is_empty()) {
        (_, false) => (dice.lines, LocusMethod::Dice),
        (Some(r), true) => (
            BTreeSet::from([(r.stack[0].file.clone(), r.stack[0].line)]),
            LocusMethod::Report,
        ),
        (None, true) => {
            return Err(LocalizeError::EmptyDice {
                id: crash_entry.id.clone(),
            })
        }
    };

    let enclosing: Vec<FunctionKey> = lines
        .iter()
        .filter_map(|(f, l)| function_key_at(tus, f, *l))
        .collect();
    let site_fn = report.as_ref().map(|r| r.stack[0].function_key());
    let focus_function = match site_fn {
        Some(k) if enclosing.contains(&k) => k,
        _ => enclosing.into_iter().next().ok_or_else(|| LocalizeError::NoFocus {
            id: crash_entry.id.clone(),
        })?,
    };
    Ok(FaultLocus {
        lines,
        focus_function,
        crash_kind: report.as_ref().map(|r| r.kind),
        stack: report.map(|r| r.stack).unwrap_or_default(),
        faulty_member: None,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::render_report;

    #[test]
    fn minimal_report() {
        let r = parse_crash_report("ERROR: MiniSan: abort at a.mc:3:5\n#0 in f a.mc:3:5\n").unwrap();
        assert_eq!(r.kind, CrashKind::Abort);
        assert_eq!(r.stack.len(), 1);
        assert_eq!(render_report(&r), "ERROR: MiniSan: abort at a.mc:3:5\n#0 in f a.mc:3:5\n");
    }

    #[test]
    fn paths_with_colons() {
        let r = parse_crash_report("ERROR: MiniSan: abort at c:/x/a.mc:3:5\n#0 in f c:/x/a.mc:3:5\n").unwrap();
        assert_eq!(&*r.site.file, "c:/x/a.mc");
    }

    #[test]
    fn malformed_reports() {
        for (text, line) in [
            ("", 1),
            ("hello", 1),
            ("ERROR: MiniSan: boom at a.mc:1:1\n#0 in f a.mc:1:1\n", 1),
            ("ERROR: MiniSan: abort at a.mc:1:1\n", 2),
            ("ERROR: MiniSan: abort at a.mc:1:1\n#1 in f a.mc:1:1\n", 2),
            ("ERROR: MiniSan: abort at a.mc:1:1\n#0 in f a.mc:x:1\n", 2),
        ] {
            assert_eq!(parse_crash_report(text).unwrap_err().line, line, "{text:?}");
        }
    }

    #[test]
    fn dice_basics() {
        let s = |v: &[u32]| ExecutionSlice {
            lines: v.iter().map(|l| ("a".to_string(), *l)).collect(),
        };
        assert!(obtain_dice(&s(&[1, 2]), &s(&[1, 2])).lines.is_empty());
        assert_eq!(
            obtain_dice(&s(&[9, 3]), &s(&[3])).lines,
            BTreeSet::from([("a".to_string(), 9)])
        );
    }
}
