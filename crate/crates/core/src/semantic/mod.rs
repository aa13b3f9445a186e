//! Semantic templates over control flow: call-site matching from a crash
//! stack and tainted-record flows into sink calls.

mod cfg;
mod taint;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{NodeId, NodeKind, SourceLocation, TranslationUnit};
use crate::interp::{CrashReport, FunctionKey};
use crate::templates::{match_template, MatchSet, Matcher};

pub use cfg::{build_cfg, BasicBlock, Cfg, EdgeLabel};
pub use taint::{expr_tainted, sink_calls, taint_scan, transfer, TaintFinding, TaintScan, DEFAULT_SINKS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticError {
    #[error("record `{name}` is not declared")]
    UnknownRecord { name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallEdge {
    pub caller: FunctionKey,
    pub callee: String,
    pub site: SourceLocation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallGraph {
    pub edges: BTreeSet<CallEdge>,
}

impl CallGraph {
    pub fn calls_to<'a>(&'a self, callee: &'a str) -> impl Iterator<Item = &'a CallEdge> + 'a {
        self.edges.iter().filter(move |e| e.callee == callee)
    }
}

/// One edge per call expression, builtins included.
pub fn build_callgraph(tus: &[TranslationUnit]) -> CallGraph {
    let mut edges = BTreeSet::new();
    for tu in tus {
        for f in tu.function_decls() {
            let caller = FunctionKey::new(&*tu.file, f.name().unwrap_or_default());
            f.walk(&mut |n| {
                if n.kind == NodeKind::CallExpr {
                    edges.insert(CallEdge {
                        caller: caller.clone(),
                        callee: n.name.clone().unwrap_or_default(),
                        site: n.loc.clone(),
                    });
                }
            });
        }
    }
    CallGraph { edges }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallsiteMatches {
    pub matches: MatchSet,
    /// `(file, node)` of the call that appears in the crash stack.
    pub known: Option<(String, NodeId)>,
}

/// All calls to the function at the top of the crash stack.
pub fn callsite_matches(report: &CrashReport, tus: &[TranslationUnit]) -> CallsiteMatches {
    let Some(top) = report.stack.first() else {
        return CallsiteMatches::default();
    };
    let matches = match_template(tus, &Matcher::call_to(&top.function));
    let known = report.stack.get(1).and_then(|caller| {
        matches
            .iter()
            .find(|m| {
                *m.loc.file == caller.file && m.loc.line == caller.line && m.loc.column == caller.column
            })
            .map(|m| (m.loc.file.to_string(), m.node_id))
    });
    CallsiteMatches { matches, known }
}
