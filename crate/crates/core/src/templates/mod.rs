//! Syntactic vulnerability templates: a clang-query style matcher DSL, its
//! evaluation over typed ASTs, and derivation of templates from a fault locus.

mod derive;
mod dsl;
mod engine;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::frontend::{AstNode, NodeId, NodeKind, SourceLocation, TranslationUnit};
use crate::interp::FunctionKey;

pub use derive::{derive_syntactic_template, TemplateError, TemplateRule};
pub use dsl::{is_well_formed, kind_name, matchable_kinds, parse_matcher, render_matcher, DslError};
pub use engine::match_template;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Matcher {
    Node { kind: NodeKind, inner: Vec<Matcher> },
    Member(String),
    ObjectType(String),
    Callee(String),
    /// Bare string argument: the node's declared or referenced name.
    Name(String),
    HasDescendant(Box<Matcher>),
    AllOf(Vec<Matcher>),
    AnyOf(Vec<Matcher>),
    Unless(Box<Matcher>),
}

impl Matcher {
    pub fn node(kind: NodeKind, inner: Vec<Matcher>) -> Self {
        Matcher::Node { kind, inner }
    }

    pub fn has_descendant(m: Matcher) -> Self {
        Matcher::HasDescendant(Box::new(m))
    }

    /// `callExpr(callee(name))`
    pub fn call_to(name: &str) -> Self {
        Matcher::node(NodeKind::CallExpr, vec![Matcher::Callee(name.to_string())])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub loc: SourceLocation,
    pub end_loc: SourceLocation,
    pub node_id: NodeId,
    pub enclosing_function: FunctionKey,
    pub snippet: String,
    /// Full text of the line the match starts on.
    pub line_text: String,
}

impl Match {
    pub fn new(tu: &TranslationUnit, node: &AstNode, enclosing_function: FunctionKey) -> Self {
        Match {
            loc: node.loc.clone(),
            end_loc: node.end_loc.clone(),
            node_id: node.id,
            enclosing_function,
            snippet: tu.text_range(&node.loc, &node.end_loc),
            line_text: tu.line_text(node.loc.line).to_string(),
        }
    }

    fn sort_key(&self) -> (&str, u32, u32, NodeId) {
        (&self.loc.file, self.loc.line, self.loc.column, self.node_id)
    }

    /// Node identity: ids are unique per file.
    pub fn identity(&self) -> (&str, NodeId) {
        (&self.loc.file, self.node_id)
    }
}

/// Matches sorted by (file, line, column, node id), without duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSet {
    pub matches: Vec<Match>,
}

impl MatchSet {
    pub fn from_matches(matches: impl IntoIterator<Item = Match>) -> Self {
        let mut matches: Vec<Match> = matches.into_iter().collect();
        matches.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        matches.dedup_by(|a, b| a.identity() == b.identity());
        MatchSet { matches }
    }

    pub fn union(&self, other: &MatchSet) -> MatchSet {
        MatchSet::from_matches(self.matches.iter().chain(&other.matches).cloned())
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Match> {
        self.matches.iter()
    }
}

/// One clang-query style block; `n` is 1-based.
pub fn render_match_block(n: usize, m: &Match) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Match #{n}:");
    let _ = writeln!(out, "{}: note: \"root\" binds here", m.loc);
    let _ = writeln!(out, "{}", m.line_text);
    let _ = writeln!(out, "{}^", " ".repeat(m.loc.column.saturating_sub(1) as usize));
    out
}

/// All blocks followed by the `<n> match(es).` trailer.
pub fn render_matches(set: &MatchSet) -> String {
    let mut out = String::new();
    for (i, m) in set.iter().enumerate() {
        out.push_str(&render_match_block(i + 1, m));
        out.push('\n');
    }
    let noun = if set.len() == 1 { "match" } else { "matches" };
    let _ = writeln!(out, "{} {noun}.", set.len());
    out
}
