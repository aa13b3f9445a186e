use rayon::prelude::*;

use super::{Match, MatchSet, Matcher};
use crate::frontend::{AstNode, NodeKind, TranslationUnit};
use crate::interp::FunctionKey;

/// Pre-order flattening of one function: `end[i]` is one past the last
/// descendant of node `i`.
struct Flat<'a> {
    nodes: Vec<&'a AstNode>,
    end: Vec<usize>,
}

impl<'a> Flat<'a> {
    fn new(root: &'a AstNode) -> Self {
        let mut flat = Flat {
            nodes: Vec::new(),
            end: Vec::new(),
        };
        flat.push(root);
        flat
    }

    fn push(&mut self, n: &'a AstNode) {
        let i = self.nodes.len();
        self.nodes.push(n);
        self.end.push(0);
        for c in &n.children {
            self.push(c);
        }
        self.end[i] = self.nodes.len();
    }

    fn children(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let mut next = i + 1;
        std::iter::from_fn(move || {
            if next >= self.end[i] {
                return None;
            }
            let c = next;
            next = self.end[c];
            Some(c)
        })
    }

    /// `m` evaluated at node `i`. Inside a node matcher (`nested`), a node
    /// matcher argument refers to a direct child.
    fn holds(&self, m: &Matcher, i: usize, nested: bool) -> bool {
        let n = self.nodes[i];
        match m {
            Matcher::Node { .. } if nested => self.children(i).any(|c| self.holds(m, c, false)),
            Matcher::Node { kind, inner } => {
                n.kind == *kind && inner.iter().all(|a| self.holds(a, i, true))
            }
            Matcher::Member(s) => n.kind == NodeKind::MemberExpr && n.name() == Some(s),
            Matcher::ObjectType(s) => n.object_record.as_deref() == Some(s),
            Matcher::Callee(s) => n.kind == NodeKind::CallExpr && n.name() == Some(s),
            Matcher::Name(s) => n.name() == Some(s),
            Matcher::HasDescendant(d) => (i + 1..self.end[i]).any(|j| self.holds(d, j, false)),
            Matcher::AllOf(ms) => ms.iter().all(|a| self.holds(a, i, nested)),
            Matcher::AnyOf(ms) => ms.iter().any(|a| self.holds(a, i, nested)),
            Matcher::Unless(a) => !self.holds(a, i, nested),
        }
    }
}

fn match_unit(tu: &TranslationUnit, m: &Matcher) -> Vec<Match> {
    let mut out = Vec::new();
    for func in tu.function_decls() {
        let flat = Flat::new(func);
        let key = FunctionKey::new(&*tu.file, func.name().unwrap_or_default());
        for i in 0..flat.nodes.len() {
            if flat.holds(m, i, false) {
                out.push(Match::new(tu, flat.nodes[i], key.clone()));
            }
        }
    }
    out
}

/// Every node inside a function body that satisfies `m`, across all units.
pub fn match_template(tus: &[TranslationUnit], m: &Matcher) -> MatchSet {
    let found: Vec<Vec<Match>> = tus.par_iter().map(|tu| match_unit(tu, m)).collect();
    MatchSet::from_matches(found.into_iter().flatten())
}
