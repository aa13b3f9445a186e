use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Matcher;
use crate::frontend::{find_tu, AstNode, NodeKind};
use crate::frontend::TranslationUnit;
use crate::localize::FaultLocus;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("no statement covers any fault line ({lines})")]
    NoAnchor { lines: String },
}

/// Which rule derives the per-line template. A forced rule that does not
/// apply to an anchor falls back to `Auto` for that anchor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TemplateRule {
    #[default]
    Auto,
    Member,
    Call,
    Declref,
}

impl FromStr for TemplateRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(TemplateRule::Auto),
            "member" => Ok(TemplateRule::Member),
            "call" => Ok(TemplateRule::Call),
            "declref" => Ok(TemplateRule::Declref),
            _ => Err(format!("unknown template rule `{s}`")),
        }
    }
}

const ANCHOR_KINDS: [NodeKind; 4] = [
    NodeKind::DeclStmt,
    NodeKind::ExprStmt,
    NodeKind::ReturnStmt,
    NodeKind::IfStmt,
];

fn covers(n: &AstNode, line: u32) -> bool {
    match n.kind {
        NodeKind::IfStmt => {
            let cond_end = n.children.first().map_or(n.loc.line, |c| c.end_loc.line);
            n.loc.line <= line && line <= cond_end
        }
        _ => n.spans_line(line),
    }
}

/// Smallest anchor-kind node covering `line`; the deepest wins ties.
fn anchor(tu: &TranslationUnit, line: u32) -> Option<&AstNode> {
    let mut best: Option<(&AstNode, usize)> = None;
    fn visit<'a>(n: &'a AstNode, depth: usize, line: u32, best: &mut Option<(&'a AstNode, usize)>) {
        if ANCHOR_KINDS.contains(&n.kind) && covers(n, line) {
            let better = match best {
                None => true,
                Some((b, d)) => (n.line_span(), std::cmp::Reverse(depth)) < (b.line_span(), std::cmp::Reverse(*d)),
            };
            if better {
                *best = Some((n, depth));
            }
        }
        for c in &n.children {
            visit(c, depth + 1, line, best);
        }
    }
    for f in tu.function_decls().filter(|f| f.spans_line(line)) {
        visit(f, 0, line, &mut best);
    }
    best.map(|(n, _)| n)
}

/// The part of the anchor that belongs to its line: an if's condition, else the node.
fn scope(a: &AstNode) -> &AstNode {
    match a.kind {
        NodeKind::IfStmt => a.children.first().unwrap_or(a),
        _ => a,
    }
}

fn member_rule(a: &AstNode, faulty: Option<&(String, String)>) -> Option<Matcher> {
    let (record, field) = match faulty {
        Some(rf) => rf.clone(),
        None => {
            let m = scope(a).find(&|n| n.kind == NodeKind::MemberExpr && n.object_record.is_some())?;
            (m.object_record.clone()?, m.name.clone()?)
        }
    };
    Some(Matcher::node(
        a.kind,
        vec![Matcher::has_descendant(Matcher::node(
            NodeKind::MemberExpr,
            vec![Matcher::Member(field), Matcher::ObjectType(record)],
        ))],
    ))
}

fn call_rule(a: &AstNode) -> Option<Matcher> {
    let s = scope(a);
    let call = s.find(&|n| n.kind == NodeKind::CallExpr)?;
    let callee = Matcher::call_to(call.name()?);
    let direct = a.children.iter().any(|c| c.id == call.id);
    Some(Matcher::node(
        a.kind,
        vec![if direct { callee } else { Matcher::has_descendant(callee) }],
    ))
}

fn declref_rule(a: &AstNode) -> Matcher {
    match scope(a).find(&|n| n.kind == NodeKind::DeclRefExpr) {
        Some(r) => Matcher::node(
            a.kind,
            vec![Matcher::has_descendant(Matcher::node(
                NodeKind::DeclRefExpr,
                vec![Matcher::Name(r.name.clone().unwrap_or_default())],
            ))],
        ),
        None => Matcher::node(a.kind, vec![]),
    }
}

fn auto_rule(a: &AstNode, faulty: Option<&(String, String)>) -> Matcher {
    member_rule(a, faulty)
        .or_else(|| call_rule(a))
        .unwrap_or_else(|| declref_rule(a))
}

fn line_template(a: &AstNode, faulty: Option<&(String, String)>, rule: TemplateRule) -> Matcher {
    let forced = match rule {
        TemplateRule::Auto => None,
        TemplateRule::Member => member_rule(a, faulty),
        TemplateRule::Call => call_rule(a),
        TemplateRule::Declref => Some(declref_rule(a)),
    };
    forced.unwrap_or_else(|| auto_rule(a, faulty))
}

/// Template for the statements on the locus lines; several distinct
/// per-line templates are joined with `anyOf`.
pub fn derive_syntactic_template(
    tus: &[TranslationUnit],
    locus: &FaultLocus,
    rule: TemplateRule,
) -> Result<Matcher, TemplateError> {
    let mut parts: Vec<Matcher> = Vec::new();
    for (file, line) in &locus.lines {
        let Some(a) = find_tu(tus, file).and_then(|tu| anchor(tu, *line)) else {
            continue;
        };
        let m = line_template(a, locus.faulty_member.as_ref(), rule);
        if !parts.contains(&m) {
            parts.push(m);
        }
    }
    match parts.len() {
        0 => Err(TemplateError::NoAnchor {
            lines: locus
                .lines
                .iter()
                .map(|(f, l)| format!("{f}:{l}"))
                .collect::<Vec<_>>()
                .join(", "),
        }),
        1 => Ok(parts.pop().expect("one part")),
        _ => Ok(Matcher::AnyOf(parts)),
    }
}
