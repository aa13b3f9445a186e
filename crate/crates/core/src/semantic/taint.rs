use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cfg::{build_cfg, Cfg};
use super::SemanticError;
use crate::frontend::{AstNode, NodeKind, SourceLocation, TranslationUnit};
use crate::interp::FunctionKey;

pub const DEFAULT_SINKS: [&str; 4] = ["memcpy", "strcpy", "input_eq", "hash_eq"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaintFinding {
    pub sink_call: SourceLocation,
    pub sink_name: String,
    pub tainted_arg_index: usize,
    pub source_type: String,
    pub function: FunctionKey,
    pub guarded: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintScan {
    /// Unguarded findings, sorted by sink location.
    pub findings: Vec<TaintFinding>,
    /// Findings suppressed by a dominating relational guard.
    pub guarded: Vec<TaintFinding>,
}

type State = BTreeSet<String>;

/// Whether `e` carries taint: it has a pointer-to-record type, reads a
/// member of the record, or mentions a tainted variable.
pub fn expr_tainted(e: &AstNode, record: &str, state: &State) -> bool {
    e.find(&|n| {
        n.type_annot.as_ref().is_some_and(|t| t.points_to_record(record))
            || (n.kind == NodeKind::MemberExpr && n.object_record.as_deref() == Some(record))
            || (n.kind == NodeKind::DeclRefExpr && n.name().is_some_and(|x| state.contains(x)))
    })
    .is_some()
}

/// Apply the declarations and assignments of statement `s` to `state`.
pub fn transfer(s: &AstNode, record: &str, state: &mut State) {
    match s.kind {
        NodeKind::DeclStmt => {
            for var in &s.children {
                let name = var.name.clone().unwrap_or_default();
                let tainted = var.type_annot.as_ref().is_some_and(|t| t.points_to_record(record))
                    || var.children.first().is_some_and(|init| expr_tainted(init, record, state));
                if tainted {
                    state.insert(name);
                } else {
                    state.remove(&name);
                }
            }
        }
        NodeKind::ExprStmt => assign(&s.children[0], record, state),
        _ => {}
    }
}

fn assign(e: &AstNode, record: &str, state: &mut State) {
    for c in &e.children {
        assign(c, record, state);
    }
    if e.kind == NodeKind::BinaryOperator && e.op.as_deref() == Some("=") {
        let lhs = &e.children[0];
        if lhs.kind == NodeKind::DeclRefExpr {
            let name = lhs.name.clone().unwrap_or_default();
            if expr_tainted(&e.children[1], record, state) {
                state.insert(name);
            } else {
                state.remove(&name);
            }
        }
    }
}

/// Sink calls in `e` with the index of their first tainted argument.
pub fn sink_calls<'a>(
    e: &'a AstNode,
    record: &str,
    sinks: &[String],
    state: &State,
) -> Vec<(&'a AstNode, usize)> {
    let mut out = Vec::new();
    e.walk(&mut |n| {
        if n.kind == NodeKind::CallExpr && n.name().is_some_and(|c| sinks.iter().any(|s| s == c)) {
            if let Some(i) = n.children.iter().position(|a| expr_tainted(a, record, state)) {
                out.push((n, i));
            }
        }
    });
    out
}

fn relational_on_taint(cond: &AstNode, record: &str, state: &State) -> bool {
    cond.find(&|n| {
        n.kind == NodeKind::BinaryOperator
            && matches!(n.op.as_deref(), Some("<" | "<=" | ">" | ">="))
            && n.children.iter().any(|c| expr_tainted(c, record, state))
    })
    .is_some()
}

/// Per-block entry states, iterated to a fixed point with union join.
fn block_states(cfg: &Cfg, record: &str, params: &State) -> Vec<State> {
    let n = cfg.blocks.len();
    let mut input = vec![State::new(); n];
    let mut output = vec![State::new(); n];
    input[cfg.entry] = params.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for b in 0..n {
            let mut inn = if b == cfg.entry { params.clone() } else { State::new() };
            for p in cfg.preds(b) {
                inn.extend(output[p].iter().cloned());
            }
            let mut out = inn.clone();
            for s in &cfg.blocks[b].stmts {
                transfer(s, record, &mut out);
            }
            if inn != input[b] || out != output[b] {
                input[b] = inn;
                output[b] = out;
                changed = true;
            }
        }
    }
    input
}

fn scan_function(
    tu: &TranslationUnit,
    func: &AstNode,
    record: &str,
    sinks: &[String],
) -> Vec<TaintFinding> {
    let cfg = build_cfg(func);
    let key = FunctionKey::new(&*tu.file, func.name().unwrap_or_default());
    let params: State = func
        .params()
        .filter(|p| p.type_annot.as_ref().is_some_and(|t| t.points_to_record(record)))
        .filter_map(|p| p.name.clone())
        .collect();
    let states = block_states(&cfg, record, &params);
    let reachable = cfg.reachable();

    // condition blocks that test tainted data relationally
    let guards: BTreeSet<usize> = reachable
        .iter()
        .copied()
        .filter(|&b| {
            let Some(cond) = cfg.blocks[b].cond else { return false };
            let mut st = states[b].clone();
            for s in &cfg.blocks[b].stmts {
                transfer(s, record, &mut st);
            }
            relational_on_taint(cond, record, &st)
        })
        .collect();

    let mut out = Vec::new();
    for &b in &reachable {
        let guarded = guards.iter().any(|&g| g != b && cfg.dominates(g, b));
        let mut st = states[b].clone();
        let block = &cfg.blocks[b];
        let mut emit = |found: Vec<(&AstNode, usize)>| {
            for (call, i) in found {
                out.push(TaintFinding {
                    sink_call: call.loc.clone(),
                    sink_name: call.name.clone().unwrap_or_default(),
                    tainted_arg_index: i,
                    source_type: record.to_string(),
                    function: key.clone(),
                    guarded,
                });
            }
        };
        for s in &block.stmts {
            emit(sink_calls(s, record, sinks, &st));
            transfer(s, record, &mut st);
        }
        if let Some(cond) = block.cond {
            emit(sink_calls(cond, record, sinks, &st));
        }
    }
    out
}

/// Intraprocedural may-taint scan of every function from `tainted_record`
/// values to calls of `sinks`.
pub fn taint_scan(
    tus: &[TranslationUnit],
    tainted_record: &str,
    sinks: &[String],
) -> Result<TaintScan, SemanticError> {
    if !tus.iter().any(|t| t.records.contains_key(tainted_record)) {
        return Err(SemanticError::UnknownRecord {
            name: tainted_record.to_string(),
        });
    }
    let funcs: Vec<(&TranslationUnit, &AstNode)> = tus
        .iter()
        .flat_map(|tu| tu.function_decls().map(move |f| (tu, f)))
        .collect();
    let mut all: Vec<TaintFinding> = funcs
        .par_iter()
        .flat_map_iter(|(tu, f)| scan_function(tu, f, tainted_record, sinks))
        .collect();
    all.sort();
    let (guarded, findings) = all.into_iter().partition(|f| f.guarded);
    Ok(TaintScan { findings, guarded })
}
