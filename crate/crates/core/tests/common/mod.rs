#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use vexplore::corpus::{load_corpus, FuzzCorpus};
use vexplore::frontend::{load_program, AstNode, NodeId, NodeKind, TranslationUnit};
use vexplore::semantic::{Cfg, DEFAULT_SINKS};
use vexplore::templates::{matchable_kinds, Matcher};

pub const MOTIVATING: &str = "tests/fixtures/motivating/test.mc";
pub const MOTIVATING_MANIFEST: &str = "tests/fixtures/motivating/corpus/manifest.jsonl";
pub const UDP: &str = "tests/fixtures/udp/udp.mc";
pub const UDP_EXTRA: &str = "tests/fixtures/udp/udp_extra.mc";
pub const UDP_MANIFEST: &str = "tests/fixtures/udp/corpus/manifest.jsonl";
pub const TAINT_UNGUARDED: &str = "tests/fixtures/taint/unguarded.mc";
pub const TAINT_GUARDED: &str = "tests/fixtures/taint/guarded.mc";
pub const LOOPS: &str = "tests/fixtures/cfg/loops.mc";

pub fn load(paths: &[&str]) -> Vec<TranslationUnit> {
    load_program(paths).expect("fixture parses")
}

pub fn corpus(manifest: &str) -> FuzzCorpus {
    load_corpus(Path::new(manifest)).expect("fixture corpus loads")
}

/// Each fixture program on its own (files that declare the same record
/// cannot share a program).
pub fn fixture_programs() -> Vec<Vec<TranslationUnit>> {
    vec![
        load(&[MOTIVATING]),
        load(&[UDP, UDP_EXTRA]),
        load(&[TAINT_UNGUARDED]),
        load(&[TAINT_GUARDED]),
        load(&[LOOPS]),
    ]
}

/// First line whose text ends with `marker`.
pub fn line_of(tu: &TranslationUnit, marker: &str) -> u32 {
    tu.source
        .lines()
        .position(|l| l.trim_end().ends_with(marker))
        .map(|i| i as u32 + 1)
        .unwrap_or_else(|| panic!("marker {marker} not in {}", tu.file))
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_vexplore"))
}

/// Copy a fixture directory so tests can rewrite it.
pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), to.join(e.file_name())).unwrap();
    }
}

// ---------------------------------------------------------------------------
// Matcher oracle: direct recursive evaluation over the tree.

fn descendants<'a>(n: &'a AstNode, out: &mut Vec<&'a AstNode>) {
    for c in &n.children {
        out.push(c);
        descendants(c, out);
    }
}

pub fn oracle_holds(m: &Matcher, n: &AstNode, inside_node: bool) -> bool {
    match m {
        Matcher::Node { kind, inner } => {
            if inside_node {
                n.children.iter().any(|c| oracle_holds(m, c, false))
            } else {
                n.kind == *kind && inner.iter().all(|x| oracle_holds(x, n, true))
            }
        }
        Matcher::Member(s) => n.kind == NodeKind::MemberExpr && n.name.as_deref() == Some(s.as_str()),
        Matcher::ObjectType(s) => n.object_record.as_deref() == Some(s.as_str()),
        Matcher::Callee(s) => n.kind == NodeKind::CallExpr && n.name.as_deref() == Some(s.as_str()),
        Matcher::Name(s) => n.name.as_deref() == Some(s.as_str()),
        Matcher::HasDescendant(d) => {
            let mut all = Vec::new();
            descendants(n, &mut all);
            all.into_iter().any(|x| oracle_holds(d, x, false))
        }
        Matcher::AllOf(ms) => ms.iter().all(|x| oracle_holds(x, n, inside_node)),
        Matcher::AnyOf(ms) => ms.iter().any(|x| oracle_holds(x, n, inside_node)),
        Matcher::Unless(x) => !oracle_holds(x, n, inside_node),
    }
}

/// `(file, node id)` of every node inside a function that satisfies `m`.
pub fn oracle_matches(tus: &[TranslationUnit], m: &Matcher) -> Vec<(String, NodeId)> {
    let mut out = BTreeSet::new();
    for tu in tus {
        for f in tu.root.children.iter().filter(|c| c.kind == NodeKind::FunctionDecl) {
            let mut nodes = vec![f];
            descendants(f, &mut nodes);
            for n in nodes {
                if oracle_holds(m, n, false) {
                    out.insert((n.loc.line, n.loc.column, tu.file.to_string(), n.id));
                }
            }
        }
    }
    let mut v: Vec<_> = out.into_iter().collect();
    v.sort_by(|a, b| (&a.2, a.0, a.1, a.3).cmp(&(&b.2, b.0, b.1, b.3)));
    v.into_iter().map(|(_, _, f, id)| (f, id)).collect()
}

// ---------------------------------------------------------------------------
// Random matchers.

pub const NAMES: [&str; 12] = [
    "abort",
    "udp_len",
    "struct udp_header",
    "check_l4_udp",
    "input_eq",
    "len",
    "buf",
    "n",
    "i",
    "memcpy",
    "udp",
    "count",
];

pub fn random_matcher<R: Rng>(rng: &mut R, inside: Option<NodeKind>, depth: u32) -> Matcher {
    let name = |rng: &mut R| NAMES.choose(rng).unwrap().to_string();
    let kinds: Vec<NodeKind> = matchable_kinds().collect();
    let mut choices: Vec<u8> = vec![0, 0, 0];
    if depth > 0 {
        choices.extend([1, 2, 3, 4]);
    }
    match inside {
        Some(NodeKind::MemberExpr) => choices.extend([5, 6]),
        Some(NodeKind::CallExpr) => choices.extend([7, 7]),
        _ => {}
    }
    if inside.is_some() {
        choices.push(8);
    }
    match *choices.choose(rng).unwrap() {
        0 => {
            let kind = *kinds.choose(rng).unwrap();
            let n = if depth == 0 { 0 } else { rng.gen_range(0..3) };
            Matcher::Node {
                kind,
                inner: (0..n).map(|_| random_matcher(rng, Some(kind), depth - 1)).collect(),
            }
        }
        1 => Matcher::HasDescendant(Box::new(random_matcher(rng, None, depth - 1))),
        2 => Matcher::AllOf((0..rng.gen_range(0..3)).map(|_| random_matcher(rng, inside, depth - 1)).collect()),
        3 => Matcher::AnyOf((0..rng.gen_range(0..3)).map(|_| random_matcher(rng, inside, depth - 1)).collect()),
        4 => loop {
            let m = random_matcher(rng, inside, depth - 1);
            if !matches!(m, Matcher::Name(_)) {
                break Matcher::Unless(Box::new(m));
            }
        },
        5 => Matcher::Member(name(rng)),
        6 => Matcher::ObjectType(name(rng)),
        7 => Matcher::Callee(name(rng)),
        _ => Matcher::Name(name(rng)),
    }
}

// ---------------------------------------------------------------------------
// Dominators by path enumeration.

fn simple_paths(cfg: &Cfg, from: usize, to: usize, path: &mut Vec<usize>, out: &mut Vec<BTreeSet<usize>>) {
    path.push(from);
    if from == to {
        out.push(path.iter().copied().collect());
    } else {
        let succs: BTreeSet<usize> = cfg.edges.iter().filter(|e| e.0 == from).map(|e| e.1).collect();
        for s in succs {
            if !path.contains(&s) {
                simple_paths(cfg, s, to, path, out);
            }
        }
    }
    path.pop();
}

/// For each block reachable from the entry: the blocks on every entry path.
pub fn path_dominators(cfg: &Cfg) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut out = BTreeMap::new();
    for b in 0..cfg.blocks.len() {
        let mut paths = Vec::new();
        simple_paths(cfg, cfg.entry, b, &mut Vec::new(), &mut paths);
        let mut it = paths.into_iter();
        if let Some(first) = it.next() {
            out.insert(b, it.fold(first, |acc, p| acc.intersection(&p).copied().collect()));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Taint by per-path AST enumeration (loop-free functions only).

fn tainted(e: &AstNode, record: &str, vars: &BTreeSet<String>) -> bool {
    let here = match &e.type_annot {
        Some(t) => t.pointer_depth > 0 && t.record_name.as_deref() == Some(record),
        None => false,
    } || (e.kind == NodeKind::MemberExpr && e.object_record.as_deref() == Some(record))
        || (e.kind == NodeKind::DeclRefExpr && e.name.as_ref().is_some_and(|n| vars.contains(n)));
    here || e.children.iter().any(|c| tainted(c, record, vars))
}

fn assignments(e: &AstNode, record: &str, vars: &mut BTreeSet<String>) {
    for c in &e.children {
        assignments(c, record, vars);
    }
    if e.kind == NodeKind::BinaryOperator && e.op.as_deref() == Some("=") && e.children[0].kind == NodeKind::DeclRefExpr {
        let name = e.children[0].name.clone().unwrap();
        if tainted(&e.children[1], record, vars) {
            vars.insert(name);
        } else {
            vars.remove(&name);
        }
    }
}

fn calls<'a>(e: &'a AstNode, out: &mut Vec<&'a AstNode>) {
    if e.kind == NodeKind::CallExpr {
        out.push(e);
    }
    for c in &e.children {
        calls(c, out);
    }
}

type Flagged = BTreeMap<(u32, u32), usize>;

fn flag_sinks(e: &AstNode, record: &str, vars: &BTreeSet<String>, flagged: &mut Flagged) {
    let mut cs = Vec::new();
    calls(e, &mut cs);
    for c in cs {
        if !DEFAULT_SINKS.contains(&c.name.as_deref().unwrap_or("")) {
            continue;
        }
        if let Some(i) = c.children.iter().position(|a| tainted(a, record, vars)) {
            let slot = flagged.entry((c.loc.line, c.loc.column)).or_insert(i);
            *slot = (*slot).min(i);
        }
    }
}

/// Run `stmts` on every path; returns the states that fall off the end.
fn paths(stmts: &[&AstNode], record: &str, vars: BTreeSet<String>, flagged: &mut Flagged) -> Vec<BTreeSet<String>> {
    let Some((s, rest)) = stmts.split_first() else {
        return vec![vars];
    };
    match s.kind {
        NodeKind::CompoundStmt => {
            let inner: Vec<&AstNode> = s.children.iter().chain(rest.iter().copied()).collect();
            paths(&inner, record, vars, flagged)
        }
        NodeKind::IfStmt => {
            flag_sinks(&s.children[0], record, &vars, flagged);
            let mut out = Vec::new();
            let mut branches = vec![&s.children[1]];
            match s.children.get(2) {
                Some(e) => branches.push(e),
                None => out.extend(paths(rest, record, vars.clone(), flagged)),
            }
            for b in branches {
                let seq: Vec<&AstNode> = std::iter::once(b).chain(rest.iter().copied()).collect();
                out.extend(paths(&seq, record, vars.clone(), flagged));
            }
            out
        }
        NodeKind::ReturnStmt => {
            flag_sinks(s, record, &vars, flagged);
            vec![]
        }
        NodeKind::WhileStmt => panic!("loop-free functions only"),
        NodeKind::DeclStmt => {
            flag_sinks(s, record, &vars, flagged);
            let mut vars = vars;
            for v in &s.children {
                let name = v.name.clone().unwrap();
                let declared = v.type_annot.as_ref().is_some_and(|t| t.pointer_depth > 0 && t.record_name.as_deref() == Some(record));
                if declared || v.children.first().is_some_and(|i| tainted(i, record, &vars)) {
                    vars.insert(name);
                } else {
                    vars.remove(&name);
                }
            }
            paths(rest, record, vars, flagged)
        }
        _ => {
            flag_sinks(s, record, &vars, flagged);
            let mut vars = vars;
            assignments(s, record, &mut vars);
            paths(rest, record, vars, flagged)
        }
    }
}

/// Sink call position to the smallest argument index tainted on some path.
pub fn path_taint(func: &AstNode, record: &str) -> Flagged {
    let params: BTreeSet<String> = func
        .children
        .iter()
        .filter(|c| c.kind == NodeKind::ParamDecl)
        .filter(|p| p.type_annot.as_ref().is_some_and(|t| t.pointer_depth > 0 && t.record_name.as_deref() == Some(record)))
        .map(|p| p.name.clone().unwrap())
        .collect();
    let mut flagged = Flagged::new();
    if let Some(body) = func.children.last() {
        paths(&[body], record, params, &mut flagged);
    }
    flagged
}

// ---------------------------------------------------------------------------
// Random loop-free / looping MiniC functions.

pub const TAINT_PRELUDE: &str = "struct pkt { short kind; short size; };\n";

fn random_block<R: Rng>(rng: &mut R, depth: u32, loops: bool, out: &mut String, indent: usize) {
    let vars = ["a", "b", "c"];
    let pad = "  ".repeat(indent);
    for _ in 0..rng.gen_range(1..4) {
        let v = vars.choose(rng).unwrap();
        let w = vars.choose(rng).unwrap();
        let roll = rng.gen_range(0..10);
        match roll {
            0..=1 if depth > 0 => {
                out.push_str(&format!("{pad}if ({w} < {})", rng.gen_range(0..9)));
                out.push_str(" {\n");
                random_block(rng, depth - 1, loops, out, indent + 1);
                if rng.gen_bool(0.5) {
                    out.push_str(&format!("{pad}}} else {{\n"));
                    random_block(rng, depth - 1, loops, out, indent + 1);
                }
                out.push_str(&format!("{pad}}}\n"));
            }
            2 if depth > 0 && loops => {
                out.push_str(&format!("{pad}while ({w} > 0) {{\n"));
                random_block(rng, depth - 1, loops, out, indent + 1);
                out.push_str(&format!("{pad}  {w} = {w} - 1;\n{pad}}}\n"));
            }
            3 => out.push_str(&format!("{pad}{v} = p->size;\n")),
            4 => out.push_str(&format!("{pad}{v} = {w} + 1;\n")),
            5 => out.push_str(&format!("{pad}{v} = 0;\n")),
            6 => out.push_str(&format!("{pad}memcpy(dst, {w}, {v});\n")),
            7 => out.push_str(&format!("{pad}strcpy({v}, dst);\n")),
            8 if rng.gen_bool(0.3) => out.push_str(&format!("{pad}return {v};\n")),
            _ => out.push_str(&format!("{pad}{v} = {w};\n")),
        }
    }
}

/// A function `f(struct pkt *p, char *dst, long a)` built from random statements.
pub fn random_function<R: Rng>(rng: &mut R, loops: bool) -> String {
    let mut body = String::new();
    random_block(rng, 3, loops, &mut body, 1);
    format!(
        "{TAINT_PRELUDE}int f(struct pkt *p, char *dst, long a) {{\n  long b = 0;\n  long c = 0;\n{body}  return 0;\n}}\n"
    )
}
