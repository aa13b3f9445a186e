use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::frontend::{AstNode, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeLabel {
    Fallthrough,
    True,
    False,
}

#[derive(Debug, Clone)]
pub struct BasicBlock<'a> {
    pub id: usize,
    pub stmts: Vec<&'a AstNode>,
    /// Branch condition evaluated after `stmts` (if and while headers).
    pub cond: Option<&'a AstNode>,
}

/// Control flow graph of one function. `exit` is an extra empty block that
/// every return and the end of the body flow into.
#[derive(Debug, Clone)]
pub struct Cfg<'a> {
    pub blocks: Vec<BasicBlock<'a>>,
    pub edges: BTreeSet<(usize, usize, EdgeLabel)>,
    pub entry: usize,
    pub exit: usize,
    /// Immediate dominator of every reachable block other than the entry.
    pub idom: BTreeMap<usize, usize>,
    dom: Vec<BTreeSet<usize>>,
}

impl<'a> Cfg<'a> {
    pub fn preds(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.1 == b).map(|e| e.0)
    }

    pub fn succs(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == b).map(|e| e.1)
    }

    /// Blocks holding code, i.e. all but the synthetic exit.
    pub fn body_blocks(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn dominators(&self, b: usize) -> &BTreeSet<usize> {
        &self.dom[b]
    }

    pub fn dominates(&self, a: usize, b: usize) -> bool {
        self.dom[b].contains(&a)
    }

    pub fn reachable(&self) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([self.entry]);
        let mut work = vec![self.entry];
        while let Some(b) = work.pop() {
            for s in self.succs(b) {
                if seen.insert(s) {
                    work.push(s);
                }
            }
        }
        seen
    }
}

struct Builder<'a> {
    blocks: Vec<BasicBlock<'a>>,
    edges: BTreeSet<(usize, usize, EdgeLabel)>,
    exit: usize,
}

impl<'a> Builder<'a> {
    fn block(&mut self) -> usize {
        let id = self.blocks.len();
        self.blocks.push(BasicBlock {
            id,
            stmts: Vec::new(),
            cond: None,
        });
        id
    }

    fn edge(&mut self, from: usize, to: usize, label: EdgeLabel) {
        self.edges.insert((from, to, label));
    }

    /// Lower `s` starting in `cur`; returns the block control continues in,
    /// or `None` after a return.
    fn stmt(&mut self, s: &'a AstNode, cur: Option<usize>) -> Option<usize> {
        let cur = match cur {
            Some(c) => c,
            None => self.block(),
        };
        match s.kind {
            NodeKind::CompoundStmt => {
                let mut at = Some(cur);
                for c in &s.children {
                    at = self.stmt(c, at);
                }
                at
            }
            NodeKind::ReturnStmt => {
                self.blocks[cur].stmts.push(s);
                self.edge(cur, self.exit, EdgeLabel::Fallthrough);
                None
            }
            NodeKind::IfStmt => {
                let cur = self.fresh_if_conditioned(cur);
                self.blocks[cur].cond = Some(&s.children[0]);
                let then_b = self.block();
                self.edge(cur, then_b, EdgeLabel::True);
                let then_end = self.stmt(&s.children[1], Some(then_b));
                let else_end = match s.children.get(2) {
                    Some(e) => {
                        let else_b = self.block();
                        self.edge(cur, else_b, EdgeLabel::False);
                        self.stmt(e, Some(else_b))
                    }
                    None => Some(cur),
                };
                if then_end.is_none() && else_end.is_none() {
                    return None;
                }
                let join = self.block();
                if let Some(t) = then_end {
                    self.edge(t, join, EdgeLabel::Fallthrough);
                }
                match (else_end, s.children.len()) {
                    (Some(e), 3) => self.edge(e, join, EdgeLabel::Fallthrough),
                    (Some(c), _) => self.edge(c, join, EdgeLabel::False),
                    (None, _) => {}
                }
                Some(join)
            }
            NodeKind::WhileStmt => {
                let header = if self.blocks[cur].stmts.is_empty() && self.blocks[cur].cond.is_none() && cur != 0 {
                    cur
                } else {
                    let h = self.block();
                    self.edge(cur, h, EdgeLabel::Fallthrough);
                    h
                };
                self.blocks[header].cond = Some(&s.children[0]);
                let body = self.block();
                self.edge(header, body, EdgeLabel::True);
                if let Some(end) = self.stmt(&s.children[1], Some(body)) {
                    self.edge(end, header, EdgeLabel::Fallthrough);
                }
                let after = self.block();
                self.edge(header, after, EdgeLabel::False);
                Some(after)
            }
            _ => {
                let cur = self.fresh_if_conditioned(cur);
                self.blocks[cur].stmts.push(s);
                Some(cur)
            }
        }
    }

    /// A block that already branches cannot take more code.
    fn fresh_if_conditioned(&mut self, cur: usize) -> usize {
        if self.blocks[cur].cond.is_some() {
            let b = self.block();
            self.edge(cur, b, EdgeLabel::Fallthrough);
            b
        } else {
            cur
        }
    }
}

/// Iterative dominator sets over the blocks reachable from `entry`.
fn dominator_sets(n: usize, entry: usize, edges: &BTreeSet<(usize, usize, EdgeLabel)>) -> Vec<BTreeSet<usize>> {
    let all: BTreeSet<usize> = (0..n).collect();
    let mut dom = vec![all; n];
    dom[entry] = BTreeSet::from([entry]);
    let mut changed = true;
    while changed {
        changed = false;
        for b in (0..n).filter(|&b| b != entry) {
            let mut new: Option<BTreeSet<usize>> = None;
            for p in edges.iter().filter(|e| e.1 == b).map(|e| e.0) {
                new = Some(match new {
                    None => dom[p].clone(),
                    Some(s) => s.intersection(&dom[p]).copied().collect(),
                });
            }
            let mut new = new.unwrap_or_default();
            new.insert(b);
            if new != dom[b] {
                dom[b] = new;
                changed = true;
            }
        }
    }
    dom
}

pub fn build_cfg(func: &AstNode) -> Cfg<'_> {
    let mut b = Builder {
        blocks: Vec::new(),
        edges: BTreeSet::new(),
        exit: usize::MAX,
    };
    let entry = b.block();
    let exit = b.block();
    b.exit = exit;
    if let Some(end) = func.body().and_then(|body| b.stmt(body, Some(entry))) {
        b.edge(end, exit, EdgeLabel::Fallthrough);
    }

    // keep reachable blocks plus the exit, renumbered in creation order
    let mut reach = BTreeSet::from([entry]);
    let mut work = vec![entry];
    while let Some(x) = work.pop() {
        for e in b.edges.iter().filter(|e| e.0 == x) {
            if reach.insert(e.1) {
                work.push(e.1);
            }
        }
    }
    let mut order: Vec<usize> = reach.iter().copied().filter(|&x| x != exit).collect();
    order.push(exit);
    let renum: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &old)| (old, i)).collect();
    let blocks: Vec<BasicBlock> = order
        .iter()
        .enumerate()
        .map(|(i, &old)| BasicBlock {
            id: i,
            stmts: b.blocks[old].stmts.clone(),
            cond: b.blocks[old].cond,
        })
        .collect();
    let edges: BTreeSet<(usize, usize, EdgeLabel)> = b
        .edges
        .iter()
        .filter_map(|&(f, t, l)| Some((*renum.get(&f)?, *renum.get(&t)?, l)))
        .collect();

    let n = blocks.len();
    let exit = n - 1;
    let mut dom = dominator_sets(n, 0, &edges);
    let reachable_exit = reach.contains(&order[exit]);
    if !reachable_exit {
        dom[exit] = BTreeSet::from([exit]);
    }
    let mut idom = BTreeMap::new();
    for x in 1..n {
        if x == exit && !reachable_exit {
            continue;
        }
        // the strict dominator dominated by every other strict dominator
        let strict: Vec<usize> = dom[x].iter().copied().filter(|&d| d != x).collect();
        if let Some(&i) = strict.iter().max_by_key(|&&d| dom[d].len()) {
            idom.insert(x, i);
        }
    }
    Cfg {
        blocks,
        edges,
        entry: 0,
        exit,
        idom,
        dom,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::load_sources;

    fn cfg_of(body: &str, check: impl Fn(&Cfg)) {
        let src = format!("int f(int a, int b) {{\n{body}\n}}\n");
        let tus = load_sources(&[("c.mc", &src)]).unwrap();
        check(&build_cfg(tus[0].function("f").unwrap()));
    }

    #[test]
    fn straight_line() {
        cfg_of("  int x = a;\n  x = x + b;\n  return x;", |c| {
            assert_eq!(c.body_blocks(), 1);
            assert_eq!(c.blocks[0].stmts.len(), 3);
            assert_eq!(c.preds(c.exit).collect::<Vec<_>>(), vec![c.entry]);
            assert_eq!(c.idom[&c.exit], c.entry);
        });
    }

    #[test]
    fn diamond() {
        cfg_of("  int x;\n  if (a) x = 1; else x = 2;\n  return x;", |c| {
            assert_eq!(c.body_blocks(), 4);
            let join = 3;
            assert_eq!(c.preds(join).count(), 2);
            assert_eq!(c.idom[&join], c.entry);
            assert!(c.edges.contains(&(0, 1, EdgeLabel::True)));
            assert!(c.edges.contains(&(0, 2, EdgeLabel::False)));
        });
    }

    #[test]
    fn loop_back_edge() {
        cfg_of("  while (a < b) { a = a + 1; }\n  return a;", |c| {
            // entry, header, body, after
            assert_eq!(c.body_blocks(), 4);
            assert!(c.edges.contains(&(2, 1, EdgeLabel::Fallthrough)));
            assert_eq!(c.idom[&2], 1);
            assert_eq!(c.idom[&3], 1);
        });
    }

    #[test]
    fn dead_code_after_return_is_pruned() {
        cfg_of("  return a;\n  a = 2;", |c| {
            assert_eq!(c.body_blocks(), 1);
            assert_eq!(c.reachable().len(), 2);
        });
    }

    #[test]
    fn both_branches_return() {
        cfg_of("  if (a) return 1; else return 2;", |c| {
            assert_eq!(c.body_blocks(), 3);
            assert_eq!(c.preds(c.exit).count(), 2);
        });
    }
}
