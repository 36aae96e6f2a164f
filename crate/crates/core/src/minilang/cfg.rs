use std::collections::{BTreeMap, BTreeSet};

use super::ast::{Stmt, StmtId, StmtKind};

/// Statement-level control-flow graph of one function.
///
/// Nodes `0..stmts.len()` are the function's statements in id order; node
/// `stmts.len()` is the synthetic exit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlFlowGraph {
    pub stmts: Vec<StmtId>,
    pub entry: usize,
    pub succ: Vec<Vec<usize>>,
    /// Immediate post-dominator of each node; `None` only for the exit.
    pub ipostdom: Vec<Option<usize>>,
    /// For every branching statement, the statements it controls.
    pub ctrl_region: BTreeMap<StmtId, BTreeSet<StmtId>>,
}

impl ControlFlowGraph {
    pub fn exit(&self) -> usize {
        self.stmts.len()
    }

    pub fn node_of(&self, id: StmtId) -> Option<usize> {
        self.stmts.binary_search(&id).ok()
    }

    /// Statement behind a node, `None` for the exit.
    pub fn stmt_at(&self, node: usize) -> Option<StmtId> {
        self.stmts.get(node).copied()
    }

    /// Immediate post-dominator of a statement, `None` meaning the exit.
    pub fn ipostdom_of(&self, id: StmtId) -> Option<StmtId> {
        let n = self.node_of(id)?;
        self.ipostdom[n].and_then(|p| self.stmt_at(p))
    }

    pub fn build(body: &[Stmt]) -> Self {
        let mut stmts = Vec::new();
        for s in body {
            s.walk(&mut |s| stmts.push(s.id));
        }
        stmts.sort();
        let exit = stmts.len();
        let mut cfg = ControlFlowGraph {
            succ: vec![Vec::new(); exit + 1],
            entry: exit,
            ipostdom: Vec::new(),
            ctrl_region: BTreeMap::new(),
            stmts,
        };
        cfg.entry = cfg.link_block(body, exit, None);
        for s in cfg.succ.iter_mut() {
            s.dedup();
        }
        cfg.compute_postdominators();
        cfg
    }

    /// Wires a block whose control continues at `follow`; returns the entry
    /// node of the block.
    fn link_block(&mut self, block: &[Stmt], follow: usize, handler: Option<usize>) -> usize {
        let exit = self.exit();
        let mut next = follow;
        for s in block.iter().rev() {
            let node = self.node_of(s.id).expect("statement registered");
            let succ = match &s.kind {
                StmtKind::If {
                    then_body,
                    else_body,
                    ..
                } => {
                    let t = self.link_block(then_body, next, handler);
                    let e = self.link_block(else_body, next, handler);
                    vec![t, e]
                }
                StmtKind::While { body, .. } => {
                    let b = self.link_block(body, node, handler);
                    vec![b, next]
                }
                StmtKind::Return(_) => vec![exit],
                StmtKind::Throw(_) => vec![handler.unwrap_or(exit)],
                StmtKind::Try {
                    body, handler: h, ..
                } => {
                    let h_entry = self.link_block(h, next, handler);
                    vec![self.link_block(body, next, Some(h_entry))]
                }
                _ => vec![next],
            };
            self.succ[node] = succ;
            next = node;
        }
        next
    }

    /// Iterative dominance on the reversed graph, then control regions.
    /// Idempotent.
    pub fn compute_postdominators(&mut self) {
        let n = self.succ.len();
        let exit = self.exit();
        let mut preds_rev: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, ss) in self.succ.iter().enumerate() {
            for &v in ss {
                preds_rev[v].push(u);
            }
        }
        // Post-order of the reversed graph, rooted at the exit.
        let mut order = Vec::with_capacity(n);
        let mut visited = vec![false; n];
        let mut stack = vec![(exit, 0usize)];
        visited[exit] = true;
        while let Some((node, child)) = stack.pop() {
            if child < preds_rev[node].len() {
                stack.push((node, child + 1));
                let next = preds_rev[node][child];
                if !visited[next] {
                    visited[next] = true;
                    stack.push((next, 0));
                }
            } else {
                order.push(node);
            }
        }
        let mut po = vec![usize::MAX; n];
        for (i, &node) in order.iter().enumerate() {
            po[node] = i;
        }
        let mut idom: Vec<Option<usize>> = vec![None; n];
        idom[exit] = Some(exit);
        let mut changed = true;
        while changed {
            changed = false;
            for &b in order.iter().rev() {
                if b == exit {
                    continue;
                }
                let mut new = None;
                for &p in &self.succ[b] {
                    if idom[p].is_none() {
                        continue;
                    }
                    new = Some(match new {
                        None => p,
                        Some(cur) => intersect(&idom, &po, p, cur),
                    });
                }
                if new.is_some() && idom[b] != new {
                    idom[b] = new;
                    changed = true;
                }
            }
        }
        idom[exit] = None;
        self.ipostdom = idom;

        self.ctrl_region.clear();
        for (node, ss) in self.succ.iter().enumerate() {
            if ss.len() < 2 {
                continue;
            }
            let stop = self.ipostdom[node];
            let mut region = BTreeSet::new();
            let mut seen = vec![false; n];
            let mut work: Vec<usize> = ss.clone();
            while let Some(v) = work.pop() {
                if Some(v) == stop || v == node || v == exit || seen[v] {
                    continue;
                }
                seen[v] = true;
                region.insert(self.stmts[v]);
                work.extend(self.succ[v].iter().copied());
            }
            self.ctrl_region.insert(self.stmts[node], region);
        }
    }
}

fn intersect(idom: &[Option<usize>], po: &[usize], mut a: usize, mut b: usize) -> usize {
    while a != b {
        while po[a] < po[b] {
            a = idom[a].expect("processed node");
        }
        while po[b] < po[a] {
            b = idom[b].expect("processed node");
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::super::parse;

    fn cfg_of(src: &str) -> (super::super::Program, usize) {
        let p = parse(src).unwrap();
        (p, 0)
    }

    #[test]
    fn straight_line_has_chain_postdominators() {
        let (p, f) = cfg_of("fn f() { let a = 1; let b = a; let c = b; }");
        let cfg = &p.functions[f].cfg;
        assert_eq!(cfg.ipostdom, vec![Some(1), Some(2), Some(3), None]);
        assert!(cfg.ctrl_region.is_empty());
    }

    #[test]
    fn early_return_controls_rest_of_function() {
        let src = "fn foo(c, a, b) {\n if (c) {\n return a;\n }\n let x = b;\n return x;\n}";
        let (p, f) = cfg_of(src);
        let cfg = &p.functions[f].cfg;
        let branch = cfg.stmts[0];
        assert_eq!(cfg.ipostdom_of(branch), None);
        let region: Vec<_> = cfg.ctrl_region[&branch].iter().copied().collect();
        assert_eq!(region, cfg.stmts[1..].to_vec());
    }

    #[test]
    fn while_condition_controls_only_body() {
        let (p, f) = cfg_of("fn f(c) { while (c) { c = false; } let s2 = 1; }");
        let cfg = &p.functions[f].cfg;
        let (w, s1, s2) = (cfg.stmts[0], cfg.stmts[1], cfg.stmts[2]);
        assert_eq!(cfg.ipostdom_of(w), Some(s2));
        assert_eq!(cfg.ipostdom_of(s1), Some(w));
        assert_eq!(cfg.ctrl_region[&w].iter().copied().collect::<Vec<_>>(), vec![s1]);
    }

    #[test]
    fn recomputation_is_idempotent() {
        let src = "fn f(a) { if (a > 0) { a = 1; } else { while (a < 3) { a = a + 1; } } return a; }";
        let (p, f) = cfg_of(src);
        let mut cfg = p.functions[f].cfg.clone();
        cfg.compute_postdominators();
        assert_eq!(cfg, p.functions[f].cfg);
    }

    #[test]
    fn throw_inside_try_flows_to_handler() {
        let src = "fn f(a) { try { if (a) { throw 1; } let b = 2; } catch (e) { let h = e; } return 0; }";
        let (p, f) = cfg_of(src);
        let cfg = &p.functions[f].cfg;
        // try, if, throw, let b, let h, return
        let nodes = &cfg.stmts;
        let throw = cfg.node_of(nodes[2]).unwrap();
        assert_eq!(cfg.succ[throw], vec![cfg.node_of(nodes[4]).unwrap()]);
        assert_eq!(cfg.ipostdom_of(nodes[1]), Some(nodes[5]));
    }
}
