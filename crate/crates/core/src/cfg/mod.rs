//! Control-flow graphs.

mod dataflow;
mod exec;

use std::fmt::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::lang::printer::expr_to_string;
use crate::lang::{DistKind, Expr, Program, Stmt, Var};

pub use dataflow::Dataflow;
pub use exec::{cfg_exec, cfg_exec_recorded, cfg_exec_with};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Start,
    End,
    Assign { var: Var, expr: Expr },
    Sample { var: Var, addr: Expr, dist: DistKind, args: Vec<Expr> },
    Branch { cond: Expr },
    Join,
}

#[derive(Clone, Debug)]
pub struct CfgNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub line: u32,
}

impl CfgNode {
    pub fn is_sample(&self) -> bool {
        matches!(self.kind, NodeKind::Sample { .. })
    }

    /// Variable written by an assign or sample node.
    pub fn defines(&self) -> Option<&Var> {
        match &self.kind {
            NodeKind::Assign { var, .. } | NodeKind::Sample { var, .. } => Some(var),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            NodeKind::Start => "start".into(),
            NodeKind::End => "end".into(),
            NodeKind::Join => "join".into(),
            NodeKind::Branch { cond } => format!("branch {}", expr_to_string(cond)),
            NodeKind::Assign { var, expr } => format!("{} = {}", var.name, expr_to_string(expr)),
            NodeKind::Sample { var, addr, dist, args } => {
                let args: Vec<String> = args.iter().map(expr_to_string).collect();
                format!("{} = sample({}, {}({}))", var.name, expr_to_string(addr), dist.name(), args.join(", "))
            }
        }
    }

    /// Best-effort rendering of the addresses a sample node can produce: the
    /// constant itself, or a constant prefix followed by `*`.
    pub fn address_pattern(&self) -> Option<String> {
        let NodeKind::Sample { addr, .. } = &self.kind else {
            return None;
        };
        Some(address_pattern(addr))
    }

    pub fn constant_address(&self) -> Option<Arc<str>> {
        match &self.kind {
            NodeKind::Sample { addr: Expr::Const(crate::lang::Value::Str(s)), .. } => Some(s.clone()),
            _ => None,
        }
    }
}

fn address_pattern(e: &Expr) -> String {
    use crate::lang::{Builtin, Value};
    match e {
        Expr::Const(Value::Str(s)) => s.to_string(),
        Expr::Call(Builtin::Add, args) => {
            let left = address_pattern(&args[0]);
            if left.ends_with('*') {
                left
            } else {
                match &args[1] {
                    Expr::Const(Value::Str(s)) => format!("{left}{s}"),
                    _ => format!("{left}*"),
                }
            }
        }
        _ => "*".into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Succ {
    None,
    One(NodeId),
    Two { then: NodeId, els: NodeId },
}

impl Succ {
    pub fn iter(self) -> impl Iterator<Item = NodeId> {
        let (a, b) = match self {
            Succ::None => (None, None),
            Succ::One(n) => (Some(n), None),
            Succ::Two { then, els } => (Some(then), Some(els)),
        };
        a.into_iter().chain(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BranchJoin {
    pub branch: NodeId,
    pub join: NodeId,
    pub is_loop: bool,
}

#[derive(Clone, Debug)]
pub struct Cfg {
    pub program: Arc<Program>,
    pub nodes: Vec<CfgNode>,
    pub succ: Vec<Succ>,
    pub preds: Vec<Vec<NodeId>>,
    pub pairs: Vec<BranchJoin>,
    pub start: NodeId,
    pub end: NodeId,
}

#[derive(Clone, Copy)]
enum Slot {
    Next,
    Then,
    Else,
}

struct Builder {
    nodes: Vec<CfgNode>,
    succ: Vec<Succ>,
    pairs: Vec<BranchJoin>,
}

impl Builder {
    fn node(&mut self, kind: NodeKind, line: u32) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(CfgNode { id, kind, line });
        self.succ.push(Succ::None);
        id
    }

    fn link(&mut self, pending: &[(NodeId, Slot)], to: NodeId) {
        for &(from, slot) in pending {
            self.succ[from] = match (slot, self.succ[from]) {
                (Slot::Next, _) => Succ::One(to),
                (Slot::Then, Succ::Two { els, .. }) => Succ::Two { then: to, els },
                (Slot::Then, _) => Succ::Two { then: to, els: usize::MAX },
                (Slot::Else, Succ::Two { then, .. }) => Succ::Two { then, els: to },
                (Slot::Else, _) => Succ::Two { then: usize::MAX, els: to },
            };
        }
    }

    fn stmt(&mut self, s: &Stmt, pending: Vec<(NodeId, Slot)>) -> Vec<(NodeId, Slot)> {
        match s {
            Stmt::Skip => pending,
            Stmt::Seq(a, b) => {
                let p = self.stmt(a, pending);
                self.stmt(b, p)
            }
            Stmt::Assign { var, expr, line } => {
                let n = self.node(NodeKind::Assign { var: var.clone(), expr: expr.clone() }, line.0);
                self.link(&pending, n);
                vec![(n, Slot::Next)]
            }
            Stmt::Sample { var, addr, dist, args, line } => {
                let kind = NodeKind::Sample { var: var.clone(), addr: addr.clone(), dist: *dist, args: args.clone() };
                let n = self.node(kind, line.0);
                self.link(&pending, n);
                vec![(n, Slot::Next)]
            }
            Stmt::If { cond, then, els, line } => {
                let b = self.node(NodeKind::Branch { cond: cond.clone() }, line.0);
                self.link(&pending, b);
                let mut out = self.stmt(then, vec![(b, Slot::Then)]);
                out.extend(self.stmt(els, vec![(b, Slot::Else)]));
                let j = self.node(NodeKind::Join, line.0);
                self.link(&out, j);
                self.pairs.push(BranchJoin { branch: b, join: j, is_loop: false });
                vec![(j, Slot::Next)]
            }
            Stmt::While { cond, body, line } => {
                let b = self.node(NodeKind::Branch { cond: cond.clone() }, line.0);
                self.link(&pending, b);
                let back = self.stmt(body, vec![(b, Slot::Then)]);
                self.link(&back, b);
                let j = self.node(NodeKind::Join, line.0);
                self.link(&[(b, Slot::Else)], j);
                self.pairs.push(BranchJoin { branch: b, join: j, is_loop: true });
                vec![(j, Slot::Next)]
            }
        }
    }
}

impl Cfg {
    pub fn build(program: &Program) -> Cfg {
        Cfg::from_arc(Arc::new(program.clone()))
    }

    pub fn from_arc(program: Arc<Program>) -> Cfg {
        let mut b = Builder { nodes: Vec::new(), succ: Vec::new(), pairs: Vec::new() };
        let start = b.node(NodeKind::Start, 0);
        let pending = b.stmt(&program.body, vec![(start, Slot::Next)]);
        let end = b.node(NodeKind::End, 0);
        b.link(&pending, end);
        let mut preds = vec![Vec::new(); b.nodes.len()];
        for (n, s) in b.succ.iter().enumerate() {
            for m in s.iter() {
                if !preds[m].contains(&n) {
                    preds[m].push(n);
                }
            }
        }
        b.pairs.sort_by_key(|p| p.branch);
        Cfg { program, nodes: b.nodes, succ: b.succ, preds, pairs: b.pairs, start, end }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &CfgNode {
        &self.nodes[id]
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(|s| s.iter().count()).sum()
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (n, s) in self.succ.iter().enumerate() {
            for m in s.iter() {
                out.push((n, m));
            }
        }
        out
    }

    pub fn sample_nodes(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.is_sample()).map(|n| n.id).collect()
    }

    pub fn pair_of_branch(&self, b: NodeId) -> Option<&BranchJoin> {
        self.pairs.iter().find(|p| p.branch == b)
    }

    /// Sample node whose address is the given constant, or failing that the
    /// unique sample node whose address pattern matches.
    pub fn find_sample(&self, address: &str) -> Option<NodeId> {
        let samples = self.sample_nodes();
        if let Some(&n) = samples.iter().find(|&&n| self.nodes[n].constant_address().as_deref() == Some(address)) {
            return Some(n);
        }
        let hits: Vec<NodeId> = samples
            .into_iter()
            .filter(|&n| {
                let pat = self.nodes[n].address_pattern().unwrap_or_default();
                match pat.strip_suffix('*') {
                    Some(prefix) => address.starts_with(prefix) || pat == address,
                    None => pat == address,
                }
            })
            .collect();
        (hits.len() == 1).then(|| hits[0])
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph cfg {\n  node [shape=box, fontname=\"monospace\"];\n");
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Start | NodeKind::End => "oval",
                NodeKind::Branch { .. } => "diamond",
                NodeKind::Join => "circle",
                _ => "box",
            };
            let _ = writeln!(s, "  n{} [label={:?}, shape={}];", n.id, format!("{}: {}", n.id, n.label()), shape);
        }
        for (n, succ) in self.succ.iter().enumerate() {
            match *succ {
                Succ::None => {}
                Succ::One(m) => {
                    let _ = writeln!(s, "  n{n} -> n{m};");
                }
                Succ::Two { then, els } => {
                    let _ = writeln!(s, "  n{n} -> n{then} [label=\"true\"];");
                    let _ = writeln!(s, "  n{n} -> n{els} [label=\"false\"];");
                }
            }
        }
        s.push_str("}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    #[test]
    fn skip_graph() {
        let g = Cfg::build(&parse("skip").unwrap());
        assert_eq!(g.len(), 2);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.succ[g.start], Succ::One(g.end));
    }

    #[test]
    fn while_shape() {
        let g = Cfg::build(&parse("x = 10; while (x < 10) do (x = x - 1)").unwrap());
        // start, assign, branch, body, join, end
        assert_eq!(g.len(), 6);
        assert_eq!(g.succ[0], Succ::One(1));
        assert_eq!(g.succ[1], Succ::One(2));
        assert_eq!(g.succ[2], Succ::Two { then: 3, els: 4 });
        assert_eq!(g.succ[3], Succ::One(2));
        assert_eq!(g.succ[4], Succ::One(5));
        assert_eq!(g.pairs, vec![BranchJoin { branch: 2, join: 4, is_loop: true }]);
    }

    #[test]
    fn empty_bodies_link_directly() {
        let g = Cfg::build(&parse("while x do skip").unwrap());
        assert_eq!(g.succ[1], Succ::Two { then: 1, els: 2 });
        let g = Cfg::build(&parse("if x then skip else y = 1").unwrap());
        assert_eq!(g.succ[1], Succ::Two { then: 3, els: 2 });
    }

    #[test]
    fn address_patterns() {
        let g = Cfg::build(&parse("x = sample(\"x_\" + str(n) + \"_y\", Normal(0, 1)); y = sample(\"y\", Normal(0, 1))").unwrap());
        assert_eq!(g.nodes[1].address_pattern().unwrap(), "x_*");
        assert_eq!(g.nodes[2].address_pattern().unwrap(), "y");
        assert_eq!(g.find_sample("x_3_y"), Some(1));
        assert_eq!(g.find_sample("y"), Some(2));
    }
}
