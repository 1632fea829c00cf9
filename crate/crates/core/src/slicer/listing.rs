//! Textual rendering of a factor slice as a sub-program.

use std::fmt::Write;

use super::{SliceEnd, SlicedProgram};
use crate::analysis::Model;
use crate::cfg::{NodeId, NodeKind};
use crate::lang::printer::expr_to_string;
use crate::lang::Stmt;
use crate::semantics::Role;

enum Item {
    Simple(NodeId),
    If { branch: NodeId, then: Vec<Item>, els: Vec<Item> },
    While { branch: NodeId, body: Vec<Item> },
}

/// Rebuilds the statement tree with the node ids the graph builder assigned
/// (same traversal order: start first, then statements in pre-order).
fn items(s: &Stmt, next: &mut NodeId, out: &mut Vec<Item>) {
    match s {
        Stmt::Skip => {}
        Stmt::Seq(a, b) => {
            items(a, next, out);
            items(b, next, out);
        }
        Stmt::Assign { .. } | Stmt::Sample { .. } => {
            out.push(Item::Simple(*next));
            *next += 1;
        }
        Stmt::If { then, els, .. } => {
            let branch = *next;
            *next += 1;
            let (mut t, mut e) = (Vec::new(), Vec::new());
            items(then, next, &mut t);
            items(els, next, &mut e);
            *next += 1;
            out.push(Item::If { branch, then: t, els: e });
        }
        Stmt::While { body, .. } => {
            let branch = *next;
            *next += 1;
            let mut b = Vec::new();
            items(body, next, &mut b);
            *next += 1;
            out.push(Item::While { branch, body: b });
        }
    }
}

fn contains(item: &Item, n: NodeId) -> bool {
    match item {
        Item::Simple(id) => *id == n,
        Item::If { branch, then, els } => *branch == n || then.iter().chain(els).any(|i| contains(i, n)),
        Item::While { branch, body } => *branch == n || body.iter().any(|i| contains(i, n)),
    }
}

struct Render<'a> {
    model: &'a Model,
    slice: &'a SlicedProgram,
    out: String,
}

impl Render<'_> {
    fn line(&mut self, depth: usize, text: &str) {
        let _ = writeln!(self.out, "{:w$}{text}", "", w = depth * 4);
    }

    fn simple(&mut self, n: NodeId, depth: usize, first_visit: bool) {
        if !self.slice.contains(n) {
            return;
        }
        let node = &self.model.cfg.nodes[n];
        let text = match (&node.kind, self.slice.role(n)) {
            (NodeKind::Sample { var, addr, dist, args }, Some(role)) => {
                let role = if role == Role::Visit && !first_visit { self.slice.repeat_role } else { role };
                let args: Vec<String> = args.iter().map(expr_to_string).collect();
                match role {
                    Role::Read => format!("{} = read({})", var.name, expr_to_string(addr)),
                    Role::Visit => format!("{} = visit({}, {}({}))", var.name, expr_to_string(addr), dist.name(), args.join(", ")),
                    _ => format!("{} = score({}, {}({}))", var.name, expr_to_string(addr), dist.name(), args.join(", ")),
                }
            }
            _ => node.label(),
        };
        self.line(depth, &text);
    }

    fn list(&mut self, list: &[Item], depth: usize) {
        for item in list {
            self.item(item, depth);
        }
    }

    fn item(&mut self, item: &Item, depth: usize) {
        match item {
            Item::Simple(n) => self.simple(*n, depth, false),
            Item::If { branch, then, els } => {
                if self.slice.contains(*branch) {
                    let NodeKind::Branch { cond } = &self.model.cfg.nodes[*branch].kind else { unreachable!() };
                    self.line(depth, &format!("if {} then", expr_to_string(cond)));
                    self.list(then, depth + 1);
                    if els.iter().any(|i| self.any_member(i)) {
                        self.line(depth, "else");
                        self.list(els, depth + 1);
                    }
                } else {
                    self.list(then, depth);
                    self.list(els, depth);
                }
            }
            Item::While { branch, body } => {
                if self.slice.contains(*branch) {
                    let NodeKind::Branch { cond } = &self.model.cfg.nodes[*branch].kind else { unreachable!() };
                    self.line(depth, &format!("while {} do", expr_to_string(cond)));
                    self.list(body, depth + 1);
                } else {
                    self.list(body, depth);
                }
            }
        }
    }

    fn any_member(&self, item: &Item) -> bool {
        match item {
            Item::Simple(n) => self.slice.contains(*n),
            Item::If { branch, then, els } => {
                self.slice.contains(*branch) || then.iter().chain(els).any(|i| self.any_member(i))
            }
            Item::While { branch, body } => self.slice.contains(*branch) || body.iter().any(|i| self.any_member(i)),
        }
    }

    /// Renders execution from the origin onwards: the rest of each enclosing
    /// block, re-entering enclosing loops whose branch is retained.
    fn continuation(&mut self, list: &[Item]) {
        let Some(pos) = list.iter().position(|i| contains(i, self.slice.origin)) else {
            return;
        };
        match &list[pos] {
            Item::Simple(n) => self.simple(*n, 0, true),
            Item::If { then, els, .. } => {
                if then.iter().any(|i| contains(i, self.slice.origin)) {
                    self.continuation(then)
                } else {
                    self.continuation(els)
                }
            }
            Item::While { branch, body } => {
                self.continuation(body);
                if self.slice.contains(*branch) {
                    self.item(&list[pos], 0);
                }
            }
        }
        self.list(&list[pos + 1..], 0);
    }
}

/// Sub-program listing with `visit`, `score` and `read` in place of the
/// retained sample statements.
pub fn slice_listing(model: &Model, slice: &SlicedProgram) -> String {
    let mut next = 1;
    let mut top = Vec::new();
    items(&model.program.body, &mut next, &mut top);
    let mut r = Render { model, slice, out: String::new() };
    r.continuation(&top);
    r.out
}

/// Graphviz rendering of the retained sub-graph.
pub fn slice_to_dot(model: &Model, slice: &SlicedProgram) -> String {
    let end = |e: &SliceEnd| match e {
        SliceEnd::Start => "start".to_string(),
        SliceEnd::End => "end".to_string(),
        SliceEnd::Node(n) => format!("n{n}"),
    };
    let mut s = String::from("digraph slice {\n  start [shape=point];\n  end [shape=doublecircle, label=\"\"];\n");
    for n in slice.members.ones() {
        let node = &model.cfg.nodes[n];
        let role = match slice.role(n) {
            Some(Role::Visit) => "visit: ",
            Some(Role::Score) => "score: ",
            Some(Role::Read) => "read: ",
            _ => "",
        };
        let _ = writeln!(s, "  n{n} [label={:?}];", format!("{role}{}", node.label()));
    }
    for (a, b) in &slice.edges {
        let _ = writeln!(s, "  {} -> {};", end(a), end(b));
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::super::tests::{PROGRAM1, PROGRAM2, PROGRAM3};
    use super::super::slice_for_factor;
    use super::*;

    #[test]
    fn program1_listing() {
        let m = Model::parse(PROGRAM1).unwrap();
        let s = slice_for_factor(&m, m.cfg.find_sample("B").unwrap());
        assert_eq!(
            slice_listing(&m, &s),
            "B = visit(\"B\", Normal(A, 1.0))\nC = read(\"C\")\nD = score(\"D\", Normal(B + C, 1.0))\n"
        );
    }

    #[test]
    fn program2_listing() {
        let m = Model::parse(PROGRAM2).unwrap();
        let s = slice_for_factor(&m, m.cfg.sample_nodes()[0]);
        assert_eq!(
            slice_listing(&m, &s),
            "b = visit(\"b\" + str(i), Bernoulli(0.5))\ni = i + 1\nwhile b do\n    b = score(\"b\" + str(i), Bernoulli(0.5))\n    i = i + 1\n"
        );
    }

    #[test]
    fn program3_listing() {
        let m = Model::parse(&format!("N = 3\n{PROGRAM3}")).unwrap();
        let s = slice_for_factor(&m, m.cfg.find_sample("z0").unwrap());
        assert_eq!(
            slice_listing(&m, &s),
            "z = visit(\"z\" + str(i), Bernoulli(0.5))\nm = z == 1 ? -2.0 : 2.0\nx = score(\"x\" + str(i), Normal(m, 1))\n"
        );
    }
}
