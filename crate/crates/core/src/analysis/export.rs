use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use super::Model;
use crate::cfg::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    BayesNet,
    MarkovNet,
}

#[derive(Clone, Debug, Serialize)]
pub struct GraphExport {
    pub kind: GraphKind,
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    /// Parent lists; Bayesian networks only.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub parents: BTreeMap<String, Vec<String>>,
    /// One clique per factor; Markov networks only.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cliques: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ExportError {
    #[error("sample node {node} has a non-constant address; the program has no finite Bayesian network")]
    NonConstantAddress { node: NodeId },
    #[error("address {address:?} is sampled by more than one statement")]
    DuplicateAddress { address: String },
    #[error("dependencies between addresses are cyclic")]
    Cyclic,
}

/// One variable per constant address; `a -> b` when `a` is in the factor
/// set of `b`.
pub fn to_bayes_net(model: &Model) -> Result<GraphExport, ExportError> {
    let cfg = &model.cfg;
    let mut addr_of: BTreeMap<NodeId, String> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for f in &model.factors {
        let Some(a) = cfg.nodes[f.node].constant_address() else {
            return Err(ExportError::NonConstantAddress { node: f.node });
        };
        if !seen.insert(a.to_string()) {
            return Err(ExportError::DuplicateAddress { address: a.to_string() });
        }
        addr_of.insert(f.node, a.to_string());
    }
    let mut parents: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut edges = Vec::new();
    for f in &model.factors {
        let me = addr_of[&f.node].clone();
        let ps: Vec<String> = f.deps().iter().filter(|n| **n != f.node).map(|n| addr_of[n].clone()).collect();
        for p in &ps {
            edges.push((p.clone(), me.clone()));
        }
        parents.insert(me, ps);
    }
    // Kahn's algorithm as an acyclicity check.
    let mut indeg: BTreeMap<&str, usize> = parents.iter().map(|(k, v)| (k.as_str(), v.len())).collect();
    let mut ready: Vec<&str> = indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    let mut done = 0;
    while let Some(n) = ready.pop() {
        done += 1;
        for (a, b) in &edges {
            if a == n {
                let d = indeg.get_mut(b.as_str()).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(b);
                }
            }
        }
    }
    if done != parents.len() {
        return Err(ExportError::Cyclic);
    }
    let nodes = model.factors.iter().map(|f| addr_of[&f.node].clone()).collect();
    Ok(GraphExport { kind: GraphKind::BayesNet, nodes, edges, parents, cliques: Vec::new() })
}

/// Symbolic Markov network: one variable per address pattern (statements
/// sharing a constant address share a variable), one clique per factor.
pub fn to_markov_net(model: &Model) -> GraphExport {
    let cfg = &model.cfg;
    let label = |n: &NodeId| cfg.nodes[*n].address_pattern().unwrap_or_default();
    let mut nodes: Vec<String> = Vec::new();
    for f in &model.factors {
        let l = label(&f.node);
        if !nodes.contains(&l) {
            nodes.push(l);
        }
    }
    let mut cliques = Vec::new();
    let mut edges = BTreeSet::new();
    for f in &model.factors {
        let members: BTreeSet<String> = f.nodes().iter().map(label).collect();
        let members: Vec<String> = members.into_iter().collect();
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                edges.insert((a.clone(), b.clone()));
            }
        }
        cliques.push(members);
    }
    GraphExport { kind: GraphKind::MarkovNet, nodes, edges: edges.into_iter().collect(), parents: BTreeMap::new(), cliques }
}

impl GraphExport {
    pub fn to_dot(&self) -> String {
        let (head, arrow) = match self.kind {
            GraphKind::BayesNet => ("digraph bayes_net", "->"),
            GraphKind::MarkovNet => ("graph markov_net", "--"),
        };
        let mut s = format!("{head} {{\n");
        for n in &self.nodes {
            let _ = writeln!(s, "  {n:?};");
        }
        for (a, b) in &self.edges {
            let _ = writeln!(s, "  {a:?} {arrow} {b:?};");
        }
        s.push_str("}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig4_bayes_net() {
        let m = Model::parse(super::super::tests::FIG4).unwrap();
        let g = to_bayes_net(&m).unwrap();
        let mut edges = g.edges.clone();
        edges.sort();
        let want: Vec<(String, String)> =
            [("b", "mu"), ("b", "x"), ("mu", "x"), ("s", "x")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        assert_eq!(edges, want);
    }

    #[test]
    fn dynamic_address_rejected() {
        let m = Model::parse("n = sample(\"n\", Poisson(5))\nx = sample(\"x_\" + str(n), Normal(0, 1))").unwrap();
        assert!(matches!(to_bayes_net(&m), Err(ExportError::NonConstantAddress { .. })));
        let mn = to_markov_net(&m);
        assert_eq!(mn.nodes.len(), 2);
        assert_eq!(mn.cliques.iter().filter(|c| c.len() == 2).count(), 1);
    }

    #[test]
    fn hurricane_markov_net() {
        let src = include_str!("../../../../corpus/hurricane.ppl");
        let mn = to_markov_net(&Model::parse(src).unwrap());
        assert_eq!(mn.nodes, ["F", "P0", "D0", "P1", "D1"]);
        let mut cliques: Vec<String> = mn.cliques.iter().map(|c| c.join(",")).collect();
        cliques.sort();
        assert_eq!(cliques, ["D0,F,P0", "D0,F,P0", "D0,F,P1", "D1,F,P0", "D1,F,P1", "D1,F,P1", "F", "F,P0", "F,P1"]);
    }

    #[test]
    fn independent_samples_have_no_edges() {
        let m = Model::parse("a = sample(\"a\", Normal(0, 1)); b = sample(\"b\", Normal(0, 1))").unwrap();
        let mn = to_markov_net(&m);
        assert!(mn.edges.is_empty());
        assert!(mn.cliques.iter().all(|c| c.len() == 1));
    }
}
