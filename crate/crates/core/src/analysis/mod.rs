//! Static provenance, density factorisation and graph exports.

mod export;

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::sync::Arc;

use serde::Serialize;

use crate::cfg::{Cfg, Dataflow, NodeId, NodeKind};
use crate::lang::{Expr, Program, Trace, Value};
use crate::semantics::{ProgramState, SampleHandler, Site, TraceHandler, Undefined, DEFAULT_STEP_BUDGET};

pub use export::{to_bayes_net, to_markov_net, ExportError, GraphExport, GraphKind};

/// Dependencies of the density factor contributed by one sample node.
#[derive(Clone, Debug, Serialize)]
pub struct FactorSet {
    /// Position among the program's sample nodes.
    pub index: usize,
    pub node: NodeId,
    /// Sample nodes feeding the address and distribution arguments.
    pub data_deps: BTreeSet<NodeId>,
    /// Sample nodes feeding the conditions that decide whether it runs.
    pub control_deps: BTreeSet<NodeId>,
    /// Sample nodes whose factors depend on this node.
    pub dependents: BTreeSet<NodeId>,
}

impl FactorSet {
    pub fn deps(&self) -> BTreeSet<NodeId> {
        self.data_deps.union(&self.control_deps).copied().collect()
    }

    /// The node itself plus its dependencies.
    pub fn nodes(&self) -> BTreeSet<NodeId> {
        let mut s = self.deps();
        s.insert(self.node);
        s
    }
}

/// A program together with its graph, dataflow facts and factors.
#[derive(Clone, Debug)]
pub struct Model {
    pub program: Arc<Program>,
    pub cfg: Arc<Cfg>,
    pub dataflow: Dataflow,
    pub factors: Vec<FactorSet>,
    /// Factor index by node id.
    factor_of: Vec<Option<usize>>,
}

impl Model {
    pub fn new(program: Program) -> Model {
        let program = Arc::new(program);
        let cfg = Arc::new(Cfg::from_arc(program.clone()));
        let dataflow = Dataflow::compute(&cfg);
        let factors = factor_sets(&cfg, &dataflow);
        let mut factor_of = vec![None; cfg.len()];
        for f in &factors {
            factor_of[f.node] = Some(f.index);
        }
        Model { program, cfg, dataflow, factors, factor_of }
    }

    pub fn parse(src: &str) -> Result<Model, crate::lang::ParseError> {
        crate::lang::parse(src).map(Model::new)
    }

    pub fn factor_at(&self, node: NodeId) -> Option<&FactorSet> {
        self.factor_of.get(node).copied().flatten().map(|i| &self.factors[i])
    }

    pub fn prov_node(&self, node: NodeId, slot: u32) -> BTreeSet<NodeId> {
        prov_node(&self.cfg, &self.dataflow, node, slot)
    }

    pub fn prov_expr(&self, node: NodeId, e: &Expr) -> BTreeSet<NodeId> {
        prov_expr(&self.cfg, &self.dataflow, node, e)
    }

    pub fn evaluate_factor(&self, index: usize, trace: &Trace) -> Result<f64, Undefined> {
        evaluate_factor(&self.cfg, self.factors[index].node, trace)
    }

    pub fn report(&self) -> FactorReport {
        let pat = |n: &NodeId| self.cfg.nodes[*n].address_pattern().unwrap_or_default();
        FactorReport {
            factors: self
                .factors
                .iter()
                .map(|f| FactorEntry {
                    index: f.index,
                    node: f.node,
                    line: self.cfg.nodes[f.node].line,
                    address: pat(&f.node),
                    statement: self.cfg.nodes[f.node].label(),
                    data_deps: f.data_deps.iter().copied().collect(),
                    control_deps: f.control_deps.iter().copied().collect(),
                    dependents: f.dependents.iter().copied().collect(),
                    address_set: f.nodes().iter().map(pat).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorEntry {
    pub index: usize,
    pub node: NodeId,
    pub line: u32,
    pub address: String,
    pub statement: String,
    pub data_deps: Vec<NodeId>,
    pub control_deps: Vec<NodeId>,
    pub dependents: Vec<NodeId>,
    pub address_set: BTreeSet<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorReport {
    pub factors: Vec<FactorEntry>,
}

/// Sample nodes whose addresses may determine the value of `slot` at entry
/// to `node`. Worklist over (node, variable) pairs, FIFO order.
pub fn prov_node(cfg: &Cfg, df: &Dataflow, node: NodeId, slot: u32) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    let mut marked: HashSet<(NodeId, u32)> = HashSet::new();
    let mut queue = VecDeque::new();
    marked.insert((node, slot));
    queue.push_back((node, slot));
    let mut push = |queue: &mut VecDeque<(NodeId, u32)>, n: NodeId, e: &Expr| {
        e.visit_vars(&mut |v| {
            if marked.insert((n, v.slot)) {
                queue.push_back((n, v.slot));
            }
        });
    };
    while let Some((n, x)) = queue.pop_front() {
        for d in df.reaching_definitions(n, x) {
            match &cfg.nodes[d].kind {
                NodeKind::Sample { addr, .. } => {
                    out.insert(d);
                    push(&mut queue, d, addr);
                }
                NodeKind::Assign { expr, .. } => push(&mut queue, d, expr),
                _ => unreachable!("only assign and sample nodes define variables"),
            }
            for &b in df.branch_parents(d) {
                if let NodeKind::Branch { cond } = &cfg.nodes[b].kind {
                    push(&mut queue, b, cond);
                }
            }
        }
    }
    out
}

pub fn prov_expr(cfg: &Cfg, df: &Dataflow, node: NodeId, e: &Expr) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    e.visit_vars(&mut |v| out.extend(prov_node(cfg, df, node, v.slot)));
    out
}

pub fn factor_sets(cfg: &Cfg, df: &Dataflow) -> Vec<FactorSet> {
    let mut factors: Vec<FactorSet> = cfg
        .sample_nodes()
        .into_iter()
        .enumerate()
        .map(|(index, node)| {
            let NodeKind::Sample { addr, args, .. } = &cfg.nodes[node].kind else { unreachable!() };
            let mut data_deps = prov_expr(cfg, df, node, addr);
            for a in args {
                data_deps.extend(prov_expr(cfg, df, node, a));
            }
            let mut control_deps = BTreeSet::new();
            for &b in df.branch_parents(node) {
                if let NodeKind::Branch { cond } = &cfg.nodes[b].kind {
                    control_deps.extend(prov_expr(cfg, df, b, cond));
                }
            }
            FactorSet { index, node, data_deps, control_deps, dependents: BTreeSet::new() }
        })
        .collect();
    let deps: Vec<BTreeSet<NodeId>> = factors.iter().map(|f| f.deps()).collect();
    for f in factors.iter_mut() {
        for (j, d) in deps.iter().enumerate() {
            if d.contains(&f.node) {
                f.dependents.insert(cfg.sample_nodes()[j]);
            }
        }
    }
    factors
}

/// Passes values through but only keeps the density of one node.
struct FactorFilter<'a> {
    inner: TraceHandler<'a>,
    node: NodeId,
}

impl SampleHandler for FactorFilter<'_> {
    fn sample(&mut self, site: &Site<'_>, st: &ProgramState) -> Result<(Value, f64), Undefined> {
        let (v, lp) = self.inner.sample(site, st)?;
        Ok((v, if site.node == Some(self.node) { lp } else { 0.0 }))
    }
}

/// Log of the factor of sample node `node`: the sum of its log densities over
/// all executions of that node, zero if it never runs.
pub fn evaluate_factor(cfg: &Cfg, node: NodeId, trace: &Trace) -> Result<f64, Undefined> {
    let mut h = FactorFilter { inner: TraceHandler { trace }, node };
    let st = crate::cfg::cfg_exec_with(cfg, &mut h, ProgramState::initial(&cfg.program), DEFAULT_STEP_BUDGET, None)?;
    Ok(st.log_density)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIG4: &str = "b = sample(\"b\", Bernoulli(0.5))\ns = sample(\"s\", InverseGamma(1, 1))\nif b == 1 then\n    m = sample(\"mu\", Normal(0, 1))\nelse\n    m = 1\nx = sample(\"x\", Normal(m, s))\n";

    fn names(m: &Model, s: &BTreeSet<NodeId>) -> Vec<String> {
        let mut v: Vec<String> = s.iter().map(|n| m.cfg.nodes[*n].address_pattern().unwrap()).collect();
        v.sort();
        v
    }

    #[test]
    fn fig4_provenance() {
        let m = Model::parse(FIG4).unwrap();
        let x = m.cfg.find_sample("x").unwrap();
        let p = &m.program;
        assert_eq!(names(&m, &m.prov_node(x, p.slot_of("s").unwrap())), ["s"]);
        assert_eq!(names(&m, &m.prov_node(x, p.slot_of("m").unwrap())), ["b", "mu"]);
        let NodeKind::Sample { args, .. } = &m.cfg.nodes[x].kind else { panic!() };
        let mut all = BTreeSet::new();
        for a in args {
            all.extend(m.prov_expr(x, a));
        }
        assert_eq!(names(&m, &all), ["b", "mu", "s"]);
    }

    #[test]
    fn constant_branches_still_depend_on_condition() {
        let src = FIG4.replace("m = sample(\"mu\", Normal(0, 1))", "m = 1");
        let m = Model::parse(&src).unwrap();
        let x = m.cfg.find_sample("x").unwrap();
        assert_eq!(names(&m, &m.prov_node(x, m.program.slot_of("m").unwrap())), ["b"]);
    }

    #[test]
    fn fig4_factors() {
        let m = Model::parse(FIG4).unwrap();
        let sets: Vec<Vec<String>> = m.factors.iter().map(|f| names(&m, &f.nodes())).collect();
        assert_eq!(sets, vec![vec!["b"], vec!["s"], vec!["b", "mu"], vec!["b", "mu", "s", "x"]]);
    }

    #[test]
    fn skip_has_no_factors() {
        assert!(Model::parse("skip").unwrap().factors.is_empty());
    }

    #[test]
    fn mu_factor_is_one_when_branch_not_taken() {
        let m = Model::parse(FIG4).unwrap();
        let t: Trace = [("b", Value::Int(0)), ("s", Value::Real(1.0)), ("x", Value::Real(0.3))].into_iter().collect();
        assert_eq!(m.evaluate_factor(2, &t), Ok(0.0));
        let total: f64 = (0..4).map(|k| m.evaluate_factor(k, &t).unwrap()).sum();
        let d = crate::semantics::density(&m.program, &t).unwrap();
        assert!((total - d).abs() < 1e-12);
    }
}
