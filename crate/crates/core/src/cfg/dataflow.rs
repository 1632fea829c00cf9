//! Reaching definitions and branch parents, computed once per graph.

use std::collections::VecDeque;

use fixedbitset::FixedBitSet;

use super::{Cfg, NodeId};

#[derive(Clone, Debug)]
pub struct Dataflow {
    /// Definitions (assign and sample nodes) reaching the entry of each node.
    rd_in: Vec<FixedBitSet>,
    /// Defining node ids per variable slot.
    defs_of: Vec<FixedBitSet>,
    branch_parents: Vec<Vec<NodeId>>,
}

impl Dataflow {
    pub fn compute(cfg: &Cfg) -> Dataflow {
        let n = cfg.len();
        let slots = cfg.program.slot_count();
        let mut defs_of = vec![FixedBitSet::with_capacity(n); slots];
        for node in &cfg.nodes {
            if let Some(v) = node.defines() {
                defs_of[v.slot as usize].insert(node.id);
            }
        }

        // Forward may-analysis iterated to a fixpoint with a worklist.
        let mut rd_in = vec![FixedBitSet::with_capacity(n); n];
        let mut rd_out = vec![FixedBitSet::with_capacity(n); n];
        let transfer = |id: NodeId, input: &FixedBitSet| {
            let mut out = input.clone();
            if let Some(v) = cfg.nodes[id].defines() {
                out.difference_with(&defs_of[v.slot as usize]);
                out.insert(id);
            }
            out
        };
        let mut queue: VecDeque<NodeId> = (0..n).collect();
        let mut queued = vec![true; n];
        while let Some(id) = queue.pop_front() {
            queued[id] = false;
            let mut input = FixedBitSet::with_capacity(n);
            for &p in &cfg.preds[id] {
                input.union_with(&rd_out[p]);
            }
            let out = transfer(id, &input);
            rd_in[id] = input;
            if out != rd_out[id] {
                rd_out[id] = out;
                for m in cfg.succ[id].iter() {
                    if !queued[m] {
                        queued[m] = true;
                        queue.push_back(m);
                    }
                }
            }
        }

        // A node lies under (B, J) when it is reachable from B without
        // passing through J.
        let mut branch_parents = vec![Vec::new(); n];
        for pair in &cfg.pairs {
            let mut seen = FixedBitSet::with_capacity(n);
            let mut stack: Vec<NodeId> = cfg.succ[pair.branch].iter().collect();
            while let Some(m) = stack.pop() {
                if m == pair.join || seen.contains(m) {
                    continue;
                }
                seen.insert(m);
                stack.extend(cfg.succ[m].iter());
            }
            for m in seen.ones() {
                branch_parents[m].push(pair.branch);
            }
        }
        for bp in &mut branch_parents {
            bp.sort_unstable();
        }
        Dataflow { rd_in, defs_of, branch_parents }
    }

    /// Assign and sample nodes that may have last written `slot` before `node`.
    pub fn reaching_definitions(&self, node: NodeId, slot: u32) -> Vec<NodeId> {
        let Some(defs) = self.defs_of.get(slot as usize) else {
            return Vec::new();
        };
        let mut s = self.rd_in[node].clone();
        s.intersect_with(defs);
        s.ones().collect()
    }

    pub fn branch_parents(&self, node: NodeId) -> &[NodeId] {
        &self.branch_parents[node]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    const FIG4: &str = "b = sample(\"b\", Bernoulli(0.5))\ns = sample(\"s\", InverseGamma(1, 1))\nif b == 1 then\n    m = sample(\"mu\", Normal(0, 1))\nelse\n    m = 1\nx = sample(\"x\", Normal(m, s))\n";

    #[test]
    fn fig4_reaching_definitions_and_parents() {
        let p = parse(FIG4).unwrap();
        let g = Cfg::build(&p);
        let df = Dataflow::compute(&g);
        let x = g.find_sample("x").unwrap();
        let mu = g.find_sample("mu").unwrap();
        let m = p.slot_of("m").unwrap();
        let assign_one = g.nodes.iter().find(|n| n.label() == "m = 1").unwrap().id;
        assert_eq!(df.reaching_definitions(x, m), vec![mu, assign_one]);
        assert_eq!(df.branch_parents(mu), &[g.pairs[0].branch]);
        assert!(df.branch_parents(x).is_empty());
        for v in 0..p.slot_count() as u32 {
            assert!(df.reaching_definitions(1, v).is_empty());
        }
    }

    #[test]
    fn geometric_branch_sees_both_definitions() {
        let p = parse("b = true; i = 0\nwhile b do\n    i = i + 1\n    b = sample(\"b_\" + str(i), Bernoulli(0.25))\n").unwrap();
        let g = Cfg::build(&p);
        let df = Dataflow::compute(&g);
        let branch = g.pairs[0].branch;
        let sample = g.sample_nodes()[0];
        assert_eq!(df.reaching_definitions(branch, p.slot_of("b").unwrap()), vec![1, sample]);
        assert_eq!(df.branch_parents(sample), &[branch]);
        // A while branch sits under its own pair via the back edge.
        assert_eq!(df.branch_parents(branch), &[branch]);
    }

    #[test]
    fn nodes_after_inner_loop_are_not_under_it() {
        let p = parse("while a do\n    while b do\n        b = 1\n    c = 2\n").unwrap();
        let g = Cfg::build(&p);
        let df = Dataflow::compute(&g);
        let c = g.nodes.iter().find(|n| n.label() == "c = 2").unwrap().id;
        assert_eq!(df.branch_parents(c), &[g.pairs[0].branch]);
    }
}
