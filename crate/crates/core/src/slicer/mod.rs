//! Per-factor slices and particle-filter segments.

mod listing;

use fixedbitset::FixedBitSet;
use serde::Serialize;

use crate::analysis::Model;
use crate::cfg::{Cfg, NodeId, NodeKind};
use crate::semantics::{ProgramState, Role, SampleHandler, Undefined};

pub use listing::{slice_listing, slice_to_dot};

/// Sub-graph that re-runs the factors depending on one sample node, starting
/// from a state captured just before that node executes.
#[derive(Clone, Debug)]
pub struct SlicedProgram {
    pub origin: NodeId,
    pub members: FixedBitSet,
    /// Role of each retained sample node; `None` elsewhere.
    pub roles: Vec<Option<Role>>,
    /// Role of the origin when the slice loops back to it.
    pub repeat_role: Role,
    /// Restricted edges plus start and end wiring, for dumps.
    pub edges: Vec<(SliceEnd, SliceEnd)>,
    /// Whether paths re-entering the origin were kept because a variable
    /// carries the origin's value around a loop.
    pub carried: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SliceEnd {
    Start,
    Node(NodeId),
    End,
}

impl SlicedProgram {
    pub fn contains(&self, n: NodeId) -> bool {
        self.members.contains(n)
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        self.members.ones().collect()
    }

    pub fn role(&self, n: NodeId) -> Option<Role> {
        self.roles.get(n).copied().flatten()
    }
}

fn forward_reach(cfg: &Cfg, from: NodeId, blocked: Option<NodeId>) -> FixedBitSet {
    let mut seen = FixedBitSet::with_capacity(cfg.len());
    let mut stack: Vec<NodeId> = cfg.succ[from].iter().collect();
    while let Some(m) = stack.pop() {
        if seen.contains(m) {
            continue;
        }
        seen.insert(m);
        if Some(m) != blocked {
            stack.extend(cfg.succ[m].iter());
        }
    }
    seen
}

fn backward_reach(cfg: &Cfg, targets: impl Iterator<Item = NodeId>, blocked: Option<NodeId>) -> FixedBitSet {
    let mut seen = FixedBitSet::with_capacity(cfg.len());
    let mut stack = Vec::new();
    // Targets always expand, so a self-dependent origin reaches itself.
    for t in targets {
        seen.insert(t);
        stack.extend(cfg.preds[t].iter().copied());
    }
    while let Some(m) = stack.pop() {
        if seen.contains(m) {
            continue;
        }
        seen.insert(m);
        if Some(m) != blocked {
            stack.extend(cfg.preds[m].iter().copied());
        }
    }
    seen
}

/// Variable slots live at entry of each node.
pub fn live_in(cfg: &Cfg) -> Vec<FixedBitSet> {
    let n = cfg.len();
    let slots = cfg.program.slot_count();
    let mut uses = vec![FixedBitSet::with_capacity(slots); n];
    for node in &cfg.nodes {
        let u = &mut uses[node.id];
        let mut add = |e: &crate::lang::Expr| e.visit_vars(&mut |v| u.insert(v.slot as usize));
        match &node.kind {
            NodeKind::Assign { expr, .. } => add(expr),
            NodeKind::Sample { addr, args, .. } => {
                add(addr);
                args.iter().for_each(&mut add);
            }
            NodeKind::Branch { cond } => add(cond),
            _ => {}
        }
    }
    let mut live = vec![FixedBitSet::with_capacity(slots); n];
    let mut changed = true;
    while changed {
        changed = false;
        for id in (0..n).rev() {
            let mut out = FixedBitSet::with_capacity(slots);
            for m in cfg.succ[id].iter() {
                out.union_with(&live[m]);
            }
            if let Some(v) = cfg.nodes[id].defines() {
                out.remove(v.slot as usize);
            }
            out.union_with(&uses[id]);
            if out != live[id] {
                live[id] = out;
                changed = true;
            }
        }
    }
    live
}

/// True when a value derived from the origin may survive a later execution
/// of the origin and still reach a dependent.
fn carries_origin(model: &Model, live: &[FixedBitSet], origin: NodeId) -> bool {
    live[origin].ones().any(|slot| model.prov_node(origin, slot as u32).contains(&origin))
}

/// Builds the slice for the factor of sample node `origin`.
pub fn slice_for_factor(model: &Model, origin: NodeId) -> SlicedProgram {
    slice_with_liveness(model, &live_in(&model.cfg), origin)
}

/// Slices for every sample node, indexed by node id.
pub fn all_factor_slices(model: &Model) -> Vec<Option<SlicedProgram>> {
    let live = live_in(&model.cfg);
    let mut out = vec![None; model.cfg.len()];
    for f in &model.factors {
        out[f.node] = Some(slice_with_liveness(model, &live, f.node));
    }
    out
}

fn slice_with_liveness(model: &Model, live: &[FixedBitSet], origin: NodeId) -> SlicedProgram {
    let cfg = &model.cfg;
    let factor = model.factor_at(origin).expect("slice origin must be a sample node");
    let dependents = &factor.dependents;
    let self_dependent = dependents.contains(&origin);
    let carried = !self_dependent && !dependents.is_empty() && carries_origin(model, live, origin);
    let blocked = if carried { None } else { Some(origin) };

    let fwd = forward_reach(cfg, origin, blocked);
    let bwd = backward_reach(cfg, dependents.iter().copied(), blocked);
    let mut members = fwd;
    members.intersect_with(&bwd);
    members.insert(origin);

    let mut roles = vec![None; cfg.len()];
    for n in members.ones() {
        if cfg.nodes[n].is_sample() {
            roles[n] = Some(if n == origin {
                Role::Visit
            } else if dependents.contains(&n) {
                Role::Score
            } else {
                Role::Read
            });
        }
    }

    let mut edges = vec![(SliceEnd::Start, SliceEnd::Node(origin))];
    for n in members.ones() {
        let mut has_succ = false;
        for m in cfg.succ[n].iter() {
            if members.contains(m) {
                edges.push((SliceEnd::Node(n), SliceEnd::Node(m)));
                has_succ = true;
            }
        }
        if !has_succ && (dependents.contains(&n) || n == origin) {
            edges.push((SliceEnd::Node(n), SliceEnd::End));
        }
    }

    SlicedProgram {
        origin,
        members,
        roles,
        repeat_role: if self_dependent { Role::Score } else { Role::Read },
        edges,
        carried,
    }
}

/// Runs a factor slice from a checkpoint captured before the origin. Control
/// leaving the retained nodes ends the run.
pub fn run_factor_slice<H: SampleHandler>(
    cfg: &Cfg,
    slice: &SlicedProgram,
    checkpoint: ProgramState,
    handler: &mut H,
    budget: u64,
) -> Result<ProgramState, Undefined> {
    let mut st = checkpoint;
    let mut buf = Vec::new();
    let mut n = slice.origin;
    let mut first = true;
    let mut left = budget;
    loop {
        let role = match slice.role(n) {
            Some(Role::Visit) if !first => slice.repeat_role,
            Some(r) => r,
            None => Role::Plain,
        };
        first = false;
        match cfg.step(n, &mut st, handler, role, &mut buf)? {
            Some(m) if slice.contains(m) => n = m,
            _ => return Ok(st),
        }
        if left == 0 {
            return Err(Undefined::StepBudgetExhausted);
        }
        left -= 1;
    }
}

/// Segment of straight-line control between consecutive sample statements.
#[derive(Clone, Debug)]
pub struct SmcSlicedProgram {
    /// The sample node the segment starts with, or Start for the entry segment.
    pub origin: NodeId,
    pub members: FixedBitSet,
    /// Sample nodes at which execution pauses.
    pub terminals: Vec<NodeId>,
    /// Whether program End is reachable without another sample.
    pub reaches_end: bool,
}

pub fn slice_for_smc(cfg: &Cfg, origin: NodeId) -> SmcSlicedProgram {
    let mut members = FixedBitSet::with_capacity(cfg.len());
    members.insert(origin);
    let mut terminals = Vec::new();
    let mut reaches_end = false;
    let mut stack: Vec<NodeId> = cfg.succ[origin].iter().collect();
    let mut seen = FixedBitSet::with_capacity(cfg.len());
    while let Some(m) = stack.pop() {
        if seen.contains(m) {
            continue;
        }
        seen.insert(m);
        if cfg.nodes[m].is_sample() {
            terminals.push(m);
        } else if m == cfg.end {
            reaches_end = true;
        } else {
            members.insert(m);
            stack.extend(cfg.succ[m].iter());
        }
    }
    terminals.sort_unstable();
    SmcSlicedProgram { origin, members, terminals, reaches_end }
}

/// Entry segment from program Start to the first sample statements.
pub fn smc_entry_slice(cfg: &Cfg) -> SmcSlicedProgram {
    slice_for_smc(cfg, cfg.start)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmcStop {
    /// Paused before executing this sample node.
    Paused(NodeId),
    Finished,
}

/// Executes a segment: the origin, then everything up to the next sample
/// statement or program End.
pub fn run_smc_slice<H: SampleHandler>(
    cfg: &Cfg,
    slice: &SmcSlicedProgram,
    state: &mut ProgramState,
    handler: &mut H,
    budget: u64,
    mut seq: Option<&mut Vec<NodeId>>,
) -> Result<SmcStop, Undefined> {
    let mut buf = Vec::new();
    let mut n = slice.origin;
    let mut left = budget;
    loop {
        if let Some(s) = seq.as_deref_mut() {
            s.push(n);
        }
        let Some(m) = cfg.step(n, state, handler, Role::Plain, &mut buf)? else {
            return Ok(SmcStop::Finished);
        };
        if cfg.nodes[m].is_sample() {
            return Ok(SmcStop::Paused(m));
        }
        if m == cfg.end {
            if let Some(s) = seq.as_deref_mut() {
                s.push(m);
            }
            return Ok(SmcStop::Finished);
        }
        debug_assert!(slice.members.contains(m));
        n = m;
        if left == 0 {
            return Err(Undefined::StepBudgetExhausted);
        }
        left -= 1;
    }
}
