//! Lightweight Metropolis-Hastings over minimal traces.
//!
//! Proposals draw from the prior of the statement being proposed. The
//! chosen address is uniform over the sorted latent keys. All randomness
//! comes from streams keyed by (seed, step, address), so the baseline and
//! the factored chain see the same draws whatever order they execute in.
//!
//! The density ratio is accumulated per address as `lp_new - lp_old` in
//! execution order, followed by the removed addresses in their old order.
//! The factored chain visits a subsequence of the same sites and every
//! skipped site has a difference of exactly zero, which makes both
//! acceptance probabilities bitwise equal.

use std::sync::Arc;

use rand::Rng;
use rustc_hash::FxHashMap;
use serde::Serialize;

use super::keyed_rng;
use crate::analysis::Model;
use crate::cfg::{cfg_exec_with, NodeId};
use crate::lang::{Trace, Value};
use crate::semantics::{ProgramState, Role, SampleHandler, Site, Undefined, DEFAULT_STEP_BUDGET};
use crate::slicer::{all_factor_slices, run_factor_slice, SlicedProgram};

/// Stream index used for the initial trace.
const INIT_STEP: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LmhVariant {
    Baseline,
    Factored,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Source {
    /// Resample the chosen address and anything missing from the trace.
    Propose,
    /// Read the current trace only.
    Current,
    /// Keep what the trace has, draw the rest.
    Init,
}

struct Entry {
    addr: Arc<str>,
    value: Value,
    /// Log density summed over every occurrence, ignoring roles.
    lp: f64,
    observed: bool,
    checkpoint: Option<(ProgramState, NodeId)>,
}

/// Sample handler shared by the full-program and slice runs.
struct Ctx<'a> {
    source: Source,
    current: &'a Trace,
    observed: &'a Trace,
    alpha: &'a str,
    seed: u64,
    step: u64,
    capture: bool,
    index: FxHashMap<Arc<str>, usize>,
    entries: Vec<Entry>,
    /// Log proposal density of the values drawn.
    qf: f64,
    proposed: u32,
    ops: u64,
    repeated: bool,
}

impl<'a> Ctx<'a> {
    fn new(source: Source, chain: &'a LmhChain<'_>, alpha: &'a str, step: u64, capture: bool) -> Ctx<'a> {
        Ctx {
            source,
            current: &chain.trace,
            observed: &chain.observed,
            alpha,
            seed: chain.seed,
            step,
            capture,
            index: FxHashMap::default(),
            entries: Vec::new(),
            qf: 0.0,
            proposed: 0,
            ops: 0,
            repeated: false,
        }
    }

    fn lp_of(&self, addr: &str) -> Option<f64> {
        self.index.get(addr).map(|i| self.entries[*i].lp)
    }

    fn latents(&self) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(|e| !e.observed)
    }
}

impl SampleHandler for Ctx<'_> {
    fn sample(&mut self, site: &Site<'_>, st: &ProgramState) -> Result<(Value, f64), Undefined> {
        self.ops += 1;
        let scale = |lp: f64| if site.role == Role::Read { 0.0 } else { lp };
        if let Some(&i) = self.index.get(site.address) {
            self.repeated = true;
            let e = &mut self.entries[i];
            let lp = site.dist.log_pdf(&e.value, site.args);
            e.lp += lp;
            return Ok((e.value.clone(), scale(lp)));
        }
        let addr = site.address;
        let obs = self.observed.get(addr);
        let mut fresh = false;
        let value = if !obs.is_null() {
            obs.clone()
        } else {
            fresh = match self.source {
                Source::Propose => &**addr == self.alpha || !self.current.contains(addr),
                Source::Current => false,
                Source::Init => !self.current.contains(addr),
            };
            if fresh {
                let mut rng = keyed_rng(self.seed, &[self.step], addr);
                site.dist.sample(site.args, &mut rng).ok_or(Undefined::InvalidParams)?
            } else {
                let v = self.current.get(addr);
                if v.is_null() {
                    return Err(Undefined::NullTraceValue);
                }
                v.clone()
            }
        };
        let lp = site.dist.log_pdf(&value, site.args);
        if fresh {
            self.qf += lp;
            self.proposed += 1;
        }
        let observed = !obs.is_null();
        let checkpoint = (self.capture && !observed).then(|| (st.clone(), site.node.expect("graph execution")));
        self.index.insert(addr.clone(), self.entries.len());
        self.entries.push(Entry { addr: addr.clone(), value: value.clone(), lp, observed, checkpoint });
        Ok((value, scale(lp)))
    }
}

/// One line of the result stream.
#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub iteration: u64,
    pub address: String,
    pub accept_prob: f64,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub undefined: Option<Undefined>,
    /// Sample sites executed for this step.
    pub ops: u64,
    /// Addresses drawn from the proposal.
    pub proposed: u32,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct LmhStats {
    pub steps: u64,
    pub accepted: u64,
    pub undefined: u64,
    pub ops: u64,
    /// Factored steps that fell back to full execution because an address
    /// occurred twice.
    pub downgraded: u64,
}

pub struct LmhChain<'m> {
    model: &'m Model,
    variant: LmhVariant,
    slices: Vec<Option<SlicedProgram>>,
    observed: Trace,
    seed: u64,
    budget: u64,
    step: u64,
    trace: Trace,
    /// Latent keys, sorted.
    keys: Vec<Arc<str>>,
    /// Per-address log density of the current trace (baseline only).
    lp_of: FxHashMap<Arc<str>, f64>,
    /// Latent addresses in execution order (baseline only).
    order: Vec<Arc<str>>,
    /// State just before each latent address executes (factored only).
    checkpoints: FxHashMap<Arc<str>, (ProgramState, NodeId)>,
    pub stats: LmhStats,
}

impl<'m> LmhChain<'m> {
    /// Starts a chain from `init`, completing it with prior draws.
    pub fn new(model: &'m Model, variant: LmhVariant, observed: Trace, init: &Trace, seed: u64) -> Result<Self, Undefined> {
        let slices = match variant {
            LmhVariant::Factored => all_factor_slices(model),
            LmhVariant::Baseline => Vec::new(),
        };
        let mut chain = LmhChain {
            model,
            variant,
            slices,
            observed,
            seed,
            budget: DEFAULT_STEP_BUDGET,
            step: 0,
            trace: init.clone(),
            keys: Vec::new(),
            lp_of: FxHashMap::default(),
            order: Vec::new(),
            checkpoints: FxHashMap::default(),
            stats: LmhStats::default(),
        };
        let ctx = chain.full_run(Source::Init, "", INIT_STEP, variant == LmhVariant::Factored)?;
        let entries = ctx.entries;
        chain.adopt_full(entries);
        Ok(chain)
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn keys(&self) -> &[Arc<str>] {
        &self.keys
    }

    pub fn variant(&self) -> LmhVariant {
        self.variant
    }

    fn full_run<'s>(&'s self, source: Source, alpha: &'s str, step: u64, capture: bool) -> Result<Ctx<'s>, Undefined> {
        let mut ctx = Ctx::new(source, self, alpha, step, capture);
        cfg_exec_with(&self.model.cfg, &mut ctx, ProgramState::initial(&self.model.program), self.budget, None)?;
        Ok(ctx)
    }

    /// Replaces every cache with the results of a full run.
    fn adopt_full(&mut self, entries: Vec<Entry>) {
        let mut trace = Trace::new();
        let mut order = Vec::new();
        let mut lp_of = FxHashMap::default();
        let mut checkpoints = FxHashMap::default();
        for e in entries {
            lp_of.insert(e.addr.clone(), e.lp);
            if e.observed {
                continue;
            }
            order.push(e.addr.clone());
            if let Some(cp) = e.checkpoint {
                checkpoints.insert(e.addr.clone(), cp);
            }
            trace.insert(e.addr, e.value);
        }
        let mut keys = order.clone();
        keys.sort();
        self.keys = keys;
        self.trace = trace;
        if self.variant == LmhVariant::Baseline {
            self.order = order;
            self.lp_of = lp_of;
        } else {
            self.checkpoints = checkpoints;
        }
    }

    fn insert_key(&mut self, a: &Arc<str>) {
        if let Err(i) = self.keys.binary_search(a) {
            self.keys.insert(i, a.clone());
        }
    }

    fn remove_key(&mut self, a: &str) {
        if let Ok(i) = self.keys.binary_search_by(|k| (**k).cmp(a)) {
            self.keys.remove(i);
        }
    }

    /// One Metropolis-Hastings transition.
    pub fn step(&mut self) -> StepRecord {
        self.step += 1;
        self.stats.steps += 1;
        let step = self.step;
        let mut rec = StepRecord {
            iteration: step,
            address: String::new(),
            accept_prob: 0.0,
            accepted: false,
            undefined: None,
            ops: 0,
            proposed: 0,
        };
        if self.keys.is_empty() {
            return rec;
        }
        let idx = keyed_rng(self.seed, &[step], "\0select").random_range(0..self.keys.len());
        let alpha = self.keys[idx].clone();
        let u: f64 = keyed_rng(self.seed, &[step], "\0accept").random();
        rec.address = alpha.to_string();
        match self.variant {
            LmhVariant::Baseline => self.step_baseline(&alpha, u, &mut rec),
            LmhVariant::Factored => self.step_factored(&alpha, u, &mut rec),
        }
        self.stats.ops += rec.ops;
        if rec.accepted {
            self.stats.accepted += 1;
        }
        if rec.undefined.is_some() {
            self.stats.undefined += 1;
        }
        rec
    }

    fn step_baseline(&mut self, alpha: &Arc<str>, u: f64, rec: &mut StepRecord) {
        let capture = self.variant == LmhVariant::Factored;
        let fwd = match self.full_run(Source::Propose, alpha, self.step, capture) {
            Ok(c) => c,
            Err(e) => {
                rec.undefined = Some(e);
                return;
            }
        };
        rec.ops += fwd.ops;
        rec.proposed = fwd.proposed;
        let mut dp = 0.0;
        for e in &fwd.entries {
            dp += e.lp - self.lp_of.get(&e.addr).copied().unwrap_or(0.0);
        }
        let mut qb = self.lp_of[alpha];
        let mut removed = 0usize;
        for a in &self.order {
            if !fwd.index.contains_key(a) {
                let lp = self.lp_of[a];
                dp -= lp;
                qb += lp;
                removed += 1;
            }
        }
        let added = fwd.latents().filter(|e| !self.trace.contains(&e.addr)).count();
        let (a, _) = acceptance(dp, qb, fwd.qf, self.keys.len(), self.keys.len() - removed + added);
        rec.accept_prob = a;
        if u < a {
            rec.accepted = true;
            let entries = fwd.entries;
            self.adopt_full(entries);
        }
    }

    fn step_factored(&mut self, alpha: &Arc<str>, u: f64, rec: &mut StepRecord) {
        let cfg = &self.model.cfg;
        let (cp, node) = self.checkpoints.get(alpha).expect("checkpoint index covers every latent key");
        let slice = self.slices[*node].as_ref().expect("slice for every sample node");
        let mut start = cp.clone();
        start.log_density = 0.0;

        let mut bwd = Ctx::new(Source::Current, self, alpha, self.step, false);
        if let Err(e) = run_factor_slice(cfg, slice, start.clone(), &mut bwd, self.budget) {
            rec.undefined = Some(e);
            rec.ops += bwd.ops;
            return;
        }
        let mut fwd = Ctx::new(Source::Propose, self, alpha, self.step, true);
        let out = run_factor_slice(cfg, slice, start, &mut fwd, self.budget);
        rec.ops += bwd.ops + fwd.ops;
        if fwd.repeated || bwd.repeated {
            self.stats.downgraded += 1;
            self.downgrade_step(alpha, u, rec);
            return;
        }
        if let Err(e) = out {
            rec.undefined = Some(e);
            return;
        }
        rec.proposed = fwd.proposed;

        let mut dp = 0.0;
        for e in &fwd.entries {
            dp += e.lp - bwd.lp_of(&e.addr).unwrap_or(0.0);
        }
        let mut qb = bwd.lp_of(alpha).expect("origin executes first");
        let mut removed = Vec::new();
        for e in bwd.latents() {
            if !fwd.index.contains_key(&e.addr) {
                dp -= e.lp;
                qb += e.lp;
                removed.push(e.addr.clone());
            }
        }
        let added = fwd.latents().filter(|e| !self.trace.contains(&e.addr)).count();
        let (a, _) = acceptance(dp, qb, fwd.qf, self.keys.len(), self.keys.len() - removed.len() + added);
        rec.accept_prob = a;
        if u >= a {
            return;
        }
        rec.accepted = true;
        let entries = fwd.entries;
        for r in &removed {
            self.trace.remove(r);
            self.checkpoints.remove(r);
            self.remove_key(r);
        }
        for e in entries {
            if e.observed {
                continue;
            }
            if !self.trace.contains(&e.addr) {
                self.insert_key(&e.addr);
            }
            if let Some(cp) = e.checkpoint {
                self.checkpoints.insert(e.addr.clone(), cp);
            }
            self.trace.insert(e.addr, e.value);
        }
    }

    /// Full-execution step for a factored chain whose current step broke the
    /// single-occurrence assumption.
    fn downgrade_step(&mut self, alpha: &Arc<str>, u: f64, rec: &mut StepRecord) {
        let cur = match self.full_run(Source::Current, "", self.step, false) {
            Ok(c) => c,
            Err(e) => {
                rec.undefined = Some(e);
                return;
            }
        };
        rec.ops += cur.ops;
        let order = cur.latents().map(|e| e.addr.clone()).collect();
        let lp_of = cur.entries.iter().map(|e| (e.addr.clone(), e.lp)).collect();
        self.order = order;
        self.lp_of = lp_of;
        self.step_baseline(alpha, u, rec);
        self.order.clear();
        self.lp_of.clear();
    }
}

/// Acceptance probability and its log from the density difference, the
/// reverse and forward proposal terms and the key counts.
fn acceptance(dp: f64, qb: f64, qf: f64, n_old: usize, n_new: usize) -> (f64, f64) {
    let log_a = dp + (qb - qf) + ((n_old as f64).ln() - (n_new as f64).ln());
    let a = if log_a.is_nan() {
        0.0
    } else if log_a >= 0.0 {
        1.0
    } else {
        log_a.exp()
    };
    (a, log_a)
}
