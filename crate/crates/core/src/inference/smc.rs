//! Particle filtering over a data schedule: step `t` conditions on the
//! first `t` observations. The model is truncated through a size constant
//! (e.g. `N = 100`) assigned at top level.
//!
//! Latents are proposed from their prior with streams keyed by
//! (seed, step, particle, address). The weight increment is the density
//! increment minus the log proposal density of the values drawn in the step.
//! Resampling is systematic, every step, from its own stream.

use std::sync::Arc;

use rand::Rng;
use rustc_hash::FxHashMap;
use serde::Serialize;
use thiserror::Error;

use super::keyed_rng;
use crate::cfg::{cfg_exec_with, Cfg, NodeId};
use crate::lang::{Program, Trace, Value};
use crate::semantics::{ProgramState, SampleHandler, Site, Undefined, DEFAULT_STEP_BUDGET};
use crate::slicer::{run_smc_slice, slice_for_smc, SmcSlicedProgram, SmcStop};

#[derive(Debug, Error, PartialEq)]
pub enum SmcError {
    #[error("program has no top-level constant assignment to {0:?}")]
    NoSizeVariable(String),
    #[error("every particle has zero weight at step {0}")]
    Degenerate(usize),
    #[error("execution undefined at step {step}: {reason}")]
    Undefined { step: usize, reason: Undefined },
}

#[derive(Clone, Debug)]
pub struct SmcConfig {
    pub particles: usize,
    pub seed: u64,
    pub budget: u64,
}

impl SmcConfig {
    pub fn new(particles: usize, seed: u64) -> SmcConfig {
        SmcConfig { particles, seed, budget: DEFAULT_STEP_BUDGET }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SmcStepRecord {
    pub step: usize,
    /// Log weight increment of each particle before resampling.
    pub log_weights: Vec<f64>,
    pub ess: f64,
    pub log_evidence: f64,
    pub ancestors: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SmcRun {
    pub steps: Vec<SmcStepRecord>,
    pub log_evidence: f64,
    /// Latent traces of the final, resampled particles.
    pub traces: Vec<Trace>,
}

/// Proposal handler shared by both variants.
struct Propose<'a> {
    observed: &'a Trace,
    existing: Option<&'a Trace>,
    seed: u64,
    keys: [u64; 2],
    log_q: f64,
    observations: usize,
    drawn: Vec<(Arc<str>, Value)>,
}

impl SampleHandler for Propose<'_> {
    fn sample(&mut self, site: &Site<'_>, _: &ProgramState) -> Result<(Value, f64), Undefined> {
        let obs = self.observed.get(site.address);
        if !obs.is_null() {
            self.observations += 1;
            return Ok((obs.clone(), site.dist.log_pdf(obs, site.args)));
        }
        if let Some(v) = self.existing.map(|t| t.get(site.address)).filter(|v| !v.is_null()) {
            return Ok((v.clone(), site.dist.log_pdf(v, site.args)));
        }
        let mut rng = keyed_rng(self.seed, &self.keys, site.address);
        let v = site.dist.sample(site.args, &mut rng).ok_or(Undefined::InvalidParams)?;
        let lp = site.dist.log_pdf(&v, site.args);
        self.log_q += lp;
        self.drawn.push((site.address.clone(), v.clone()));
        Ok((v, lp))
    }
}

fn truncated(program: &Program, size_var: &str, t: usize) -> Result<Program, SmcError> {
    program
        .with_constant(size_var, Value::Int(t as i64))
        .ok_or_else(|| SmcError::NoSizeVariable(size_var.to_string()))
}

fn log_sum_exp(w: &[f64]) -> f64 {
    let m = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + w.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Systematic resampling; returns ancestor indices and the effective sample size.
fn resample(log_w: &[f64], seed: u64, step: usize) -> Result<(Vec<usize>, f64, f64), SmcError> {
    let n = log_w.len();
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        return Err(SmcError::Degenerate(step));
    }
    let w: Vec<f64> = log_w.iter().map(|x| (x - lse).exp()).collect();
    let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
    let u0: f64 = keyed_rng(seed, &[step as u64], "\0resample").random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = w[0];
    let mut j = 0;
    for i in 0..n {
        let u = u0 + i as f64 / n as f64;
        while u > cum && j + 1 < n {
            j += 1;
            cum += w[j];
        }
        out.push(j);
    }
    Ok((out, ess, lse - (n as f64).ln()))
}

/// Re-executes the whole truncated program for every particle at every step.
pub fn smc_naive(program: &Program, size_var: &str, steps: usize, observed: &Trace, cfg: &SmcConfig) -> Result<SmcRun, SmcError> {
    struct P {
        trace: Trace,
        log_p: f64,
    }
    let mut particles: Vec<P> = (0..cfg.particles).map(|_| P { trace: Trace::new(), log_p: 0.0 }).collect();
    let mut records = Vec::with_capacity(steps);
    let mut log_evidence = 0.0;
    for t in 1..=steps {
        let prog = truncated(program, size_var, t)?;
        let graph = Cfg::build(&prog);
        let mut log_w = Vec::with_capacity(cfg.particles);
        for (n, p) in particles.iter_mut().enumerate() {
            let mut h = Propose {
                observed,
                existing: Some(&p.trace),
                seed: cfg.seed,
                keys: [t as u64, n as u64],
                log_q: 0.0,
                observations: 0,
                drawn: Vec::new(),
            };
            let st = cfg_exec_with(&graph, &mut h, ProgramState::initial(&prog), cfg.budget, None)
                .map_err(|reason| SmcError::Undefined { step: t, reason })?;
            log_w.push((st.log_density - p.log_p) - h.log_q);
            for (a, v) in h.drawn {
                p.trace.insert(a, v);
            }
            p.log_p = st.log_density;
        }
        let (anc, ess, inc) = resample(&log_w, cfg.seed, t)?;
        log_evidence += inc;
        particles = anc.iter().map(|&a| P { trace: particles[a].trace.clone(), log_p: particles[a].log_p }).collect();
        records.push(SmcStepRecord { step: t, log_weights: log_w, ess, log_evidence: inc, ancestors: anc });
    }
    Ok(SmcRun { steps: records, log_evidence, traces: particles.into_iter().map(|p| p.trace).collect() })
}

/// Shared, append-only list of drawn latents.
#[derive(Clone, Default)]
struct History(Option<Arc<(Arc<str>, Value, History)>>);

impl History {
    fn push(&self, a: Arc<str>, v: Value) -> History {
        History(Some(Arc::new((a, v, self.clone()))))
    }

    fn to_trace(&self) -> Trace {
        let mut t = Trace::new();
        let mut cur = self;
        while let Some(node) = &cur.0 {
            t.insert(node.0.clone(), node.1.clone());
            cur = &node.2;
        }
        t
    }
}

#[derive(Clone)]
struct Particle {
    state: ProgramState,
    pending: NodeId,
    finished: bool,
    observations: usize,
    history: History,
}

/// Advances paused executions from one sample statement to the next, so a
/// step only runs the code between consecutive observations.
pub fn smc_iterative(program: &Program, size_var: &str, steps: usize, observed: &Trace, cfg: &SmcConfig) -> Result<SmcRun, SmcError> {
    let prog = truncated(program, size_var, steps)?;
    let graph = Cfg::build(&prog);
    let mut slices: FxHashMap<NodeId, SmcSlicedProgram> = FxHashMap::default();
    slices.insert(graph.start, slice_for_smc(&graph, graph.start));
    for n in graph.sample_nodes() {
        slices.insert(n, slice_for_smc(&graph, n));
    }
    let init = Particle {
        state: ProgramState::initial(&prog),
        pending: graph.start,
        finished: false,
        observations: 0,
        history: History::default(),
    };
    let mut particles = vec![init; cfg.particles];
    let mut records = Vec::with_capacity(steps);
    let mut log_evidence = 0.0;
    for t in 1..=steps {
        let mut log_w = Vec::with_capacity(cfg.particles);
        for (n, p) in particles.iter_mut().enumerate() {
            let before = p.state.log_density;
            let mut h = Propose {
                observed,
                existing: None,
                seed: cfg.seed,
                keys: [t as u64, n as u64],
                log_q: 0.0,
                observations: p.observations,
                drawn: Vec::new(),
            };
            while !p.finished && !(p.pending != graph.start && h.observations >= t) {
                let stop = run_smc_slice(&graph, &slices[&p.pending], &mut p.state, &mut h, cfg.budget, None)
                    .map_err(|reason| SmcError::Undefined { step: t, reason })?;
                match stop {
                    SmcStop::Paused(m) => p.pending = m,
                    SmcStop::Finished => p.finished = true,
                }
            }
            p.observations = h.observations;
            for (a, v) in h.drawn {
                p.history = p.history.push(a, v);
            }
            log_w.push((p.state.log_density - before) - h.log_q);
        }
        let (anc, ess, inc) = resample(&log_w, cfg.seed, t)?;
        log_evidence += inc;
        particles = anc.iter().map(|&a| particles[a].clone()).collect();
        records.push(SmcStepRecord { step: t, log_weights: log_w, ess, log_evidence: inc, ancestors: anc });
    }
    Ok(SmcRun { steps: records, log_evidence, traces: particles.iter().map(|p| p.history.to_trace()).collect() })
}
