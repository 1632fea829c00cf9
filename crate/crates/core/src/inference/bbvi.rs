//! Score-function variational inference with a mean-field family, plain
//! and Rao-Blackwellised by factor slices.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Beta as BetaD, Distribution};
use serde::Serialize;
use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

use super::keyed_rng;
use crate::analysis::Model;
use crate::cfg::{cfg_exec_with, NodeId};
use crate::lang::{DistKind, Trace, Value};
use crate::semantics::dist::{normal_lpdf, sample_dirichlet, standard_normal};
use crate::semantics::{ProgramState, Role, SampleHandler, Site, Undefined, DEFAULT_STEP_BUDGET};
use crate::slicer::{all_factor_slices, run_factor_slice, SlicedProgram};

/// Variational family attached to one address.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// Mean and log standard deviation.
    Normal,
    /// Normal on the log of a positive value.
    LogNormal,
    /// Logit.
    Bernoulli,
    /// Softmax logits over `offset .. offset + k`.
    Softmax { offset: i64, k: usize },
    /// Log rate.
    Poisson,
    /// Beta with log concentrations, stretched onto `[lo, hi]`.
    ScaledBeta { lo: f64, hi: f64 },
    /// Log concentrations.
    Dirichlet { k: usize },
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(theta: &[f64]) -> Vec<f64> {
    let m = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = theta.iter().map(|t| (t - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

impl Family {
    /// Family and starting parameters for a sample statement. Discrete
    /// families start uniform; the others start at the prior they were first
    /// seen with.
    pub fn for_site(dist: DistKind, args: &[Value]) -> Option<(Family, Vec<f64>)> {
        let f = |i: usize| args.get(i).and_then(Value::as_f64).filter(|x| x.is_finite());
        Some(match dist {
            DistKind::Normal => {
                let (mu, s) = (f(0)?, f(1)?);
                (Family::Normal, vec![mu, s.ln()])
            }
            DistKind::Gamma | DistKind::InverseGamma | DistKind::Exponential => (Family::LogNormal, vec![0.0, 0.0]),
            DistKind::Bernoulli => (Family::Bernoulli, vec![0.0]),
            DistKind::Categorical => {
                let k = args[0].as_vector()?.len();
                (Family::Softmax { offset: 0, k }, vec![0.0; k])
            }
            DistKind::DiscreteUniform => {
                let (a, b) = (args[0].as_int()?, args[1].as_int()?);
                let k = usize::try_from(b - a + 1).ok()?;
                (Family::Softmax { offset: a, k }, vec![0.0; k])
            }
            DistKind::Poisson => (Family::Poisson, vec![f(0)?.max(1e-6).ln()]),
            DistKind::Beta => (Family::ScaledBeta { lo: 0.0, hi: 1.0 }, vec![0.0, 0.0]),
            DistKind::Uniform => (Family::ScaledBeta { lo: f(0)?, hi: f(1)? }, vec![0.0, 0.0]),
            DistKind::Dirichlet => {
                let a = args[0].as_vector()?;
                (Family::Dirichlet { k: a.len() }, a.iter().map(|x| x.ln()).collect())
            }
        })
    }

    pub fn arity(&self) -> usize {
        match self {
            Family::Bernoulli | Family::Poisson => 1,
            Family::Normal | Family::LogNormal | Family::ScaledBeta { .. } => 2,
            Family::Softmax { k, .. } | Family::Dirichlet { k } => *k,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, p: &[f64], rng: &mut R) -> Value {
        match self {
            Family::Normal => Value::Real(p[0] + p[1].exp() * standard_normal(rng)),
            Family::LogNormal => Value::Real((p[0] + p[1].exp() * standard_normal(rng)).exp()),
            Family::Bernoulli => Value::Int((rng.random::<f64>() < sigmoid(p[0])) as i64),
            Family::Softmax { offset, .. } => {
                let w = softmax(p);
                let mut u = rng.random::<f64>();
                let mut k = w.len() - 1;
                for (i, x) in w.iter().enumerate() {
                    if u < *x {
                        k = i;
                        break;
                    }
                    u -= x;
                }
                Value::Int(offset + k as i64)
            }
            Family::Poisson => {
                let lambda = p[0].exp();
                let d = rand_distr::Poisson::new(lambda).expect("positive rate");
                Value::Int(d.sample(rng) as i64)
            }
            Family::ScaledBeta { lo, hi } => {
                let d = BetaD::new(p[0].exp(), p[1].exp()).expect("positive concentrations");
                let u: f64 = d.sample(rng);
                let u = u.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
                Value::Real(lo + (hi - lo) * u)
            }
            Family::Dirichlet { .. } => {
                let a: Vec<f64> = p.iter().map(|x| x.exp()).collect();
                Value::vector(sample_dirichlet(&a, rng).expect("positive concentrations"))
            }
        }
    }

    pub fn log_q(&self, p: &[f64], z: &Value) -> f64 {
        match self {
            Family::Normal => normal_lpdf(z.as_f64().unwrap_or(f64::NAN), p[0], p[1].exp()),
            Family::LogNormal => {
                let y = z.as_f64().unwrap_or(f64::NAN).ln();
                normal_lpdf(y, p[0], p[1].exp()) - y
            }
            Family::Bernoulli => {
                let q = sigmoid(p[0]);
                if z.as_int() == Some(1) {
                    q.ln()
                } else {
                    (1.0 - q).ln()
                }
            }
            Family::Softmax { offset, .. } => {
                let w = softmax(p);
                let i = (z.as_int().unwrap_or(i64::MIN) - offset) as usize;
                w.get(i).map_or(f64::NEG_INFINITY, |x| x.ln())
            }
            Family::Poisson => {
                let k = z.as_int().unwrap_or(0) as f64;
                k * p[0] - p[0].exp() - ln_gamma(k + 1.0)
            }
            Family::ScaledBeta { lo, hi } => {
                let u = (z.as_f64().unwrap_or(f64::NAN) - lo) / (hi - lo);
                let (a, b) = (p[0].exp(), p[1].exp());
                (a - 1.0) * u.ln() + (b - 1.0) * (1.0 - u).ln() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
                    - (hi - lo).ln()
            }
            Family::Dirichlet { .. } => {
                let x = z.as_vector().unwrap_or(&[]);
                let a: Vec<f64> = p.iter().map(|t| t.exp()).collect();
                let total: f64 = a.iter().sum();
                ln_gamma(total) + a.iter().zip(x).map(|(ai, xi)| (ai - 1.0) * xi.ln() - ln_gamma(*ai)).sum::<f64>()
            }
        }
    }

    /// Gradient of `log_q` with respect to the parameters.
    pub fn grad_log_q(&self, p: &[f64], z: &Value) -> Vec<f64> {
        match self {
            Family::Normal | Family::LogNormal => {
                let mut x = z.as_f64().unwrap_or(f64::NAN);
                if *self == Family::LogNormal {
                    x = x.ln();
                }
                let s2 = (2.0 * p[1]).exp();
                let d = x - p[0];
                vec![d / s2, d * d / s2 - 1.0]
            }
            Family::Bernoulli => vec![z.as_int().unwrap_or(0) as f64 - sigmoid(p[0])],
            Family::Softmax { offset, .. } => {
                let mut g: Vec<f64> = softmax(p).into_iter().map(|w| -w).collect();
                let i = (z.as_int().unwrap_or(i64::MIN) - offset) as usize;
                if let Some(x) = g.get_mut(i) {
                    *x += 1.0;
                }
                g
            }
            Family::Poisson => vec![z.as_int().unwrap_or(0) as f64 - p[0].exp()],
            Family::ScaledBeta { lo, hi } => {
                let u = (z.as_f64().unwrap_or(f64::NAN) - lo) / (hi - lo);
                let (a, b) = (p[0].exp(), p[1].exp());
                let ab = digamma(a + b);
                vec![a * (u.ln() - digamma(a) + ab), b * ((1.0 - u).ln() - digamma(b) + ab)]
            }
            Family::Dirichlet { .. } => {
                let x = z.as_vector().unwrap_or(&[]);
                let a: Vec<f64> = p.iter().map(|t| t.exp()).collect();
                let dt = digamma(a.iter().sum());
                a.iter().zip(x).map(|(ai, xi)| ai * (dt - digamma(*ai) + xi.ln())).collect()
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QParam {
    #[serde(flatten)]
    pub family: Family,
    pub params: Vec<f64>,
}

/// Mean-field parameters by address; addresses are added when first seen.
#[derive(Clone, Debug, Default, Serialize)]
pub struct VariationalParams {
    pub entries: BTreeMap<Arc<str>, QParam>,
}

#[derive(Debug, Error)]
pub enum BbviError {
    #[error("execution under the variational distribution is undefined: {0}")]
    Undefined(#[from] Undefined),
    #[error("no variational family for address {0:?}")]
    NoFamily(String),
    #[error("address {0:?} occurs more than once in one execution")]
    Repeated(String),
    #[error("parameter of {address:?} became non-finite at step {step}")]
    Diverged { address: String, step: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Standard,
    RaoBlackwell,
}

struct DrawEntry {
    addr: Arc<str>,
    log_q: f64,
    grad: Vec<f64>,
    checkpoint: (ProgramState, NodeId),
}

/// One execution with latents drawn from the variational distribution.
struct Draw {
    trace: Trace,
    log_p: f64,
    entries: Vec<DrawEntry>,
}

struct DrawCtx<'a> {
    params: &'a mut VariationalParams,
    observed: &'a Trace,
    seed: u64,
    indices: [u64; 2],
    trace: Trace,
    entries: Vec<DrawEntry>,
    error: Option<BbviError>,
}

impl SampleHandler for DrawCtx<'_> {
    fn sample(&mut self, site: &Site<'_>, st: &ProgramState) -> Result<(Value, f64), Undefined> {
        let obs = self.observed.get(site.address);
        if !obs.is_null() {
            return Ok((obs.clone(), site.dist.log_pdf(obs, site.args)));
        }
        if self.trace.contains(site.address) {
            self.error = Some(BbviError::Repeated(site.address.to_string()));
            return Err(Undefined::NullTraceValue);
        }
        if !self.params.entries.contains_key(site.address) {
            let Some((family, params)) = Family::for_site(site.dist, site.args) else {
                self.error = Some(BbviError::NoFamily(site.address.to_string()));
                return Err(Undefined::InvalidParams);
            };
            self.params.entries.insert(site.address.clone(), QParam { family, params });
        }
        let q = &self.params.entries[site.address];
        let mut rng = keyed_rng(self.seed, &self.indices, site.address);
        let z = q.family.sample(&q.params, &mut rng);
        let log_q = q.family.log_q(&q.params, &z);
        let grad = q.family.grad_log_q(&q.params, &z);
        self.entries.push(DrawEntry {
            addr: site.address.clone(),
            log_q,
            grad,
            checkpoint: (st.clone(), site.node.expect("graph execution")),
        });
        self.trace.insert(site.address.clone(), z.clone());
        Ok((z.clone(), site.dist.log_pdf(&z, site.args)))
    }
}

/// Replays a slice on a drawn trace: the origin adds its log density minus
/// its log q, dependents add their log density, reads add nothing.
struct SliceCtx<'a> {
    trace: &'a Trace,
    observed: &'a Trace,
    log_q: f64,
}

impl SampleHandler for SliceCtx<'_> {
    fn sample(&mut self, site: &Site<'_>, _: &ProgramState) -> Result<(Value, f64), Undefined> {
        let mut v = self.observed.get(site.address);
        if v.is_null() {
            v = self.trace.get(site.address);
        }
        if v.is_null() {
            return Err(Undefined::NullTraceValue);
        }
        let lp = match site.role {
            Role::Read => 0.0,
            Role::Visit => site.dist.log_pdf(v, site.args) - self.log_q,
            _ => site.dist.log_pdf(v, site.args),
        };
        Ok((v.clone(), lp))
    }
}

/// Per-address gradient terms of one draw, in draw order.
type Terms = Vec<(Arc<str>, Vec<f64>)>;

/// Running (sum, sum of squares) per parameter component.
type Moments = BTreeMap<(Arc<str>, usize), (f64, f64)>;

/// Gradient estimates keyed by address.
pub type Gradient = BTreeMap<Arc<str>, Vec<f64>>;

pub struct Bbvi<'m> {
    model: &'m Model,
    observed: Trace,
    slices: Vec<Option<SlicedProgram>>,
    pub params: VariationalParams,
    seed: u64,
    budget: u64,
}

impl<'m> Bbvi<'m> {
    pub fn new(model: &'m Model, observed: Trace, seed: u64) -> Bbvi<'m> {
        Bbvi {
            model,
            observed,
            slices: all_factor_slices(model),
            params: VariationalParams::default(),
            seed,
            budget: DEFAULT_STEP_BUDGET,
        }
    }

    fn draw(&mut self, indices: [u64; 2]) -> Result<Draw, BbviError> {
        let mut ctx = DrawCtx {
            params: &mut self.params,
            observed: &self.observed,
            seed: self.seed,
            indices,
            trace: Trace::new(),
            entries: Vec::new(),
            error: None,
        };
        let model = self.model;
        match cfg_exec_with(&model.cfg, &mut ctx, ProgramState::initial(&model.program), self.budget, None) {
            Ok(st) => Ok(Draw { trace: ctx.trace, log_p: st.log_density, entries: ctx.entries }),
            Err(e) => Err(ctx.error.take().unwrap_or(BbviError::Undefined(e))),
        }
    }

    /// Per-address score-function terms of one draw.
    fn terms(&self, d: &Draw, estimator: Estimator) -> Result<Terms, BbviError> {
        let log_q: f64 = d.entries.iter().map(|e| e.log_q).sum();
        let mut out = Vec::with_capacity(d.entries.len());
        for e in &d.entries {
            let weight = match estimator {
                Estimator::Standard => d.log_p - log_q,
                Estimator::RaoBlackwell => {
                    let (cp, node) = &e.checkpoint;
                    let slice = self.slices[*node].as_ref().expect("slice for every sample node");
                    let mut start = cp.clone();
                    start.log_density = 0.0;
                    let mut h = SliceCtx { trace: &d.trace, observed: &self.observed, log_q: e.log_q };
                    run_factor_slice(&self.model.cfg, slice, start, &mut h, self.budget)?.log_density
                }
            };
            out.push((e.addr.clone(), e.grad.iter().map(|g| g * weight).collect()));
        }
        Ok(out)
    }

    /// Average of `samples` single-draw estimates; parameters of addresses
    /// absent from a draw receive zero from it.
    pub fn gradient(&mut self, estimator: Estimator, samples: u64, step: u64) -> Result<Gradient, BbviError> {
        let mut sum = Gradient::new();
        for s in 0..samples {
            let d = self.draw([step, s])?;
            for (a, g) in self.terms(&d, estimator)? {
                let acc = sum.entry(a).or_insert_with(|| vec![0.0; g.len()]);
                acc.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
            }
        }
        for g in sum.values_mut() {
            g.iter_mut().for_each(|x| *x /= samples as f64);
        }
        Ok(sum)
    }

    /// Variance of single-draw estimates per parameter component, averaged
    /// over components, for both estimators on the same draws.
    pub fn variance_report(&mut self, estimates: u64, step: u64) -> Result<VarianceReport, BbviError> {
        let mut acc: [Moments; 2] = Default::default();
        for m in 0..estimates {
            let d = self.draw([step, m])?;
            for (slot, est) in [Estimator::Standard, Estimator::RaoBlackwell].into_iter().enumerate() {
                for (a, g) in self.terms(&d, est)? {
                    for (i, x) in g.into_iter().enumerate() {
                        let e = acc[slot].entry((a.clone(), i)).or_default();
                        e.0 += x;
                        e.1 += x * x;
                    }
                }
            }
        }
        let n = estimates as f64;
        let avg = |m: &Moments| {
            let v: Vec<f64> =
                m.values().map(|(s, s2)| ((s2 - s * s / n) / (n - 1.0).max(1.0)).max(0.0)).collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let (standard, rao) = (avg(&acc[0]), avg(&acc[1]));
        Ok(VarianceReport { estimates, standard, rao, reduction: standard / rao })
    }

    /// Stochastic gradient ascent on the evidence lower bound with Adam.
    pub fn optimize(&mut self, estimator: Estimator, steps: u64, samples: u64, adam: Adam) -> Result<Vec<BbviRecord>, BbviError> {
        let mut m: BTreeMap<Arc<str>, Vec<f64>> = BTreeMap::new();
        let mut v: BTreeMap<Arc<str>, Vec<f64>> = BTreeMap::new();
        let mut records = Vec::with_capacity(steps as usize);
        for t in 1..=steps {
            let mut sum = Gradient::new();
            let mut sq = Gradient::new();
            let mut elbo = 0.0;
            for s in 0..samples {
                let d = self.draw([t, s])?;
                elbo += d.log_p - d.entries.iter().map(|e| e.log_q).sum::<f64>();
                for (a, g) in self.terms(&d, estimator)? {
                    let acc = sum.entry(a.clone()).or_insert_with(|| vec![0.0; g.len()]);
                    acc.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    let acc = sq.entry(a).or_insert_with(|| vec![0.0; g.len()]);
                    acc.iter_mut().zip(&g).for_each(|(x, y)| *x += y * y);
                }
            }
            let n = samples as f64;
            let mut var_total = 0.0;
            let mut comps = 0usize;
            for (a, g) in &sum {
                let g2 = &sq[a];
                let q = self.params.entries.get_mut(a).expect("drawn addresses have parameters");
                let mm = m.entry(a.clone()).or_insert_with(|| vec![0.0; g.len()]);
                let vv = v.entry(a.clone()).or_insert_with(|| vec![0.0; g.len()]);
                for i in 0..g.len() {
                    let mean = g[i] / n;
                    var_total += ((g2[i] / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
                    comps += 1;
                    mm[i] = adam.beta1 * mm[i] + (1.0 - adam.beta1) * mean;
                    vv[i] = adam.beta2 * vv[i] + (1.0 - adam.beta2) * mean * mean;
                    let mhat = mm[i] / (1.0 - adam.beta1.powi(t as i32));
                    let vhat = vv[i] / (1.0 - adam.beta2.powi(t as i32));
                    q.params[i] += adam.step * mhat / (vhat.sqrt() + adam.eps);
                    if !q.params[i].is_finite() {
                        return Err(BbviError::Diverged { address: a.to_string(), step: t });
                    }
                }
            }
            records.push(BbviRecord {
                iteration: t,
                elbo: elbo / n,
                grad_variance: if comps == 0 { 0.0 } else { var_total / comps as f64 },
            });
        }
        Ok(records)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Adam {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { step: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BbviRecord {
    pub iteration: u64,
    pub elbo: f64,
    /// Sample variance of the per-draw gradient, averaged over components.
    pub grad_variance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VarianceReport {
    pub estimates: u64,
    pub standard: f64,
    pub rao: f64,
    pub reduction: f64,
}
