//! Distribution registry: log densities and samplers.
//!
//! Conventions: Bernoulli, Poisson, Categorical (0-based) and
//! DiscreteUniform produce `Int`; Dirichlet produces a `Vector`; everything
//! else produces `Real`. Gamma is (shape, rate), InverseGamma is
//! (shape, scale), Exponential takes a rate. Interval supports are closed.
//! Invalid parameters give a log density of negative infinity and no sample.

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaD, Normal as NormalD, Poisson as PoissonD, StandardNormal};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::lang::{DistKind, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    Real,
    NonnegReal,
    UnitInterval,
    Interval,
    Integer,
    BoolAsInt,
    Simplex,
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SIMPLEX_TOL: f64 = 1e-9;

fn num(v: &Value) -> Option<f64> {
    v.as_f64().filter(|x| x.is_finite())
}

fn int_of(v: &Value) -> Option<i64> {
    v.as_int()
}

pub fn normal_lpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
}

impl DistKind {
    pub fn support(self) -> Support {
        match self {
            DistKind::Normal => Support::Real,
            DistKind::Uniform => Support::Interval,
            DistKind::Bernoulli => Support::BoolAsInt,
            DistKind::Poisson | DistKind::Categorical | DistKind::DiscreteUniform => Support::Integer,
            DistKind::InverseGamma | DistKind::Gamma | DistKind::Exponential => Support::NonnegReal,
            DistKind::Beta => Support::UnitInterval,
            DistKind::Dirichlet => Support::Simplex,
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(self.support(), Support::Integer | Support::BoolAsInt)
    }

    /// Log density (or mass) of `x` under parameters `args`.
    pub fn log_pdf(self, x: &Value, args: &[Value]) -> f64 {
        self.try_log_pdf(x, args).unwrap_or(f64::NEG_INFINITY)
    }

    fn try_log_pdf(self, x: &Value, args: &[Value]) -> Option<f64> {
        const NEG: f64 = f64::NEG_INFINITY;
        if args.len() != self.arity() {
            return None;
        }
        Some(match self {
            DistKind::Normal => {
                let (mu, sigma) = (num(&args[0])?, num(&args[1])?);
                if sigma <= 0.0 {
                    return None;
                }
                normal_lpdf(num(x)?, mu, sigma)
            }
            DistKind::Uniform => {
                let (a, b) = (num(&args[0])?, num(&args[1])?);
                if a >= b {
                    return None;
                }
                let x = num(x)?;
                if (a..=b).contains(&x) {
                    -(b - a).ln()
                } else {
                    NEG
                }
            }
            DistKind::Bernoulli => {
                let p = num(&args[0])?;
                if !(0.0..=1.0).contains(&p) {
                    return None;
                }
                match int_of(x)? {
                    1 => p.ln(),
                    0 => (1.0 - p).ln(),
                    _ => NEG,
                }
            }
            DistKind::Poisson => {
                let lam = num(&args[0])?;
                if lam < 0.0 {
                    return None;
                }
                let k = int_of(x)?;
                if k < 0 {
                    NEG
                } else if lam == 0.0 {
                    if k == 0 {
                        0.0
                    } else {
                        NEG
                    }
                } else {
                    k as f64 * lam.ln() - lam - ln_gamma(k as f64 + 1.0)
                }
            }
            DistKind::InverseGamma => {
                let (a, b) = (num(&args[0])?, num(&args[1])?);
                if a <= 0.0 || b <= 0.0 {
                    return None;
                }
                let x = num(x)?;
                if x <= 0.0 {
                    NEG
                } else {
                    a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
                }
            }
            DistKind::Gamma => {
                let (a, b) = (num(&args[0])?, num(&args[1])?);
                if a <= 0.0 || b <= 0.0 {
                    return None;
                }
                let x = num(x)?;
                if x < 0.0 || (x == 0.0 && a < 1.0) {
                    NEG
                } else if x == 0.0 {
                    if a == 1.0 {
                        b.ln()
                    } else {
                        NEG
                    }
                } else {
                    a * b.ln() - ln_gamma(a) + (a - 1.0) * x.ln() - b * x
                }
            }
            DistKind::Beta => {
                let (a, b) = (num(&args[0])?, num(&args[1])?);
                if a <= 0.0 || b <= 0.0 {
                    return None;
                }
                let x = num(x)?;
                if !(0.0..=1.0).contains(&x) {
                    NEG
                } else {
                    let v = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln();
                    if v.is_nan() {
                        NEG
                    } else {
                        v
                    }
                }
            }
            DistKind::Exponential => {
                let rate = num(&args[0])?;
                if rate <= 0.0 {
                    return None;
                }
                let x = num(x)?;
                if x < 0.0 {
                    NEG
                } else {
                    rate.ln() - rate * x
                }
            }
            DistKind::Categorical => {
                let p = args[0].as_vector()?;
                let total = weights_total(p)?;
                let k = int_of(x)?;
                if k < 0 || k as usize >= p.len() {
                    NEG
                } else {
                    (p[k as usize] / total).ln()
                }
            }
            DistKind::Dirichlet => {
                let alpha = args[0].as_vector()?;
                if alpha.is_empty() || alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                    return None;
                }
                let x = x.as_vector()?;
                if x.len() != alpha.len()
                    || x.iter().any(|v| !(0.0..=1.0).contains(v))
                    || (x.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL
                {
                    return Some(NEG);
                }
                let a0: f64 = alpha.iter().sum();
                let mut lp = ln_gamma(a0);
                for (a, v) in alpha.iter().zip(x) {
                    lp += (a - 1.0) * v.ln() - ln_gamma(*a);
                }
                if lp.is_nan() {
                    NEG
                } else {
                    lp
                }
            }
            DistKind::DiscreteUniform => {
                let (a, b) = (int_of(&args[0])?, int_of(&args[1])?);
                if a > b {
                    return None;
                }
                let k = int_of(x)?;
                if (a..=b).contains(&k) {
                    -((b - a) as f64 + 1.0).ln()
                } else {
                    NEG
                }
            }
        })
    }

    /// Draws a value, or `None` when the parameters are invalid.
    pub fn sample<R: Rng + ?Sized>(self, args: &[Value], rng: &mut R) -> Option<Value> {
        if args.len() != self.arity() {
            return None;
        }
        Some(match self {
            DistKind::Normal => {
                let (mu, sigma) = (num(&args[0])?, num(&args[1])?);
                Value::Real(NormalD::new(mu, sigma).ok().filter(|_| sigma > 0.0)?.sample(rng))
            }
            DistKind::Uniform => {
                let (a, b) = (num(&args[0])?, num(&args[1])?);
                if a >= b {
                    return None;
                }
                Value::Real(a + (b - a) * rng.random::<f64>())
            }
            DistKind::Bernoulli => {
                let p = num(&args[0])?;
                if !(0.0..=1.0).contains(&p) {
                    return None;
                }
                Value::Int((rng.random::<f64>() < p) as i64)
            }
            DistKind::Poisson => {
                let lam = num(&args[0])?;
                if lam < 0.0 {
                    return None;
                }
                if lam == 0.0 {
                    return Some(Value::Int(0));
                }
                let k: f64 = PoissonD::new(lam).ok()?.sample(rng);
                Value::Int(k as i64)
            }
            DistKind::InverseGamma => {
                let (a, b) = (num(&args[0])?, num(&args[1])?);
                if a <= 0.0 || b <= 0.0 {
                    return None;
                }
                let g: f64 = GammaD::new(a, 1.0 / b).ok()?.sample(rng);
                Value::Real(1.0 / g)
            }
            DistKind::Gamma => {
                let (a, b) = (num(&args[0])?, num(&args[1])?);
                if a <= 0.0 || b <= 0.0 {
                    return None;
                }
                Value::Real(GammaD::new(a, 1.0 / b).ok()?.sample(rng))
            }
            DistKind::Beta => {
                let (a, b) = (num(&args[0])?, num(&args[1])?);
                if a <= 0.0 || b <= 0.0 {
                    return None;
                }
                let x: f64 = GammaD::new(a, 1.0).ok()?.sample(rng);
                let y: f64 = GammaD::new(b, 1.0).ok()?.sample(rng);
                Value::Real(x / (x + y))
            }
            DistKind::Exponential => {
                let rate = num(&args[0])?;
                if rate <= 0.0 {
                    return None;
                }
                let u: f64 = rng.random();
                Value::Real(-(1.0 - u).ln() / rate)
            }
            DistKind::Categorical => {
                let p = args[0].as_vector()?;
                let total = weights_total(p)?;
                let mut u = rng.random::<f64>() * total;
                let mut k = p.len() - 1;
                for (i, w) in p.iter().enumerate() {
                    if u < *w {
                        k = i;
                        break;
                    }
                    u -= w;
                }
                // Never land on a zero-weight tail entry through rounding.
                while p[k] == 0.0 && k > 0 {
                    k -= 1;
                }
                Value::Int(k as i64)
            }
            DistKind::Dirichlet => {
                let alpha = args[0].as_vector()?;
                if alpha.is_empty() || alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                    return None;
                }
                Value::vector(sample_dirichlet(alpha, rng)?)
            }
            DistKind::DiscreteUniform => {
                let (a, b) = (int_of(&args[0])?, int_of(&args[1])?);
                if a > b {
                    return None;
                }
                Value::Int(rng.random_range(a..=b))
            }
        })
    }
}

fn weights_total(p: &[f64]) -> Option<f64> {
    if p.is_empty() || p.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return None;
    }
    let total: f64 = p.iter().sum();
    (total > 0.0).then_some(total)
}

pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Option<Vec<f64>> {
    let mut g = Vec::with_capacity(alpha.len());
    for a in alpha {
        let x: f64 = GammaD::new(*a, 1.0).ok()?.sample(rng);
        g.push(x.max(f64::MIN_POSITIVE));
    }
    let total: f64 = g.iter().sum();
    let mut out: Vec<f64> = g.iter().map(|x| x / total).collect();
    // Renormalise so the entries sum to one within rounding.
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= s);
    Some(out)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
