//! Exact posterior by enumerating every discrete execution path.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::lang::{DistKind, Program, Trace, Value};
use crate::semantics::{exec_with, ProgramState, SampleHandler, Site, Undefined};

#[derive(Debug, Error, PartialEq)]
pub enum EnumError {
    #[error("latent {0:?} is not finitely enumerable")]
    NotEnumerable(String),
    #[error("more than {0} execution paths")]
    TooManyPaths(usize),
    #[error("no path has positive density")]
    ZeroMass,
}

/// Normalised posterior over latent traces (observed addresses removed).
#[derive(Clone, Debug)]
pub struct Posterior {
    pub support: Vec<(Trace, f64)>,
    pub log_evidence: f64,
}

impl Posterior {
    /// Posterior mass of each value of one address; absent counts as Null.
    pub fn marginal(&self, addr: &str) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (t, p) in &self.support {
            *out.entry(t.get(addr).to_string()).or_insert(0.0) += p;
        }
        out
    }

    /// Posterior expectation of a function of the latent trace.
    pub fn expect(&self, f: impl Fn(&Trace) -> f64) -> f64 {
        self.support.iter().map(|(t, p)| p * f(t)).sum()
    }
}

fn choices(dist: DistKind, args: &[Value]) -> Option<Vec<Value>> {
    match dist {
        DistKind::Bernoulli => Some(vec![Value::Int(0), Value::Int(1)]),
        DistKind::Categorical => Some((0..args[0].as_vector()?.len() as i64).map(Value::Int).collect()),
        DistKind::DiscreteUniform => match (&args[0], &args[1]) {
            (Value::Int(a), Value::Int(b)) if b >= a => Some((*a..=*b).map(Value::Int).collect()),
            _ => None,
        },
        _ => None,
    }
}

struct Odometer<'a> {
    observed: &'a Trace,
    /// (chosen index, number of alternatives) per latent draw along the path.
    dial: Vec<(usize, usize)>,
    pos: usize,
    trace: Trace,
    blocked: Option<String>,
}

impl SampleHandler for Odometer<'_> {
    fn sample(&mut self, site: &Site<'_>, _: &ProgramState) -> Result<(Value, f64), Undefined> {
        let obs = self.observed.get(site.address);
        if !obs.is_null() {
            return Ok((obs.clone(), site.dist.log_pdf(obs, site.args)));
        }
        let Some(opts) = choices(site.dist, site.args) else {
            self.blocked = Some(site.address.to_string());
            return Err(Undefined::InvalidParams);
        };
        if self.pos == self.dial.len() {
            self.dial.push((0, opts.len()));
        }
        let v = opts[self.dial[self.pos].0].clone();
        self.pos += 1;
        self.trace.insert(site.address.clone(), v.clone());
        Ok((v.clone(), site.dist.log_pdf(&v, site.args)))
    }
}

/// Enumerates all paths of a program whose latent draws are Bernoulli,
/// Categorical or DiscreteUniform. Paths with undefined density are dropped.
pub fn enumerate(program: &Program, observed: &Trace, max_paths: usize) -> Result<Posterior, EnumError> {
    let mut dial: Vec<(usize, usize)> = Vec::new();
    let mut paths: Vec<(Trace, f64)> = Vec::new();
    loop {
        let mut h = Odometer { observed, dial, pos: 0, trace: Trace::new(), blocked: None };
        let out = exec_with(program, &mut h, ProgramState::initial(program), crate::semantics::DEFAULT_STEP_BUDGET);
        let Odometer { dial: mut d, pos, trace, blocked, .. } = h;
        if let Some(addr) = blocked {
            return Err(EnumError::NotEnumerable(addr));
        }
        if let Ok(st) = out {
            if st.log_density > f64::NEG_INFINITY {
                paths.push((trace, st.log_density));
            }
        }
        if paths.len() > max_paths {
            return Err(EnumError::TooManyPaths(max_paths));
        }
        d.truncate(pos);
        while let Some((i, n)) = d.last_mut() {
            if *i + 1 < *n {
                *i += 1;
                break;
            }
            d.pop();
        }
        if d.is_empty() {
            break;
        }
        dial = d;
    }
    let m = paths.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(EnumError::ZeroMass);
    }
    let z: f64 = paths.iter().map(|p| (p.1 - m).exp()).sum();
    let support = paths.into_iter().map(|(t, lp)| (t, (lp - m).exp() / z)).collect();
    Ok(Posterior { support, log_evidence: m + z.ln() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    #[test]
    fn two_coins_with_evidence() {
        let p = parse("a = sample(\"a\", Bernoulli(0.3))\nb = sample(\"b\", Bernoulli(a == 1 ? 0.9 : 0.2))").unwrap();
        let obs: Trace = [("b", Value::Int(1))].into_iter().collect();
        let post = enumerate(&p, &obs, 100).unwrap();
        let m = post.marginal("a");
        let z = 0.3 * 0.9 + 0.7 * 0.2;
        assert!((m["1"] - 0.27 / z).abs() < 1e-12);
        assert!((post.log_evidence - z.ln()).abs() < 1e-12);
    }

    #[test]
    fn stochastic_support_paths() {
        let p = parse("x = sample(\"x\", Bernoulli(0.5))\nif x == 1 then\n    y = sample(\"y\", DiscreteUniform(0, 2))").unwrap();
        let post = enumerate(&p, &Trace::new(), 100).unwrap();
        assert_eq!(post.support.len(), 4);
        assert!((post.marginal("y")["null"] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn continuous_is_rejected() {
        let p = parse("x = sample(\"x\", Normal(0, 1))").unwrap();
        assert!(matches!(enumerate(&p, &Trace::new(), 10), Err(EnumError::NotEnumerable(_))));
    }
}
