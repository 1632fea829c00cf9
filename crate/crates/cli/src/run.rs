//! `ppl run`: one inference run, streamed as JSON lines.

use std::io::Write;

use ppl_core::inference::bbvi::{Adam, Bbvi, Estimator};
use ppl_core::inference::lmh::{LmhChain, LmhVariant};
use ppl_core::inference::smc::{smc_iterative, smc_naive, SmcConfig};
use ppl_core::lang::Trace;
use ppl_core::semantics::sample_forward_with;
use serde::Serialize;

use crate::model::Loaded;
use crate::summary::Accumulator;
use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Lmh,
    LmhFast,
    Bbvi,
    BbviRb,
    Smc,
    SmcIter,
}

impl Algorithm {
    pub const ALL: [(&'static str, Algorithm); 6] = [
        ("lmh", Algorithm::Lmh),
        ("lmh-fast", Algorithm::LmhFast),
        ("bbvi", Algorithm::Bbvi),
        ("bbvi-rb", Algorithm::BbviRb),
        ("smc", Algorithm::Smc),
        ("smc-iter", Algorithm::SmcIter),
    ];

    pub fn name(self) -> &'static str {
        Algorithm::ALL.iter().find(|(_, a)| *a == self).map(|(n, _)| *n).unwrap_or("?")
    }
}

pub struct RunOptions {
    pub iterations: u64,
    pub particles: usize,
    pub samples: u64,
    pub seed: u64,
}

fn line<T: Serialize>(out: &mut dyn Write, v: &T) -> CliResult<()> {
    writeln!(out, "{}", serde_json::to_string(v).expect("serialisable"))?;
    Ok(())
}

fn model_error(name: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Model(format!("{name}: {e}"))
}

/// Latent address sets of a few prior draws differ: the model has
/// stochastic support.
fn has_stochastic_support(m: &Loaded, seed: u64) -> bool {
    let mut first: Option<Vec<String>> = None;
    for i in 0..32 {
        let mut rng = ppl_core::inference::keyed_rng(seed, &[i], "\0support");
        let Ok((t, _)) = sample_forward_with(&m.program, &m.observed, &mut rng, ppl_core::semantics::DEFAULT_STEP_BUDGET)
        else {
            continue;
        };
        let keys: Vec<String> = t.sorted_keys().iter().map(|k| k.to_string()).collect();
        match &first {
            None => first = Some(keys),
            Some(f) if *f != keys => return true,
            _ => {}
        }
    }
    false
}

pub fn run(m: &Loaded, algo: Algorithm, opts: &RunOptions, out: &mut dyn Write, summary: &mut dyn Write) -> CliResult<()> {
    let model = m.model();
    let doc = match algo {
        Algorithm::Lmh | Algorithm::LmhFast => {
            let variant = if algo == Algorithm::Lmh { LmhVariant::Baseline } else { LmhVariant::Factored };
            let entry_init = m.entry.map(|e| e.initial_trace(&m.program, &m.observed, opts.seed));
            let init = match entry_init {
                Some(r) => r.map_err(|e| model_error(&m.name, e))?,
                None => Trace::new(),
            };
            let mut chain =
                LmhChain::new(&model, variant, m.observed.clone(), &init, opts.seed).map_err(|e| model_error(&m.name, e))?;
            let mut acc = Accumulator::default();
            for _ in 0..opts.iterations {
                let r = chain.step();
                let value = chain.trace().get(&r.address).clone();
                line(
                    out,
                    &serde_json::json!({
                        "iteration": r.iteration,
                        "address": r.address,
                        "accept_prob": r.accept_prob,
                        "accepted": r.accepted,
                        "value": value,
                    }),
                )?;
                acc.add(chain.trace());
            }
            serde_json::json!({
                "model": m.name,
                "algorithm": algo.name(),
                "seed": opts.seed,
                "iterations": opts.iterations,
                "acceptance_rate": chain.stats.accepted as f64 / chain.stats.steps.max(1) as f64,
                "stats": chain.stats,
                "posterior": acc.finish(&model.cfg),
            })
        }
        Algorithm::Bbvi | Algorithm::BbviRb => {
            let compatible = match m.entry {
                Some(e) => e.manifest.bbvi,
                None => !has_stochastic_support(m, opts.seed),
            };
            if !compatible {
                return Err(CliError::Usage(format!(
                    "{}: bbvi needs every latent address to be sampled on every execution; this model has \
                     stochastic support (the set of sampled addresses varies between runs), so a fixed \
                     mean-field family does not cover its posterior",
                    m.name
                )));
            }
            let est = if algo == Algorithm::Bbvi { Estimator::Standard } else { Estimator::RaoBlackwell };
            let mut vi = Bbvi::new(&model, m.observed.clone(), opts.seed);
            let recs = vi.optimize(est, opts.iterations, opts.samples, Adam::default()).map_err(|e| model_error(&m.name, e))?;
            for r in &recs {
                line(out, r)?;
            }
            serde_json::json!({
                "model": m.name,
                "algorithm": algo.name(),
                "seed": opts.seed,
                "iterations": opts.iterations,
                "samples": opts.samples,
                "final_elbo": recs.last().map(|r| r.elbo),
                "params": vi.params,
            })
        }
        Algorithm::Smc | Algorithm::SmcIter => {
            let (Some(var), Some(steps)) = (m.size_var(), m.size()) else {
                return Err(CliError::Usage(format!("{}: smc needs a corpus model with a data-size parameter", m.name)));
            };
            let cfg = SmcConfig::new(opts.particles, opts.seed);
            let f = if algo == Algorithm::Smc { smc_naive } else { smc_iterative };
            let res = f(&m.program, var, steps.max(0) as usize, &m.observed, &cfg).map_err(|e| model_error(&m.name, e))?;
            for r in &res.steps {
                line(out, r)?;
            }
            let mut acc = Accumulator::default();
            for t in &res.traces {
                acc.add(t);
            }
            serde_json::json!({
                "model": m.name,
                "algorithm": algo.name(),
                "seed": opts.seed,
                "particles": opts.particles,
                "steps": res.steps.len(),
                "log_evidence": res.log_evidence,
                "posterior": acc.finish(&model.cfg),
            })
        }
    };
    writeln!(summary, "{}", serde_json::to_string_pretty(&doc).expect("serialisable"))?;
    Ok(())
}
