//! `ppl bench`: baseline against factored variants on matched seeds.
//!
//! Times are monotonic-clock deltas. LMH is timed per iteration with the
//! first tenth of each chain treated as warm-up; BBVI and SMC are timed per
//! run. Speed-up is baseline time over optimised time.

use std::time::Instant;

use ppl_core::analysis::Model;
use ppl_core::corpus::{self, CorpusModel};
use ppl_core::inference::bbvi::{Bbvi, Estimator};
use ppl_core::inference::lmh::{LmhChain, LmhVariant, StepRecord};
use ppl_core::inference::smc::{smc_iterative, smc_naive, SmcConfig};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Lmh,
    Bbvi,
    Smc,
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub reps: u64,
    pub seed: u64,
    /// LMH steps per chain.
    pub iterations: u64,
    pub particles: usize,
    /// Single-draw gradient estimates per BBVI repetition.
    pub estimates: u64,
    /// Restrict to these corpus models.
    pub models: Vec<String>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { reps: 3, seed: 1, iterations: 10_000, particles: 100, estimates: 1000, models: Vec::new() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub mean_us: f64,
    pub median_us: f64,
}

impl Timing {
    fn of(mut xs: Vec<f64>) -> Timing {
        xs.sort_by(f64::total_cmp);
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let median = if xs.is_empty() { 0.0 } else { xs[xs.len() / 2] };
        Timing { mean_us: mean * 1e6, median_us: median * 1e6 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LmhCell {
    pub model: String,
    pub latents: usize,
    pub iterations: u64,
    pub baseline: Timing,
    pub factored: Timing,
    pub speedup: f64,
    pub median_speedup: f64,
    pub acceptance_rate: f64,
    /// Acceptance probabilities within 1e-12 and identical traces at every step.
    pub exact_match: bool,
    pub max_accept_diff: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BbviCell {
    pub model: String,
    pub estimates: u64,
    pub standard_variance: f64,
    pub rao_variance: f64,
    pub reduction: f64,
    /// Runtime of the improved estimator relative to the standard one.
    pub cost: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SmcCell {
    pub model: String,
    pub particles: usize,
    pub steps: usize,
    pub naive: Timing,
    pub iterative: Timing,
    pub speedup: f64,
    pub weights_equal: bool,
    pub mean_ess: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Lmh(LmhCell),
    Bbvi(BbviCell),
    Smc(SmcCell),
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub model: String,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub suite: &'static str,
    pub seed: u64,
    pub repetitions: u64,
    pub cells: Vec<Cell>,
    pub failures: Vec<Failure>,
}

fn timed_chain(chain: &mut LmhChain<'_>, n: u64) -> (Vec<StepRecord>, Vec<f64>) {
    let mut recs = Vec::with_capacity(n as usize);
    let mut dt = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let t = Instant::now();
        let r = chain.step();
        dt.push(t.elapsed().as_secs_f64());
        recs.push(r);
    }
    (recs, dt)
}

pub fn lmh_cell(entry: &CorpusModel, opts: &BenchOptions) -> Result<LmhCell, String> {
    let (program, data) = entry.instance(None);
    let model = Model::new(program);
    let warm = (opts.iterations / 10) as usize;
    let (mut tb, mut tf) = (Vec::new(), Vec::new());
    let (mut exact, mut max_diff, mut accepted, mut latents) = (true, 0.0f64, 0u64, 0);
    for r in 0..opts.reps {
        let seed = opts.seed.wrapping_add(r);
        let init = entry.initial_trace(&model.program, &data, seed).map_err(|e| e.to_string())?;
        let mut base = LmhChain::new(&model, LmhVariant::Baseline, data.clone(), &init, seed).map_err(|e| e.to_string())?;
        let mut fact = LmhChain::new(&model, LmhVariant::Factored, data.clone(), &init, seed).map_err(|e| e.to_string())?;
        latents = base.keys().len();
        let (rb, db) = timed_chain(&mut base, opts.iterations);
        let (rf, df) = timed_chain(&mut fact, opts.iterations);
        for (a, b) in rb.iter().zip(&rf) {
            let d = (a.accept_prob - b.accept_prob).abs();
            if d.is_nan() || a.accepted != b.accepted || a.address != b.address {
                exact = false;
            } else {
                max_diff = max_diff.max(d);
            }
        }
        exact &= base.trace().identical(fact.trace()) && max_diff <= 1e-12;
        accepted += base.stats.accepted;
        tb.extend_from_slice(&db[warm..]);
        tf.extend_from_slice(&df[warm..]);
    }
    let (baseline, factored) = (Timing::of(tb), Timing::of(tf));
    Ok(LmhCell {
        model: entry.manifest.name.clone(),
        latents,
        iterations: opts.iterations,
        speedup: baseline.mean_us / factored.mean_us,
        median_speedup: baseline.median_us / factored.median_us,
        baseline,
        factored,
        acceptance_rate: accepted as f64 / (opts.iterations * opts.reps).max(1) as f64,
        exact_match: exact,
        max_accept_diff: max_diff,
    })
}

pub fn bbvi_cell(entry: &CorpusModel, opts: &BenchOptions) -> Result<BbviCell, String> {
    let (program, data) = entry.instance(None);
    let model = Model::new(program);
    let (mut sv, mut rv, mut ts, mut tr) = (0.0, 0.0, 0.0, 0.0);
    for r in 0..opts.reps {
        let seed = opts.seed.wrapping_add(r);
        let mut vi = Bbvi::new(&model, data.clone(), seed);
        let rep = vi.variance_report(opts.estimates, 0).map_err(|e| e.to_string())?;
        sv += rep.standard;
        rv += rep.rao;
        for (est, acc) in [(Estimator::Standard, &mut ts), (Estimator::RaoBlackwell, &mut tr)] {
            let t = Instant::now();
            vi.gradient(est, opts.estimates, 1).map_err(|e| e.to_string())?;
            *acc += t.elapsed().as_secs_f64();
        }
    }
    Ok(BbviCell {
        model: entry.manifest.name.clone(),
        estimates: opts.estimates,
        standard_variance: sv / opts.reps as f64,
        rao_variance: rv / opts.reps as f64,
        reduction: sv / rv,
        cost: tr / ts,
    })
}

pub fn smc_cell(entry: &CorpusModel, opts: &BenchOptions) -> Result<SmcCell, String> {
    let (program, data) = entry.instance(None);
    let var = entry.manifest.size_var.as_deref().ok_or("no size parameter")?;
    let steps = program.constant(var).and_then(|v| v.as_int()).ok_or("size parameter is not an integer")? as usize;
    let (mut tn, mut ti) = (Vec::new(), Vec::new());
    let (mut equal, mut ess, mut ess_n) = (true, 0.0, 0usize);
    for r in 0..opts.reps {
        let cfg = SmcConfig::new(opts.particles, opts.seed.wrapping_add(r));
        let t = Instant::now();
        let a = smc_naive(&program, var, steps, &data, &cfg).map_err(|e| e.to_string())?;
        tn.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        let b = smc_iterative(&program, var, steps, &data, &cfg).map_err(|e| e.to_string())?;
        ti.push(t.elapsed().as_secs_f64());
        equal &= a.steps.len() == b.steps.len()
            && a.steps.iter().zip(&b.steps).all(|(x, y)| {
                x.ancestors == y.ancestors
                    && x.log_weights.len() == y.log_weights.len()
                    && x.log_weights.iter().zip(&y.log_weights).all(|(u, v)| u.to_bits() == v.to_bits())
            });
        for s in &b.steps {
            ess += s.ess;
            ess_n += 1;
        }
    }
    let (naive, iterative) = (Timing::of(tn), Timing::of(ti));
    Ok(SmcCell {
        model: entry.manifest.name.clone(),
        particles: opts.particles,
        steps,
        speedup: naive.mean_us / iterative.mean_us,
        naive,
        iterative,
        weights_equal: equal,
        mean_ess: ess / ess_n.max(1) as f64,
    })
}

fn selected(opts: &BenchOptions, keep: impl Fn(&CorpusModel) -> bool) -> Vec<&'static CorpusModel> {
    corpus::all()
        .iter()
        .filter(|m| opts.models.is_empty() || opts.models.contains(&m.manifest.name))
        .filter(|m| keep(m))
        .collect()
}

pub fn bench(suite: Suite, opts: &BenchOptions) -> BenchReport {
    let (name, models): (&'static str, Vec<&'static CorpusModel>) = match suite {
        Suite::Lmh => ("lmh", selected(opts, |_| true)),
        Suite::Bbvi => ("bbvi", selected(opts, |m| m.manifest.bbvi)),
        Suite::Smc => ("smc", selected(opts, |m| m.manifest.smc)),
    };
    let mut report = BenchReport { suite: name, seed: opts.seed, repetitions: opts.reps, cells: Vec::new(), failures: Vec::new() };
    for m in models {
        let cell = match suite {
            Suite::Lmh => lmh_cell(m, opts).map(Cell::Lmh),
            Suite::Bbvi => bbvi_cell(m, opts).map(Cell::Bbvi),
            Suite::Smc => smc_cell(m, opts).map(Cell::Smc),
        };
        match cell {
            Ok(c) => report.cells.push(c),
            Err(error) => report.failures.push(Failure { model: m.manifest.name.clone(), error }),
        }
    }
    report
}
