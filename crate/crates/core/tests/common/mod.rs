//! Oracle checks shared by the integration tests and the acceptance target.
//! Each check returns a one-line summary on success and a description of the
//! first counterexample on failure.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use ppl_core::analysis::Model;
use ppl_core::cfg::{cfg_exec, cfg_exec_with, NodeId};
use ppl_core::corpus::{self, CorpusModel};
use ppl_core::inference::keyed_rng;
use ppl_core::lang::{DistKind, Program, Trace, Value};
use ppl_core::semantics::{
    density, exec, sample_forward_with, ProgramState, SampleHandler, Site, TraceHandler, Undefined, DEFAULT_STEP_BUDGET,
};
use ppl_core::slicer::{run_factor_slice, slice_for_factor};

pub type Check = Result<String, String>;

/// Cheap deterministic index in `0..n`.
pub fn pick(seed: u64, n: usize) -> usize {
    let mut x = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ((x ^ (x >> 31)) % n.max(1) as u64) as usize
}

pub struct Instance {
    pub entry: &'static CorpusModel,
    pub model: Model,
    pub data: Trace,
}

pub fn instances() -> Vec<Instance> {
    corpus::all()
        .iter()
        .map(|entry| {
            let (p, data) = entry.instance(None);
            Instance { entry, model: Model::new(p), data }
        })
        .collect()
}

pub fn forward(program: &Program, data: &Trace, seed: u64, key: &str) -> Result<Trace, Undefined> {
    let mut rng = keyed_rng(seed, &[], key);
    sample_forward_with(program, data, &mut rng, DEFAULT_STEP_BUDGET).map(|(t, _)| t)
}

/// What one sample site looked like the first time it ran.
#[derive(Clone)]
pub struct SiteRecord {
    pub address: Arc<str>,
    pub node: NodeId,
    pub dist: DistKind,
    pub args: Vec<Value>,
    pub state: ProgramState,
}

struct Recorder<'a> {
    inner: TraceHandler<'a>,
    sites: Vec<SiteRecord>,
    per_node: Vec<f64>,
}

impl SampleHandler for Recorder<'_> {
    fn sample(&mut self, site: &Site<'_>, st: &ProgramState) -> Result<(Value, f64), Undefined> {
        let node = site.node.expect("graph execution");
        if !self.sites.iter().any(|s| s.address == *site.address) {
            self.sites.push(SiteRecord {
                address: site.address.clone(),
                node,
                dist: site.dist,
                args: site.args.to_vec(),
                state: st.clone(),
            });
        }
        let (v, lp) = self.inner.sample(site, st)?;
        self.per_node[node] += lp;
        Ok((v, lp))
    }
}

/// Runs the graph on a trace, returning the sites met in execution order and
/// the log factor of every node (zero for nodes that never ran).
pub fn record(model: &Model, trace: &Trace) -> Result<(ProgramState, Vec<SiteRecord>, Vec<f64>), Undefined> {
    let mut h = Recorder { inner: TraceHandler { trace }, sites: Vec::new(), per_node: vec![0.0; model.cfg.len()] };
    let st = cfg_exec_with(&model.cfg, &mut h, ProgramState::initial(&model.program), DEFAULT_STEP_BUDGET, None)?;
    Ok((st, h.sites, h.per_node))
}

/// A trace equal to `t` except at one latent address, which is redrawn from
/// its distribution; addresses that become reachable are filled in forward.
pub fn perturb(inst: &Instance, t: &Trace, seed: u64) -> Option<(SiteRecord, Trace)> {
    let (_, sites, _) = record(&inst.model, t).ok()?;
    let latents: Vec<&SiteRecord> = sites.iter().filter(|s| !inst.entry.is_observed(&s.address)).collect();
    if latents.is_empty() {
        return None;
    }
    let site = latents[pick(seed, latents.len())].clone();
    let mut rng = keyed_rng(seed, &[1], &site.address);
    let v = site.dist.sample(&site.args, &mut rng)?;
    let mut fixed = t.clone();
    fixed.insert(site.address.clone(), v);
    let t2 = forward(&inst.model.program, &fixed, seed, "\0fill").ok()?;
    Some((site, t2))
}

fn same(a: &Result<ProgramState, Undefined>, b: &Result<ProgramState, Undefined>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x.log_density.to_bits() == y.log_density.to_bits(),
        (Err(x), Err(y)) => x == y,
        _ => false,
    }
}

/// Traces for the equivalence check: forward samples, some with a latent
/// removed or replaced by a value of the wrong kind.
fn mangled(inst: &Instance, k: u64) -> Trace {
    let mut t = forward(&inst.model.program, &inst.data, k, "\0eq").unwrap_or_default();
    let keys: Vec<_> = t.sorted_keys().into_iter().filter(|a| !inst.entry.is_observed(a)).collect();
    if keys.is_empty() {
        return t;
    }
    let a = keys[pick(k, keys.len())].clone();
    match k % 5 {
        1 => {
            t.remove(&a);
        }
        2 => t.insert(a, Value::str("x")),
        3 => t.insert(a, Value::Real(-0.5)),
        _ => {}
    }
    t
}

/// Interpreter and graph executor agree bit for bit, Undefined reasons included.
pub fn semantics_equivalence(insts: &[Instance], traces: u64) -> Check {
    let mut undefined = 0;
    for inst in insts {
        let p = &inst.model.program;
        for k in 0..traces {
            let t = mangled(inst, k);
            let a = exec(p, &t, ProgramState::initial(p), DEFAULT_STEP_BUDGET);
            let b = cfg_exec(&inst.model.cfg, &t, ProgramState::initial(p), DEFAULT_STEP_BUDGET);
            if !same(&a, &b) {
                return Err(format!("{} trace {k}: interpreter {a:?} vs graph {b:?}", inst.entry.name()));
            }
            undefined += a.is_err() as usize;
        }
    }
    Ok(format!("{} models x {traces} traces, {undefined} undefined", insts.len()))
}

/// The sum of the log factors equals the log density.
pub fn factorisation(insts: &[Instance], traces: u64) -> Check {
    let mut worst: f64 = 0.0;
    for inst in insts {
        let m = &inst.model;
        let mut defined = 0;
        let mut k = 0;
        while defined < traces && k < traces * 20 {
            k += 1;
            let Ok(t) = forward(&m.program, &inst.data, k, "\0fact") else { continue };
            let Ok(d) = density(&m.program, &t) else { continue };
            if !d.is_finite() {
                continue;
            }
            defined += 1;
            let mut sum = 0.0;
            for f in &m.factors {
                sum += m
                    .evaluate_factor(f.index, &t)
                    .map_err(|e| format!("{} trace {k}: factor {} undefined: {e}", inst.entry.name(), f.index))?;
            }
            let err = (sum - d).abs();
            worst = worst.max(err);
            if err > 1e-9 {
                return Err(format!("{} trace {k}: factors sum to {sum}, density {d}", inst.entry.name()));
            }
        }
        if defined < traces {
            return Err(format!("{}: only {defined} defined traces", inst.entry.name()));
        }
    }
    Ok(format!("{} models x {traces} traces, max error {worst:.1e}", insts.len()))
}

/// Perturbs one latent address at a time and checks that every factor and
/// every final variable value that changes has a changed address among its
/// static dependencies.
pub fn provenance_soundness(insts: &[Instance], trials: u64) -> Check {
    let mut changed_factors = 0usize;
    for inst in insts {
        let m = &inst.model;
        let end = m.cfg.end;
        let slots = m.program.slot_count() as u32;
        let mut done = 0;
        let mut k = 0;
        while done < trials && k < trials * 20 {
            k += 1;
            let Ok(t) = forward(&m.program, &inst.data, k, "\0prov") else { continue };
            let Some((site, t2)) = perturb(inst, &t, k) else { continue };
            let (Ok(a), Ok(b)) = (record(m, &t), record(m, &t2)) else { continue };
            done += 1;
            let mut moved: BTreeSet<NodeId> = BTreeSet::from([site.node]);
            for s in a.1.iter().chain(&b.1) {
                if !t.get(&s.address).identical(t2.get(&s.address)) {
                    moved.insert(s.node);
                }
            }
            for f in &m.factors {
                if a.2[f.node].to_bits() != b.2[f.node].to_bits() {
                    changed_factors += 1;
                    if f.nodes().is_disjoint(&moved) {
                        return Err(format!(
                            "{} trial {k}: factor of {} changed after perturbing {} but depends only on {:?}",
                            inst.entry.name(),
                            m.cfg.nodes[f.node].label(),
                            site.address,
                            f.nodes()
                        ));
                    }
                }
            }
            for slot in 0..slots {
                if !a.0.values[slot as usize].identical(&b.0.values[slot as usize])
                    && m.prov_node(end, slot).is_disjoint(&moved)
                {
                    return Err(format!(
                        "{} trial {k}: final value of slot {slot} changed after perturbing {}",
                        inst.entry.name(),
                        site.address
                    ));
                }
            }
        }
        if done < trials {
            return Err(format!("{}: only {done} usable trials", inst.entry.name()));
        }
    }
    Ok(format!("{} models x {trials} trials, {changed_factors} factor changes all covered", insts.len()))
}

/// Re-running only the slice of the perturbed site accounts for the whole
/// change in log density.
pub fn slicing_identity(insts: &[Instance], trials: u64) -> Check {
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for inst in insts {
        let m = &inst.model;
        let mut done = 0;
        let mut k = 0;
        while done < trials && k < trials * 20 {
            k += 1;
            let Ok(t) = forward(&m.program, &inst.data, k, "\0slice") else { continue };
            let Some((site, t2)) = perturb(inst, &t, k) else { continue };
            let (Ok(d1), Ok(d2)) = (density(&m.program, &t), density(&m.program, &t2)) else {
                skipped += 1;
                continue;
            };
            if !d1.is_finite() || !d2.is_finite() {
                skipped += 1;
                continue;
            }
            let slice = slice_for_factor(m, site.node);
            let mut start = site.state.clone();
            start.log_density = 0.0;
            let run = |tr: &Trace| {
                run_factor_slice(&m.cfg, &slice, start.clone(), &mut TraceHandler { trace: tr }, DEFAULT_STEP_BUDGET)
                    .map(|s| s.log_density)
            };
            let (s1, s2) = match (run(&t), run(&t2)) {
                (Ok(a), Ok(b)) => (a, b),
                (a, b) => return Err(format!("{} trial {k}: slice undefined ({a:?}, {b:?})", inst.entry.name())),
            };
            done += 1;
            let err = ((d2 - d1) - (s2 - s1)).abs();
            worst = worst.max(err);
            if err > 1e-9 {
                return Err(format!(
                    "{} trial {k} at {}: density ratio {} vs slice ratio {}",
                    inst.entry.name(),
                    site.address,
                    d2 - d1,
                    s2 - s1
                ));
            }
        }
        if done < trials {
            return Err(format!("{}: only {done} usable trials", inst.entry.name()));
        }
    }
    Ok(format!("{} models x {trials} trials, max error {worst:.1e}, {skipped} zero-density proposals skipped", insts.len()))
}

pub const FIG4: &str = "b = sample(\"b\", Bernoulli(0.5))\ns = sample(\"s\", InverseGamma(1, 1))\nif b == 1 then\n    m = sample(\"mu\", Normal(0, 1))\nelse\n    m = 1\nx = sample(\"x\", Normal(m, s))\n";

pub fn address_sets(m: &Model) -> Vec<Vec<String>> {
    m.factors
        .iter()
        .map(|f| {
            let mut v: Vec<String> = f.nodes().iter().map(|n| m.cfg.nodes[*n].address_pattern().unwrap_or_default()).collect();
            v.sort();
            v
        })
        .collect()
}

fn sorted_sets(sets: &[&[&str]]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = sets
        .iter()
        .map(|s| {
            let mut v: Vec<String> = s.iter().map(|x| x.to_string()).collect();
            v.sort();
            v
        })
        .collect();
    out.sort();
    out
}

/// Factor sets of the hurricane and coin-switched mean models, and the
/// Bayesian network of the latter.
pub fn golden_factor_sets() -> Check {
    let h = Model::new(corpus::get("hurricane").expect("bundled").program(None));
    let mut got = address_sets(&h);
    got.sort();
    let want = sorted_sets(&[
        &["F"],
        &["F", "P0"],
        &["F", "P1"],
        &["F", "D0", "P1"],
        &["F", "D1", "P0"],
        &["F", "P0", "D0"],
        &["F", "P0", "D0"],
        &["F", "P1", "D1"],
        &["F", "P1", "D1"],
    ]);
    if got != want {
        return Err(format!("hurricane sets {got:?}"));
    }
    let m = Model::parse(FIG4).map_err(|e| e.to_string())?;
    let got = address_sets(&m);
    let want: Vec<Vec<String>> = sorted_sets(&[&["b"], &["s"], &["b", "mu"], &["b", "mu", "s", "x"]]);
    let mut sorted = got.clone();
    sorted.sort();
    if sorted != want {
        return Err(format!("coin-switched mean sets {got:?}"));
    }
    let bn = ppl_core::analysis::to_bayes_net(&m).map_err(|e| e.to_string())?;
    let mut edges: Vec<String> = bn.edges.iter().map(|(a, b)| format!("{a}->{b}")).collect();
    edges.sort();
    if edges != ["b->mu", "b->x", "mu->x", "s->x"] {
        return Err(format!("coin-switched mean network {edges:?}"));
    }
    Ok("hurricane: 9 sets; switched mean: {b},{s},{b,mu},{b,mu,s,x}; b->mu b->x mu->x s->x".to_string())
}

/// With `m = 1` on both branches the analysis still charges the factor of
/// `x` to `b`, yet flipping `b` never changes that factor.
pub fn strict_over_approximation(trials: u64) -> Check {
    let src = FIG4.replace("m = sample(\"mu\", Normal(0, 1))", "m = 1");
    let m = Model::parse(&src).map_err(|e| e.to_string())?;
    let x = m.cfg.find_sample("x").ok_or("no x")?;
    let b = m.cfg.find_sample("b").ok_or("no b")?;
    if !m.factor_at(x).ok_or("no factor")?.deps().contains(&b) {
        return Err("static set of x does not contain b".into());
    }
    for k in 0..trials {
        let t = forward(&m.program, &Trace::new(), k, "\0over").map_err(|e| e.to_string())?;
        let mut t2 = t.clone();
        let flipped = if t.get("b").as_int() == Some(1) { 0 } else { 1 };
        t2.insert("b", Value::Int(flipped));
        let i = m.factor_at(x).unwrap().index;
        let (f1, f2) = (m.evaluate_factor(i, &t), m.evaluate_factor(i, &t2));
        if f1 != f2 {
            return Err(format!("trial {k}: factor of x changed with b ({f1:?} vs {f2:?})"));
        }
    }
    Ok(format!("x depends on b statically; unchanged in {trials} flips"))
}

fn latent_key(t: &Trace, observed: &Trace) -> String {
    t.to_sorted()
        .into_iter()
        .filter(|(k, _)| !observed.contains(k))
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Total-variation distance between the factored chain's visits and the
/// enumerated posterior over whole latent traces.
pub fn lmh_total_variation(name: &str, steps: u64, seed: u64) -> Result<f64, String> {
    use ppl_core::inference::exact::enumerate;
    use ppl_core::inference::lmh::{LmhChain, LmhVariant};
    use std::collections::BTreeMap;

    let entry = corpus::get(name).ok_or("unknown model")?;
    let (p, data) = entry.instance(None);
    let exact = enumerate(&p, &data, 100_000).map_err(|e| e.to_string())?;
    let model = Model::new(p);
    let mut chain = LmhChain::new(&model, LmhVariant::Factored, data.clone(), &Trace::new(), seed).map_err(|e| e.to_string())?;
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for _ in 0..steps {
        chain.step();
        *counts.entry(latent_key(chain.trace(), &data)).or_default() += 1.0;
    }
    let mut want: BTreeMap<String, f64> = BTreeMap::new();
    for (t, w) in &exact.support {
        *want.entry(latent_key(t, &data)).or_default() += w;
    }
    let keys: BTreeSet<&String> = counts.keys().chain(want.keys()).collect();
    let tv = keys
        .into_iter()
        .map(|k| (counts.get(k).copied().unwrap_or(0.0) / steps as f64 - want.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
        / 2.0;
    Ok(tv)
}

/// Mean and standard error of one gradient component over `n` single-draw
/// estimates.
pub fn gradient_moments(
    b: &mut ppl_core::inference::bbvi::Bbvi<'_>,
    est: ppl_core::inference::bbvi::Estimator,
    addr: &str,
    comp: usize,
    n: u64,
) -> Result<(f64, f64), String> {
    let (mut s, mut s2) = (0.0, 0.0);
    for i in 0..n {
        let g = b.gradient(est, 1, 1_000_000 + i).map_err(|e| e.to_string())?;
        let x = g.get(addr).map_or(0.0, |v| v[comp]);
        s += x;
        s2 += x * x;
    }
    let nf = n as f64;
    let mean = s / nf;
    let var = ((s2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    Ok((mean, (var / nf).sqrt()))
}

fn compare_gradient(
    label: &str,
    b: &mut ppl_core::inference::bbvi::Bbvi<'_>,
    exact: &[(String, usize, f64)],
    n: u64,
) -> Result<f64, String> {
    use ppl_core::inference::bbvi::Estimator;
    let mut worst: f64 = 0.0;
    for est in [Estimator::Standard, Estimator::RaoBlackwell] {
        for (addr, comp, want) in exact {
            let (mean, se) = gradient_moments(b, est, addr, *comp, n)?;
            let z = (mean - want).abs() / se.max(1e-300);
            worst = worst.max(z);
            if (mean - want).abs() > 3.0 * se + 1e-12 {
                return Err(format!("{label} {est:?} {addr}[{comp}]: {mean} vs exact {want} (se {se})"));
            }
        }
    }
    Ok(worst)
}

/// Gradient at the uniform starting point of a discrete model, against the
/// gradient computed by enumerating every latent assignment.
pub fn bbvi_enumeration_oracle(name: &str, n: u64, seed: u64) -> Result<f64, String> {
    use ppl_core::inference::bbvi::{Bbvi, Estimator, Family};
    use ppl_core::inference::exact::enumerate;

    let entry = corpus::get(name).ok_or("unknown model")?;
    let (p, data) = entry.instance(None);
    let exact = enumerate(&p, &data, 100_000).map_err(|e| e.to_string())?;
    let model = Model::new(p);
    let mut b = Bbvi::new(&model, data.clone(), seed);
    b.gradient(Estimator::Standard, 1, 0).map_err(|e| e.to_string())?;
    let mut want = Vec::new();
    for (addr, q) in &b.params.entries {
        if q.family != Family::Bernoulli || q.params != [0.0] {
            return Err(format!("{addr}: expected a uniform Bernoulli start"));
        }
        let mut g = 0.0;
        for (t, w) in &exact.support {
            let latents = t.iter().filter(|(k, _)| !data.contains(k)).count() as i32;
            let log_q = -(latents as f64) * std::f64::consts::LN_2;
            let log_p = w.ln() + exact.log_evidence;
            let z = t.get(addr).as_f64().ok_or("address missing on a path")?;
            g += log_q.exp() * (z - 0.5) * (log_p - log_q);
        }
        want.push((addr.to_string(), 0, g));
    }
    compare_gradient(name, &mut b, &want, n)
}

/// Gradient of the five-node Gaussian network against finite differences of
/// its closed-form evidence lower bound.
pub fn bbvi_gaussian_oracle(n: u64, seed: u64) -> Result<f64, String> {
    use ppl_core::inference::bbvi::{Bbvi, Estimator};

    let entry = corpus::get("program1").ok_or("unknown model")?;
    let (p, data) = entry.instance(None);
    let d = data.get("D").as_f64().ok_or("no D")?;
    let model = Model::new(p);
    let mut b = Bbvi::new(&model, data.clone(), seed);
    b.gradient(Estimator::Standard, 1, 0).map_err(|e| e.to_string())?;
    let names = ["A", "B", "C", "E"];
    let theta0 = [0.3, -0.2, 0.1, 0.4, -0.5, -0.1, 0.2, 0.3];
    for (i, a) in names.iter().enumerate() {
        b.params.entries.get_mut(*a).ok_or("missing parameter")?.params = vec![theta0[2 * i], theta0[2 * i + 1]];
    }
    // Expected log of Normal(y; m, 1) under independent Gaussians, given the
    // mean and variance of y - m.
    let term = |mean: f64, var: f64| -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (mean * mean + var);
    let elbo = |th: &[f64]| {
        let (ma, va) = (th[0], (2.0 * th[1]).exp());
        let (mb, vb) = (th[2], (2.0 * th[3]).exp());
        let (mc, vc) = (th[4], (2.0 * th[5]).exp());
        let (me, ve) = (th[6], (2.0 * th[7]).exp());
        let lp = term(ma, va)
            + term(mb - ma, vb + va)
            + term(mc - ma, vc + va)
            + term(d - mb - mc, vb + vc)
            + term(me - ma, ve + va);
        let entropy: f64 = (0..4).map(|i| 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + th[2 * i + 1]).sum();
        lp + entropy
    };
    let mut want = Vec::new();
    for j in 0..8 {
        let h = 1e-5;
        let (mut up, mut dn) = (theta0, theta0);
        up[j] += h;
        dn[j] -= h;
        want.push((names[j / 2].to_string(), j % 2, (elbo(&up) - elbo(&dn)) / (2.0 * h)));
    }
    compare_gradient("program1", &mut b, &want, n)
}
