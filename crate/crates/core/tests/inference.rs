mod common;

use common::*;
use ppl_core::corpus;
use ppl_core::inference::lmh::{LmhChain, LmhVariant};

#[test]
fn lmh_matches_enumeration() {
    // The sprinkler chain mixes slowly: a rare sprinkler under rain is sticky.
    for (name, steps) in [("hurricane", 100_000), ("sprinkler", 400_000)] {
        let tv = lmh_total_variation(name, steps, 3).unwrap();
        assert!(tv < 0.02, "{name}: {tv}");
    }
}

#[test]
fn lmh_variants_agree_step_for_step() {
    for entry in corpus::all() {
        let (p, data) = entry.instance(None);
        let model = ppl_core::analysis::Model::new(p);
        let init = entry.initial_trace(&model.program, &data, 9).unwrap();
        let mut a = LmhChain::new(&model, LmhVariant::Baseline, data.clone(), &init, 9).unwrap();
        let mut b = LmhChain::new(&model, LmhVariant::Factored, data.clone(), &init, 9).unwrap();
        for i in 0..300 {
            let (ra, rb) = (a.step(), b.step());
            assert!((ra.accept_prob - rb.accept_prob).abs() <= 1e-12, "{} step {i}", entry.name());
            assert!(a.trace().identical(b.trace()), "{} step {i}", entry.name());
        }
    }
}

#[test]
fn bbvi_estimators_are_unbiased() {
    for name in ["hurricane", "sprinkler"] {
        bbvi_enumeration_oracle(name, 20_000, 7).unwrap();
    }
    bbvi_gaussian_oracle(20_000, 7).unwrap();
}

#[test]
fn smc_variants_share_weights() {
    use ppl_core::inference::smc::{smc_iterative, smc_naive, SmcConfig};
    for entry in corpus::all().iter().filter(|m| m.manifest.smc) {
        let (p, data) = entry.instance(Some(20));
        let var = entry.manifest.size_var.as_deref().unwrap();
        let cfg = SmcConfig::new(30, 4);
        let a = smc_naive(&p, var, 20, &data, &cfg).unwrap();
        let b = smc_iterative(&p, var, 20, &data, &cfg).unwrap();
        assert_eq!(a.steps.len(), b.steps.len(), "{}", entry.name());
        for (x, y) in a.steps.iter().zip(&b.steps) {
            let bits = |v: &[f64]| v.iter().map(|w| w.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&x.log_weights), bits(&y.log_weights), "{} step {}", entry.name(), x.step);
            assert_eq!(x.ancestors, y.ancestors);
        }
        assert_eq!(a.log_evidence.to_bits(), b.log_evidence.to_bits());
    }
}
