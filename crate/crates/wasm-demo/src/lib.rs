//! Browser bindings. Every export takes and returns plain strings; results
//! are JSON objects with either the payload or an `error` field.

use std::collections::BTreeMap;

use ppl_core::analysis::{to_bayes_net, to_markov_net, Model};
use ppl_core::corpus::{self, json_to_value};
use ppl_core::inference::lmh::{LmhChain, LmhVariant};
use ppl_core::lang::{Trace, Value};
use ppl_core::slicer::{slice_for_factor, slice_listing, slice_to_dot};
use serde_json::{json, Value as Json};
use wasm_bindgen::prelude::*;

const MAX_STEPS: u32 = 200_000;

fn error(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

fn parse_model(src: &str) -> Result<Model, String> {
    Model::parse(src).map_err(|e| format!("line {e}"))
}

fn parse_observed(observed: &str) -> Result<Trace, String> {
    let mut t = Trace::new();
    if observed.trim().is_empty() {
        return Ok(t);
    }
    let v: Json = serde_json::from_str(observed).map_err(|e| format!("observations: {e}"))?;
    let obj = v.as_object().ok_or("observations: expected an object of address: value")?;
    for (k, v) in obj {
        t.insert(k.as_str(), json_to_value(v));
    }
    Ok(t)
}

/// Names of the bundled example models.
#[wasm_bindgen]
pub fn examples() -> String {
    let names: Vec<&str> = corpus::all().iter().map(|m| m.manifest.name.as_str()).collect();
    json!(names).to_string()
}

/// Source text and fixed observations of a bundled model.
#[wasm_bindgen]
pub fn example(name: &str) -> String {
    match corpus::get(name) {
        Some(m) => json!({ "source": m.source, "observed": m.manifest.data, "description": m.manifest.description }).to_string(),
        None => error(format!("no example named {name:?}")),
    }
}

/// Factor sets plus the graphical-model exports.
#[wasm_bindgen]
pub fn analyze(src: &str) -> String {
    let model = match parse_model(src) {
        Ok(m) => m,
        Err(e) => return error(e),
    };
    let report = model.report();
    let factors: Vec<Json> =
        report.factors.iter().map(|f| json!({ "line": f.line, "address": f.address, "depends_on": f.address_set })).collect();
    let bn = to_bayes_net(&model);
    json!({
        "factors": factors,
        "bayes_net": bn.as_ref().ok().map(|g| g.to_dot()),
        "bayes_net_error": bn.as_ref().err().map(|e| e.to_string()),
        "markov_net": to_markov_net(&model).to_dot(),
    })
    .to_string()
}

/// Sub-program for the sample statement matching `at`.
#[wasm_bindgen]
pub fn slice(src: &str, at: &str) -> String {
    let model = match parse_model(src) {
        Ok(m) => m,
        Err(e) => return error(e),
    };
    let Some(node) = model.cfg.find_sample(at) else {
        return error(format!("no sample statement matches {at:?}"));
    };
    let s = slice_for_factor(&model, node);
    json!({ "listing": slice_listing(&model, &s), "dot": slice_to_dot(&model, &s) }).to_string()
}

fn label(v: &Value) -> Option<f64> {
    match v {
        Value::Bool(b) => Some(f64::from(u8::from(*b))),
        other => other.as_f64(),
    }
}

/// Runs factored single-site Metropolis-Hastings and histograms the values
/// taken at `address`: one bar per value for integers, 20 bins otherwise.
#[wasm_bindgen]
pub fn lmh_histogram(src: &str, observed: &str, address: &str, steps: u32, seed: u32) -> String {
    let result = (|| -> Result<Json, String> {
        let model = parse_model(src)?;
        let obs = parse_observed(observed)?;
        let mut chain = LmhChain::new(&model, LmhVariant::Factored, obs, &Trace::new(), u64::from(seed))
            .map_err(|e| format!("no valid starting trace: {e}"))?;
        let mut values = Vec::new();
        let mut integral = true;
        for _ in 0..steps.min(MAX_STEPS) {
            chain.step();
            let v = chain.trace().get(address);
            integral &= matches!(v, Value::Int(_) | Value::Bool(_) | Value::Null);
            if let Some(x) = label(v) {
                values.push(x);
            }
        }
        let taken = values.len();
        let bars: Vec<Json> = if values.is_empty() {
            Vec::new()
        } else if integral {
            let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
            for x in &values {
                *counts.entry(*x as i64).or_default() += 1;
            }
            counts.into_iter().map(|(k, c)| json!({ "label": k.to_string(), "count": c })).collect()
        } else {
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let width = ((hi - lo) / 20.0).max(1e-12);
            let mut counts = [0u64; 20];
            for x in &values {
                counts[(((x - lo) / width) as usize).min(19)] += 1;
            }
            counts
                .iter()
                .enumerate()
                .map(|(i, c)| json!({ "label": format!("{:.3}", lo + (i as f64 + 0.5) * width), "count": c }))
                .collect()
        };
        Ok(json!({
            "bars": bars,
            "present": taken,
            "steps": chain.stats.steps,
            "acceptance_rate": chain.stats.accepted as f64 / chain.stats.steps.max(1) as f64,
        }))
    })();
    match result {
        Ok(v) => v.to_string(),
        Err(e) => error(e),
    }
}
