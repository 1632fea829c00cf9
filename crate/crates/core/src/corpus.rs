//! The bundled benchmark models and their synthetic data.
//!
//! Each model is described by an entry in `corpus/manifest.json`. Data is
//! generated by forward-sampling the model at its default size with a seed
//! and keeping the addresses that start with one of the observed prefixes;
//! entries under `data` override the generated values.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::analysis::Model;
use crate::inference::keyed_rng;
use crate::lang::{parse, Program, Trace, Value};
use crate::semantics::{sample_forward_with, Undefined, DEFAULT_STEP_BUDGET};

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ModelManifest {
    pub name: String,
    pub file: String,
    #[serde(default)]
    pub description: String,
    /// Top-level constant giving the number of data points.
    #[serde(default)]
    pub size_var: Option<String>,
    #[serde(default)]
    pub size: Option<i64>,
    /// Address prefixes clamped to data.
    #[serde(default)]
    pub observed: Vec<String>,
    #[serde(default)]
    pub data: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub single_occurrence: bool,
    #[serde(default)]
    pub smc: bool,
    #[serde(default)]
    pub bbvi: bool,
    #[serde(default)]
    pub enumerable: bool,
}

#[derive(Deserialize)]
struct ManifestFile {
    models: Vec<ModelManifest>,
}

pub struct CorpusModel {
    pub manifest: ModelManifest,
    pub source: &'static str,
}

const MANIFEST: &str = include_str!("../../../corpus/manifest.json");

macro_rules! sources {
    ($($f:literal),* $(,)?) => {
        &[$(($f, include_str!(concat!("../../../corpus/", $f)))),*]
    };
}

const SOURCES: &[(&str, &str)] = sources![
    "geometric.ppl",
    "branching.ppl",
    "branching_dynamic.ppl",
    "poisson_address.ppl",
    "hurricane.ppl",
    "mixture_switch.ppl",
    "program1.ppl",
    "program2.ppl",
    "program3.ppl",
    "gmm_fixed.ppl",
    "gmm_variable.ppl",
    "hmm.ppl",
    "hmm_unrolled.ppl",
    "lda_fixed.ppl",
    "linear_regression.ppl",
    "dirichlet_process.ppl",
    "urn.ppl",
    "pedestrian.ppl",
    "marsaglia.ppl",
    "sprinkler.ppl",
];

/// Seed used for the bundled data sets.
pub const DATA_SEED: u64 = 20240;

pub fn all() -> &'static [CorpusModel] {
    static CORPUS: OnceLock<Vec<CorpusModel>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let file: ManifestFile = serde_json::from_str(MANIFEST).expect("corpus manifest is valid JSON");
        file.models
            .into_iter()
            .map(|manifest| {
                let source = SOURCES
                    .iter()
                    .find(|(f, _)| *f == manifest.file)
                    .unwrap_or_else(|| panic!("corpus file {} not bundled", manifest.file))
                    .1;
                CorpusModel { manifest, source }
            })
            .collect()
    })
}

/// Looks a model up by name or by file name.
pub fn get(name: &str) -> Option<&'static CorpusModel> {
    let base = name.rsplit('/').next().unwrap_or(name);
    all().iter().find(|m| m.manifest.name == name || m.manifest.file == base)
}

pub fn json_to_value(v: &serde_json::Value) -> Value {
    match v {
        serde_json::Value::Bool(b) => Value::Bool(*b),
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => Value::Int(i),
            None => Value::Real(n.as_f64().unwrap_or(f64::NAN)),
        },
        serde_json::Value::String(s) => Value::Str(s.as_str().into()),
        serde_json::Value::Array(a) => Value::vector(a.iter().filter_map(|x| x.as_f64()).collect()),
        serde_json::Value::Null | serde_json::Value::Object(_) => Value::Null,
    }
}

impl CorpusModel {
    pub fn name(&self) -> &str {
        &self.manifest.name
    }

    /// The program, with the size constant replaced when `size` is given.
    pub fn program(&self, size: Option<i64>) -> Program {
        let p = parse(self.source).unwrap_or_else(|e| panic!("{}: {e}", self.manifest.file));
        match (size, &self.manifest.size_var) {
            (Some(n), Some(var)) => p.with_constant(var, Value::Int(n)).unwrap_or(p),
            _ => p,
        }
    }

    pub fn model(&self, size: Option<i64>) -> Model {
        Model::new(self.program(size))
    }

    pub fn is_observed(&self, addr: &str) -> bool {
        self.manifest.observed.iter().any(|p| addr.starts_with(p.as_str()))
    }

    /// Synthetic observations for the program at the given size.
    pub fn data(&self, program: &Program, seed: u64) -> Result<Trace, Undefined> {
        let mut fixed = Trace::new();
        for (k, v) in &self.manifest.data {
            fixed.insert(k.as_str(), json_to_value(v));
        }
        let mut rng = keyed_rng(seed, &[], "\0data");
        let (full, _) = sample_forward_with(program, &fixed, &mut rng, DEFAULT_STEP_BUDGET)?;
        let mut out = Trace::new();
        for (k, v) in full.iter() {
            if self.is_observed(k) {
                out.insert(k.clone(), v.clone());
            }
        }
        Ok(out)
    }

    /// Program and data at the requested size (default: the manifest size).
    pub fn instance(&self, size: Option<i64>) -> (Program, Trace) {
        let p = self.program(size.or(self.manifest.size));
        let data = self
            .data(&p, DATA_SEED)
            .unwrap_or_else(|e| panic!("{}: data generation failed: {e}", self.manifest.name));
        (p, data)
    }

    /// A forward sample with the observations held fixed.
    pub fn initial_trace(&self, program: &Program, observed: &Trace, seed: u64) -> Result<Trace, Undefined> {
        let mut rng = keyed_rng(seed, &[], "\0init");
        sample_forward_with(program, observed, &mut rng, DEFAULT_STEP_BUDGET).map(|(t, _)| t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_manifest_entry_parses() {
        assert!(all().len() >= 12);
        for m in all() {
            let (p, data) = m.instance(None);
            assert!(m.manifest.observed.is_empty() || !data.is_empty(), "{}", m.name());
            m.initial_trace(&p, &data, 1).unwrap();
        }
    }

    #[test]
    fn lookup_by_file_name() {
        assert_eq!(get("corpus/hurricane.ppl").unwrap().name(), "hurricane");
        assert!(get("nope").is_none());
    }

    #[test]
    fn data_is_deterministic() {
        let m = get("gmm_fixed").unwrap();
        let (_, a) = m.instance(None);
        let (_, b) = m.instance(None);
        assert!(a.identical(&b));
        assert_eq!(a.len(), 300);
    }

    #[test]
    fn size_override_truncates() {
        let m = get("hmm").unwrap();
        let (_, d) = m.instance(Some(7));
        assert_eq!(d.len(), 7);
    }
}
