//! Resolving a model argument: a corpus name or a `.ppl` path.

use std::path::Path;

use ppl_core::analysis::Model;
use ppl_core::corpus::{self, json_to_value, CorpusModel, DATA_SEED};
use ppl_core::lang::{parse, Program, Trace, Value};

use crate::{CliError, CliResult};

pub struct Loaded {
    pub name: String,
    pub program: Program,
    pub observed: Trace,
    /// Manifest entry when the model is part of the corpus.
    pub entry: Option<&'static CorpusModel>,
}

impl Loaded {
    pub fn model(&self) -> Model {
        Model::new(self.program.clone())
    }

    pub fn size_var(&self) -> Option<&str> {
        self.entry.and_then(|e| e.manifest.size_var.as_deref())
    }

    /// Value of the size constant in the loaded program.
    pub fn size(&self) -> Option<i64> {
        let var = self.size_var()?;
        self.program.constant(var).and_then(|v| v.as_int())
    }
}

/// Reads a JSON object mapping addresses to values.
pub fn read_trace(path: &Path) -> CliResult<Trace> {
    let text = std::fs::read_to_string(path)?;
    let json: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let obj = json
        .as_object()
        .ok_or_else(|| CliError::Usage(format!("{}: expected an object of address: value", path.display())))?;
    let mut t = Trace::new();
    for (k, v) in obj {
        let v = json_to_value(v);
        if v == Value::Null {
            return Err(CliError::Usage(format!("{}: unsupported value at {k:?}", path.display())));
        }
        t.insert(k.as_str(), v);
    }
    Ok(t)
}

/// Loads a model, applying the size override and attaching observations:
/// from `data` when given, otherwise the corpus data set for the model.
pub fn load(model: &str, size: Option<i64>, data: Option<&Path>) -> CliResult<Loaded> {
    let path = Path::new(model);
    let (name, source, entry) = if path.is_file() {
        let src = std::fs::read_to_string(path)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| model.to_string());
        (name, src, corpus::get(model))
    } else if let Some(e) = corpus::get(model) {
        (e.manifest.name.clone(), e.source.to_string(), Some(e))
    } else {
        return Err(CliError::Usage(format!("{model}: no such file or corpus model")));
    };
    let mut program = parse(&source).map_err(|e| CliError::Model(format!("{model}:{e}")))?;
    let size = size.or(entry.and_then(|e| e.manifest.size));
    if let Some(n) = size {
        let var = entry
            .and_then(|e| e.manifest.size_var.as_deref())
            .ok_or_else(|| CliError::Usage(format!("{name}: model has no size parameter")))?;
        program = program
            .with_constant(var, Value::Int(n))
            .ok_or_else(|| CliError::Model(format!("{name}: no top-level constant {var}")))?;
    }
    let observed = match (data, entry) {
        (Some(p), _) => read_trace(p)?,
        (None, Some(e)) => e.data(&program, DATA_SEED).map_err(|u| CliError::Model(format!("{name}: data generation: {u}")))?,
        (None, None) => Trace::new(),
    };
    Ok(Loaded { name, program, observed, entry })
}
