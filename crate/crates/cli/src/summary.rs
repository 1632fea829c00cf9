//! Posterior summaries grouped by address pattern.

use std::collections::BTreeMap;
use std::sync::Arc;

use ppl_core::cfg::Cfg;
use ppl_core::lang::{Trace, Value};
use rustc_hash::FxHashMap;
use serde::Serialize;

#[derive(Clone, Copy, Default)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

#[derive(Debug, Serialize)]
pub struct PatternStats {
    /// Distinct addresses seen under this pattern.
    pub addresses: usize,
    pub samples: u64,
    pub mean: f64,
    pub sd: f64,
}

/// Accumulates scalar values per address over a sequence of traces.
#[derive(Default)]
pub struct Accumulator {
    by_addr: FxHashMap<Arc<str>, Moments>,
}

fn scalar(v: &Value) -> Option<f64> {
    match v {
        Value::Bool(b) => Some(f64::from(u8::from(*b))),
        other => other.as_f64(),
    }
}

impl Accumulator {
    pub fn add(&mut self, t: &Trace) {
        for (a, v) in t.iter() {
            if let Some(x) = scalar(v) {
                let m = self.by_addr.entry(a.clone()).or_default();
                m.n += 1;
                m.sum += x;
                m.sum_sq += x * x;
            }
        }
    }

    /// Groups addresses by the pattern of the sample statement that owns
    /// them; addresses no statement claims are kept as they are.
    pub fn finish(&self, cfg: &Cfg) -> BTreeMap<String, PatternStats> {
        let mut groups: BTreeMap<String, (usize, Moments)> = BTreeMap::new();
        let mut items: Vec<_> = self.by_addr.iter().collect();
        items.sort_by(|x, y| x.0.cmp(y.0));
        for (a, m) in items {
            let pat = cfg.find_sample(a).and_then(|n| cfg.nodes[n].address_pattern()).unwrap_or_else(|| a.to_string());
            let g = groups.entry(pat).or_default();
            g.0 += 1;
            g.1.n += m.n;
            g.1.sum += m.sum;
            g.1.sum_sq += m.sum_sq;
        }
        groups
            .into_iter()
            .map(|(k, (addresses, m))| {
                let n = m.n as f64;
                let mean = m.sum / n;
                let sd = (m.sum_sq / n - mean * mean).max(0.0).sqrt();
                (k, PatternStats { addresses, samples: m.n, mean, sd })
            })
            .collect()
    }
}
