use std::collections::BTreeMap;
use std::sync::Arc;

use rustc_hash::FxHashMap;
use serde::Serialize;

use super::value::Value;

/// Finite map from addresses to values. Absent addresses read as Null and
/// Null entries are never stored, so `keys` is exactly the stored key set.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    entries: FxHashMap<Arc<str>, Value>,
}

static NULL: Value = Value::Null;

impl Trace {
    pub fn new() -> Trace {
        Trace::default()
    }

    pub fn get(&self, addr: &str) -> &Value {
        self.entries.get(addr).unwrap_or(&NULL)
    }

    pub fn contains(&self, addr: &str) -> bool {
        self.entries.contains_key(addr)
    }

    pub fn insert(&mut self, addr: impl Into<Arc<str>>, v: Value) {
        let addr = addr.into();
        if v.is_null() {
            self.entries.remove(&addr);
        } else {
            self.entries.insert(addr, v);
        }
    }

    pub fn remove(&mut self, addr: &str) -> Option<Value> {
        self.entries.remove(addr)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Arc<str>, &Value)> {
        self.entries.iter()
    }

    /// Keys in lexicographic order.
    pub fn sorted_keys(&self) -> Vec<Arc<str>> {
        let mut k: Vec<Arc<str>> = self.entries.keys().cloned().collect();
        k.sort();
        k
    }

    pub fn to_sorted(&self) -> BTreeMap<String, Value> {
        self.entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    /// Same key set and bit-identical values.
    pub fn identical(&self, other: &Trace) -> bool {
        self.len() == other.len()
            && self.entries.iter().all(|(k, v)| other.entries.get(k).is_some_and(|w| v.identical(w)))
    }
}

impl Serialize for Trace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_sorted().serialize(s)
    }
}

impl<K: Into<Arc<str>>> FromIterator<(K, Value)> for Trace {
    fn from_iter<I: IntoIterator<Item = (K, Value)>>(iter: I) -> Trace {
        let mut t = Trace::new();
        for (k, v) in iter {
            t.insert(k, v);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_reads_null() {
        let t = Trace::new();
        assert!(t.get("nowhere").is_null());
    }

    #[test]
    fn null_insert_removes_key() {
        let mut t: Trace = [("a", Value::Int(1))].into_iter().collect();
        assert!(t.contains("a"));
        t.insert("a", Value::Null);
        assert!(!t.contains("a"));
        assert!(t.is_empty());
    }
}
