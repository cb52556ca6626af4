//! Metric-name to value map with deterministic ordering, rendered as a
//! plain-text table or machine-readable JSON.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn set_count(&mut self, name: &str, value: u64) {
        self.counts.insert(name.to_string(), value);
    }

    pub fn set_meta(&mut self, name: &str, value: &str) {
        self.meta.insert(name.to_string(), value.to_string());
    }

    pub fn meta(&self, name: &str) -> Option<&str> {
        self.meta.get(name).map(String::as_str)
    }

    pub fn merge_prefixed(&mut self, prefix: &str, other: &EvalReport) {
        for (k, v) in &other.values {
            self.values.insert(format!("{prefix}{k}"), *v);
        }
        for (k, v) in &other.counts {
            self.counts.insert(format!("{prefix}{k}"), *v);
        }
        for (k, v) in &other.meta {
            self.meta.insert(format!("{prefix}{k}"), v.clone());
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Fixed-width table, keys sorted, values to six decimals.
    pub fn render_text(&self) -> String {
        let width = self
            .values
            .keys()
            .chain(self.counts.keys())
            .chain(self.meta.keys())
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(6);
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        for (k, v) in &self.values {
            out.push_str(&format!("{k:<width$}  {v:.6}\n"));
        }
        for (k, v) in &self.counts {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        out
    }
}
