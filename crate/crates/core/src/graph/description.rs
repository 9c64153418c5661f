use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GraphError;
use crate::primitives::Hyperparams;

/// A linear pipeline description: primitives in topological order plus
/// optional per-step settings keyed by step key.
///
/// A step key is the primitive name when it occurs once in the description;
/// repeated primitives are addressed as `name#0`, `name#1`, ... in order of
/// appearance. `name#k` is accepted for unique names too.
///
/// ```json
/// {
///   "primitives": ["bazaar.SimpleImputer", "bazaar.KNNClassifier"],
///   "init_params": {"bazaar.KNNClassifier": {"k": 3}},
///   "input_names": {"bazaar.KNNClassifier": {"y": "labels"}},
///   "output_names": {},
///   "outputs": ["y_hat"],
///   "sources": ["X", "labels"]
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineDescription {
    pub primitives: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub init_params: BTreeMap<String, Hyperparams>,
    /// Per step: declared input name (or alias) -> context name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub input_names: BTreeMap<String, BTreeMap<String, String>>,
    /// Per step: declared output name (or alias) -> context name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub output_names: BTreeMap<String, BTreeMap<String, String>>,
    /// Inputs of the sink. Defaults to the final step's outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<String>>,
    /// Outputs of the source. Defaults to `["X", "y"]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<String>>,
}

pub const DEFAULT_SOURCES: [&str; 2] = ["X", "y"];

/// Which side of a step an io-map entry renames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Input,
    Output,
}

/// One rebinding: step `step_index` addresses its `declared` port as `bound`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct IoMapEntry {
    pub step_index: usize,
    pub port: Port,
    pub declared: String,
    pub bound: String,
}

impl PipelineDescription {
    pub fn new(primitives: impl IntoIterator<Item = impl Into<String>>) -> Self {
        PipelineDescription { primitives: primitives.into_iter().map(Into::into).collect(), ..Default::default() }
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::MalformedDescription(e.to_string()))
    }

    /// Canonical JSON (maps are ordered), used for hashing and persistence.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("descriptions always serialize")
    }

    pub fn source_names(&self) -> Vec<String> {
        match &self.sources {
            Some(s) => s.clone(),
            None => DEFAULT_SOURCES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Stable keys for every step, in order.
    pub fn step_keys(&self) -> Vec<String> {
        let mut total: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &self.primitives {
            *total.entry(p).or_default() += 1;
        }
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        self.primitives
            .iter()
            .map(|p| {
                let k = seen.entry(p).or_default();
                let key = if total[p.as_str()] > 1 { format!("{p}#{k}") } else { p.clone() };
                *k += 1;
                key
            })
            .collect()
    }

    /// Resolves a step key (`name` for unique names, or `name#k`).
    pub fn resolve_step_key(&self, key: &str) -> Option<usize> {
        let keys = self.step_keys();
        if let Some(i) = keys.iter().position(|k| k == key) {
            return Some(i);
        }
        let (name, ordinal) = key.rsplit_once('#')?;
        let ordinal: usize = ordinal.parse().ok()?;
        self.primitives.iter().enumerate().filter(|(_, p)| *p == name).map(|(i, _)| i).nth(ordinal)
    }

    /// Init params per step index.
    pub fn init_params_by_step(&self) -> Result<Vec<Hyperparams>, GraphError> {
        let mut out = vec![Hyperparams::new(); self.primitives.len()];
        for (key, params) in &self.init_params {
            let i = self.resolve_step_key(key).ok_or_else(|| GraphError::UnknownStepKey(key.clone()))?;
            out[i].extend(params.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        Ok(out)
    }

    /// The io map as a flat, sorted list of rebinding entries.
    pub fn io_map(&self) -> Result<Vec<IoMapEntry>, GraphError> {
        let mut out = Vec::new();
        for (port, map) in [(Port::Input, &self.input_names), (Port::Output, &self.output_names)] {
            for (key, renames) in map {
                let i = self.resolve_step_key(key).ok_or_else(|| GraphError::UnknownStepKey(key.clone()))?;
                for (declared, bound) in renames {
                    if bound.is_empty() {
                        return Err(GraphError::BadIoMap {
                            step: i,
                            reason: format!("empty bound name for {declared:?}"),
                        });
                    }
                    out.push(IoMapEntry { step_index: i, port, declared: declared.clone(), bound: bound.clone() });
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Adds or replaces one io-map entry addressed by step index.
    pub fn rebind(&mut self, step_index: usize, port: Port, declared: &str, bound: &str) {
        let key = self.step_keys()[step_index].clone();
        let map = match port {
            Port::Input => &mut self.input_names,
            Port::Output => &mut self.output_names,
        };
        map.entry(key).or_default().insert(declared.to_string(), bound.to_string());
    }
}
