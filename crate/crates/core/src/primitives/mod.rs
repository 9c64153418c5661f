//! Native primitive implementations and the registry that maps
//! implementation keys from annotations to them.
//!
//! Each stateful primitive serializes its learned state as a JSON document of
//! its own state struct (see the `*State` types in each submodule). The JSON
//! encoding round-trips every f64 exactly.

mod boosting;
mod encoders;
mod forest;
mod imputer;
mod knn;
pub mod linear;
mod scalers;
pub mod tree;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{de::DeserializeOwned, Serialize};
use thiserror::Error;

pub use boosting::{GradientBoostingClassifier, GradientBoostingRegressor};
pub use encoders::{CategoricalEncoder, ClassDecoder, ClassEncoder, TableToMatrix, UniqueCounter};
pub use forest::{RandomForestClassifier, RandomForestRegressor};
pub use imputer::SimpleImputer;
pub use knn::KnnClassifier;
pub use linear::{
    softmax_loss_and_grad, squared_loss_and_grad, LinearRegressionGd, LogisticRegressionGd,
};
pub use scalers::{MinMaxScaler, StandardScaler, StandardScalerState};
pub use tree::{DecisionTreeClassifier, DecisionTreeRegressor};

use crate::annotations::HyperValue;
use crate::data::{Matrix, Table, Value, ValueKind, Vector};

pub type Hyperparams = BTreeMap<String, HyperValue>;
pub type Outputs = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrimitiveError {
    #[error("missing input {0:?}")]
    MissingInput(String),
    #[error("input {name:?} should be a {expected}")]
    WrongKind { name: String, expected: ValueKind },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("unseen category {0:?}")]
    UnseenCategory(String),
    #[error("hyperparameter {name:?}: {reason}")]
    InvalidHyperparam { name: String, reason: String },
    #[error("training diverged: {0}")]
    NonFinite(String),
    #[error("corrupt state: {0}")]
    BadState(String),
}

pub type Result<T> = std::result::Result<T, PrimitiveError>;

/// Declared inputs and outputs of an implementation, in annotation order.
#[derive(Debug, Clone, Copy)]
pub struct Signature {
    pub fit_inputs: &'static [(&'static str, ValueKind)],
    pub produce_inputs: &'static [(&'static str, ValueKind)],
    pub produce_outputs: &'static [(&'static str, ValueKind)],
}

/// Named argument bundle handed to a primitive, keyed by declared name.
#[derive(Debug, Default)]
pub struct Inputs<'a> {
    values: BTreeMap<&'a str, &'a Value>,
}

impl<'a> Inputs<'a> {
    pub fn new() -> Self {
        Inputs { values: BTreeMap::new() }
    }

    pub fn with(mut self, name: &'a str, value: &'a Value) -> Self {
        self.values.insert(name, value);
        self
    }

    pub fn insert(&mut self, name: &'a str, value: &'a Value) {
        self.values.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Result<&'a Value> {
        self.values.get(name).copied().ok_or_else(|| PrimitiveError::MissingInput(name.to_string()))
    }

    pub fn table(&self, name: &str) -> Result<&'a Table> {
        self.get(name)?.as_table().ok_or_else(|| wrong(name, ValueKind::Table))
    }

    pub fn matrix(&self, name: &str) -> Result<&'a Matrix> {
        self.get(name)?.as_matrix().ok_or_else(|| wrong(name, ValueKind::Matrix))
    }

    pub fn vector(&self, name: &str) -> Result<&'a Vector> {
        self.get(name)?.as_vector().ok_or_else(|| wrong(name, ValueKind::Vector))
    }

    pub fn label_list(&self, name: &str) -> Result<&'a [String]> {
        self.get(name)?.as_label_list().ok_or_else(|| wrong(name, ValueKind::LabelList))
    }
}

fn wrong(name: &str, expected: ValueKind) -> PrimitiveError {
    PrimitiveError::WrongKind { name: name.to_string(), expected }
}

/// Typed hyperparameter lookups with fallbacks for absent keys.
pub(crate) struct Params<'a>(pub &'a Hyperparams);

impl Params<'_> {
    fn bad(name: &str, reason: &str) -> PrimitiveError {
        PrimitiveError::InvalidHyperparam { name: name.to_string(), reason: reason.to_string() }
    }

    pub fn int(&self, name: &str, default: i64) -> Result<i64> {
        match self.0.get(name) {
            None => Ok(default),
            Some(v) => v.as_i64().ok_or_else(|| Self::bad(name, "expected an integer")),
        }
    }

    pub fn positive(&self, name: &str, default: i64) -> Result<usize> {
        let v = self.int(name, default)?;
        if v < 1 {
            return Err(Self::bad(name, "must be at least 1"));
        }
        Ok(v as usize)
    }

    pub fn float(&self, name: &str, default: f64) -> Result<f64> {
        match self.0.get(name) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Self::bad(name, "expected a finite number")),
        }
    }

    pub fn string(&self, name: &str, default: &str) -> Result<String> {
        match self.0.get(name) {
            None => Ok(default.to_string()),
            Some(v) => v.as_str().map(str::to_string).ok_or_else(|| Self::bad(name, "expected a string")),
        }
    }

    pub fn boolean(&self, name: &str, default: bool) -> Result<bool> {
        match self.0.get(name) {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or_else(|| Self::bad(name, "expected a bool")),
        }
    }
}

pub(crate) fn encode_state<S: Serialize>(state: &S) -> Vec<u8> {
    serde_json::to_vec(state).expect("primitive state serializes")
}

pub(crate) fn decode_state<S: DeserializeOwned>(bytes: &[u8]) -> Result<S> {
    if bytes.is_empty() {
        return Err(PrimitiveError::BadState("primitive has not been fitted".into()));
    }
    serde_json::from_slice(bytes).map_err(|e| PrimitiveError::BadState(e.to_string()))
}

/// A fit/produce implementation behind an annotation.
///
/// `fit` is only called for primitives whose annotation declares fit inputs;
/// its return value is the opaque state later passed to `produce`.
pub trait Primitive: Send + Sync {
    fn key(&self) -> &'static str;

    fn signature(&self) -> Signature;

    fn fit(&self, _hp: &Hyperparams, _inputs: &Inputs<'_>, _seed: u64) -> Result<Vec<u8>> {
        Ok(Vec::new())
    }

    fn produce(&self, hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs>;
}

/// Implementation keys mapped to primitives. Immutable after startup.
#[derive(Clone, Default)]
pub struct NativeRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Primitive>>,
}

impl std::fmt::Debug for NativeRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl NativeRegistry {
    /// Every bundled native primitive.
    pub fn builtin() -> Self {
        let mut r = NativeRegistry::default();
        r.register(SimpleImputer);
        r.register(StandardScaler);
        r.register(MinMaxScaler);
        r.register(CategoricalEncoder);
        r.register(ClassEncoder);
        r.register(ClassDecoder);
        r.register(UniqueCounter);
        r.register(TableToMatrix);
        r.register(KnnClassifier);
        r.register(DecisionTreeClassifier);
        r.register(DecisionTreeRegressor);
        r.register(RandomForestClassifier);
        r.register(RandomForestRegressor);
        r.register(LinearRegressionGd);
        r.register(LogisticRegressionGd);
        r.register(GradientBoostingClassifier);
        r.register(GradientBoostingRegressor);
        r
    }

    pub fn register<P: Primitive + 'static>(&mut self, p: P) {
        self.entries.insert(p.key(), Arc::new(p));
    }

    pub fn get(&self, key: &str) -> Option<&dyn Primitive> {
        self.entries.get(key).map(|p| p.as_ref())
    }

    pub fn keys(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }
}

/// Sorted distinct labels and each row's index into them.
pub(crate) fn index_labels(y: &Vector) -> (Vec<String>, Vec<usize>) {
    let labels = y.as_labels();
    let mut classes: Vec<String> = labels.clone();
    classes.sort();
    classes.dedup();
    let idx = labels.iter().map(|l| classes.binary_search(l).expect("label present")).collect();
    (classes, idx)
}

pub(crate) fn numeric_target(y: &Vector, name: &str) -> Result<Vec<f64>> {
    match y {
        Vector::Numeric(v) => Ok(v.clone()),
        Vector::Labels(_) => Err(PrimitiveError::WrongKind {
            name: format!("{name} (numeric)"),
            expected: ValueKind::Vector,
        }),
    }
}

pub(crate) fn check_rows(x: &Matrix, y_len: usize) -> Result<()> {
    if x.n_rows() != y_len {
        return Err(PrimitiveError::ShapeMismatch(format!(
            "X has {} rows but y has {y_len}",
            x.n_rows()
        )));
    }
    if x.n_rows() == 0 {
        return Err(PrimitiveError::DegenerateInput("no training rows".into()));
    }
    Ok(())
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Derives an independent stream seed from a parent seed and an index.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_registry_keys_are_unique_and_complete() {
        let r = NativeRegistry::builtin();
        assert_eq!(r.keys().count(), 17);
        assert!(r.get("random_forest_classifier").is_some());
        assert!(r.get("nope").is_none());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0]), 0);
    }

    #[test]
    fn split_seed_is_deterministic_and_spreads() {
        assert_eq!(split_seed(7, 3), split_seed(7, 3));
        assert_ne!(split_seed(7, 3), split_seed(7, 4));
        assert_ne!(split_seed(7, 3), split_seed(8, 3));
    }
}
