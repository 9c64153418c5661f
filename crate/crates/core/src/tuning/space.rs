//! Joint hyperparameter spaces keyed by `(step index, name)`, with an
//! encoding into the unit hypercube for the GP meta-model.
//!
//! Per-spec encoding:
//! - float / int: affine map of `[lo, hi]` onto `[0, 1]` (in log space when
//!   the scale is log); ints decode to the nearest feasible integer
//! - bool: `0` or `1`
//! - categorical: one-hot over the declared values; decode takes the argmax,
//!   ties resolving to the lowest index

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::annotations::{Domain, HyperValue, HyperparamSpec, Scale};

/// Identifies one hyperparameter of one pipeline step. Displayed and
/// serialized as `"<step>.<name>"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpaceKey {
    pub step: usize,
    pub name: String,
}

impl SpaceKey {
    pub fn new(step: usize, name: impl Into<String>) -> Self {
        SpaceKey { step, name: name.into() }
    }
}

impl fmt::Display for SpaceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.step, self.name)
    }
}

impl FromStr for SpaceKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (step, name) = s.split_once('.').ok_or_else(|| format!("bad space key {s:?}"))?;
        let step = step.parse().map_err(|_| format!("bad step index in {s:?}"))?;
        if name.is_empty() {
            return Err(format!("empty name in {s:?}"));
        }
        Ok(SpaceKey::new(step, name))
    }
}

impl Serialize for SpaceKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpaceKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A full or partial assignment of values to space keys.
pub type Assignment = BTreeMap<SpaceKey, HyperValue>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("duplicate space key {0}")]
    DuplicateKey(SpaceKey),
    #[error("missing hyperparameter {0}")]
    MissingHyperparam(SpaceKey),
    #[error("hyperparameter {0} is not part of the space")]
    UnknownHyperparam(SpaceKey),
    #[error("value {value} is out of range for {key}")]
    OutOfRange { key: SpaceKey, value: HyperValue },
    #[error("expected a vector of dimension {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HyperparamSpace {
    /// Sorted by key, keys unique.
    entries: Vec<(SpaceKey, HyperparamSpec)>,
}

fn width(spec: &HyperparamSpec) -> usize {
    match &spec.domain {
        Domain::Categorical(values) => values.len(),
        _ => 1,
    }
}

fn to_unit(x: f64, lo: f64, hi: f64, scale: Scale) -> f64 {
    let (x, lo, hi) = match scale {
        Scale::Linear => (x, lo, hi),
        Scale::Log => (x.ln(), lo.ln(), hi.ln()),
    };
    if hi > lo {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn from_unit(u: f64, lo: f64, hi: f64, scale: Scale) -> f64 {
    let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
    let x = match scale {
        Scale::Linear => lo + u * (hi - lo),
        Scale::Log => (lo.ln() + u * (hi.ln() - lo.ln())).exp(),
    };
    x.clamp(lo, hi)
}

impl HyperparamSpace {
    pub fn new(mut entries: Vec<(SpaceKey, HyperparamSpec)>) -> Result<Self, SpaceError> {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(SpaceError::DuplicateKey(w[0].0.clone()));
            }
        }
        Ok(HyperparamSpace { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Dimension of the encoded vector.
    pub fn dim(&self) -> usize {
        self.entries.iter().map(|(_, s)| width(s)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SpaceKey, &HyperparamSpec)> {
        self.entries.iter().map(|(k, s)| (k, s))
    }

    pub fn keys(&self) -> impl Iterator<Item = &SpaceKey> {
        self.entries.iter().map(|(k, _)| k)
    }

    pub fn get(&self, key: &SpaceKey) -> Option<&HyperparamSpec> {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(key))
            .ok()
            .map(|i| &self.entries[i].1)
    }

    /// Every key bound to its annotated default.
    pub fn defaults(&self) -> Assignment {
        self.entries.iter().map(|(k, s)| (k.clone(), s.default.clone())).collect()
    }

    /// Checks that `lambda` covers the space exactly with in-range values.
    pub fn check(&self, lambda: &Assignment) -> Result<(), SpaceError> {
        for (key, spec) in &self.entries {
            let v = lambda.get(key).ok_or_else(|| SpaceError::MissingHyperparam(key.clone()))?;
            if !spec.domain.contains(v) {
                return Err(SpaceError::OutOfRange { key: key.clone(), value: v.clone() });
            }
        }
        if let Some(extra) = lambda.keys().find(|k| self.get(k).is_none()) {
            return Err(SpaceError::UnknownHyperparam(extra.clone()));
        }
        Ok(())
    }

    pub fn encode(&self, lambda: &Assignment) -> Result<Vec<f64>, SpaceError> {
        self.check(lambda)?;
        let mut x = Vec::with_capacity(self.dim());
        for (key, spec) in &self.entries {
            let v = &lambda[key];
            match &spec.domain {
                Domain::Int { lo, hi } => {
                    x.push(to_unit(v.as_f64().unwrap_or(0.0), *lo as f64, *hi as f64, spec.scale))
                }
                Domain::Float { lo, hi } => x.push(to_unit(v.as_f64().unwrap_or(0.0), *lo, *hi, spec.scale)),
                Domain::Bool => x.push(if v.as_bool() == Some(true) { 1.0 } else { 0.0 }),
                Domain::Categorical(values) => {
                    let at = values.iter().position(|c| Some(c.as_str()) == v.as_str());
                    x.extend((0..values.len()).map(|i| if Some(i) == at { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(x)
    }

    pub fn decode(&self, x: &[f64]) -> Result<Assignment, SpaceError> {
        if x.len() != self.dim() {
            return Err(SpaceError::DimensionMismatch { expected: self.dim(), actual: x.len() });
        }
        let mut out = Assignment::new();
        let mut at = 0;
        for (key, spec) in &self.entries {
            let v = match &spec.domain {
                Domain::Int { lo, hi } => {
                    let f = from_unit(x[at], *lo as f64, *hi as f64, spec.scale);
                    HyperValue::Int((f.round() as i64).clamp(*lo, *hi))
                }
                Domain::Float { lo, hi } => HyperValue::Float(from_unit(x[at], *lo, *hi, spec.scale)),
                Domain::Bool => HyperValue::Bool(x[at] >= 0.5),
                Domain::Categorical(values) => {
                    let slice = &x[at..at + values.len()];
                    let mut best = 0;
                    for (i, &v) in slice.iter().enumerate() {
                        if v > slice[best] {
                            best = i;
                        }
                    }
                    HyperValue::Str(values[best].clone())
                }
            };
            at += width(spec);
            out.insert(key.clone(), v);
        }
        Ok(out)
    }

    /// Draws a uniform sample: uniform in encoded coordinates for continuous
    /// values (log-uniform on log scales), uniform over the feasible set for
    /// discrete ones.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        self.entries
            .iter()
            .map(|(key, spec)| {
                let v = match &spec.domain {
                    Domain::Int { lo, hi } => match spec.scale {
                        Scale::Linear => HyperValue::Int(rng.random_range(*lo..=*hi)),
                        Scale::Log => {
                            let f = from_unit(rng.random::<f64>(), *lo as f64, *hi as f64, Scale::Log);
                            HyperValue::Int((f.round() as i64).clamp(*lo, *hi))
                        }
                    },
                    Domain::Float { lo, hi } => {
                        HyperValue::Float(from_unit(rng.random::<f64>(), *lo, *hi, spec.scale))
                    }
                    Domain::Bool => HyperValue::Bool(rng.random::<bool>()),
                    Domain::Categorical(values) => {
                        HyperValue::Str(values[rng.random_range(0..values.len())].clone())
                    }
                };
                (key.clone(), v)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(name: &str, domain: Domain, default: HyperValue, scale: Scale) -> HyperparamSpec {
        HyperparamSpec { name: name.into(), domain, default, scale }
    }

    fn mixed_space() -> HyperparamSpace {
        HyperparamSpace::new(vec![
            (SpaceKey::new(0, "f"), spec("f", Domain::Float { lo: 0.0, hi: 10.0 }, HyperValue::Float(5.0), Scale::Linear)),
            (
                SpaceKey::new(0, "lr"),
                spec("lr", Domain::Float { lo: 1e-4, hi: 1.0 }, HyperValue::Float(1e-2), Scale::Log),
            ),
            (
                SpaceKey::new(1, "c"),
                spec("c", Domain::Categorical(vec!["a".into(), "b".into(), "c".into()]), HyperValue::Str("b".into()), Scale::Linear),
            ),
            (SpaceKey::new(1, "flag"), spec("flag", Domain::Bool, HyperValue::Bool(true), Scale::Linear)),
            (SpaceKey::new(2, "k"), spec("k", Domain::Int { lo: 1, hi: 20 }, HyperValue::Int(7), Scale::Linear)),
            (SpaceKey::new(2, "n"), spec("n", Domain::Int { lo: 1, hi: 1000 }, HyperValue::Int(30), Scale::Log)),
        ])
        .unwrap()
    }

    #[test]
    fn width_counts_one_hot_columns() {
        assert_eq!(mixed_space().dim(), 8);
    }

    #[test]
    fn linear_midpoint_encodes_to_half() {
        let s = mixed_space();
        let x = s.encode(&s.defaults()).unwrap();
        assert_eq!(x[0], 0.5);
    }

    #[test]
    fn log_midpoint_encodes_to_half() {
        let s = mixed_space();
        let x = s.encode(&s.defaults()).unwrap();
        assert!((x[1] - 0.5).abs() < 1e-12, "{}", x[1]);
    }

    #[test]
    fn categorical_is_one_hot() {
        let s = mixed_space();
        let x = s.encode(&s.defaults()).unwrap();
        assert_eq!(&x[2..5], &[0.0, 1.0, 0.0]);
        assert_eq!(s.decode(&x).unwrap()[&SpaceKey::new(1, "c")], HyperValue::Str("b".into()));
    }

    #[test]
    fn categorical_ties_decode_to_lowest_index() {
        let s = mixed_space();
        let mut x = s.encode(&s.defaults()).unwrap();
        x[2..5].copy_from_slice(&[0.3, 0.7, 0.7]);
        assert_eq!(s.decode(&x).unwrap()[&SpaceKey::new(1, "c")], HyperValue::Str("b".into()));
    }

    #[test]
    fn out_of_range_and_coverage_errors() {
        let s = mixed_space();
        let mut l = s.defaults();
        l.insert(SpaceKey::new(2, "k"), HyperValue::Int(30));
        assert!(matches!(s.encode(&l), Err(SpaceError::OutOfRange { .. })));
        let mut l = s.defaults();
        l.remove(&SpaceKey::new(0, "f"));
        assert_eq!(s.check(&l), Err(SpaceError::MissingHyperparam(SpaceKey::new(0, "f"))));
        let mut l = s.defaults();
        l.insert(SpaceKey::new(9, "z"), HyperValue::Int(1));
        assert_eq!(s.check(&l), Err(SpaceError::UnknownHyperparam(SpaceKey::new(9, "z"))));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let a = spec("a", Domain::Bool, HyperValue::Bool(false), Scale::Linear);
        let err = HyperparamSpace::new(vec![(SpaceKey::new(0, "a"), a.clone()), (SpaceKey::new(0, "a"), a)]);
        assert!(matches!(err, Err(SpaceError::DuplicateKey(_))));
    }

    #[test]
    fn empty_space_round_trips_the_empty_assignment() {
        let s = HyperparamSpace::default();
        assert_eq!(s.encode(&Assignment::new()).unwrap(), Vec::<f64>::new());
        assert!(s.decode(&[]).unwrap().is_empty());
    }

    #[test]
    fn space_key_string_form() {
        let k = SpaceKey::new(3, "max_depth");
        assert_eq!(k.to_string(), "3.max_depth");
        assert_eq!("3.max_depth".parse::<SpaceKey>().unwrap(), k);
        let l: Assignment = [(k, HyperValue::Int(4))].into();
        assert_eq!(serde_json::to_string(&l).unwrap(), r#"{"3.max_depth":4}"#);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(seed in any::<u64>()) {
            let s = mixed_space();
            let l = s.sample(&mut ChaCha8Rng::seed_from_u64(seed));
            let back = s.decode(&s.encode(&l).unwrap()).unwrap();
            for (k, v) in &l {
                match (v, &back[k]) {
                    (HyperValue::Float(a), HyperValue::Float(b)) => {
                        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{a} vs {b}")
                    }
                    (a, b) => prop_assert_eq!(a, b),
                }
            }
        }

        #[test]
        fn samples_are_in_range(seed in any::<u64>()) {
            let s = mixed_space();
            let l = s.sample(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert!(s.check(&l).is_ok());
            let x = s.encode(&l).unwrap();
            prop_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn decode_is_total_on_the_cube(x in proptest::collection::vec(0.0f64..=1.0, 8)) {
            let s = mixed_space();
            prop_assert!(s.check(&s.decode(&x).unwrap()).is_ok());
        }
    }
}
