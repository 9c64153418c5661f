//! Primitive annotations: the JSON metadata that describes a primitive's
//! identity, its fit/produce signatures and its hyperparameters.
//!
//! Annotation file layout (one primitive per file):
//!
//! ```json
//! {
//!   "name": "bazaar.StandardScaler",
//!   "description": "...", "documentation": "...", "author": "...",
//!   "modalities": ["single_table"],
//!   "implementation": "standard_scaler",
//!   "fit": {"inputs": [{"name": "X", "type": "matrix"}]},
//!   "produce": {"inputs": [{"name": "X", "type": "matrix"}],
//!               "outputs": [{"name": "X", "type": "matrix"}]},
//!   "hyperparameters": {
//!     "fixed": {"name": value},
//!     "tunable": {"name": {"type": "int", "range": [1, 20], "default": 5, "scale": "linear"}},
//!     "conditional": {"name": {"parent": "p", "branches": {"a": {...spec...}, "b": null}}}
//!   }
//! }
//! ```
//!
//! I/O entries may carry an optional `"alias"`, a library-specific synonym that
//! input/output maps can use to address the entry.

mod catalog;
mod schema;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use catalog::{load_catalog, Catalog, CatalogError, LoadOptions};
pub use schema::{annotation_to_json, parse_annotation, AnnotationError};

use crate::data::ValueKind;
use crate::primitives::NativeRegistry;

/// A named, typed input or output of a primitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataTypeDecl {
    pub name: String,
    pub kind: ValueKind,
    pub alias: Option<String>,
}

impl DataTypeDecl {
    pub fn new(name: impl Into<String>, kind: ValueKind) -> Self {
        DataTypeDecl { name: name.into(), kind, alias: None }
    }

    /// True if `key` addresses this entry by name or alias.
    pub fn answers_to(&self, key: &str) -> bool {
        self.name == key || self.alias.as_deref() == Some(key)
    }
}

/// A concrete hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl HyperValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            HyperValue::Int(i) => Some(*i as f64),
            HyperValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            HyperValue::Int(i) => Some(*i),
            HyperValue::Float(f) if f.fract() == 0.0 => Some(*f as i64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            HyperValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            HyperValue::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Bool(b) => write!(f, "{b}"),
            HyperValue::Int(i) => write!(f, "{i}"),
            HyperValue::Float(x) => write!(f, "{x}"),
            HyperValue::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperKind {
    Int,
    Float,
    Categorical,
    Bool,
}

impl HyperKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HyperKind::Int => "int",
            HyperKind::Float => "float",
            HyperKind::Categorical => "categorical",
            HyperKind::Bool => "bool",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// Feasible values of one hyperparameter. Numeric ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Int { lo: i64, hi: i64 },
    Float { lo: f64, hi: f64 },
    Categorical(Vec<String>),
    Bool,
}

impl Domain {
    pub fn kind(&self) -> HyperKind {
        match self {
            Domain::Int { .. } => HyperKind::Int,
            Domain::Float { .. } => HyperKind::Float,
            Domain::Categorical(_) => HyperKind::Categorical,
            Domain::Bool => HyperKind::Bool,
        }
    }

    /// Whether `value` lies in the domain. Float domains accept integers.
    pub fn contains(&self, value: &HyperValue) -> bool {
        match (self, value) {
            (Domain::Int { lo, hi }, HyperValue::Int(v)) => lo <= v && v <= hi,
            (Domain::Float { lo, hi }, v) => match v.as_f64() {
                Some(x) => x.is_finite() && *lo <= x && x <= *hi,
                None => false,
            },
            (Domain::Categorical(values), HyperValue::Str(s)) => values.contains(s),
            (Domain::Bool, HyperValue::Bool(_)) => true,
            _ => false,
        }
    }

    /// Values of a finite domain, or `None` for numeric ranges.
    pub fn finite_values(&self) -> Option<Vec<HyperValue>> {
        match self {
            Domain::Categorical(v) => Some(v.iter().cloned().map(HyperValue::Str).collect()),
            Domain::Bool => Some(vec![HyperValue::Bool(false), HyperValue::Bool(true)]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSpec {
    pub name: String,
    pub domain: Domain,
    pub default: HyperValue,
    pub scale: Scale,
}

impl HyperparamSpec {
    pub fn kind(&self) -> HyperKind {
        self.domain.kind()
    }

    /// Invariant violations of this spec in isolation, as human-readable reasons.
    pub fn check(&self) -> Vec<String> {
        let mut reasons = Vec::new();
        match &self.domain {
            Domain::Int { lo, hi } => {
                if lo > hi {
                    reasons.push(format!("lo {lo} > hi {hi}"));
                }
                if self.scale == Scale::Log && *lo <= 0 {
                    reasons.push("log scale requires lo > 0".into());
                }
            }
            Domain::Float { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) {
                    reasons.push("range bounds must be finite".into());
                } else if lo > hi {
                    reasons.push(format!("lo {lo} > hi {hi}"));
                }
                if self.scale == Scale::Log && *lo <= 0.0 {
                    reasons.push("log scale requires lo > 0".into());
                }
            }
            Domain::Categorical(values) => {
                if values.is_empty() {
                    reasons.push("categorical domain is empty".into());
                }
                let unique: BTreeSet<_> = values.iter().collect();
                if unique.len() != values.len() {
                    reasons.push("categorical domain has duplicate values".into());
                }
                if self.scale == Scale::Log {
                    reasons.push("log scale only applies to numeric kinds".into());
                }
            }
            Domain::Bool => {
                if self.scale == Scale::Log {
                    reasons.push("log scale only applies to numeric kinds".into());
                }
            }
        }
        if reasons.is_empty() && !self.domain.contains(&self.default) {
            reasons.push(format!("default {} is outside the feasible values", self.default));
        }
        reasons
    }
}

/// A hyperparameter that only exists for some values of a categorical parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSpec {
    pub name: String,
    pub parent: String,
    /// Parent value -> the branch's spec, or `None` when absent in that branch.
    pub branches: BTreeMap<String, Option<HyperparamSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveAnnotation {
    pub name: String,
    pub description: String,
    pub documentation: String,
    pub author: String,
    pub modalities: Vec<String>,
    pub implementation: Option<String>,
    pub fit_inputs: Vec<DataTypeDecl>,
    pub produce_inputs: Vec<DataTypeDecl>,
    pub produce_outputs: Vec<DataTypeDecl>,
    pub fixed_hyperparams: BTreeMap<String, HyperValue>,
    /// Sorted by name.
    pub tunable_hyperparams: Vec<HyperparamSpec>,
    /// Sorted by name.
    pub conditional_hyperparams: Vec<ConditionalSpec>,
}

impl PrimitiveAnnotation {
    /// Short display name: the last dotted component.
    pub fn short_name(&self) -> &str {
        self.name.rsplit('.').next().unwrap_or(&self.name)
    }

    /// Whether the primitive learns anything during fit.
    pub fn has_fit(&self) -> bool {
        !self.fit_inputs.is_empty()
    }

    /// Every input read at training time: fit inputs followed by produce
    /// inputs not already listed, in declaration order.
    pub fn all_inputs(&self) -> Vec<&DataTypeDecl> {
        let mut out: Vec<&DataTypeDecl> = self.fit_inputs.iter().collect();
        for d in &self.produce_inputs {
            if !out.iter().any(|o| o.name == d.name) {
                out.push(d);
            }
        }
        out
    }

    pub fn tunable(&self, name: &str) -> Option<&HyperparamSpec> {
        self.tunable_hyperparams.iter().find(|s| s.name == name)
    }

    pub fn conditional(&self, name: &str) -> Option<&ConditionalSpec> {
        self.conditional_hyperparams.iter().find(|s| s.name == name)
    }

    /// Names of every fixed, tunable, and conditional hyperparameter.
    pub fn hyperparam_names(&self) -> BTreeSet<&str> {
        self.fixed_hyperparams
            .keys()
            .map(String::as_str)
            .chain(self.tunable_hyperparams.iter().map(|s| s.name.as_str()))
            .chain(self.conditional_hyperparams.iter().map(|s| s.name.as_str()))
            .collect()
    }
}

/// A broken annotation invariant. Violations are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyName,
    EmptyProduceOutputs,
    EmptyIoName { section: &'static str },
    DuplicateIoName { section: &'static str, name: String },
    OverlappingHyperparam(String),
    InvalidSpec { name: String, reason: String },
    DanglingConditionalParent { name: String, parent: String },
    NonCategoricalParent { name: String, parent: String },
    MissingBranch { name: String, value: String },
    UnexpectedBranch { name: String, value: String },
    UnknownImplementation(String),
    ArityMismatch { section: &'static str, annotated: usize, implemented: usize },
    IoNameMismatch { section: &'static str, annotated: String, implemented: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyName => f.write_str("primitive name is empty"),
            Violation::EmptyProduceOutputs => f.write_str("produce outputs are empty"),
            Violation::EmptyIoName { section } => write!(f, "{section}: entry with empty name"),
            Violation::DuplicateIoName { section, name } => {
                write!(f, "{section}: duplicate data type name {name:?}")
            }
            Violation::OverlappingHyperparam(n) => {
                write!(f, "hyperparameter {n:?} is declared in more than one section")
            }
            Violation::InvalidSpec { name, reason } => write!(f, "hyperparameter {name:?}: {reason}"),
            Violation::DanglingConditionalParent { name, parent } => {
                write!(f, "conditional {name:?} refers to missing parent {parent:?}")
            }
            Violation::NonCategoricalParent { name, parent } => {
                write!(f, "conditional {name:?}: parent {parent:?} is not categorical")
            }
            Violation::MissingBranch { name, value } => {
                write!(f, "conditional {name:?} has no branch for parent value {value:?}")
            }
            Violation::UnexpectedBranch { name, value } => {
                write!(f, "conditional {name:?} has a branch for unknown parent value {value:?}")
            }
            Violation::UnknownImplementation(k) => write!(f, "unknown implementation {k:?}"),
            Violation::ArityMismatch { section, annotated, implemented } => write!(
                f,
                "{section}: annotation declares {annotated} entries, implementation expects {implemented}"
            ),
            Violation::IoNameMismatch { section, annotated, implemented } => write!(
                f,
                "{section}: annotation declares {annotated:?}, implementation expects {implemented:?}"
            ),
        }
    }
}

/// Checks every annotation invariant and, when an implementation key is
/// present, that the registry knows it and its signature matches.
pub fn validate_annotation(ann: &PrimitiveAnnotation, registry: &NativeRegistry) -> Vec<Violation> {
    let mut out = Vec::new();
    if ann.name.trim().is_empty() {
        out.push(Violation::EmptyName);
    }
    if ann.produce_outputs.is_empty() {
        out.push(Violation::EmptyProduceOutputs);
    }
    for (section, list) in [
        ("fit.inputs", &ann.fit_inputs),
        ("produce.inputs", &ann.produce_inputs),
        ("produce.outputs", &ann.produce_outputs),
    ] {
        let mut seen = BTreeSet::new();
        for d in list {
            if d.name.is_empty() {
                out.push(Violation::EmptyIoName { section });
            } else if !seen.insert(d.name.as_str()) {
                out.push(Violation::DuplicateIoName { section, name: d.name.clone() });
            }
        }
    }

    let mut seen = BTreeSet::new();
    let all_names = ann
        .fixed_hyperparams
        .keys()
        .chain(ann.tunable_hyperparams.iter().map(|s| &s.name))
        .chain(ann.conditional_hyperparams.iter().map(|s| &s.name));
    for n in all_names {
        if !seen.insert(n.as_str()) {
            out.push(Violation::OverlappingHyperparam(n.clone()));
        }
    }

    for spec in &ann.tunable_hyperparams {
        for reason in spec.check() {
            out.push(Violation::InvalidSpec { name: spec.name.clone(), reason });
        }
    }

    for cond in &ann.conditional_hyperparams {
        let parent_values: Option<Vec<String>> = if let Some(t) = ann.tunable(&cond.parent) {
            match &t.domain {
                Domain::Categorical(v) => Some(v.clone()),
                _ => {
                    out.push(Violation::NonCategoricalParent {
                        name: cond.name.clone(),
                        parent: cond.parent.clone(),
                    });
                    None
                }
            }
        } else if let Some(v) = ann.fixed_hyperparams.get(&cond.parent) {
            match v {
                HyperValue::Str(s) => Some(vec![s.clone()]),
                _ => {
                    out.push(Violation::NonCategoricalParent {
                        name: cond.name.clone(),
                        parent: cond.parent.clone(),
                    });
                    None
                }
            }
        } else {
            out.push(Violation::DanglingConditionalParent {
                name: cond.name.clone(),
                parent: cond.parent.clone(),
            });
            None
        };
        let fixed_parent = ann.fixed_hyperparams.contains_key(&cond.parent);
        if let Some(values) = parent_values {
            for v in &values {
                if !cond.branches.contains_key(v) {
                    out.push(Violation::MissingBranch { name: cond.name.clone(), value: v.clone() });
                }
            }
            if !fixed_parent {
                for v in cond.branches.keys() {
                    if !values.contains(v) {
                        out.push(Violation::UnexpectedBranch {
                            name: cond.name.clone(),
                            value: v.clone(),
                        });
                    }
                }
            }
        }
        for spec in cond.branches.values().flatten() {
            for reason in spec.check() {
                out.push(Violation::InvalidSpec { name: cond.name.clone(), reason });
            }
        }
    }

    if let Some(key) = &ann.implementation {
        match registry.get(key) {
            None => out.push(Violation::UnknownImplementation(key.clone())),
            Some(imp) => {
                let sig = imp.signature();
                for (section, annotated, implemented) in [
                    ("fit.inputs", &ann.fit_inputs, sig.fit_inputs),
                    ("produce.inputs", &ann.produce_inputs, sig.produce_inputs),
                    ("produce.outputs", &ann.produce_outputs, sig.produce_outputs),
                ] {
                    if annotated.len() != implemented.len() {
                        out.push(Violation::ArityMismatch {
                            section,
                            annotated: annotated.len(),
                            implemented: implemented.len(),
                        });
                        continue;
                    }
                    for (a, (name, kind)) in annotated.iter().zip(implemented.iter()) {
                        if a.name != *name || a.kind != *kind {
                            out.push(Violation::IoNameMismatch {
                                section,
                                annotated: format!("{}:{}", a.name, a.kind),
                                implemented: format!("{name}:{kind}"),
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> PrimitiveAnnotation {
        PrimitiveAnnotation {
            name: "test.Model".into(),
            description: String::new(),
            documentation: String::new(),
            author: String::new(),
            modalities: vec![],
            implementation: None,
            fit_inputs: vec![],
            produce_inputs: vec![DataTypeDecl::new("X", ValueKind::Matrix)],
            produce_outputs: vec![DataTypeDecl::new("X", ValueKind::Matrix)],
            fixed_hyperparams: BTreeMap::new(),
            tunable_hyperparams: vec![],
            conditional_hyperparams: vec![],
        }
    }

    #[test]
    fn recovery_only_annotation_is_valid() {
        assert!(validate_annotation(&base(), &NativeRegistry::default()).is_empty());
    }

    #[test]
    fn registered_key_with_matching_signature_is_valid() {
        let mut ann = base();
        ann.implementation = Some("standard_scaler".into());
        ann.fit_inputs = vec![DataTypeDecl::new("X", ValueKind::Matrix)];
        assert_eq!(validate_annotation(&ann, &NativeRegistry::builtin()), vec![]);
    }

    #[test]
    fn unknown_implementation_is_reported() {
        let mut ann = base();
        ann.implementation = Some("no_such_thing".into());
        assert_eq!(
            validate_annotation(&ann, &NativeRegistry::builtin()),
            vec![Violation::UnknownImplementation("no_such_thing".into())]
        );
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let mut ann = base();
        ann.implementation = Some("standard_scaler".into());
        let v = validate_annotation(&ann, &NativeRegistry::builtin());
        assert_eq!(
            v,
            vec![Violation::ArityMismatch { section: "fit.inputs", annotated: 0, implemented: 1 }]
        );
    }

    #[test]
    fn dangling_conditional_parent() {
        let mut ann = base();
        ann.conditional_hyperparams.push(ConditionalSpec {
            name: "gamma".into(),
            parent: "kernel".into(),
            branches: BTreeMap::new(),
        });
        assert_eq!(
            validate_annotation(&ann, &NativeRegistry::default()),
            vec![Violation::DanglingConditionalParent {
                name: "gamma".into(),
                parent: "kernel".into()
            }]
        );
    }

    #[test]
    fn conditional_branch_coverage() {
        let mut ann = base();
        ann.tunable_hyperparams.push(HyperparamSpec {
            name: "kernel".into(),
            domain: Domain::Categorical(vec!["linear".into(), "rbf".into()]),
            default: HyperValue::Str("rbf".into()),
            scale: Scale::Linear,
        });
        let mut branches = BTreeMap::new();
        branches.insert("rbf".to_string(), None);
        branches.insert("poly".to_string(), None);
        ann.conditional_hyperparams.push(ConditionalSpec {
            name: "gamma".into(),
            parent: "kernel".into(),
            branches,
        });
        let v = validate_annotation(&ann, &NativeRegistry::default());
        assert!(v.contains(&Violation::MissingBranch { name: "gamma".into(), value: "linear".into() }));
        assert!(v.contains(&Violation::UnexpectedBranch { name: "gamma".into(), value: "poly".into() }));
    }

    #[test]
    fn overlapping_names_and_bad_specs() {
        let mut ann = base();
        ann.fixed_hyperparams.insert("depth".into(), HyperValue::Int(3));
        ann.tunable_hyperparams.push(HyperparamSpec {
            name: "depth".into(),
            domain: Domain::Float { lo: 0.0, hi: 1.0 },
            default: HyperValue::Float(0.5),
            scale: Scale::Log,
        });
        ann.produce_outputs.clear();
        let v = validate_annotation(&ann, &NativeRegistry::default());
        assert!(v.contains(&Violation::EmptyProduceOutputs));
        assert!(v.contains(&Violation::OverlappingHyperparam("depth".into())));
        assert!(v.iter().any(|x| matches!(x, Violation::InvalidSpec { .. })));
    }

    #[test]
    fn validation_is_pure() {
        let mut ann = base();
        ann.implementation = Some("missing".into());
        let reg = NativeRegistry::builtin();
        assert_eq!(validate_annotation(&ann, &reg), validate_annotation(&ann, &reg));
    }
}
