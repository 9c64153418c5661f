//! JSON reading and writing of annotation files. Errors carry JSON-pointer
//! paths into the offending document.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use super::{
    ConditionalSpec, DataTypeDecl, Domain, HyperValue, HyperparamSpec, PrimitiveAnnotation, Scale,
};
use crate::data::ValueKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotationError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing field {0}")]
    MissingField(String),
    #[error("{path}: unknown kind {value:?}")]
    UnknownKind { path: String, value: String },
    #[error("{path}: {message}")]
    RangeError { path: String, message: String },
    #[error("{path}: expected {expected}")]
    InvalidType { path: String, expected: &'static str },
}

type Result<T> = std::result::Result<T, AnnotationError>;

fn escape(seg: &str) -> String {
    seg.replace('~', "~0").replace('/', "~1")
}

fn child(path: &str, seg: &str) -> String {
    format!("{path}/{}", escape(seg))
}

fn as_object<'a>(v: &'a Json, path: &str) -> Result<&'a Map<String, Json>> {
    v.as_object()
        .ok_or_else(|| AnnotationError::InvalidType { path: path.to_string(), expected: "object" })
}

fn req<'a>(obj: &'a Map<String, Json>, path: &str, key: &str) -> Result<&'a Json> {
    obj.get(key).ok_or_else(|| AnnotationError::MissingField(child(path, key)))
}

fn opt_string(obj: &Map<String, Json>, path: &str, key: &str) -> Result<String> {
    match obj.get(key) {
        None | Some(Json::Null) => Ok(String::new()),
        Some(Json::String(s)) => Ok(s.clone()),
        Some(_) => Err(AnnotationError::InvalidType { path: child(path, key), expected: "string" }),
    }
}

fn string_list(v: &Json, path: &str) -> Result<Vec<String>> {
    let arr = v
        .as_array()
        .ok_or_else(|| AnnotationError::InvalidType { path: path.to_string(), expected: "array" })?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_str().map(str::to_string).ok_or_else(|| AnnotationError::InvalidType {
                path: child(path, &i.to_string()),
                expected: "string",
            })
        })
        .collect()
}

fn io_list(obj: &Map<String, Json>, path: &str, key: &str) -> Result<Vec<DataTypeDecl>> {
    let Some(v) = obj.get(key) else { return Ok(Vec::new()) };
    let p = child(path, key);
    let arr = v
        .as_array()
        .ok_or_else(|| AnnotationError::InvalidType { path: p.clone(), expected: "array" })?;
    arr.iter()
        .enumerate()
        .map(|(i, entry)| {
            let ep = child(&p, &i.to_string());
            let e = as_object(entry, &ep)?;
            let name = req(e, &ep, "name")?
                .as_str()
                .ok_or_else(|| AnnotationError::InvalidType {
                    path: child(&ep, "name"),
                    expected: "string",
                })?
                .to_string();
            let kind_s = req(e, &ep, "type")?.as_str().ok_or_else(|| {
                AnnotationError::InvalidType { path: child(&ep, "type"), expected: "string" }
            })?;
            let kind = ValueKind::parse(kind_s).ok_or_else(|| AnnotationError::UnknownKind {
                path: child(&ep, "type"),
                value: kind_s.to_string(),
            })?;
            let alias = match e.get("alias") {
                None | Some(Json::Null) => None,
                Some(Json::String(s)) => Some(s.clone()),
                Some(_) => {
                    return Err(AnnotationError::InvalidType {
                        path: child(&ep, "alias"),
                        expected: "string",
                    })
                }
            };
            Ok(DataTypeDecl { name, kind, alias })
        })
        .collect()
}

pub(crate) fn hyper_value(v: &Json, path: &str) -> Result<HyperValue> {
    match v {
        Json::Bool(b) => Ok(HyperValue::Bool(*b)),
        Json::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(HyperValue::Int(i))
            } else {
                Ok(HyperValue::Float(n.as_f64().unwrap_or(f64::NAN)))
            }
        }
        Json::String(s) => Ok(HyperValue::Str(s.clone())),
        _ => Err(AnnotationError::InvalidType {
            path: path.to_string(),
            expected: "bool, number or string",
        }),
    }
}

pub(crate) fn hyper_value_json(v: &HyperValue) -> Json {
    match v {
        HyperValue::Bool(b) => json!(b),
        HyperValue::Int(i) => json!(i),
        HyperValue::Float(f) => json!(f),
        HyperValue::Str(s) => json!(s),
    }
}

fn range_err(path: String, message: impl Into<String>) -> AnnotationError {
    AnnotationError::RangeError { path, message: message.into() }
}

fn parse_spec(name: &str, v: &Json, path: &str) -> Result<HyperparamSpec> {
    let obj = as_object(v, path)?;
    let kind = req(obj, path, "type")?
        .as_str()
        .ok_or_else(|| AnnotationError::InvalidType { path: child(path, "type"), expected: "string" })?;
    let scale = match obj.get("scale") {
        None | Some(Json::Null) => Scale::Linear,
        Some(Json::String(s)) if s == "linear" => Scale::Linear,
        Some(Json::String(s)) if s == "log" => Scale::Log,
        Some(Json::String(s)) => {
            return Err(AnnotationError::UnknownKind { path: child(path, "scale"), value: s.clone() })
        }
        Some(_) => {
            return Err(AnnotationError::InvalidType { path: child(path, "scale"), expected: "string" })
        }
    };
    let default_path = child(path, "default");
    let default = hyper_value(req(obj, path, "default")?, &default_path)?;
    let domain = match kind {
        "int" | "float" => {
            let rp = child(path, "range");
            let range = req(obj, path, "range")?
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| AnnotationError::InvalidType { path: rp.clone(), expected: "[lo, hi]" })?;
            if kind == "int" {
                let lo = range[0].as_i64();
                let hi = range[1].as_i64();
                let (Some(lo), Some(hi)) = (lo, hi) else {
                    return Err(AnnotationError::InvalidType { path: rp, expected: "integer bounds" });
                };
                Domain::Int { lo, hi }
            } else {
                let (Some(lo), Some(hi)) = (range[0].as_f64(), range[1].as_f64()) else {
                    return Err(AnnotationError::InvalidType { path: rp, expected: "numeric bounds" });
                };
                Domain::Float { lo, hi }
            }
        }
        "categorical" => {
            let vp = child(path, "values");
            Domain::Categorical(string_list(req(obj, path, "values")?, &vp)?)
        }
        "bool" => Domain::Bool,
        other => {
            return Err(AnnotationError::UnknownKind {
                path: child(path, "type"),
                value: other.to_string(),
            })
        }
    };
    // Integer-valued defaults for float ranges are fine; store them as floats.
    let default = match (&domain, default) {
        (Domain::Float { .. }, HyperValue::Int(i)) => HyperValue::Float(i as f64),
        (_, d) => d,
    };
    let spec = HyperparamSpec { name: name.to_string(), domain, default, scale };
    match spec.domain {
        Domain::Int { lo, hi } if lo > hi => {
            return Err(range_err(child(path, "range"), format!("lo {lo} > hi {hi}")))
        }
        Domain::Float { lo, hi } if lo > hi => {
            return Err(range_err(child(path, "range"), format!("lo {lo} > hi {hi}")))
        }
        _ => {}
    }
    if let Some(reason) = spec.check().into_iter().next() {
        let at = if reason.starts_with("default") { default_path } else { path.to_string() };
        return Err(range_err(at, reason));
    }
    Ok(spec)
}

fn spec_json(spec: &HyperparamSpec) -> Json {
    let mut m = Map::new();
    m.insert("type".into(), json!(spec.kind().as_str()));
    match &spec.domain {
        Domain::Int { lo, hi } => {
            m.insert("range".into(), json!([lo, hi]));
        }
        Domain::Float { lo, hi } => {
            m.insert("range".into(), json!([lo, hi]));
        }
        Domain::Categorical(values) => {
            m.insert("values".into(), json!(values));
        }
        Domain::Bool => {}
    }
    m.insert("default".into(), hyper_value_json(&spec.default));
    if spec.scale == Scale::Log {
        m.insert("scale".into(), json!("log"));
    }
    Json::Object(m)
}

/// Parses one annotation document. Structural invariants that involve more
/// than a single field are left to [`super::validate_annotation`].
pub fn parse_annotation(json_text: &str) -> Result<PrimitiveAnnotation> {
    let root: Json =
        serde_json::from_str(json_text).map_err(|e| AnnotationError::MalformedJson(e.to_string()))?;
    let obj = as_object(&root, "")?;
    let name = req(obj, "", "name")?
        .as_str()
        .ok_or_else(|| AnnotationError::InvalidType { path: "/name".into(), expected: "string" })?
        .to_string();
    let modalities = match obj.get("modalities") {
        None | Some(Json::Null) => Vec::new(),
        Some(v) => string_list(v, "/modalities")?,
    };
    let implementation = match obj.get("implementation") {
        None | Some(Json::Null) => None,
        Some(Json::String(s)) => Some(s.clone()),
        Some(_) => {
            return Err(AnnotationError::InvalidType {
                path: "/implementation".into(),
                expected: "string",
            })
        }
    };

    let fit_inputs = match obj.get("fit") {
        None | Some(Json::Null) => Vec::new(),
        Some(v) => io_list(as_object(v, "/fit")?, "/fit", "inputs")?,
    };
    let produce = as_object(req(obj, "", "produce")?, "/produce")?;
    let produce_inputs = io_list(produce, "/produce", "inputs")?;
    if !produce.contains_key("outputs") {
        return Err(AnnotationError::MissingField("/produce/outputs".into()));
    }
    let produce_outputs = io_list(produce, "/produce", "outputs")?;

    let mut fixed = BTreeMap::new();
    let mut tunable = Vec::new();
    let mut conditional = Vec::new();
    if let Some(hp) = obj.get("hyperparameters").filter(|v| !v.is_null()) {
        let hp = as_object(hp, "/hyperparameters")?;
        if let Some(f) = hp.get("fixed").filter(|v| !v.is_null()) {
            for (k, v) in as_object(f, "/hyperparameters/fixed")? {
                let p = child("/hyperparameters/fixed", k);
                fixed.insert(k.clone(), hyper_value(v, &p)?);
            }
        }
        if let Some(t) = hp.get("tunable").filter(|v| !v.is_null()) {
            for (k, v) in as_object(t, "/hyperparameters/tunable")? {
                let p = child("/hyperparameters/tunable", k);
                tunable.push(parse_spec(k, v, &p)?);
            }
        }
        if let Some(c) = hp.get("conditional").filter(|v| !v.is_null()) {
            for (k, v) in as_object(c, "/hyperparameters/conditional")? {
                let p = child("/hyperparameters/conditional", k);
                let co = as_object(v, &p)?;
                let parent = req(co, &p, "parent")?
                    .as_str()
                    .ok_or_else(|| AnnotationError::InvalidType {
                        path: child(&p, "parent"),
                        expected: "string",
                    })?
                    .to_string();
                let bp = child(&p, "branches");
                let mut branches = BTreeMap::new();
                for (value, spec) in as_object(req(co, &p, "branches")?, &bp)? {
                    let sp = child(&bp, value);
                    let parsed = if spec.is_null() { None } else { Some(parse_spec(k, spec, &sp)?) };
                    branches.insert(value.clone(), parsed);
                }
                conditional.push(ConditionalSpec { name: k.clone(), parent, branches });
            }
        }
    }
    tunable.sort_by(|a, b| a.name.cmp(&b.name));
    conditional.sort_by(|a, b| a.name.cmp(&b.name));

    Ok(PrimitiveAnnotation {
        name,
        description: opt_string(obj, "", "description")?,
        documentation: opt_string(obj, "", "documentation")?,
        author: opt_string(obj, "", "author")?,
        modalities,
        implementation,
        fit_inputs,
        produce_inputs,
        produce_outputs,
        fixed_hyperparams: fixed,
        tunable_hyperparams: tunable,
        conditional_hyperparams: conditional,
    })
}

fn io_json(list: &[DataTypeDecl]) -> Json {
    Json::Array(
        list.iter()
            .map(|d| {
                let mut m = Map::new();
                m.insert("name".into(), json!(d.name));
                m.insert("type".into(), json!(d.kind.as_str()));
                if let Some(a) = &d.alias {
                    m.insert("alias".into(), json!(a));
                }
                Json::Object(m)
            })
            .collect(),
    )
}

/// Writes an annotation back out in the file schema.
pub fn annotation_to_json(ann: &PrimitiveAnnotation) -> Json {
    let fixed: Map<String, Json> =
        ann.fixed_hyperparams.iter().map(|(k, v)| (k.clone(), hyper_value_json(v))).collect();
    let tunable: Map<String, Json> =
        ann.tunable_hyperparams.iter().map(|s| (s.name.clone(), spec_json(s))).collect();
    let conditional: Map<String, Json> = ann
        .conditional_hyperparams
        .iter()
        .map(|c| {
            let branches: Map<String, Json> = c
                .branches
                .iter()
                .map(|(v, s)| (v.clone(), s.as_ref().map_or(Json::Null, spec_json)))
                .collect();
            (c.name.clone(), json!({"parent": c.parent, "branches": branches}))
        })
        .collect();
    let mut root = json!({
        "name": ann.name,
        "description": ann.description,
        "documentation": ann.documentation,
        "author": ann.author,
        "modalities": ann.modalities,
        "fit": {"inputs": io_json(&ann.fit_inputs)},
        "produce": {
            "inputs": io_json(&ann.produce_inputs),
            "outputs": io_json(&ann.produce_outputs),
        },
        "hyperparameters": {"fixed": fixed, "tunable": tunable, "conditional": conditional},
    });
    if let Some(i) = &ann.implementation {
        root["implementation"] = json!(i);
    }
    root
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"{
        "name": "test.Identity",
        "produce": {"inputs": [{"name": "X", "type": "matrix"}],
                    "outputs": [{"name": "X", "type": "matrix"}]}
    }"#;

    // Modeled on an image-blur transformer annotation: fixed hyperparameters only.
    const BLUR: &str = r#"{
        "name": "skimage.filters.GaussianBlur",
        "description": "Multi-dimensional Gaussian filter",
        "documentation": "https://scikit-image.org/docs/stable/api/skimage.filters.html",
        "author": "example",
        "modalities": ["image"],
        "produce": {
            "inputs": [{"name": "X", "type": "matrix", "alias": "image"}],
            "outputs": [{"name": "X", "type": "matrix"}]
        },
        "hyperparameters": {
            "fixed": {"sigma": 1.0, "mode": "nearest", "preserve_range": false, "truncate": 4},
            "tunable": {}
        }
    }"#;

    #[test]
    fn minimal_transformer() {
        let a = parse_annotation(MINIMAL).unwrap();
        assert!(a.fit_inputs.is_empty());
        assert!(a.tunable_hyperparams.is_empty());
        assert_eq!(a.produce_outputs.len(), 1);
        assert_eq!(a.implementation, None);
    }

    #[test]
    fn fixed_only_blur() {
        let a = parse_annotation(BLUR).unwrap();
        assert!(a.tunable_hyperparams.is_empty());
        assert_eq!(a.fixed_hyperparams.len(), 4);
        assert_eq!(a.fixed_hyperparams["truncate"], HyperValue::Int(4));
        assert_eq!(a.produce_inputs[0].alias.as_deref(), Some("image"));
    }

    #[test]
    fn inverted_int_range_is_range_error() {
        let text = r#"{
            "name": "t.Bad",
            "produce": {"outputs": [{"name": "X", "type": "matrix"}]},
            "hyperparameters": {"tunable": {"k": {"type": "int", "range": [5, 1], "default": 3}}}
        }"#;
        match parse_annotation(text) {
            Err(AnnotationError::RangeError { path, .. }) => {
                assert_eq!(path, "/hyperparameters/tunable/k/range")
            }
            other => panic!("expected RangeError, got {other:?}"),
        }
    }

    #[test]
    fn default_outside_range_is_range_error() {
        let text = r#"{
            "name": "t.Bad",
            "produce": {"outputs": [{"name": "X", "type": "matrix"}]},
            "hyperparameters": {"tunable": {"k": {"type": "int", "range": [1, 5], "default": 9}}}
        }"#;
        assert!(matches!(
            parse_annotation(text),
            Err(AnnotationError::RangeError { path, .. }) if path == "/hyperparameters/tunable/k/default"
        ));
    }

    #[test]
    fn unknown_kinds_and_missing_fields() {
        let bad_type = r#"{"name": "t", "produce": {"outputs": [{"name": "X", "type": "tensor"}]}}"#;
        assert_eq!(
            parse_annotation(bad_type),
            Err(AnnotationError::UnknownKind {
                path: "/produce/outputs/0/type".into(),
                value: "tensor".into()
            })
        );
        let no_outputs = r#"{"name": "t", "produce": {"inputs": []}}"#;
        assert_eq!(
            parse_annotation(no_outputs),
            Err(AnnotationError::MissingField("/produce/outputs".into()))
        );
        assert!(matches!(parse_annotation("{"), Err(AnnotationError::MalformedJson(_))));
        assert_eq!(
            parse_annotation(r#"{"produce": {"outputs": []}}"#),
            Err(AnnotationError::MissingField("/name".into()))
        );
    }

    #[test]
    fn log_scale_needs_positive_lower_bound() {
        let text = r#"{
            "name": "t.Bad",
            "produce": {"outputs": [{"name": "X", "type": "matrix"}]},
            "hyperparameters": {"tunable": {"lr": {"type": "float", "range": [0, 1], "default": 0.5, "scale": "log"}}}
        }"#;
        assert!(matches!(parse_annotation(text), Err(AnnotationError::RangeError { .. })));
    }

    #[test]
    fn conditional_branches_parse() {
        let text = r#"{
            "name": "t.Svm",
            "produce": {"outputs": [{"name": "y_hat", "type": "vector"}]},
            "hyperparameters": {
                "tunable": {"kernel": {"type": "categorical", "values": ["linear", "rbf"], "default": "rbf"}},
                "conditional": {"gamma": {"parent": "kernel", "branches": {
                    "rbf": {"type": "float", "range": [0.001, 10], "default": 1, "scale": "log"},
                    "linear": null}}}
            }
        }"#;
        let a = parse_annotation(text).unwrap();
        let c = &a.conditional_hyperparams[0];
        assert_eq!(c.parent, "kernel");
        assert!(c.branches["linear"].is_none());
        assert_eq!(c.branches["rbf"].as_ref().unwrap().default, HyperValue::Float(1.0));
    }

    fn arb_spec(name: String) -> impl Strategy<Value = HyperparamSpec> {
        prop_oneof![
            (-50i64..50, 0i64..50).prop_flat_map(move |(lo, w)| {
                let name = name.clone();
                (lo..=lo + w).prop_map(move |d| HyperparamSpec {
                    name: name.clone(),
                    domain: Domain::Int { lo, hi: lo + w },
                    default: HyperValue::Int(d),
                    scale: Scale::Linear,
                })
            }),
            (0.001f64..10.0, 1.0f64..100.0, 0.0f64..1.0).prop_map({
                let name = String::new();
                move |(lo, w, t)| HyperparamSpec {
                    name: name.clone(),
                    domain: Domain::Float { lo, hi: lo + w },
                    default: HyperValue::Float(lo + t * w),
                    scale: Scale::Log,
                }
            }),
            proptest::collection::btree_set("[a-z]{1,4}", 1..4).prop_map(|set| {
                let values: Vec<String> = set.into_iter().collect();
                HyperparamSpec {
                    name: String::new(),
                    default: HyperValue::Str(values[0].clone()),
                    domain: Domain::Categorical(values),
                    scale: Scale::Linear,
                }
            }),
            any::<bool>().prop_map(|b| HyperparamSpec {
                name: String::new(),
                domain: Domain::Bool,
                default: HyperValue::Bool(b),
                scale: Scale::Linear,
            }),
        ]
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(
            specs in proptest::collection::vec(arb_spec(String::new()), 0..5),
            n_in in 0usize..3,
            fixed_int in any::<i32>(),
        ) {
            let tunable: Vec<HyperparamSpec> = specs
                .into_iter()
                .enumerate()
                .map(|(i, mut s)| { s.name = format!("h{i}"); s })
                .collect();
            let mut fixed = BTreeMap::new();
            fixed.insert("fixed_a".to_string(), HyperValue::Int(fixed_int as i64));
            fixed.insert("fixed_b".to_string(), HyperValue::Str("x".into()));
            let ann = PrimitiveAnnotation {
                name: "p.Q".into(),
                description: "d".into(),
                documentation: String::new(),
                author: "a".into(),
                modalities: vec!["single_table".into()],
                implementation: Some("k".into()),
                fit_inputs: (0..n_in).map(|i| DataTypeDecl::new(format!("in{i}"), ValueKind::Matrix)).collect(),
                produce_inputs: vec![DataTypeDecl::new("X", ValueKind::Table)],
                produce_outputs: vec![DataTypeDecl { name: "X".into(), kind: ValueKind::Matrix, alias: Some("features".into()) }],
                fixed_hyperparams: fixed,
                tunable_hyperparams: tunable,
                conditional_hyperparams: vec![],
            };
            let text = serde_json::to_string(&annotation_to_json(&ann)).unwrap();
            let back = parse_annotation(&text).unwrap();
            prop_assert_eq!(&back, &ann);
            let again = parse_annotation(&serde_json::to_string(&annotation_to_json(&back)).unwrap()).unwrap();
            prop_assert_eq!(again, back);
        }
    }
}
