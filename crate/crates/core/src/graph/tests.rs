use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::annotations::{parse_annotation, HyperValue};
use crate::tuning::space::{Assignment, SpaceError, SpaceKey};

fn io(names: &[&str], kind: &str) -> String {
    let items: Vec<String> = names.iter().map(|n| format!(r#"{{"name":"{n}","type":"{kind}"}}"#)).collect();
    format!("[{}]", items.join(","))
}

fn annotation(name: &str, inputs: &[&str], outputs: &[&str], tunable: &str, conditional: &str) -> PrimitiveAnnotation {
    let text = format!(
        r#"{{"name":"{name}","produce":{{"inputs":{},"outputs":{}}},
            "hyperparameters":{{"tunable":{{{tunable}}},"conditional":{{{conditional}}}}}}}"#,
        io(inputs, "matrix"),
        io(outputs, "matrix"),
    );
    parse_annotation(&text).unwrap()
}

fn catalog() -> Catalog {
    Catalog::from_annotations([
        annotation("t.Imputer", &["X"], &["X"], "", ""),
        annotation("t.Scaler", &["X"], &["X"], "", ""),
        annotation(
            "t.Classifier",
            &["X", "y"],
            &["y_hat"],
            r#""depth":{"type":"int","range":[1,20],"default":10},
               "min_leaf":{"type":"int","range":[1,10],"default":1}"#,
            "",
        ),
        annotation("t.FromY", &["y"], &["X"], "", ""),
        annotation(
            "t.Svm",
            &["X", "y"],
            &["y_hat"],
            r#""kernel":{"type":"categorical","values":["rbf","linear"],"default":"rbf"},
               "c":{"type":"float","range":[0.01,100],"default":1,"scale":"log"}"#,
            r#""gamma":{"parent":"kernel","branches":{"rbf":{"type":"float","range":[0.001,10],"default":0.1},"linear":null}}"#,
        ),
        annotation(
            "t.Two",
            &["X"],
            &["X"],
            r#""a":{"type":"categorical","values":["p","q"],"default":"p"},
               "b":{"type":"categorical","values":["u","v","w"],"default":"u"}"#,
            r#""ax":{"parent":"a","branches":{"p":{"type":"bool","default":true},"q":null}},
               "bx":{"parent":"b","branches":{"u":null,"v":{"type":"int","range":[0,3],"default":1},"w":null}}"#,
        ),
    ])
}

fn three_step() -> PipelineDescription {
    let mut d = PipelineDescription::new(["t.Imputer", "t.Scaler", "t.Classifier"]);
    d.outputs = Some(vec!["y_hat".into()]);
    d
}

fn edge(from: NodeId, to: NodeId, label: &str) -> Edge {
    Edge { from, to, label: label.into() }
}

#[test]
fn identity_pipeline_connects_source_to_sink() {
    let mut d = PipelineDescription::new(Vec::<String>::new());
    d.outputs = Some(vec!["X".into(), "y".into()]);
    let g = recover_graph(&d, &catalog()).unwrap();
    assert_eq!(g.edges, vec![edge(NodeId::Source, NodeId::Sink, "X"), edge(NodeId::Source, NodeId::Sink, "y")]);
}

#[test]
fn three_step_classifier_edges() {
    let g = recover_graph(&three_step(), &catalog()).unwrap();
    let expected: BTreeSet<Edge> = [
        edge(NodeId::Source, NodeId::Step(0), "X"),
        edge(NodeId::Step(0), NodeId::Step(1), "X"),
        edge(NodeId::Step(1), NodeId::Step(2), "X"),
        edge(NodeId::Source, NodeId::Step(2), "y"),
        edge(NodeId::Step(2), NodeId::Sink, "y_hat"),
    ]
    .into();
    assert_eq!(g.edges.iter().cloned().collect::<BTreeSet<_>>(), expected);
    let oracle = brute_force(&g.sources, &signatures(&g), &g.sinks).unwrap();
    assert_eq!(oracle, expected);
}

#[test]
fn sink_defaults_to_final_step_outputs() {
    let mut d = three_step();
    d.outputs = None;
    assert_eq!(recover_graph(&d, &catalog()).unwrap().sinks, vec!["y_hat".to_string()]);
}

#[test]
fn earlier_of_two_producers_is_isolated() {
    let mut d = PipelineDescription::new(["t.FromY", "t.FromY", "t.Classifier"]);
    d.outputs = Some(vec!["y_hat".into()]);
    let err = recover_graph(&d, &catalog()).unwrap_err();
    assert_eq!(err, GraphError::IsolatedNode { step: Some(0), outputs: vec!["X".into()] });
}

#[test]
fn missing_source_data_leaves_inputs_unsatisfied() {
    let mut d = three_step();
    d.sources = Some(vec!["X".into()]);
    let err = recover_graph(&d, &catalog()).unwrap_err();
    assert_eq!(err, GraphError::UnsatisfiedInputs { pending: vec![(NodeId::Step(2), "y".into())] });
}

#[test]
fn unused_source_is_isolated() {
    let mut d = PipelineDescription::new(["t.Imputer"]);
    d.sources = Some(vec!["Z".into()]);
    let err = recover_graph(&d, &catalog()).unwrap_err();
    assert!(matches!(err, GraphError::IsolatedNode { step: None, .. }));
}

#[test]
fn unknown_primitive_is_reported() {
    let d = PipelineDescription::new(["t.Nope"]);
    assert_eq!(recover_graph(&d, &catalog()).unwrap_err(), GraphError::UnknownPrimitive("t.Nope".into()));
}

#[test]
fn one_producer_fans_out() {
    let mut d = PipelineDescription::new(["t.Imputer", "t.Classifier"]);
    d.outputs = Some(vec!["y_hat".into(), "X".into()]);
    let g = recover_graph(&d, &catalog()).unwrap();
    let from_imputer: Vec<_> = g.edges.iter().filter(|e| e.from == NodeId::Step(0)).collect();
    assert_eq!(from_imputer.len(), 2);
}

#[test]
fn io_map_redirects_an_edge() {
    // Keep the raw X for the classifier by renaming the imputer's output.
    let mut d = PipelineDescription::new(["t.Imputer", "t.Scaler", "t.Classifier"]);
    d.rebind(0, Port::Output, "X", "X_imputed");
    d.rebind(1, Port::Input, "X", "X_imputed");
    d.outputs = Some(vec!["y_hat".into()]);
    let g = recover_graph(&d, &catalog()).unwrap();
    assert!(g.edges.contains(&edge(NodeId::Step(0), NodeId::Step(1), "X_imputed")));
    assert_eq!(g.steps[0].outputs[0].declared, "X");
    assert_eq!(g.steps[0].outputs[0].bound, "X_imputed");
}

#[test]
fn io_map_must_name_a_declared_port() {
    let mut d = three_step();
    d.rebind(0, Port::Input, "nope", "X");
    assert!(matches!(recover_graph(&d, &catalog()), Err(GraphError::BadIoMap { step: 0, .. })));
}

#[test]
fn recovery_is_repeatable() {
    let c = catalog();
    let a = recover_graph(&three_step(), &c).unwrap();
    let b = recover_graph(&three_step(), &c).unwrap();
    assert_eq!(a.edges, b.edges);
    assert_eq!(render_graph(&a), render_graph(&b));
}

#[test]
fn render_counts_nodes_and_edges() {
    let g = recover_graph(&three_step(), &catalog()).unwrap();
    let dot = render_graph(&g);
    assert_eq!(dot.matches("shape=").count(), 5);
    assert_eq!(dot.matches(" -> ").count(), 5);
    assert!(dot.contains("n3 [label=\"Classifier\""));
    assert!(dot.contains("n2 -> n3 [label=\"X\"]"));

    let mut d = PipelineDescription::new(Vec::<String>::new());
    d.outputs = Some(vec!["X".into(), "y".into()]);
    let dot = render_graph(&recover_graph(&d, &catalog()).unwrap());
    assert_eq!(dot.matches("shape=").count(), 2);
    assert_eq!(dot.matches(" -> ").count(), 2);
}

#[test]
fn shadowed_producers_are_diagnosed() {
    let g = recover_graph(&three_step(), &catalog()).unwrap();
    let amb = ambiguities(&g);
    // The scaler's X shadows the imputer's and the source's; the imputer's
    // shadows the source's.
    let for_classifier = amb.iter().find(|a| a.consumer == NodeId::Step(2)).unwrap();
    assert_eq!(for_classifier.alternatives, vec![NodeId::Step(0), NodeId::Source]);
    assert_eq!(amb.len(), 2);
}

#[test]
fn template_space_collects_tunables() {
    let t = make_template(&three_step(), &catalog()).unwrap();
    let keys: Vec<String> = t.space.keys().map(|k| k.to_string()).collect();
    assert_eq!(keys, vec!["2.depth", "2.min_leaf"]);
}

#[test]
fn transformer_only_template_has_empty_space() {
    let mut d = PipelineDescription::new(["t.Imputer", "t.Scaler"]);
    d.sources = Some(vec!["X".into()]);
    assert!(make_template(&d, &catalog()).unwrap().space.is_empty());
}

#[test]
fn init_params_fix_hyperparameters() {
    let mut d = three_step();
    d.init_params.insert("t.Classifier".into(), [("depth".to_string(), HyperValue::Int(5))].into());
    let t = make_template(&d, &catalog()).unwrap();
    assert_eq!(t.space.len(), 1);
    assert_eq!(t.fixed[2]["depth"], HyperValue::Int(5));

    d.init_params.insert("t.Classifier".into(), [("bogus".to_string(), HyperValue::Int(5))].into());
    assert_eq!(
        make_template(&d, &catalog()).unwrap_err(),
        GraphError::InitParamUnknown { step: 2, name: "bogus".into() }
    );
    d.init_params.insert("t.Classifier".into(), [("depth".to_string(), HyperValue::Int(50))].into());
    assert!(matches!(make_template(&d, &catalog()), Err(GraphError::InitParamOutOfRange { .. })));
}

#[test]
fn template_ids_are_stable_and_content_addressed() {
    let c = catalog();
    let a = make_template(&three_step(), &c).unwrap();
    let b = make_template(&three_step(), &c).unwrap();
    assert_eq!(a.id, b.id);
    assert_eq!(a.id.len(), 32);
    let mut d = three_step();
    d.init_params.insert("t.Classifier".into(), [("depth".to_string(), HyperValue::Int(5))].into());
    assert_ne!(make_template(&d, &c).unwrap().id, a.id);
}

fn svm() -> PipelineDescription {
    let mut d = PipelineDescription::new(["t.Imputer", "t.Svm"]);
    d.outputs = Some(vec!["y_hat".into()]);
    d
}

#[test]
fn free_conditionals_need_derivation() {
    assert!(matches!(make_template(&svm(), &catalog()), Err(GraphError::UnresolvedConditional { .. })));
}

#[test]
fn derive_one_parent() {
    let h = make_hypertemplate(&svm(), &catalog()).unwrap();
    let ts = derive_templates(&h).unwrap();
    assert_eq!(ts.len(), 2);
    // Lexicographic order: linear before rbf.
    assert_eq!(ts[0].fixed[1]["kernel"], HyperValue::Str("linear".into()));
    assert!(ts[0].space.get(&SpaceKey::new(1, "gamma")).is_none());
    assert!(ts[1].space.get(&SpaceKey::new(1, "gamma")).is_some());
    assert!(ts.iter().all(|t| t.space.get(&SpaceKey::new(1, "kernel")).is_none()));
    assert_ne!(ts[0].id, ts[1].id);
}

#[test]
fn derive_two_parents_is_a_product() {
    let mut d = PipelineDescription::new(["t.Two"]);
    d.sources = Some(vec!["X".into()]);
    let h = make_hypertemplate(&d, &catalog()).unwrap();
    let ts = derive_templates(&h).unwrap();
    assert_eq!(ts.len(), 6);
    let tuples: Vec<(String, String)> = ts
        .iter()
        .map(|t| (t.fixed[0]["a"].to_string(), t.fixed[0]["b"].to_string()))
        .collect();
    let mut sorted = tuples.clone();
    sorted.sort();
    assert_eq!(tuples, sorted);

    let mut union: BTreeSet<SpaceKey> = ts.iter().flat_map(|t| t.space.keys().cloned()).collect();
    union.extend(h.parents().into_iter().map(|(k, _)| k));
    assert_eq!(union.into_iter().collect::<Vec<_>>(), h.keys());
}

#[test]
fn derive_without_conditionals_returns_the_template() {
    let h = make_hypertemplate(&three_step(), &catalog()).unwrap();
    let ts = derive_templates(&h).unwrap();
    assert_eq!(ts, vec![make_template(&three_step(), &catalog()).unwrap()]);
}

#[test]
fn bind_resolves_per_step_values() {
    let t = Arc::new(make_template(&three_step(), &catalog()).unwrap());
    let p = bind(&t, &t.default_lambda()).unwrap();
    assert_eq!(p.hyperparams[2]["depth"], HyperValue::Int(10));
    assert!(p.hyperparams[0].is_empty());

    let mut l = t.default_lambda();
    l.insert(SpaceKey::new(2, "depth"), HyperValue::Int(30));
    assert!(matches!(bind(&t, &l), Err(GraphError::Space(SpaceError::OutOfRange { .. }))));
    l.remove(&SpaceKey::new(2, "depth"));
    assert!(matches!(bind(&t, &l), Err(GraphError::Space(SpaceError::MissingHyperparam(_)))));

    let empty = Arc::new(make_template(&PipelineDescription::new(Vec::<String>::new()), &catalog()).unwrap());
    assert_eq!(bind(&empty, &Assignment::new()).unwrap().n_steps(), 0);
}

// ---- brute-force oracle -------------------------------------------------

fn signatures(g: &PipelineGraph) -> Vec<StepSignature> {
    g.steps
        .iter()
        .map(|s| StepSignature {
            inputs: s.inputs().iter().map(|p| p.bound.clone()).collect(),
            outputs: s.outputs.iter().map(|p| p.bound.clone()).collect(),
        })
        .collect()
}

/// Binds each input to the nearest preceding producer, then requires every
/// producer to feed something.
fn brute_force(sources: &[String], steps: &[StepSignature], sinks: &[String]) -> Option<BTreeSet<Edge>> {
    let mut producers: Vec<(NodeId, &[String])> = vec![(NodeId::Source, sources)];
    producers.extend(steps.iter().enumerate().map(|(i, s)| (NodeId::Step(i), s.outputs.as_slice())));
    let mut consumers: Vec<(usize, NodeId, BTreeSet<&String>)> =
        steps.iter().enumerate().map(|(i, s)| (i + 1, NodeId::Step(i), s.inputs.iter().collect())).collect();
    consumers.push((steps.len() + 1, NodeId::Sink, sinks.iter().collect()));
    let mut edges = BTreeSet::new();
    for (pos, node, names) in consumers {
        for name in names {
            let (from, _) = producers[..pos].iter().rev().find(|(_, outs)| outs.contains(name))?;
            edges.insert(Edge { from: *from, to: node, label: name.clone() });
        }
    }
    let used: BTreeSet<NodeId> = edges.iter().map(|e| e.from).collect();
    producers.iter().all(|(n, _)| used.contains(n)).then_some(edges)
}

const NAMES: [&str; 4] = ["X", "y", "z", "w"];

fn names(max: usize, min: usize) -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(0..NAMES.len(), min..=max)
        .prop_map(|v| v.into_iter().map(|i| NAMES[i].to_string()).collect())
}

fn arb_case() -> impl Strategy<Value = (Vec<String>, Vec<StepSignature>, Vec<String>)> {
    let step = (names(3, 0), names(2, 1)).prop_map(|(inputs, mut outputs)| {
        outputs.dedup();
        StepSignature { inputs, outputs }
    });
    (names(3, 1), proptest::collection::vec(step, 0..=8), names(2, 1))
}

fn dedup(v: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in v {
        if !out.contains(s) {
            out.push(s.clone());
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn recovery_agrees_with_brute_force((sources, steps, sinks) in arb_case()) {
        let sources = dedup(&sources);
        let steps: Vec<StepSignature> = steps
            .into_iter()
            .map(|s| StepSignature { inputs: dedup(&s.inputs), outputs: dedup(&s.outputs) })
            .collect();
        let got = recover_edges(&sources, &steps, &sinks);
        let want = brute_force(&sources, &steps, &sinks);
        match (got, want) {
            (Ok(edges), Some(expected)) => {
                prop_assert_eq!(edges.iter().cloned().collect::<BTreeSet<_>>(), expected);
                for e in &edges {
                    prop_assert!(e.from < e.to, "edge {:?} goes backwards", e);
                }
            }
            (Err(e), None) => prop_assert!(e.is_invalid_graph()),
            (got, want) => prop_assert!(false, "recovery {:?} vs oracle {:?}", got, want),
        }
    }

    #[test]
    fn consistent_renaming_preserves_structure(rename_to in "[a-z]{3,6}") {
        let c = catalog();
        let plain = recover_graph(&three_step(), &c).unwrap();
        let mut d = three_step();
        d.rebind(1, Port::Output, "X", &rename_to);
        d.rebind(2, Port::Input, "X", &rename_to);
        let renamed = recover_graph(&d, &c).unwrap();
        let relabel: BTreeMap<(NodeId, NodeId), &str> =
            renamed.edges.iter().map(|e| ((e.from, e.to), e.label.as_str())).collect();
        prop_assert_eq!(plain.edges.len(), renamed.edges.len());
        for e in &plain.edges {
            let expect = if e.from == NodeId::Step(1) { rename_to.as_str() } else { e.label.as_str() };
            prop_assert_eq!(relabel.get(&(e.from, e.to)).copied(), Some(expect));
        }
    }
}
