//! Pipeline descriptions, computational-graph recovery and templates.
//!
//! A description lists steps in topological order only. [`recover_graph`]
//! rebuilds the data-flow edges by scanning the steps in reverse and letting
//! each step satisfy pending inputs of later steps with its outputs, so every
//! input binds to the nearest preceding producer of that data name.

mod description;
mod template;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use description::{IoMapEntry, PipelineDescription, Port, DEFAULT_SOURCES};
pub use template::{
    bind, derive_templates, make_hypertemplate, make_template, Hypertemplate, Pipeline, Template,
};

use crate::annotations::{Catalog, DataTypeDecl, HyperValue, PrimitiveAnnotation};
use crate::data::ValueKind;
use crate::primitives::Hyperparams;
use crate::tuning::space::SpaceError;

/// A graph node. Ordering follows the description: source, steps, sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Source,
    Step(usize),
    Sink,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Source => f.write_str("source"),
            NodeId::Step(i) => write!(f, "step {i}"),
            NodeId::Sink => f.write_str("sink"),
        }
    }
}

/// Data of name `label` flows from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("malformed pipeline description: {0}")]
    MalformedDescription(String),
    #[error("unknown primitive {0:?}")]
    UnknownPrimitive(String),
    #[error("no step matches key {0:?}")]
    UnknownStepKey(String),
    #[error("invalid input/output map for step {step}: {reason}")]
    BadIoMap { step: usize, reason: String },
    #[error("isolated node: {} produces {outputs:?} but no later step consumes them", node_name(*.step))]
    IsolatedNode { step: Option<usize>, outputs: Vec<String> },
    #[error("unsatisfied inputs remain: {}", fmt_pending(.pending))]
    UnsatisfiedInputs { pending: Vec<(NodeId, String)> },
    #[error("step {step} has no hyperparameter {name:?}")]
    InitParamUnknown { step: usize, name: String },
    #[error("init param {name:?} of step {step} is out of range: {value}")]
    InitParamOutOfRange { step: usize, name: String, value: HyperValue },
    #[error("conditional hyperparameter {name:?} of step {step} depends on tunable {parent:?}; derive templates first")]
    UnresolvedConditional { step: usize, name: String, parent: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

fn node_name(step: Option<usize>) -> String {
    step.map_or_else(|| "the source".to_string(), |i| format!("step {i}"))
}

fn fmt_pending(p: &[(NodeId, String)]) -> String {
    p.iter().map(|(n, s)| format!("{s:?} of {n}")).collect::<Vec<_>>().join(", ")
}

impl GraphError {
    /// True for the two structural verdicts of graph recovery.
    pub fn is_invalid_graph(&self) -> bool {
        matches!(self, GraphError::IsolatedNode { .. } | GraphError::UnsatisfiedInputs { .. })
    }
}

/// A declared port together with the context name it is bound to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundPort {
    pub declared: String,
    pub bound: String,
    pub kind: ValueKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphStep {
    pub index: usize,
    pub key: String,
    pub annotation: Arc<PrimitiveAnnotation>,
    pub init_params: Hyperparams,
    pub fit_inputs: Vec<BoundPort>,
    pub produce_inputs: Vec<BoundPort>,
    pub outputs: Vec<BoundPort>,
}

impl GraphStep {
    /// Every input read during training, deduplicated by bound name.
    pub fn inputs(&self) -> Vec<&BoundPort> {
        let mut out: Vec<&BoundPort> = Vec::new();
        for p in self.fit_inputs.iter().chain(&self.produce_inputs) {
            if !out.iter().any(|o| o.bound == p.bound) {
                out.push(p);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineGraph {
    pub description: PipelineDescription,
    pub steps: Vec<GraphStep>,
    /// Outputs of the source node.
    pub sources: Vec<String>,
    /// Inputs of the sink node.
    pub sinks: Vec<String>,
    /// Sorted.
    pub edges: Vec<Edge>,
}

impl PipelineGraph {
    pub fn n_nodes(&self) -> usize {
        self.steps.len() + 2
    }

    pub fn edges_into(&self, node: NodeId) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.to == node)
    }
}

/// Inputs and outputs of one step, by bound name: the view of a step that
/// graph recovery needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepSignature {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

/// Algorithm 1 over bare signatures. Returns the sorted edge set.
pub fn recover_edges(
    sources: &[String],
    steps: &[StepSignature],
    sinks: &[String],
) -> Result<Vec<Edge>, GraphError> {
    let mut unsatisfied: Vec<(NodeId, String)> = Vec::new();
    for s in sinks {
        if !unsatisfied.iter().any(|(_, n)| n == s) {
            unsatisfied.push((NodeId::Sink, s.clone()));
        }
    }
    let mut edges = Vec::new();
    let mut scan = |node: NodeId, outputs: &[String], inputs: &[String], pending: &mut Vec<(NodeId, String)>| {
        let before = edges.len();
        pending.retain(|(consumer, name)| {
            if outputs.contains(name) {
                edges.push(Edge { from: node, to: *consumer, label: name.clone() });
                false
            } else {
                true
            }
        });
        if edges.len() == before {
            return Err(GraphError::IsolatedNode {
                step: match node {
                    NodeId::Step(i) => Some(i),
                    _ => None,
                },
                outputs: outputs.to_vec(),
            });
        }
        for name in inputs {
            if !pending.iter().any(|(c, n)| *c == node && n == name) {
                pending.push((node, name.clone()));
            }
        }
        Ok(())
    };
    for (i, step) in steps.iter().enumerate().rev() {
        scan(NodeId::Step(i), &step.outputs, &step.inputs, &mut unsatisfied)?;
    }
    scan(NodeId::Source, sources, &[], &mut unsatisfied)?;
    if !unsatisfied.is_empty() {
        unsatisfied.sort();
        return Err(GraphError::UnsatisfiedInputs { pending: unsatisfied });
    }
    edges.sort();
    Ok(edges)
}

fn bind_ports(
    decls: &[DataTypeDecl],
    renames: &[&IoMapEntry],
) -> Vec<BoundPort> {
    decls
        .iter()
        .map(|d| {
            let bound = renames
                .iter()
                .find(|e| d.answers_to(&e.declared))
                .map_or_else(|| d.name.clone(), |e| e.bound.clone());
            BoundPort { declared: d.name.clone(), bound, kind: d.kind }
        })
        .collect()
}

/// Resolves every step against the catalog and applies the io map, without
/// recovering edges.
pub fn resolve_steps(desc: &PipelineDescription, catalog: &Catalog) -> Result<Vec<GraphStep>, GraphError> {
    let keys = desc.step_keys();
    let init = desc.init_params_by_step()?;
    let io_map = desc.io_map()?;
    let mut steps = Vec::with_capacity(desc.primitives.len());
    for (i, name) in desc.primitives.iter().enumerate() {
        let ann = catalog.get(name).ok_or_else(|| GraphError::UnknownPrimitive(name.clone()))?.clone();
        let inputs: Vec<&IoMapEntry> =
            io_map.iter().filter(|e| e.step_index == i && e.port == Port::Input).collect();
        let outputs: Vec<&IoMapEntry> =
            io_map.iter().filter(|e| e.step_index == i && e.port == Port::Output).collect();
        let all_inputs: Vec<&DataTypeDecl> = ann.fit_inputs.iter().chain(&ann.produce_inputs).collect();
        for e in &inputs {
            if !all_inputs.iter().any(|d| d.answers_to(&e.declared)) {
                return Err(GraphError::BadIoMap { step: i, reason: format!("no input named {:?}", e.declared) });
            }
        }
        for e in &outputs {
            if !ann.produce_outputs.iter().any(|d| d.answers_to(&e.declared)) {
                return Err(GraphError::BadIoMap { step: i, reason: format!("no output named {:?}", e.declared) });
            }
        }
        steps.push(GraphStep {
            index: i,
            key: keys[i].clone(),
            fit_inputs: bind_ports(&ann.fit_inputs, &inputs),
            produce_inputs: bind_ports(&ann.produce_inputs, &inputs),
            outputs: bind_ports(&ann.produce_outputs, &outputs),
            init_params: init[i].clone(),
            annotation: ann,
        });
    }
    Ok(steps)
}

/// Recovers the directed acyclic multigraph of a linear description.
///
/// The sink consumes `desc.outputs`, or the final step's outputs when absent
/// (the source's outputs for an empty description). Every step, and the
/// source, must feed at least one later node, and every input must be fed.
pub fn recover_graph(desc: &PipelineDescription, catalog: &Catalog) -> Result<PipelineGraph, GraphError> {
    let steps = resolve_steps(desc, catalog)?;
    let sources = desc.source_names();
    let sinks = match (&desc.outputs, steps.last()) {
        (Some(o), _) => o.clone(),
        (None, Some(last)) => last.outputs.iter().map(|p| p.bound.clone()).collect(),
        (None, None) => sources.clone(),
    };
    let signatures: Vec<StepSignature> = steps
        .iter()
        .map(|s| StepSignature {
            inputs: s.inputs().iter().map(|p| p.bound.clone()).collect(),
            outputs: s.outputs.iter().map(|p| p.bound.clone()).collect(),
        })
        .collect();
    let edges = recover_edges(&sources, &signatures, &sinks)?;
    Ok(PipelineGraph { description: desc.clone(), steps, sources, sinks, edges })
}

/// An input whose binding was decided by the nearest-producer rule although
/// earlier nodes also produce the same data name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ambiguity {
    pub consumer: NodeId,
    pub name: String,
    pub chosen: NodeId,
    /// Earlier producers of `name`, nearest first.
    pub alternatives: Vec<NodeId>,
}

impl fmt::Display for Ambiguity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let alts: Vec<String> = self.alternatives.iter().map(|n| n.to_string()).collect();
        write!(
            f,
            "{:?} of {} is bound to {}; also produced by {}",
            self.name,
            self.consumer,
            self.chosen,
            alts.join(", ")
        )
    }
}

/// Non-fatal diagnostics: every edge whose label is also produced by nodes
/// before the chosen producer.
pub fn ambiguities(graph: &PipelineGraph) -> Vec<Ambiguity> {
    let produces = |node: NodeId, name: &str| match node {
        NodeId::Source => graph.sources.iter().any(|s| s == name),
        NodeId::Step(i) => graph.steps[i].outputs.iter().any(|p| p.bound == name),
        NodeId::Sink => false,
    };
    let mut out = Vec::new();
    for e in &graph.edges {
        let mut alternatives = Vec::new();
        if let NodeId::Step(j) = e.from {
            for k in (0..j).rev() {
                if produces(NodeId::Step(k), &e.label) {
                    alternatives.push(NodeId::Step(k));
                }
            }
            if produces(NodeId::Source, &e.label) {
                alternatives.push(NodeId::Source);
            }
        }
        if !alternatives.is_empty() {
            out.push(Ambiguity { consumer: e.to, name: e.label.clone(), chosen: e.from, alternatives });
        }
    }
    out
}

fn dot_id(node: NodeId, n_steps: usize) -> usize {
    match node {
        NodeId::Source => 0,
        NodeId::Step(i) => i + 1,
        NodeId::Sink => n_steps + 1,
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Deterministic Graphviz rendering: nodes labeled with short primitive
/// names, edges with data names.
pub fn render_graph(graph: &PipelineGraph) -> String {
    let n = graph.steps.len();
    let mut out = String::from("digraph pipeline {\n  rankdir=LR;\n");
    out.push_str("  n0 [label=\"source\", shape=ellipse];\n");
    for s in &graph.steps {
        out.push_str(&format!(
            "  n{} [label=\"{}\", shape=box];\n",
            s.index + 1,
            dot_escape(s.annotation.short_name())
        ));
    }
    out.push_str(&format!("  n{} [label=\"sink\", shape=ellipse];\n", n + 1));
    for e in &graph.edges {
        out.push_str(&format!(
            "  n{} -> n{} [label=\"{}\"];\n",
            dot_id(e.from, n),
            dot_id(e.to, n),
            dot_escape(&e.label)
        ));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests;
