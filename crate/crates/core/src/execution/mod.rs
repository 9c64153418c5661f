//! Runs bound pipelines over a key-value context of named values.
//!
//! Steps execute in description order. Each step reads its (possibly
//! rebound) inputs from the context and writes its outputs back, replacing
//! earlier values of the same name. During fit, a step with fit inputs is
//! fitted and then immediately produces; during produce, only the stored
//! states are used.

mod envelope;

use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use envelope::{load, save, FORMAT_VERSION, MAGIC};

use crate::data::{Value, ValueKind};
use crate::graph::{BoundPort, GraphError, GraphStep, Pipeline};
use crate::primitives::{split_seed, Inputs, NativeRegistry, PrimitiveError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Supplied by the caller.
    Input,
    Fit,
    Produce,
}

/// Where a context value came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    /// `None` for caller-supplied values.
    pub step: Option<usize>,
    pub phase: Phase,
    pub kind: ValueKind,
    pub shape: (usize, usize),
}

/// Named values plus a provenance record for each.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Context {
    values: BTreeMap<String, Value>,
    metadata: BTreeMap<String, Provenance>,
}

impl Context {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a caller-supplied value.
    pub fn insert(&mut self, name: impl Into<String>, value: Value) {
        self.put(name.into(), value, None, Phase::Input);
    }

    pub fn with(mut self, name: impl Into<String>, value: Value) -> Self {
        self.insert(name, value);
        self
    }

    fn put(&mut self, name: String, value: Value, step: Option<usize>, phase: Phase) {
        let prov = Provenance { step, phase, kind: value.kind(), shape: value.shape() };
        self.metadata.insert(name.clone(), prov);
        self.values.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn provenance(&self, name: &str) -> Option<&Provenance> {
        self.metadata.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.metadata.remove(name);
        self.values.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// One line per value: name, kind, shape and origin.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (name, p) in &self.metadata {
            let origin = match (p.step, p.phase) {
                (None, _) => "input".to_string(),
                (Some(s), Phase::Fit) => format!("step {s} (fit)"),
                (Some(s), _) => format!("step {s} (produce)"),
            };
            out.push_str(&format!("{name}\t{}\t{}x{}\t{origin}\n", p.kind, p.shape.0, p.shape.1));
        }
        out
    }

    /// Hash of the names, kinds and trailing dimensions of every value.
    pub fn schema_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in &self.metadata {
            h.update(format!("{name}:{}:{};", p.kind, p.shape.1).as_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Why a step could not run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepCause {
    #[error("primitive {0} has no native implementation")]
    UnimplementedPrimitive(String),
    #[error("implementation {0:?} is not registered")]
    UnknownImplementation(String),
    #[error("declared output {0:?} was not produced")]
    MissingOutput(String),
    #[error("output {name:?} should be a {expected} but is a {actual}")]
    OutputKind { name: String, expected: ValueKind, actual: ValueKind },
    #[error("output {0:?} contains non-finite values")]
    NonFiniteOutput(String),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("step {step} needs {name:?}, which is not in the context")]
    MissingInput { step: usize, name: String },
    #[error("step {step} expects {name:?} to be a {expected}, found {actual}")]
    TypeMismatch { step: usize, name: String, expected: ValueKind, actual: ValueKind },
    #[error("step {step} ({primitive}) failed: {cause}")]
    StepFailure { step: usize, primitive: String, cause: StepCause },
    #[error("pipeline has {expected} steps but {actual} states")]
    NotFitted { expected: usize, actual: usize },
    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersionMismatch { found: u16, expected: u16 },
    #[error("cannot decode fitted pipeline: {0}")]
    Decode(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A pipeline with one learned state per step (empty for stateless steps).
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    pub pipeline: Pipeline,
    pub step_states: Vec<Vec<u8>>,
    pub fit_fingerprint: String,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Input => "input",
            Phase::Fit => "fit",
            Phase::Produce => "produce",
        })
    }
}

fn gather<'a>(step: &GraphStep, ports: &'a [BoundPort], ctx: &'a Context) -> Result<Inputs<'a>, ExecError> {
    let mut inputs = Inputs::new();
    for p in ports {
        let v = ctx
            .get(&p.bound)
            .ok_or_else(|| ExecError::MissingInput { step: step.index, name: p.bound.clone() })?;
        if v.kind() != p.kind {
            return Err(ExecError::TypeMismatch {
                step: step.index,
                name: p.bound.clone(),
                expected: p.kind,
                actual: v.kind(),
            });
        }
        inputs.insert(&p.declared, v);
    }
    Ok(inputs)
}

fn failure(step: &GraphStep, cause: impl Into<StepCause>) -> ExecError {
    ExecError::StepFailure { step: step.index, primitive: step.annotation.name.clone(), cause: cause.into() }
}

fn implementation<'r>(
    step: &GraphStep,
    registry: &'r NativeRegistry,
) -> Result<&'r dyn crate::primitives::Primitive, ExecError> {
    let key = step
        .annotation
        .implementation
        .as_deref()
        .ok_or_else(|| failure(step, StepCause::UnimplementedPrimitive(step.annotation.name.clone())))?;
    registry.get(key).ok_or_else(|| failure(step, StepCause::UnknownImplementation(key.to_string())))
}

fn produce_step(
    step: &GraphStep,
    prim: &dyn crate::primitives::Primitive,
    hp: &crate::primitives::Hyperparams,
    state: &[u8],
    ctx: &mut Context,
    phase: Phase,
) -> Result<(), ExecError> {
    let inputs = gather(step, &step.produce_inputs, ctx)?;
    let mut outputs = prim.produce(hp, state, &inputs).map_err(|e| failure(step, e))?;
    for port in &step.outputs {
        let value = outputs
            .remove(&port.declared)
            .ok_or_else(|| failure(step, StepCause::MissingOutput(port.declared.clone())))?;
        if value.kind() != port.kind {
            return Err(failure(
                step,
                StepCause::OutputKind { name: port.declared.clone(), expected: port.kind, actual: value.kind() },
            ));
        }
        if !value.is_well_formed() {
            return Err(failure(step, StepCause::NonFiniteOutput(port.declared.clone())));
        }
        ctx.put(port.bound.clone(), value, Some(step.index), phase);
    }
    Ok(())
}

/// Fits every step in order, leaving the training-time outputs in `ctx`.
/// Step `i` is seeded with `split_seed(seed, i)`.
pub fn fit(
    pipeline: &Pipeline,
    ctx: &mut Context,
    registry: &NativeRegistry,
    seed: u64,
) -> Result<FittedPipeline, ExecError> {
    let fit_fingerprint = ctx.schema_fingerprint();
    let mut step_states = Vec::with_capacity(pipeline.n_steps());
    for step in &pipeline.template.graph.steps {
        let prim = implementation(step, registry)?;
        let hp = &pipeline.hyperparams[step.index];
        let state = if step.fit_inputs.is_empty() {
            Vec::new()
        } else {
            let inputs = gather(step, &step.fit_inputs, ctx)?;
            prim.fit(hp, &inputs, split_seed(seed, step.index as u64)).map_err(|e| failure(step, e))?
        };
        produce_step(step, prim, hp, &state, ctx, Phase::Fit)?;
        step_states.push(state);
    }
    Ok(FittedPipeline { pipeline: pipeline.clone(), step_states, fit_fingerprint })
}

/// Runs every step's produce routine with its stored state.
pub fn produce(fitted: &FittedPipeline, mut ctx: Context, registry: &NativeRegistry) -> Result<Context, ExecError> {
    let steps = &fitted.pipeline.template.graph.steps;
    if fitted.step_states.len() != steps.len() {
        return Err(ExecError::NotFitted { expected: steps.len(), actual: fitted.step_states.len() });
    }
    for (step, state) in steps.iter().zip(&fitted.step_states) {
        let prim = implementation(step, registry)?;
        produce_step(step, prim, &fitted.pipeline.hyperparams[step.index], state, &mut ctx, Phase::Produce)?;
    }
    Ok(ctx)
}
