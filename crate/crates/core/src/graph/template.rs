use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{recover_graph, GraphError, PipelineDescription, PipelineGraph};
use crate::annotations::{Catalog, ConditionalSpec, Domain, HyperValue, HyperparamSpec};
use crate::primitives::Hyperparams;
use crate::tuning::space::{Assignment, HyperparamSpace, SpaceKey};

/// A pipeline graph together with the joint space of its free
/// hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub graph: PipelineGraph,
    pub space: HyperparamSpace,
    /// Per step: fixed hyperparameters merged with init params; everything
    /// the space does not cover.
    pub fixed: Vec<Hyperparams>,
    /// 128-bit content hash (hex) of the description and the space.
    pub id: String,
}

impl Template {
    pub fn description(&self) -> &PipelineDescription {
        &self.graph.description
    }

    /// The assignment binding every key to its annotated default.
    pub fn default_lambda(&self) -> Assignment {
        self.space.defaults()
    }
}

/// A template family: tunable hyperparameters plus conditional ones whose
/// categorical parents are still free.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypertemplate {
    pub graph: PipelineGraph,
    /// Unconditional free hyperparameters, parents included.
    pub space: HyperparamSpace,
    /// Free conditional hyperparameters, keyed like the space.
    pub conditionals: Vec<(SpaceKey, ConditionalSpec)>,
}

impl Hypertemplate {
    /// Parents of the free conditionals with their domains in
    /// lexicographic order, sorted by key.
    pub fn parents(&self) -> Vec<(SpaceKey, Vec<String>)> {
        let mut out: Vec<(SpaceKey, Vec<String>)> = Vec::new();
        for (key, cond) in &self.conditionals {
            let pkey = SpaceKey::new(key.step, cond.parent.clone());
            if out.iter().any(|(k, _)| *k == pkey) {
                continue;
            }
            let mut values = match self.space.get(&pkey).map(|s| &s.domain) {
                Some(Domain::Categorical(v)) => v.clone(),
                _ => Vec::new(),
            };
            values.sort();
            out.push((pkey, values));
        }
        out.sort();
        out
    }

    /// Every key a derived template may contain: unconditional keys plus
    /// conditionals that have at least one present branch.
    pub fn keys(&self) -> Vec<SpaceKey> {
        let mut keys: Vec<SpaceKey> = self.space.keys().cloned().collect();
        for (k, c) in &self.conditionals {
            if c.branches.values().any(Option::is_some) {
                keys.push(k.clone());
            }
        }
        keys.sort();
        keys
    }
}

fn template_id(desc: &PipelineDescription, space: &HyperparamSpace) -> String {
    let mut h = Sha256::new();
    h.update(desc.to_canonical_json().as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_string(space).expect("spaces serialize").as_bytes());
    hex::encode(&h.finalize()[..16])
}

struct Collected {
    fixed: Vec<Hyperparams>,
    space: Vec<(SpaceKey, HyperparamSpec)>,
    /// Conditionals whose parent is still free.
    free_conditionals: Vec<(SpaceKey, ConditionalSpec)>,
}

/// Splits every step's hyperparameters into fixed values, free specs and
/// conditionals that still depend on a free parent.
fn collect(graph: &PipelineGraph) -> Result<Collected, GraphError> {
    let mut fixed = Vec::with_capacity(graph.steps.len());
    let mut space = Vec::new();
    let mut free_conditionals = Vec::new();
    for step in &graph.steps {
        let ann = &step.annotation;
        let i = step.index;
        let init = &step.init_params;
        let mut values = ann.fixed_hyperparams.clone();
        for (name, value) in init {
            let domain_ok = if let Some(spec) = ann.tunable(name) {
                spec.domain.contains(value)
            } else if ann.fixed_hyperparams.contains_key(name) || ann.conditional(name).is_some() {
                true
            } else {
                return Err(GraphError::InitParamUnknown { step: i, name: name.clone() });
            };
            if !domain_ok {
                return Err(GraphError::InitParamOutOfRange { step: i, name: name.clone(), value: value.clone() });
            }
            values.insert(name.clone(), value.clone());
        }
        for spec in &ann.tunable_hyperparams {
            if !init.contains_key(&spec.name) {
                space.push((SpaceKey::new(i, spec.name.clone()), spec.clone()));
            }
        }
        for cond in &ann.conditional_hyperparams {
            let parent = values.get(&cond.parent).and_then(|v| v.as_str().map(str::to_string));
            let Some(parent) = parent else {
                free_conditionals.push((SpaceKey::new(i, cond.name.clone()), cond.clone()));
                continue;
            };
            let branch = cond.branches.get(&parent).cloned().flatten();
            match (branch, init.get(&cond.name)) {
                (Some(spec), Some(v)) => {
                    if !spec.domain.contains(v) {
                        return Err(GraphError::InitParamOutOfRange {
                            step: i,
                            name: cond.name.clone(),
                            value: v.clone(),
                        });
                    }
                }
                (Some(spec), None) => space.push((SpaceKey::new(i, cond.name.clone()), spec)),
                (None, Some(_)) => {
                    // Set for a branch where it does not exist.
                    return Err(GraphError::InitParamUnknown { step: i, name: cond.name.clone() });
                }
                (None, None) => {}
            }
        }
        fixed.push(values);
    }
    Ok(Collected { fixed, space, free_conditionals })
}

fn template_from_graph(graph: PipelineGraph) -> Result<Template, GraphError> {
    let c = collect(&graph)?;
    if let Some((key, cond)) = c.free_conditionals.first() {
        return Err(GraphError::UnresolvedConditional {
            step: key.step,
            name: cond.name.clone(),
            parent: cond.parent.clone(),
        });
    }
    let space = HyperparamSpace::new(c.space)?;
    let id = template_id(&graph.description, &space);
    Ok(Template { graph, space, fixed: c.fixed, id })
}

/// Recovers the graph and collects the joint space. Init params fix the
/// hyperparameters they name. Fails with `UnresolvedConditional` when a
/// conditional hyperparameter's parent is still free; use
/// [`make_hypertemplate`] and [`derive_templates`] for those.
pub fn make_template(desc: &PipelineDescription, catalog: &Catalog) -> Result<Template, GraphError> {
    template_from_graph(recover_graph(desc, catalog)?)
}

pub fn make_hypertemplate(desc: &PipelineDescription, catalog: &Catalog) -> Result<Hypertemplate, GraphError> {
    let graph = recover_graph(desc, catalog)?;
    let c = collect(&graph)?;
    for (key, cond) in &c.free_conditionals {
        let parent = SpaceKey::new(key.step, cond.parent.clone());
        match c.space.iter().find(|(k, _)| *k == parent).map(|(_, s)| &s.domain) {
            Some(Domain::Categorical(_)) => {}
            _ => {
                return Err(GraphError::UnresolvedConditional {
                    step: key.step,
                    name: cond.name.clone(),
                    parent: cond.parent.clone(),
                })
            }
        }
    }
    Ok(Hypertemplate { graph, space: HyperparamSpace::new(c.space)?, conditionals: c.free_conditionals })
}

/// One template per combination of conditional-parent values, in
/// lexicographic order of the value tuples. Parents become init params of
/// the derived descriptions.
pub fn derive_templates(h: &Hypertemplate) -> Result<Vec<Template>, GraphError> {
    let parents = h.parents();
    let mut out = Vec::new();
    let mut idx = vec![0usize; parents.len()];
    if parents.iter().any(|(_, v)| v.is_empty()) {
        return Ok(out);
    }
    loop {
        let mut graph = h.graph.clone();
        for ((key, values), &j) in parents.iter().zip(&idx) {
            let value = HyperValue::Str(values[j].clone());
            let step_key = graph.steps[key.step].key.clone();
            graph.steps[key.step].init_params.insert(key.name.clone(), value.clone());
            graph.description.init_params.entry(step_key).or_default().insert(key.name.clone(), value);
        }
        out.push(template_from_graph(graph)?);
        // Odometer increment, last parent fastest.
        let mut p = parents.len();
        loop {
            if p == 0 {
                return Ok(out);
            }
            p -= 1;
            idx[p] += 1;
            if idx[p] < parents[p].1.len() {
                break;
            }
            idx[p] = 0;
        }
    }
}

/// A template with every free hyperparameter bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub template: Arc<Template>,
    pub lambda: Assignment,
    /// Resolved hyperparameters per step: fixed, init and lambda values.
    pub hyperparams: Vec<Hyperparams>,
}

impl Pipeline {
    pub fn n_steps(&self) -> usize {
        self.hyperparams.len()
    }
}

/// Binds `lambda`, which must cover the template's space exactly with
/// in-range values.
pub fn bind(t: &Arc<Template>, lambda: &Assignment) -> Result<Pipeline, GraphError> {
    t.space.check(lambda)?;
    let mut hyperparams = t.fixed.clone();
    for (key, value) in lambda {
        let value = match (t.space.get(key).map(|s| &s.domain), value) {
            (Some(Domain::Float { .. }), HyperValue::Int(i)) => HyperValue::Float(*i as f64),
            (_, v) => v.clone(),
        };
        hyperparams[key.step].insert(key.name.clone(), value);
    }
    Ok(Pipeline { template: Arc::clone(t), lambda: lambda.clone(), hyperparams })
}
