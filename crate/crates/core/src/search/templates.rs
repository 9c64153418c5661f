use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::Value as Json;

use super::{SearchError, Task};
use crate::annotations::Catalog;
use crate::bundled;
use crate::graph::{derive_templates, make_hypertemplate, make_template, GraphError, PipelineDescription, Template};

/// Raw text of one template document and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSource {
    pub origin: String,
    pub text: String,
}

/// A runnable template offered to the selector.
#[derive(Debug, Clone)]
pub struct CandidateTemplate {
    /// Document name; derived templates append their conditional-parent
    /// values, e.g. `classification.logistic[penalty=l2]`.
    pub name: String,
    pub origin: String,
    pub template: Arc<Template>,
}

impl CandidateTemplate {
    /// The document name without the derived-template suffix.
    pub fn base_name(&self) -> &str {
        self.name.split('[').next().unwrap_or(&self.name)
    }
}

pub fn bundled_sources() -> Vec<TemplateSource> {
    bundled::TEMPLATES
        .iter()
        .map(|(file, text)| TemplateSource { origin: bundled::origin(file), text: text.to_string() })
        .collect()
}

/// Every `*.json` file directly inside `dir`, sorted by path.
pub fn read_template_dir(dir: &Path) -> Result<Vec<TemplateSource>, SearchError> {
    let io = |source: std::io::Error| SearchError::Io { path: dir.to_path_buf(), source: Arc::new(source) };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p)
                .map_err(|source| SearchError::Io { path: p.clone(), source: Arc::new(source) })?;
            Ok(TemplateSource { origin: p.display().to_string(), text })
        })
        .collect()
}

fn string_list(doc: &Json, field: &str) -> Option<Vec<String>> {
    doc.get(field)?.as_array().map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
}

fn matches_tag(tags: Option<Vec<String>>, wanted: &str) -> bool {
    tags.is_none_or(|t| t.iter().any(|x| x == wanted))
}

fn default_name(origin: &str) -> String {
    let file = origin.rsplit(['/', '\\', ':']).next().unwrap_or(origin);
    file.strip_suffix(".json").unwrap_or(file).to_string()
}

/// Templates matching the task's problem type and data modality, sorted by
/// origin then name. A document without `problem_types` or `modalities`
/// tags is not restricted by them; primitives whose annotations list
/// modalities must list the task's. Documents with free conditional
/// hyperparameters expand into one template per combination of parent
/// values. The task's declared sources replace the default source names of
/// documents that do not name their own.
pub fn load_available_templates(
    task: &Task,
    sources: &[TemplateSource],
    catalog: &Catalog,
) -> Result<Vec<CandidateTemplate>, SearchError> {
    let (problem, modality) = (task.problem_type, task.data_modality.as_str());
    let mut docs = Vec::new();
    for src in sources {
        let malformed = |source: GraphError| SearchError::Template { origin: src.origin.clone(), source };
        let doc: Json = serde_json::from_str(&src.text)
            .map_err(|e| malformed(GraphError::MalformedDescription(e.to_string())))?;
        if !matches_tag(string_list(&doc, "problem_types"), problem.as_str())
            || !matches_tag(string_list(&doc, "modalities"), modality)
        {
            continue;
        }
        let mut desc = PipelineDescription::from_json(&src.text).map_err(malformed)?;
        if desc.sources.is_none() {
            desc.sources = task.sources.clone();
        }
        let runnable = desc.primitives.iter().all(|p| {
            catalog.get(p).is_none_or(|a| a.modalities.is_empty() || a.modalities.iter().any(|m| m == modality))
        });
        if !runnable {
            continue;
        }
        let name = doc.get("name").and_then(Json::as_str).map(String::from).unwrap_or_else(|| default_name(&src.origin));
        docs.push((src.origin.clone(), name, desc));
    }
    docs.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));

    let mut out = Vec::new();
    for (origin, name, desc) in docs {
        let malformed = |source: GraphError| SearchError::Template { origin: origin.clone(), source };
        let hyper = make_hypertemplate(&desc, catalog).map_err(malformed)?;
        if hyper.conditionals.is_empty() {
            let template = make_template(&desc, catalog).map_err(malformed)?;
            out.push(CandidateTemplate { name, origin, template: Arc::new(template) });
            continue;
        }
        let parents = hyper.parents();
        for template in derive_templates(&hyper).map_err(malformed)? {
            let label: Vec<String> = parents
                .iter()
                .map(|(key, _)| {
                    let value = &template.graph.steps[key.step].init_params[&key.name];
                    format!("{}={}", key.name, value)
                })
                .collect();
            out.push(CandidateTemplate {
                name: format!("{name}[{}]", label.join(",")),
                origin: origin.clone(),
                template: Arc::new(template),
            });
        }
    }
    if out.is_empty() {
        return Err(SearchError::NoTemplatesForTask { problem, modality: modality.to_string() });
    }
    Ok(out)
}

/// Keeps the templates whose name or base name is listed.
pub fn filter_templates(templates: Vec<CandidateTemplate>, names: &[String]) -> Vec<CandidateTemplate> {
    templates.into_iter().filter(|t| names.iter().any(|n| n == &t.name || n == t.base_name())).collect()
}
