use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use super::{parse_annotation, validate_annotation, AnnotationError, PrimitiveAnnotation, Violation};
use crate::primitives::NativeRegistry;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: AnnotationError,
    },
    #[error("{path}: invalid annotation: {}", violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid { path: PathBuf, violations: Vec<Violation> },
    #[error("duplicate primitive {name:?} (first defined in {first}, again in {second})")]
    DuplicatePrimitive { name: String, first: String, second: String },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Allow later sources to replace same-named primitives from earlier ones.
    pub shadow: bool,
}

/// Validated annotations indexed by fully-qualified name. Immutable once
/// built; entries are shared with the graphs that reference them.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    entries: BTreeMap<String, (Arc<PrimitiveAnnotation>, String)>,
    source_paths: Vec<PathBuf>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a catalog from already-parsed annotations, without registry
    /// validation. Later duplicates replace earlier ones.
    pub fn from_annotations(anns: impl IntoIterator<Item = PrimitiveAnnotation>) -> Self {
        let mut c = Catalog::new();
        for a in anns {
            c.entries.insert(a.name.clone(), (Arc::new(a), "<memory>".to_string()));
        }
        c
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Arc<PrimitiveAnnotation>> {
        self.entries.get(name).map(|(a, _)| a)
    }

    /// Where the named entry was loaded from.
    pub fn origin(&self, name: &str) -> Option<&str> {
        self.entries.get(name).map(|(_, o)| o.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<PrimitiveAnnotation>> {
        self.entries.values().map(|(a, _)| a)
    }

    pub fn source_paths(&self) -> &[PathBuf] {
        &self.source_paths
    }

    /// Validates and inserts one annotation document.
    pub fn add_document(
        &mut self,
        text: &str,
        origin: &str,
        registry: &NativeRegistry,
        opts: LoadOptions,
    ) -> Result<(), CatalogError> {
        let path = PathBuf::from(origin);
        let ann = parse_annotation(text)
            .map_err(|source| CatalogError::Parse { path: path.clone(), source })?;
        let violations = validate_annotation(&ann, registry);
        if !violations.is_empty() {
            return Err(CatalogError::Invalid { path, violations });
        }
        if let Some((_, first)) = self.entries.get(&ann.name) {
            if !opts.shadow {
                return Err(CatalogError::DuplicatePrimitive {
                    name: ann.name.clone(),
                    first: first.clone(),
                    second: origin.to_string(),
                });
            }
        }
        self.entries.insert(ann.name.clone(), (Arc::new(ann), origin.to_string()));
        Ok(())
    }

    /// Loads every `*.json` file below each directory, in path order.
    pub fn extend_from_dirs<P: AsRef<Path>>(
        &mut self,
        paths: &[P],
        registry: &NativeRegistry,
        opts: LoadOptions,
    ) -> Result<(), CatalogError> {
        for dir in paths {
            let dir = dir.as_ref();
            let mut files = Vec::new();
            collect_json(dir, &mut files)?;
            // Within one directory, duplicates are always an error.
            let mut local = BTreeMap::new();
            for file in files {
                let text = fs::read_to_string(&file)
                    .map_err(|source| CatalogError::Io { path: file.clone(), source })?;
                let origin = file.display().to_string();
                let ann_name = parse_annotation(&text)
                    .map_err(|source| CatalogError::Parse { path: file.clone(), source })?
                    .name;
                if let Some(first) = local.insert(ann_name.clone(), origin.clone()) {
                    return Err(CatalogError::DuplicatePrimitive {
                        name: ann_name,
                        first,
                        second: origin,
                    });
                }
                self.add_document(&text, &origin, registry, opts)?;
            }
            self.source_paths.push(dir.to_path_buf());
        }
        Ok(())
    }
}

fn collect_json(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CatalogError> {
    let rd = fs::read_dir(dir).map_err(|source| CatalogError::Io { path: dir.to_path_buf(), source })?;
    let mut entries: Vec<PathBuf> = rd
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|source| CatalogError::Io { path: dir.to_path_buf(), source })?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_json(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Loads and validates every annotation under `paths`.
pub fn load_catalog<P: AsRef<Path>>(
    paths: &[P],
    registry: &NativeRegistry,
    opts: LoadOptions,
) -> Result<Catalog, CatalogError> {
    let mut c = Catalog::new();
    c.extend_from_dirs(paths, registry, opts)?;
    Ok(c)
}
