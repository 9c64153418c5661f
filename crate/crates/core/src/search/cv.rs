use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::metric::{Metric, ProblemType};
use crate::data::{Table, Value, Vector};
use crate::execution::{fit, produce, Context, ExecError};
use crate::graph::Pipeline;
use crate::primitives::{split_seed, NativeRegistry};

/// Features and target of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Table,
    pub y: Vector,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset { x: self.x.select_rows(rows), y: self.y.select(rows) }
    }

    /// The fit-phase context `{X, y}`.
    pub fn train_context(&self) -> Context {
        Context::new().with("X", Value::Table(self.x.clone())).with("y", Value::Vector(self.y.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CvError {
    #[error("cannot make {k} folds from {n} rows (need 2 <= k <= rows)")]
    InvalidFolds { k: usize, n: usize },
    #[error("fold {fold} has no training rows of class {class:?}, even after redrawing the folds")]
    FoldDegenerate { fold: usize, class: String },
    #[error("fold {fold}: {source}")]
    Exec {
        fold: usize,
        #[source]
        source: ExecError,
    },
    #[error("the pipeline produced no {0:?}")]
    NoPrediction(String),
    #[error("{metric} is undefined for the predictions of fold {fold}")]
    Unscorable { metric: Metric, fold: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvScore {
    pub mean: f64,
    /// Population standard deviation of the fold scores.
    pub sd: f64,
    pub folds: Vec<f64>,
}

/// Held-out row indices of each fold. Stratified folds shuffle each class
/// separately and deal its rows round-robin, continuing across classes.
pub fn make_folds(y: &Vector, k: usize, stratified: bool, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = Vec::with_capacity(y.len());
    if stratified {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, l) in y.as_labels().into_iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        for rows in groups.values_mut() {
            rows.shuffle(&mut rng);
            order.extend_from_slice(rows);
        }
    } else {
        order.extend(0..y.len());
        order.shuffle(&mut rng);
    }
    let mut folds = vec![Vec::new(); k];
    for (p, row) in order.into_iter().enumerate() {
        folds[p % k].push(row);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// First fold whose training rows miss a class of `y`.
fn degenerate_fold(y: &[String], folds: &[Vec<usize>]) -> Option<(usize, String)> {
    let classes: BTreeSet<&String> = y.iter().collect();
    for (f, held) in folds.iter().enumerate() {
        let held: BTreeSet<usize> = held.iter().copied().collect();
        let seen: BTreeSet<&String> = y.iter().enumerate().filter(|(i, _)| !held.contains(i)).map(|(_, l)| l).collect();
        if let Some(c) = classes.iter().find(|c| !seen.contains(*c)) {
            return Some((f, (*c).clone()));
        }
    }
    None
}

fn check_folds(y: &Vector, k: usize, problem: ProblemType, seed: u64) -> Result<Vec<Vec<usize>>, CvError> {
    if k < 2 || y.len() < k {
        return Err(CvError::InvalidFolds { k, n: y.len() });
    }
    let stratified = problem == ProblemType::Classification;
    let folds = make_folds(y, k, stratified, seed);
    if !stratified {
        return Ok(folds);
    }
    let labels = y.as_labels();
    if degenerate_fold(&labels, &folds).is_none() {
        return Ok(folds);
    }
    let folds = make_folds(y, k, stratified, split_seed(seed, 1));
    match degenerate_fold(&labels, &folds) {
        None => Ok(folds),
        Some((fold, class)) => Err(CvError::FoldDegenerate { fold, class }),
    }
}

fn prediction_name(pipeline: &Pipeline) -> String {
    pipeline.template.graph.sinks.first().cloned().unwrap_or_else(|| "y_hat".into())
}

/// Fits `pipeline` on `train` and scores its predictions for `test`.
pub fn fit_and_score(
    metric: Metric,
    pipeline: &Pipeline,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
    registry: &NativeRegistry,
    fold: usize,
) -> Result<f64, CvError> {
    let mut ctx = train.train_context();
    let fitted = fit(pipeline, &mut ctx, registry, seed).map_err(|source| CvError::Exec { fold, source })?;
    let out = produce(&fitted, Context::new().with("X", Value::Table(test.x.clone())), registry)
        .map_err(|source| CvError::Exec { fold, source })?;
    let name = prediction_name(pipeline);
    let Some(Value::Vector(pred)) = out.get(&name) else { return Err(CvError::NoPrediction(name)) };
    metric.score(&test.y, pred).ok_or(CvError::Unscorable { metric, fold })
}

/// k-fold cross-validation with a fresh fit per fold. Classification folds
/// are stratified; when a fold's training rows miss a class the folds are
/// redrawn once.
pub fn cross_validate_score(
    metric: Metric,
    pipeline: &Pipeline,
    data: &Dataset,
    k: usize,
    seed: u64,
    registry: &NativeRegistry,
) -> Result<CvScore, CvError> {
    let folds = check_folds(&data.y, k, metric.problem_type(), seed)?;
    let mut scores = Vec::with_capacity(k);
    for (f, held) in folds.iter().enumerate() {
        let held_set: BTreeSet<usize> = held.iter().copied().collect();
        let train_rows: Vec<usize> = (0..data.len()).filter(|i| !held_set.contains(i)).collect();
        let s = fit_and_score(
            metric,
            pipeline,
            &data.subset(&train_rows),
            &data.subset(held),
            split_seed(seed, f as u64),
            registry,
            f,
        )?;
        scores.push(s);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(CvScore { mean, sd, folds: scores })
}
