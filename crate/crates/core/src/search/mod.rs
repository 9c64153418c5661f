//! Joint template selection and hyperparameter tuning for one task.
//!
//! Each iteration the selector picks a template, that template's tuner
//! proposes hyperparameters (the annotated defaults on a template's first
//! turn), the pipeline is cross-validated on the training split, and both
//! learners record the score. The best pipeline by CV score is re-fit on the
//! whole training split and scored once on the test split.

pub mod cv;
pub mod metric;
pub mod templates;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Value, Vector};
use crate::execution::{fit, produce, Context, ExecError, FittedPipeline};
use crate::graph::{bind, GraphError, Pipeline};
use crate::primitives::{split_seed, NativeRegistry};
use crate::selection::{SelectionError, SelectorRegistry};
use crate::tuning::space::Assignment;
use crate::tuning::{Tuner, TunerRegistry, TuningError};

pub use cv::{cross_validate_score, make_folds, CvError, CvScore, Dataset};
pub use metric::{Metric, ProblemType};
pub use templates::{
    bundled_sources, filter_templates, load_available_templates, read_template_dir, CandidateTemplate, TemplateSource,
};

pub const DEFAULT_CV_FOLDS: usize = 5;
pub const SINGLE_TABLE: &str = "single_table";

#[derive(Debug, Clone, Error)]
pub enum SearchError {
    #[error("no templates for {problem} on {modality} data")]
    NoTemplatesForTask { problem: ProblemType, modality: String },
    #[error("template {origin}: {source}")]
    Template {
        origin: String,
        #[source]
        source: GraphError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: Arc<std::io::Error>,
    },
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error(transparent)]
    Tuning(#[from] TuningError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("metric {metric} does not fit a {problem} task")]
    MetricMismatch { metric: Metric, problem: ProblemType },
    #[error("none of the {trials} trials succeeded")]
    BudgetExhaustedWithNoSuccess { trials: usize },
    #[error("re-fitting the best pipeline failed: {0}")]
    Refit(String),
}

/// Task metadata, as stored in `task.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    #[serde(default = "default_modality")]
    pub data_modality: String,
    pub problem_type: ProblemType,
    pub metric: Metric,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<String>>,
}

fn default_modality() -> String {
    SINGLE_TABLE.to_string()
}

impl Task {
    pub fn check(&self) -> Result<(), SearchError> {
        if self.metric.problem_type() != self.problem_type {
            return Err(SearchError::MetricMismatch { metric: self.metric, problem: self.problem_type });
        }
        Ok(())
    }
}

/// A mark at which the best score so far is reported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Checkpoint {
    Iterations(usize),
    Seconds(f64),
}

impl fmt::Display for Checkpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Checkpoint::Iterations(n) => write!(f, "{n}"),
            Checkpoint::Seconds(s) => write!(f, "{s}s"),
        }
    }
}

impl FromStr for Checkpoint {
    type Err = String;

    /// `30` is an iteration count; `90s` and `2m` are wall-clock marks.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad checkpoint {s:?} (expected N, Ns or Nm)");
        if let Some(v) = s.strip_suffix('s') {
            v.parse::<f64>().ok().filter(|v| *v >= 0.0).map(Checkpoint::Seconds).ok_or_else(bad)
        } else if let Some(v) = s.strip_suffix('m') {
            v.parse::<f64>().ok().filter(|v| *v >= 0.0).map(|m| Checkpoint::Seconds(m * 60.0)).ok_or_else(bad)
        } else {
            s.parse().map(Checkpoint::Iterations).map_err(|_| bad())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    pub max_iterations: usize,
    pub time_limit: Option<Duration>,
    pub checkpoints: Vec<Checkpoint>,
}

impl Budget {
    pub fn iterations(n: usize) -> Self {
        Budget { max_iterations: n, time_limit: None, checkpoints: Vec::new() }
    }

    fn check(&self) -> Result<(), SearchError> {
        if self.max_iterations == 0 {
            return Err(SearchError::InvalidBudget("at least one iteration is needed".into()));
        }
        for c in &self.checkpoints {
            match c {
                Checkpoint::Iterations(n) if *n > self.max_iterations => {
                    return Err(SearchError::InvalidBudget(format!(
                        "checkpoint {n} is beyond the budget of {} iterations",
                        self.max_iterations
                    )))
                }
                Checkpoint::Seconds(s) if self.time_limit.is_some_and(|t| *s > t.as_secs_f64()) => {
                    return Err(SearchError::InvalidBudget(format!("checkpoint {s}s is beyond the time limit")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub budget: Budget,
    pub cv_folds: usize,
    pub tuner: String,
    pub selector: String,
    pub seed: u64,
    pub tuners: TunerRegistry,
    pub selectors: SelectorRegistry,
}

impl SearchConfig {
    pub fn new(budget: Budget, tuner: &str, selector: &str, seed: u64) -> Self {
        SearchConfig {
            budget,
            cv_folds: DEFAULT_CV_FOLDS,
            tuner: tuner.to_string(),
            selector: selector.to_string(),
            seed,
            tuners: TunerRegistry::builtin(),
            selectors: SelectorRegistry::builtin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

/// One evaluated pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrial {
    /// 1-based.
    pub iteration: usize,
    pub template: String,
    pub template_id: String,
    pub lambda: Assignment,
    /// Whether `lambda` is the template's default assignment, proposed on
    /// its first turn.
    pub is_default: bool,
    pub status: TrialStatus,
    pub cv_score: Option<f64>,
    pub cv_sd: Option<f64>,
    pub error: Option<String>,
    /// Wall-clock seconds spent on this trial.
    pub elapsed_s: f64,
    /// Seconds from the start of the search to the end of this trial.
    pub completed_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointBest {
    pub checkpoint: Checkpoint,
    pub best_score: Option<f64>,
    pub best_iteration: Option<usize>,
}

/// Best score relative to the default pipeline, in standard deviations of
/// all successful scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Improvement {
    pub value: f64,
    pub default_score: f64,
    pub best_score: f64,
    /// The scores had no spread (or fewer than two); `value` is 0.
    pub zero_variance: bool,
}

/// `(max(scores) − default) / sd(scores)` with the population standard
/// deviation. Zero variance reports 0 with the flag set.
pub fn improvement_sd(scores: &[f64], default_score: f64) -> Improvement {
    let best = scores.iter().copied().fold(default_score, f64::max);
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
    let flat = scores.windows(2).all(|w| w[0] == w[1]);
    if scores.len() < 2 || flat || !(sd > 0.0) {
        return Improvement { value: 0.0, default_score, best_score: best, zero_variance: true };
    }
    Improvement { value: (best - default_score) / sd, default_score, best_score: best, zero_variance: false }
}

/// What each template's learners saw, for auditing a search.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerHistory {
    pub template: String,
    /// Scores recorded to the template's tuner, failure sentinels included.
    pub tuner_scores: Vec<f64>,
    /// Scores recorded to the selector for this arm; `None` for failures.
    pub selector_scores: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_template: String,
    pub best_iteration: usize,
    pub cv_score: f64,
    pub cv_sd: f64,
    /// Score on the test split after re-fitting on the full training split;
    /// `None` when the test split has no target.
    pub test_score: Option<f64>,
    pub fitted: FittedPipeline,
    pub trials: Vec<SearchTrial>,
    /// Best CV score after each trial.
    pub best_so_far: Vec<Option<f64>>,
    pub checkpoints: Vec<CheckpointBest>,
    pub improvement: Improvement,
    pub learners: Vec<LearnerHistory>,
}

impl SearchResult {
    pub fn best_pipeline(&self) -> &Pipeline {
        &self.fitted.pipeline
    }
}

/// Arm labels: template names, made unique with `#k` suffixes.
fn arm_names(templates: &[CandidateTemplate]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(templates.len());
    for t in templates {
        let mut name = t.name.clone();
        let mut k = 2;
        while out.contains(&name) {
            name = format!("{}#{k}", t.name);
            k += 1;
        }
        out.push(name);
    }
    out
}

fn checkpoint_bests(trials: &[SearchTrial], marks: &[Checkpoint]) -> Vec<CheckpointBest> {
    marks
        .iter()
        .map(|&checkpoint| {
            let mut best: Option<(f64, usize)> = None;
            for t in trials {
                let within = match checkpoint {
                    Checkpoint::Iterations(n) => t.iteration <= n,
                    Checkpoint::Seconds(s) => t.completed_s <= s,
                };
                if let (true, Some(s)) = (within, t.cv_score) {
                    if best.is_none_or(|(b, _)| s > b) {
                        best = Some((s, t.iteration));
                    }
                }
            }
            CheckpointBest { checkpoint, best_score: best.map(|b| b.0), best_iteration: best.map(|b| b.1) }
        })
        .collect()
}

// Independent random streams derived from the search seed.
const STREAM_TUNERS: u64 = 1;
const STREAM_SELECTOR: u64 = 2;
const STREAM_CV: u64 = 3;
const STREAM_REFIT: u64 = 4;
const STREAM_FALLBACK: u64 = 5;

/// Runs the search. `on_trial` sees every trial as soon as it completes.
pub fn search(
    templates: &[CandidateTemplate],
    task: &Task,
    train: &Dataset,
    test: &Dataset,
    config: &SearchConfig,
    registry: &NativeRegistry,
    on_trial: &mut dyn FnMut(&SearchTrial),
) -> Result<SearchResult, SearchError> {
    task.check()?;
    config.budget.check()?;
    if templates.is_empty() {
        return Err(SearchError::NoTemplatesForTask { problem: task.problem_type, modality: task.data_modality.clone() });
    }
    let seed = config.seed;
    let names = arm_names(templates);
    let mut tuners: Vec<Box<dyn Tuner>> = templates
        .iter()
        .enumerate()
        .map(|(i, t)| {
            config.tuners.build(&config.tuner, t.template.space.clone(), split_seed(split_seed(seed, STREAM_TUNERS), i as u64))
        })
        .collect::<Result<_, _>>()?;
    let mut selector = config.selectors.build(&config.selector, split_seed(seed, STREAM_SELECTOR))?;
    let mut learners: Vec<LearnerHistory> = names
        .iter()
        .map(|n| LearnerHistory { template: n.clone(), tuner_scores: Vec::new(), selector_scores: Vec::new() })
        .collect();
    let mut defaulted = vec![false; templates.len()];
    let cv_seed = split_seed(seed, STREAM_CV);

    let start = Instant::now();
    let mut trials: Vec<SearchTrial> = Vec::new();
    let mut best_so_far = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let mut worst = f64::INFINITY;

    for iteration in 1..=config.budget.max_iterations {
        if config.budget.time_limit.is_some_and(|limit| start.elapsed() >= limit) {
            log::info!("time limit reached after {} trials", trials.len());
            break;
        }
        let began = Instant::now();
        let ti = selector.select(&names)?;
        let template = &templates[ti].template;
        let is_default = !defaulted[ti];
        let lambda = if is_default {
            defaulted[ti] = true;
            template.default_lambda()
        } else {
            match tuners[ti].propose() {
                Ok(l) => l,
                Err(e) => {
                    log::warn!("{}: tuner proposal failed ({e}); sampling uniformly instead", names[ti]);
                    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(split_seed(seed, STREAM_FALLBACK), iteration as u64));
                    template.space.sample(&mut rng)
                }
            }
        };
        let outcome = bind(template, &lambda)
            .map_err(|e| e.to_string())
            .and_then(|p| cross_validate_score(task.metric, &p, train, config.cv_folds, cv_seed, registry).map_err(|e| e.to_string()));
        let elapsed = began.elapsed().as_secs_f64();
        let trial = match outcome {
            Ok(cv) => {
                tuners[ti].record(&lambda, cv.mean)?;
                learners[ti].tuner_scores.push(cv.mean);
                selector.record(&names[ti], Some(cv.mean));
                learners[ti].selector_scores.push(Some(cv.mean));
                worst = worst.min(cv.mean);
                if best.is_none_or(|(b, _)| cv.mean > b) {
                    best = Some((cv.mean, trials.len()));
                }
                SearchTrial {
                    iteration,
                    template: names[ti].clone(),
                    template_id: template.id.clone(),
                    lambda,
                    is_default,
                    status: TrialStatus::Ok,
                    cv_score: Some(cv.mean),
                    cv_sd: Some(cv.sd),
                    error: None,
                    elapsed_s: elapsed,
                    completed_s: start.elapsed().as_secs_f64(),
                }
            }
            Err(error) => {
                log::debug!("{} trial {iteration} failed: {error}", names[ti]);
                // The tuner learns the region is bad through the worst score
                // seen so far; before any success there is nothing to anchor it.
                if worst.is_finite() {
                    tuners[ti].record(&lambda, worst)?;
                    learners[ti].tuner_scores.push(worst);
                }
                selector.record(&names[ti], None);
                learners[ti].selector_scores.push(None);
                SearchTrial {
                    iteration,
                    template: names[ti].clone(),
                    template_id: template.id.clone(),
                    lambda,
                    is_default,
                    status: TrialStatus::Failed,
                    cv_score: None,
                    cv_sd: None,
                    error: Some(error),
                    elapsed_s: elapsed,
                    completed_s: start.elapsed().as_secs_f64(),
                }
            }
        };
        on_trial(&trial);
        trials.push(trial);
        best_so_far.push(best.map(|b| b.0));
    }

    let Some((cv_score, best_index)) = best else {
        return Err(SearchError::BudgetExhaustedWithNoSuccess { trials: trials.len() });
    };
    let best_trial = &trials[best_index];
    let ti = names.iter().position(|n| *n == best_trial.template).expect("trial names an arm");
    let pipeline = bind(&templates[ti].template, &best_trial.lambda).map_err(|e| SearchError::Refit(e.to_string()))?;
    let (fitted, test_score) = refit_and_score(task.metric, &pipeline, train, test, split_seed(seed, STREAM_REFIT), registry)
        .map_err(|e| SearchError::Refit(e.to_string()))?;

    let scores: Vec<f64> = trials.iter().filter_map(|t| t.cv_score).collect();
    let default_score = trials.iter().find_map(|t| t.cv_score).expect("at least one success");
    Ok(SearchResult {
        best_template: best_trial.template.clone(),
        best_iteration: best_trial.iteration,
        cv_score,
        cv_sd: best_trial.cv_sd.unwrap_or(0.0),
        test_score,
        fitted,
        checkpoints: checkpoint_bests(&trials, &config.budget.checkpoints),
        improvement: improvement_sd(&scores, default_score),
        trials,
        best_so_far,
        learners,
    })
}

/// Fits on all of `train` and scores on `test` when it has a target.
pub fn refit_and_score(
    metric: Metric,
    pipeline: &Pipeline,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
    registry: &NativeRegistry,
) -> Result<(FittedPipeline, Option<f64>), ExecError> {
    let mut ctx = train.train_context();
    let fitted = fit(pipeline, &mut ctx, registry, seed)?;
    if test.y.is_empty() {
        return Ok((fitted, None));
    }
    let out = produce(&fitted, Context::new().with("X", Value::Table(test.x.clone())), registry)?;
    let name = pipeline.template.graph.sinks.first().map(String::as_str).unwrap_or("y_hat");
    let score = match out.get(name) {
        Some(Value::Vector(pred)) => metric.score(&test.y, pred),
        _ => None,
    };
    Ok((fitted, score))
}

/// An empty target, for test splits without labels.
pub fn no_target() -> Vector {
    Vector::Numeric(Vec::new())
}
