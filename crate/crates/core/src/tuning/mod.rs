//! Hyperparameter tuners with a record/propose interface.
//!
//! GP tuners standardize the recorded scores, fit a zero-mean GP meta-model
//! over the encoded hyperparameters, and return the best of a batch of
//! uniformly sampled candidates under the acquisition function. Scores are
//! always maximized.

pub mod gp;
pub mod kernel;
pub mod space;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::primitives::split_seed;
use gp::{expected_improvement, GpModel};
use kernel::{Kernel, Matern52, SquaredExponential};
use space::{Assignment, HyperparamSpace, SpaceError};

/// Proposals made before the meta-model is used.
pub const WARMUP_TRIALS: usize = 5;
/// Candidates scored by the acquisition function per proposal.
pub const N_CANDIDATES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TuningError {
    #[error("kernel matrix is singular even with jitter 1e-4")]
    SingularKernel,
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("unknown tuner {name:?} (available: {available})")]
    UnknownTuner { name: String, available: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub lambda: Assignment,
    pub x: Vec<f64>,
    pub score: f64,
}

pub trait Tuner: Send {
    fn name(&self) -> &str;

    fn space(&self) -> &HyperparamSpace;

    fn trials(&self) -> &[TrialRecord];

    /// Appends one evaluation. Duplicate assignments are kept.
    fn record(&mut self, lambda: &Assignment, score: f64) -> Result<(), TuningError>;

    /// Suggests the next assignment to evaluate. Deterministic given the
    /// seed, the recorded trials and the number of earlier proposals.
    fn propose(&mut self) -> Result<Assignment, TuningError>;
}

fn make_record(space: &HyperparamSpace, lambda: &Assignment, score: f64) -> Result<TrialRecord, TuningError> {
    if !score.is_finite() {
        return Err(TuningError::NonFiniteScore(score));
    }
    Ok(TrialRecord { x: space.encode(lambda)?, lambda: lambda.clone(), score })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acquisition {
    ExpectedImprovement,
    /// Posterior mean: pure exploitation.
    PosteriorMean,
}

/// Acquisition values of one batch of candidates.
#[derive(Debug, Clone)]
pub struct ScoredCandidates {
    pub candidates: Vec<Assignment>,
    pub values: Vec<f64>,
    pub model: GpModel,
    /// Encoded candidates, aligned with `candidates`.
    pub encoded: Vec<Vec<f64>>,
}

impl ScoredCandidates {
    /// Index of the best value; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug)]
pub struct GpTuner {
    name: String,
    space: HyperparamSpace,
    trials: Vec<TrialRecord>,
    kernel: Arc<dyn Kernel>,
    acquisition: Acquisition,
    seed: u64,
    proposals: u64,
    warmup: usize,
    n_candidates: usize,
}

impl GpTuner {
    pub fn new(
        name: impl Into<String>,
        space: HyperparamSpace,
        kernel: Arc<dyn Kernel>,
        acquisition: Acquisition,
        seed: u64,
    ) -> Self {
        GpTuner {
            name: name.into(),
            space,
            trials: Vec::new(),
            kernel,
            acquisition,
            seed,
            proposals: 0,
            warmup: WARMUP_TRIALS,
            n_candidates: N_CANDIDATES,
        }
    }

    /// Number of recorded trials below which proposals are uniform.
    pub fn with_warmup(mut self, warmup: usize) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_candidates(mut self, n: usize) -> Self {
        self.n_candidates = n.max(1);
        self
    }

    /// Fits the meta-model to the standardized scores and evaluates the
    /// acquisition on a fresh candidate batch drawn from `rng`.
    pub fn score_candidates(&self, rng: &mut ChaCha8Rng) -> Result<ScoredCandidates, TuningError> {
        let n = self.trials.len() as f64;
        let mean = self.trials.iter().map(|t| t.score).sum::<f64>() / n;
        let sd = (self.trials.iter().map(|t| (t.score - mean).powi(2)).sum::<f64>() / n).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        let x: Vec<Vec<f64>> = self.trials.iter().map(|t| t.x.clone()).collect();
        let y: Vec<f64> = self.trials.iter().map(|t| (t.score - mean) / sd).collect();
        let best = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let model = GpModel::fit_ml2(&x, &y, Arc::clone(&self.kernel))?;
        let candidates: Vec<Assignment> = (0..self.n_candidates).map(|_| self.space.sample(rng)).collect();
        let encoded: Vec<Vec<f64>> =
            candidates.iter().map(|c| self.space.encode(c)).collect::<Result<_, _>>()?;
        let values = encoded
            .iter()
            .map(|q| {
                let (mu, sigma) = model.predict(q);
                match self.acquisition {
                    Acquisition::ExpectedImprovement => expected_improvement(mu, sigma, best),
                    Acquisition::PosteriorMean => mu,
                }
            })
            .collect();
        Ok(ScoredCandidates { candidates, values, model, encoded })
    }
}

impl Tuner for GpTuner {
    fn name(&self) -> &str {
        &self.name
    }

    fn space(&self) -> &HyperparamSpace {
        &self.space
    }

    fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    fn record(&mut self, lambda: &Assignment, score: f64) -> Result<(), TuningError> {
        self.trials.push(make_record(&self.space, lambda, score)?);
        Ok(())
    }

    fn propose(&mut self) -> Result<Assignment, TuningError> {
        if self.space.is_empty() {
            return Ok(Assignment::new());
        }
        self.proposals += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(self.seed, self.proposals));
        if self.trials.len() < self.warmup.max(1) {
            return Ok(self.space.sample(&mut rng));
        }
        let mut scored = self.score_candidates(&mut rng)?;
        let i = scored.argmax();
        Ok(scored.candidates.swap_remove(i))
    }
}

/// Uniform sampling over the space.
#[derive(Debug)]
pub struct RandomTuner {
    space: HyperparamSpace,
    trials: Vec<TrialRecord>,
    seed: u64,
    proposals: u64,
}

impl RandomTuner {
    pub fn new(space: HyperparamSpace, seed: u64) -> Self {
        RandomTuner { space, trials: Vec::new(), seed, proposals: 0 }
    }
}

impl Tuner for RandomTuner {
    fn name(&self) -> &str {
        "random"
    }

    fn space(&self) -> &HyperparamSpace {
        &self.space
    }

    fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    fn record(&mut self, lambda: &Assignment, score: f64) -> Result<(), TuningError> {
        self.trials.push(make_record(&self.space, lambda, score)?);
        Ok(())
    }

    fn propose(&mut self) -> Result<Assignment, TuningError> {
        self.proposals += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(self.seed, self.proposals));
        Ok(self.space.sample(&mut rng))
    }
}

pub type TunerConstructor = fn(HyperparamSpace, u64) -> Box<dyn Tuner>;

/// Tuner kinds selectable by name.
#[derive(Clone)]
pub struct TunerRegistry {
    entries: BTreeMap<&'static str, TunerConstructor>,
}

impl std::fmt::Debug for TunerRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl TunerRegistry {
    /// `gp-se-ei` (alias `gp-ei`), `gp-matern52-ei`, `gp-max` and `random`.
    pub fn builtin() -> Self {
        let mut r = TunerRegistry { entries: BTreeMap::new() };
        fn se_ei(space: HyperparamSpace, seed: u64) -> Box<dyn Tuner> {
            Box::new(GpTuner::new("gp-se-ei", space, Arc::new(SquaredExponential), Acquisition::ExpectedImprovement, seed))
        }
        r.register("gp-se-ei", se_ei);
        r.register("gp-ei", se_ei);
        r.register("gp-matern52-ei", |space, seed| {
            Box::new(GpTuner::new("gp-matern52-ei", space, Arc::new(Matern52), Acquisition::ExpectedImprovement, seed))
        });
        r.register("gp-max", |space, seed| {
            Box::new(GpTuner::new("gp-max", space, Arc::new(SquaredExponential), Acquisition::PosteriorMean, seed))
        });
        r.register("random", |space, seed| Box::new(RandomTuner::new(space, seed)));
        r
    }

    pub fn register(&mut self, name: &'static str, constructor: TunerConstructor) {
        self.entries.insert(name, constructor);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn build(&self, name: &str, space: HyperparamSpace, seed: u64) -> Result<Box<dyn Tuner>, TuningError> {
        let make = self.entries.get(name).ok_or_else(|| TuningError::UnknownTuner {
            name: name.to_string(),
            available: self.names().collect::<Vec<_>>().join(", "),
        })?;
        Ok(make(space, seed))
    }
}
