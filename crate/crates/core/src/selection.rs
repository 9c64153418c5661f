//! Template selection as a multi-armed bandit.
//!
//! Selectors keep the raw scores of every arm and turn them into rewards in
//! `[0, 1]` when choosing. By default the reward bounds are the running
//! minimum and maximum over all successful scores the selector has seen, so
//! one selector should serve one task.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::primitives::split_seed;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("unknown selector {name:?} (available: {available})")]
    UnknownSelector { name: String, available: String },
}

/// Affine map of `scores` from `[lo, hi]` onto `[0, 1]`, clamped. Degenerate
/// bounds (`hi <= lo` or non-finite) give 0.5 everywhere.
pub fn compute_rewards(scores: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return vec![0.5; scores.len()];
    }
    scores.iter().map(|s| ((s - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardBounds {
    /// Running min/max of the successful scores recorded so far.
    Running,
    Fixed { lo: f64, hi: f64 },
}

/// Per-arm score history shared by the selector kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmHistory {
    /// Raw scores per arm; `None` marks a failed trial.
    arms: BTreeMap<String, Vec<Option<f64>>>,
    bounds: RewardBounds,
    lo: f64,
    hi: f64,
}

impl ArmHistory {
    pub fn new(bounds: RewardBounds) -> Self {
        ArmHistory { arms: BTreeMap::new(), bounds, lo: f64::INFINITY, hi: f64::NEG_INFINITY }
    }

    pub fn record(&mut self, arm: &str, score: Option<f64>) {
        if let Some(s) = score.filter(|s| s.is_finite()) {
            self.lo = self.lo.min(s);
            self.hi = self.hi.max(s);
        }
        self.arms.entry(arm.to_string()).or_default().push(score.filter(|s| s.is_finite()));
    }

    pub fn pulls(&self, arm: &str) -> usize {
        self.arms.get(arm).map_or(0, Vec::len)
    }

    pub fn total_pulls(&self) -> usize {
        self.arms.values().map(Vec::len).sum()
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self.bounds {
            RewardBounds::Running => (self.lo, self.hi),
            RewardBounds::Fixed { lo, hi } => (lo, hi),
        }
    }

    /// Rewards of one arm under the current bounds. Failed trials earn 0.
    pub fn rewards(&self, arm: &str) -> Vec<f64> {
        let (lo, hi) = self.bounds();
        let Some(history) = self.arms.get(arm) else { return Vec::new() };
        history
            .iter()
            .map(|s| match s {
                Some(s) => compute_rewards(&[*s], lo, hi)[0],
                None => 0.0,
            })
            .collect()
    }
}

pub trait Selector: Send {
    fn name(&self) -> &str;

    fn history(&self) -> &ArmHistory;

    /// Records one trial of `arm`; `None` is a failed trial.
    fn record(&mut self, arm: &str, score: Option<f64>);

    /// Index into `candidates` of the arm to pull next.
    fn select(&mut self, candidates: &[String]) -> Result<usize, SelectionError>;
}

/// UCB1 index `mean + sqrt(2 ln N / n)`.
pub fn ucb1_index(mean: f64, n: usize, total: usize) -> f64 {
    mean + (2.0 * (total as f64).ln() / n as f64).sqrt()
}

/// Never-pulled candidates first, then the maximum UCB1 index; ties go to
/// the lowest candidate index.
#[derive(Debug, Clone)]
pub struct Ucb1 {
    history: ArmHistory,
}

impl Ucb1 {
    pub fn new() -> Self {
        Ucb1 { history: ArmHistory::new(RewardBounds::Running) }
    }

    pub fn with_bounds(bounds: RewardBounds) -> Self {
        Ucb1 { history: ArmHistory::new(bounds) }
    }

    /// UCB1 index of every candidate; `None` for never-pulled arms.
    pub fn indices(&self, candidates: &[String]) -> Vec<Option<f64>> {
        let total = self.history.total_pulls();
        candidates
            .iter()
            .map(|c| {
                let r = self.history.rewards(c);
                if r.is_empty() {
                    None
                } else {
                    Some(ucb1_index(r.iter().sum::<f64>() / r.len() as f64, r.len(), total))
                }
            })
            .collect()
    }
}

impl Default for Ucb1 {
    fn default() -> Self {
        Self::new()
    }
}

impl Selector for Ucb1 {
    fn name(&self) -> &str {
        "ucb1"
    }

    fn history(&self) -> &ArmHistory {
        &self.history
    }

    fn record(&mut self, arm: &str, score: Option<f64>) {
        self.history.record(arm, score);
    }

    fn select(&mut self, candidates: &[String]) -> Result<usize, SelectionError> {
        if candidates.is_empty() {
            return Err(SelectionError::NoCandidates);
        }
        let indices = self.indices(candidates);
        if let Some(i) = indices.iter().position(Option::is_none) {
            return Ok(i);
        }
        let mut best = 0;
        for (i, u) in indices.iter().enumerate() {
            if u.unwrap() > indices[best].unwrap() {
                best = i;
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone)]
pub struct UniformRandom {
    history: ArmHistory,
    seed: u64,
    draws: u64,
}

impl UniformRandom {
    pub fn new(seed: u64) -> Self {
        UniformRandom { history: ArmHistory::new(RewardBounds::Running), seed, draws: 0 }
    }
}

impl Selector for UniformRandom {
    fn name(&self) -> &str {
        "random"
    }

    fn history(&self) -> &ArmHistory {
        &self.history
    }

    fn record(&mut self, arm: &str, score: Option<f64>) {
        self.history.record(arm, score);
    }

    fn select(&mut self, candidates: &[String]) -> Result<usize, SelectionError> {
        if candidates.is_empty() {
            return Err(SelectionError::NoCandidates);
        }
        self.draws += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(self.seed, self.draws));
        Ok(rng.random_range(0..candidates.len()))
    }
}

pub type SelectorConstructor = fn(u64) -> Box<dyn Selector>;

/// Selector kinds selectable by name.
#[derive(Clone)]
pub struct SelectorRegistry {
    entries: BTreeMap<&'static str, SelectorConstructor>,
}

impl std::fmt::Debug for SelectorRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl SelectorRegistry {
    pub fn builtin() -> Self {
        let mut r = SelectorRegistry { entries: BTreeMap::new() };
        r.register("ucb1", |_| Box::new(Ucb1::new()));
        r.register("random", |seed| Box::new(UniformRandom::new(seed)));
        r
    }

    pub fn register(&mut self, name: &'static str, constructor: SelectorConstructor) {
        self.entries.insert(name, constructor);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn build(&self, name: &str, seed: u64) -> Result<Box<dyn Selector>, SelectionError> {
        let make = self.entries.get(name).ok_or_else(|| SelectionError::UnknownSelector {
            name: name.to_string(),
            available: self.names().collect::<Vec<_>>().join(", "),
        })?;
        Ok(make(seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, prop_assert_eq, proptest};

    fn arms(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("arm{i}")).collect()
    }

    #[test]
    fn rewards_map_the_unit_interval_onto_itself() {
        assert_eq!(compute_rewards(&[0.0, 0.5, 1.0], 0.0, 1.0), vec![0.0, 0.5, 1.0]);
        assert_eq!(compute_rewards(&[3.0, 3.0], 3.0, 3.0), vec![0.5, 0.5]);
        assert_eq!(compute_rewards(&[-1.0, 2.0], 0.0, 1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn single_candidate_is_selected() {
        let mut s = Ucb1::new();
        s.record("only", Some(0.1));
        assert_eq!(s.select(&arms(1)[..1]).unwrap(), 0);
        assert_eq!(s.select(&["x".to_string()]).unwrap(), 0);
    }

    #[test]
    fn empty_candidates_are_an_error() {
        assert_eq!(Ucb1::new().select(&[]), Err(SelectionError::NoCandidates));
        assert_eq!(UniformRandom::new(0).select(&[]), Err(SelectionError::NoCandidates));
    }

    #[test]
    fn hand_computed_ucb1_example() {
        let mut s = Ucb1::with_bounds(RewardBounds::Fixed { lo: 0.0, hi: 1.0 });
        s.record("arm1", Some(0.4));
        s.record("arm1", Some(0.6));
        s.record("arm2", Some(0.8));
        let idx = s.indices(&arms(2));
        let u1 = 0.5 + (2.0 * 3f64.ln() / 2.0).sqrt();
        let u2 = 0.8 + (2.0 * 3f64.ln()).sqrt();
        assert!((idx[0].unwrap() - u1).abs() < 1e-12 && (u1 - 1.548).abs() < 1e-3);
        assert!((idx[1].unwrap() - u2).abs() < 1e-12 && (u2 - 2.282).abs() < 1e-3);
        assert_eq!(s.select(&arms(2)).unwrap(), 1);
    }

    #[test]
    fn unpulled_arm_wins_regardless_of_means() {
        let mut s = Ucb1::new();
        s.record("arm1", Some(1.0));
        s.record("arm3", Some(0.9));
        assert_eq!(s.select(&arms(3)).unwrap(), 1);
    }

    #[test]
    fn failures_earn_zero_reward() {
        let mut s = Ucb1::new();
        s.record("arm1", Some(0.2));
        s.record("arm1", Some(0.8));
        s.record("arm2", None);
        assert_eq!(s.history().rewards("arm2"), vec![0.0]);
        assert_eq!(s.history().rewards("arm1"), vec![0.0, 1.0]);
    }

    #[test]
    fn registry_builds_by_name() {
        let r = SelectorRegistry::builtin();
        assert_eq!(r.names().collect::<Vec<_>>(), ["random", "ucb1"]);
        assert_eq!(r.build("ucb1", 0).unwrap().name(), "ucb1");
        assert!(matches!(r.build("thompson", 0).map(|_| ()), Err(SelectionError::UnknownSelector { .. })));
    }

    #[test]
    fn random_selector_is_seeded() {
        let draws = |seed| {
            let mut s = UniformRandom::new(seed);
            (0..20).map(|_| s.select(&arms(4)).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draws(3), draws(3));
        assert_ne!(draws(3), draws(4));
    }

    /// Mean reward per round of a selector on Bernoulli arms.
    fn bernoulli_run(sel: &mut dyn Selector, means: &[f64], rounds: usize, seed: u64) -> f64 {
        let names = arms(means.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for _ in 0..rounds {
            let i = sel.select(&names).unwrap();
            let r = if rng.random::<f64>() < means[i] { 1.0 } else { 0.0 };
            total += r;
            sel.record(&names[i], Some(r));
        }
        total / rounds as f64
    }

    #[test]
    fn ucb1_beats_random_on_bernoulli_arms() {
        let means = [0.1, 0.3, 0.5, 0.7, 0.9];
        let (mut ucb, mut rnd) = (0.0, 0.0);
        for seed in 0..50 {
            ucb += bernoulli_run(&mut Ucb1::with_bounds(RewardBounds::Fixed { lo: 0.0, hi: 1.0 }), &means, 1000, seed);
            rnd += bernoulli_run(&mut UniformRandom::new(seed), &means, 1000, seed);
        }
        assert!(ucb >= 1.1 * rnd, "ucb {ucb} random {rnd}");
    }

    proptest! {
        #[test]
        fn rewards_preserve_order(scores in proptest::collection::vec(-10.0f64..10.0, 1..20)) {
            let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let r = compute_rewards(&scores, lo, hi);
            for i in 0..scores.len() {
                prop_assert!((0.0..=1.0).contains(&r[i]));
                for j in 0..scores.len() {
                    if scores[i] < scores[j] {
                        prop_assert!(r[i] <= r[j]);
                    }
                }
            }
        }

        #[test]
        fn every_arm_is_pulled_within_the_first_rounds(
            n in 1usize..8,
            scores in proptest::collection::vec(0.0f64..1.0, 8),
        ) {
            let names = arms(n);
            let mut s = Ucb1::new();
            for (k, score) in scores.iter().take(n).enumerate() {
                let i = s.select(&names).unwrap();
                prop_assert_eq!(i, k);
                s.record(&names[i], Some(*score));
            }
            prop_assert_eq!(s.history().total_pulls(), n);
        }

        #[test]
        fn pulled_arms_return_the_max_index(
            history in proptest::collection::vec((0usize..4, proptest::option::weighted(0.9, 0.0f64..1.0)), 4..40),
        ) {
            let names = arms(4);
            let mut s = Ucb1::new();
            for (i, name) in names.iter().enumerate() {
                s.record(name, Some(i as f64 / 4.0));
            }
            for (arm, score) in history {
                s.record(&names[arm], score);
            }
            let idx = s.indices(&names);
            let chosen = s.select(&names).unwrap();
            for u in &idx {
                prop_assert!(u.unwrap() <= idx[chosen].unwrap());
            }
        }
    }
}
