//! Stationary covariance functions of the Euclidean distance `r`.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

/// Lengthscale `ℓ`, signal variance `v` and observation-noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub lengthscale: f64,
    pub variance: f64,
    pub noise: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { lengthscale: 0.5, variance: 1.0, noise: 1e-4 }
    }
}

pub trait Kernel: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    /// Covariance at distance `r`.
    fn at_distance(&self, r: f64, p: &KernelParams) -> f64;

    fn eval(&self, a: &[f64], b: &[f64], p: &KernelParams) -> f64 {
        self.at_distance(distance(a, b), p)
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `v · exp(−r² / (2ℓ²))`
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredExponential;

impl Kernel for SquaredExponential {
    fn name(&self) -> &'static str {
        "se"
    }

    fn at_distance(&self, r: f64, p: &KernelParams) -> f64 {
        p.variance * (-(r * r) / (2.0 * p.lengthscale * p.lengthscale)).exp()
    }
}

/// `v · (1 + √5 r/ℓ + 5r²/(3ℓ²)) · exp(−√5 r/ℓ)`
#[derive(Debug, Clone, Copy, Default)]
pub struct Matern52;

impl Kernel for Matern52 {
    fn name(&self) -> &'static str {
        "matern52"
    }

    fn at_distance(&self, r: f64, p: &KernelParams) -> f64 {
        let s = 5f64.sqrt() * r / p.lengthscale;
        p.variance * (1.0 + s + s * s / 3.0) * (-s).exp()
    }
}

/// Kernels selectable by name.
#[derive(Debug, Clone)]
pub struct KernelRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Kernel>>,
}

impl KernelRegistry {
    pub fn builtin() -> Self {
        let mut r = KernelRegistry { entries: BTreeMap::new() };
        r.register(SquaredExponential);
        r.register(Matern52);
        r
    }

    pub fn register<K: Kernel + 'static>(&mut self, k: K) {
        self.entries.insert(k.name(), Arc::new(k));
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Kernel>> {
        self.entries.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }
}
