//! Zero-mean Gaussian-process regression with kernel hyperparameters chosen
//! by maximizing the log marginal likelihood.

use std::f64::consts::PI;
use std::sync::Arc;

use super::kernel::{Kernel, KernelParams};
use super::TuningError;

/// Diagonal jitter added on top of the noise variance; retried upwards when
/// the Cholesky factorization fails.
const JITTER: [f64; 4] = [1e-10, 1e-8, 1e-6, 1e-4];

/// In-place lower Cholesky factor of a row-major `n × n` matrix. Returns
/// `None` if the matrix is not numerically positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_upper_t(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: Arc<dyn Kernel>,
    params: KernelParams,
    x: Vec<Vec<f64>>,
    /// Lower Cholesky factor of `K + (noise + jitter) I`.
    chol: Vec<f64>,
    /// `(K + (noise + jitter) I)⁻¹ y`
    alpha: Vec<f64>,
    jitter: f64,
    log_likelihood: f64,
}

impl GpModel {
    /// Conditions the GP on `(x, y)` with fixed kernel parameters.
    pub fn fit(x: &[Vec<f64>], y: &[f64], kernel: Arc<dyn Kernel>, params: KernelParams) -> Result<Self, TuningError> {
        let n = x.len();
        assert_eq!(n, y.len(), "one target per point");
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.eval(&x[i], &x[j], &params);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        for &jitter in &JITTER {
            let mut kk = k.clone();
            for i in 0..n {
                kk[i * n + i] += params.noise + jitter;
            }
            if let Some(chol) = cholesky(&kk, n) {
                let alpha = solve_upper_t(&chol, n, &solve_lower(&chol, n, y));
                let fit_term: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
                let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
                let log_likelihood = -0.5 * fit_term - log_det - 0.5 * n as f64 * (2.0 * PI).ln();
                return Ok(GpModel { kernel, params, x: x.to_vec(), chol, alpha, jitter, log_likelihood });
            }
        }
        Err(TuningError::SingularKernel)
    }

    /// Fits kernel parameters by coordinate search over their logarithms
    /// (3 restarts of 50 likelihood evaluations each), then conditions on
    /// the data with the best parameters found.
    pub fn fit_ml2(x: &[Vec<f64>], y: &[f64], kernel: Arc<dyn Kernel>) -> Result<Self, TuningError> {
        const BOUNDS: [(f64, f64); 3] = [(-4.6, 2.3), (-4.6, 4.6), (-13.8, 0.0)];
        const STARTS: [[f64; 3]; 3] = [[-0.69, 0.0, -6.9], [-2.3, 0.0, -4.6], [0.69, 0.0, -9.2]];
        const EVALS: usize = 50;
        let to_params = |t: &[f64; 3]| KernelParams {
            lengthscale: t[0].exp(),
            variance: t[1].exp(),
            noise: t[2].exp(),
        };
        let objective = |t: &[f64; 3]| {
            GpModel::fit(x, y, Arc::clone(&kernel), to_params(t)).map_or(f64::NEG_INFINITY, |m| m.log_likelihood)
        };
        let mut best = (f64::NEG_INFINITY, STARTS[0]);
        for start in STARTS {
            let mut theta = start;
            let mut value = objective(&theta);
            let mut evals = 1;
            let mut step = 1.0;
            'search: while evals < EVALS && step > 1e-3 {
                let mut improved = false;
                for c in 0..3 {
                    for dir in [1.0, -1.0] {
                        if evals >= EVALS {
                            break 'search;
                        }
                        let mut cand = theta;
                        cand[c] = (cand[c] + dir * step).clamp(BOUNDS[c].0, BOUNDS[c].1);
                        if cand[c] == theta[c] {
                            continue;
                        }
                        let v = objective(&cand);
                        evals += 1;
                        if v > value {
                            theta = cand;
                            value = v;
                            improved = true;
                            break;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            if value > best.0 {
                best = (value, theta);
            }
        }
        if best.0 == f64::NEG_INFINITY {
            return Err(TuningError::SingularKernel);
        }
        GpModel::fit(x, y, kernel, to_params(&best.1))
    }

    pub fn params(&self) -> KernelParams {
        self.params
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Posterior mean and standard deviation of the latent function at `q`.
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let ks: Vec<f64> = self.x.iter().map(|xi| self.kernel.eval(xi, q, &self.params)).collect();
        let mu = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = solve_lower(&self.chol, n, &ks);
        let var = self.kernel.eval(q, q, &self.params) - v.iter().map(|a| a * a).sum::<f64>();
        (mu, var.max(0.0).sqrt())
    }
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement over `best` of a Gaussian with mean `mu` and
/// standard deviation `sigma`, with no exploration offset.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    let d = mu - best;
    if sigma <= 0.0 {
        return d.max(0.0);
    }
    let z = d / sigma;
    (d * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}
