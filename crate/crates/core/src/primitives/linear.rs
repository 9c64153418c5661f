//! Linear and multinomial logistic regression trained by full-batch
//! gradient descent.

use serde::{Deserialize, Serialize};

use super::{
    argmax, check_rows, decode_state, encode_state, index_labels, numeric_target, Hyperparams,
    Inputs, Outputs, Params, Primitive, PrimitiveError, Result, Signature,
};
use super::tree::{FIT, OUT, PRODUCE};
use crate::data::{Matrix, Value, Vector};

/// Objective `1/(2n) Σ (x·w + b − y)² + (l2/2)‖w‖²` and its gradient
/// `(loss, ∂w, ∂b)`. The bias is not penalized.
pub fn squared_loss_and_grad(w: &[f64], b: f64, x: &Matrix, y: &[f64], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = x.n_rows() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    let mut loss = 0.0;
    for (i, &target) in y.iter().enumerate() {
        let row = x.row(i);
        let r = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b - target;
        loss += r * r;
        gb += r;
        for (g, a) in gw.iter_mut().zip(row) {
            *g += r * a;
        }
    }
    let reg: f64 = w.iter().map(|v| v * v).sum();
    for (g, wj) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wj;
    }
    (loss / (2.0 * n) + 0.5 * l2 * reg, gw, gb / n)
}

/// Mean softmax cross-entropy plus `(l2/2)‖W‖²`. `w` is row-major
/// `k × d`; returns `(loss, ∂W, ∂b)`.
pub fn softmax_loss_and_grad(
    w: &[f64],
    b: &[f64],
    x: &Matrix,
    y: &[usize],
    k: usize,
    l2: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let d = x.n_cols();
    let n = x.n_rows() as f64;
    let mut gw = vec![0.0; k * d];
    let mut gb = vec![0.0; k];
    let mut loss = 0.0;
    let mut z = vec![0.0; k];
    for (i, &label) in y.iter().enumerate() {
        let row = x.row(i);
        for c in 0..k {
            z[c] = w[c * d..(c + 1) * d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + b[c];
        }
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
        let log_norm = m + sum.ln();
        loss += log_norm - z[label];
        for c in 0..k {
            let p = (z[c] - log_norm).exp() - if c == label { 1.0 } else { 0.0 };
            gb[c] += p;
            for (g, a) in gw[c * d..(c + 1) * d].iter_mut().zip(row) {
                *g += p * a;
            }
        }
    }
    let reg: f64 = w.iter().map(|v| v * v).sum();
    for (g, wj) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wj;
    }
    for g in gb.iter_mut() {
        *g /= n;
    }
    (loss / n + 0.5 * l2 * reg, gw, gb)
}

struct GdParams {
    learning_rate: f64,
    epochs: usize,
    l2: f64,
}

fn gd_params(hp: &Hyperparams) -> Result<GdParams> {
    let p = Params(hp);
    let l2 = match p.string("penalty", "l2")?.as_str() {
        "none" => 0.0,
        "l2" => p.float("l2", 1e-3)?,
        other => {
            return Err(PrimitiveError::InvalidHyperparam {
                name: "penalty".into(),
                reason: format!("unknown penalty {other:?}"),
            })
        }
    };
    Ok(GdParams {
        learning_rate: p.float("learning_rate", 0.1)?,
        epochs: p.positive("epochs", 200)?,
        l2,
    })
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(PrimitiveError::NonFinite(format!("{what} became non-finite; lower the learning rate")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearState {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub struct LinearRegressionGd;

impl Primitive for LinearRegressionGd {
    fn key(&self) -> &'static str {
        "linear_regression_gd"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: FIT, produce_inputs: PRODUCE, produce_outputs: OUT }
    }

    fn fit(&self, hp: &Hyperparams, inputs: &Inputs<'_>, _seed: u64) -> Result<Vec<u8>> {
        let x = inputs.matrix("X")?;
        let y = numeric_target(inputs.vector("y")?, "y")?;
        check_rows(x, y.len())?;
        let p = gd_params(hp)?;
        let mut w = vec![0.0; x.n_cols()];
        let mut b = 0.0;
        for _ in 0..p.epochs {
            let (_, gw, gb) = squared_loss_and_grad(&w, b, x, &y, p.l2);
            for (wj, g) in w.iter_mut().zip(&gw) {
                *wj -= p.learning_rate * g;
            }
            b -= p.learning_rate * gb;
        }
        ensure_finite(&w, "weights")?;
        ensure_finite(&[b], "bias")?;
        Ok(encode_state(&LinearState { weights: w, bias: b }))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: LinearState = decode_state(state)?;
        let x = inputs.matrix("X")?;
        if x.n_cols() != st.weights.len() {
            return Err(PrimitiveError::ShapeMismatch(format!(
                "expected {} features, got {}",
                st.weights.len(),
                x.n_cols()
            )));
        }
        let pred = (0..x.n_rows())
            .map(|r| x.row(r).iter().zip(&st.weights).map(|(a, b)| a * b).sum::<f64>() + st.bias)
            .collect();
        Ok(Outputs::from([("y_hat".to_string(), Value::Vector(Vector::Numeric(pred)))]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticState {
    /// Row-major `classes × features`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub classes: Vec<String>,
}

/// Multinomial logistic regression.
pub struct LogisticRegressionGd;

impl Primitive for LogisticRegressionGd {
    fn key(&self) -> &'static str {
        "logistic_regression_gd"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: FIT, produce_inputs: PRODUCE, produce_outputs: OUT }
    }

    fn fit(&self, hp: &Hyperparams, inputs: &Inputs<'_>, _seed: u64) -> Result<Vec<u8>> {
        let x = inputs.matrix("X")?;
        let y = inputs.vector("y")?;
        check_rows(x, y.len())?;
        let (classes, codes) = index_labels(y);
        let k = classes.len();
        let p = gd_params(hp)?;
        let mut w = vec![0.0; k * x.n_cols()];
        let mut b = vec![0.0; k];
        for _ in 0..p.epochs {
            let (_, gw, gb) = softmax_loss_and_grad(&w, &b, x, &codes, k, p.l2);
            for (wj, g) in w.iter_mut().zip(&gw) {
                *wj -= p.learning_rate * g;
            }
            for (bj, g) in b.iter_mut().zip(&gb) {
                *bj -= p.learning_rate * g;
            }
        }
        ensure_finite(&w, "weights")?;
        ensure_finite(&b, "bias")?;
        Ok(encode_state(&LogisticState { weights: w, bias: b, classes }))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: LogisticState = decode_state(state)?;
        let x = inputs.matrix("X")?;
        let k = st.classes.len();
        let d = x.n_cols();
        if d * k != st.weights.len() {
            return Err(PrimitiveError::ShapeMismatch(format!("unexpected feature count {d}")));
        }
        let pred = (0..x.n_rows())
            .map(|r| {
                let row = x.row(r);
                let z: Vec<f64> = (0..k)
                    .map(|c| {
                        st.weights[c * d..(c + 1) * d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>()
                            + st.bias[c]
                    })
                    .collect();
                st.classes[argmax(&z)].clone()
            })
            .collect();
        Ok(Outputs::from([("y_hat".to_string(), Value::Vector(Vector::Labels(pred)))]))
    }
}
