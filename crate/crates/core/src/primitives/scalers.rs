use serde::{Deserialize, Serialize};

use super::{decode_state, encode_state, Hyperparams, Inputs, Outputs, Primitive, PrimitiveError, Result, Signature};
use crate::data::{Matrix, Value, ValueKind};

const IO: &[(&str, ValueKind)] = &[("X", ValueKind::Matrix)];

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScalerState {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl StandardScalerState {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.n_rows() == 0 {
            return Err(PrimitiveError::DegenerateInput("no rows to scale".into()));
        }
        let n = x.n_rows() as f64;
        let mut mean = Vec::with_capacity(x.n_cols());
        let mut sd = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let col = x.column(j);
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            sd.push(var.sqrt());
        }
        Ok(StandardScalerState { mean, sd })
    }

    /// Zero-variance columns map to 0.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        check_width(x, self.mean.len())?;
        let mut out = x.clone();
        for i in 0..x.n_rows() {
            for j in 0..x.n_cols() {
                let v = if self.sd[j] > 0.0 { (x.get(i, j) - self.mean[j]) / self.sd[j] } else { 0.0 };
                out.set(i, j, v);
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, z: &Matrix) -> Result<Matrix> {
        check_width(z, self.mean.len())?;
        let mut out = z.clone();
        for i in 0..z.n_rows() {
            for j in 0..z.n_cols() {
                out.set(i, j, z.get(i, j) * self.sd[j] + self.mean[j]);
            }
        }
        Ok(out)
    }
}

fn check_width(x: &Matrix, d: usize) -> Result<()> {
    if x.n_cols() != d {
        return Err(PrimitiveError::ShapeMismatch(format!(
            "expected {d} columns, got {}",
            x.n_cols()
        )));
    }
    Ok(())
}

pub struct StandardScaler;

impl Primitive for StandardScaler {
    fn key(&self) -> &'static str {
        "standard_scaler"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: IO, produce_inputs: IO, produce_outputs: IO }
    }

    fn fit(&self, _hp: &Hyperparams, inputs: &Inputs<'_>, _seed: u64) -> Result<Vec<u8>> {
        Ok(encode_state(&StandardScalerState::fit(inputs.matrix("X")?)?))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: StandardScalerState = decode_state(state)?;
        Ok(Outputs::from([("X".to_string(), Value::Matrix(st.transform(inputs.matrix("X")?)?))]))
    }
}

/// Per-column minimum and maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScalerState {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub struct MinMaxScaler;

impl Primitive for MinMaxScaler {
    fn key(&self) -> &'static str {
        "min_max_scaler"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: IO, produce_inputs: IO, produce_outputs: IO }
    }

    fn fit(&self, _hp: &Hyperparams, inputs: &Inputs<'_>, _seed: u64) -> Result<Vec<u8>> {
        let x = inputs.matrix("X")?;
        if x.n_rows() == 0 {
            return Err(PrimitiveError::DegenerateInput("no rows to scale".into()));
        }
        let mut st = MinMaxScalerState { min: vec![], max: vec![] };
        for j in 0..x.n_cols() {
            let col = x.column(j);
            st.min.push(col.iter().copied().fold(f64::INFINITY, f64::min));
            st.max.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(encode_state(&st))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: MinMaxScalerState = decode_state(state)?;
        let x = inputs.matrix("X")?;
        check_width(x, st.min.len())?;
        let mut out = x.clone();
        for i in 0..x.n_rows() {
            for j in 0..x.n_cols() {
                let range = st.max[j] - st.min[j];
                let v = if range > 0.0 { (x.get(i, j) - st.min[j]) / range } else { 0.0 };
                out.set(i, j, v);
            }
        }
        Ok(Outputs::from([("X".to_string(), Value::Matrix(out))]))
    }
}
