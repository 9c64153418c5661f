use serde::{Deserialize, Serialize};

use super::{
    argmax, check_rows, decode_state, encode_state, index_labels, Hyperparams, Inputs, Outputs,
    Params, Primitive, PrimitiveError, Result, Signature,
};
use crate::data::{Matrix, Value, ValueKind, Vector};

/// Memorized training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnState {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub classes: Vec<String>,
}

/// k-nearest-neighbour classifier under Euclidean distance. Distance ties
/// resolve to the lower training index, vote ties to the lower class.
pub struct KnnClassifier;

const FIT: &[(&str, ValueKind)] = &[("X", ValueKind::Matrix), ("y", ValueKind::Vector)];
const PRODUCE: &[(&str, ValueKind)] = &[("X", ValueKind::Matrix)];
const OUT: &[(&str, ValueKind)] = &[("y_hat", ValueKind::Vector)];

impl KnnState {
    pub fn predict(&self, q: &Matrix, k: usize, distance_weighted: bool) -> Result<Vec<String>> {
        if q.n_cols() != self.x.n_cols() {
            return Err(PrimitiveError::ShapeMismatch(format!(
                "expected {} features, got {}",
                self.x.n_cols(),
                q.n_cols()
            )));
        }
        let k = k.min(self.y.len());
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(self.y.len());
        let mut out = Vec::with_capacity(q.n_rows());
        for r in 0..q.n_rows() {
            let row = q.row(r);
            dist.clear();
            for i in 0..self.x.n_rows() {
                let d2: f64 = self.x.row(i).iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
                dist.push((d2, i));
            }
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = vec![0.0; self.classes.len()];
            for &(d2, i) in &dist[..k] {
                let w = if distance_weighted { 1.0 / (d2.sqrt() + 1e-12) } else { 1.0 };
                votes[self.y[i]] += w;
            }
            out.push(self.classes[argmax(&votes)].clone());
        }
        Ok(out)
    }
}

impl Primitive for KnnClassifier {
    fn key(&self) -> &'static str {
        "knn_classifier"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: FIT, produce_inputs: PRODUCE, produce_outputs: OUT }
    }

    fn fit(&self, _hp: &Hyperparams, inputs: &Inputs<'_>, _seed: u64) -> Result<Vec<u8>> {
        let x = inputs.matrix("X")?;
        let y = inputs.vector("y")?;
        check_rows(x, y.len())?;
        let (classes, y) = index_labels(y);
        Ok(encode_state(&KnnState { x: x.clone(), y, classes }))
    }

    fn produce(&self, hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let p = Params(hp);
        let k = p.positive("k", 5)?;
        let weighted = match p.string("weighting", "uniform")?.as_str() {
            "uniform" => false,
            "distance" => true,
            other => {
                return Err(PrimitiveError::InvalidHyperparam {
                    name: "weighting".into(),
                    reason: format!("unknown weighting {other:?}"),
                })
            }
        };
        let st: KnnState = decode_state(state)?;
        let pred = st.predict(inputs.matrix("X")?, k, weighted)?;
        Ok(Outputs::from([("y_hat".to_string(), Value::Vector(Vector::Labels(pred)))]))
    }
}
