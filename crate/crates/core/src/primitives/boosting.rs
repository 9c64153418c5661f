//! Gradient-boosted regression trees with squared-error residuals. The
//! classifier boosts one sigmoid-linked model per class (one-vs-rest; a
//! single model for two classes).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{check_width, grow_tree, Target, Tree, TreeParams, FIT, OUT, PRODUCE};
use super::{
    argmax, check_rows, decode_state, encode_state, index_labels, numeric_target, Hyperparams,
    Inputs, Outputs, Params, Primitive, Result, Signature,
};
use crate::data::{Matrix, Value, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl BoostedModel {
    fn raw(&self, row: &[f64]) -> f64 {
        self.init + self.trees.iter().map(|t| self.learning_rate * t.leaf(row)[0]).sum::<f64>()
    }
}

struct BoostParams {
    rounds: usize,
    learning_rate: f64,
    tree: TreeParams,
}

fn boost_params(hp: &Hyperparams, d: usize) -> Result<BoostParams> {
    let p = Params(hp);
    Ok(BoostParams {
        rounds: p.positive("n_rounds", 50)?,
        learning_rate: p.float("learning_rate", 0.1)?,
        tree: TreeParams { max_depth: p.positive("max_depth", 3)?, min_leaf: 1, max_features: d },
    })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Fits `rounds` trees to squared-error residuals of `link(F) - target`.
fn boost(x: &Matrix, target: &[f64], init: f64, link: fn(f64) -> f64, p: &BoostParams, seed: u64) -> BoostedModel {
    let n = x.n_rows();
    let mut f = vec![init; n];
    let mut residual = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(p.rounds);
    for _ in 0..p.rounds {
        for i in 0..n {
            residual[i] = target[i] - link(f[i]);
        }
        let tree = grow_tree(x, Target::Values(&residual), (0..n).collect(), p.tree, &mut rng);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += p.learning_rate * tree.leaf(x.row(i))[0];
        }
        trees.push(tree);
    }
    BoostedModel { init, learning_rate: p.learning_rate, trees }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedRegressorState {
    pub model: BoostedModel,
}

pub struct GradientBoostingRegressor;

impl Primitive for GradientBoostingRegressor {
    fn key(&self) -> &'static str {
        "gradient_boosting_regressor"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: FIT, produce_inputs: PRODUCE, produce_outputs: OUT }
    }

    fn fit(&self, hp: &Hyperparams, inputs: &Inputs<'_>, seed: u64) -> Result<Vec<u8>> {
        let x = inputs.matrix("X")?;
        let y = numeric_target(inputs.vector("y")?, "y")?;
        check_rows(x, y.len())?;
        let p = boost_params(hp, x.n_cols())?;
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let model = boost(x, &y, mean, |v| v, &p, seed);
        Ok(encode_state(&BoostedRegressorState { model }))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: BoostedRegressorState = decode_state(state)?;
        let x = inputs.matrix("X")?;
        for t in &st.model.trees {
            check_width(x, t)?;
        }
        let pred = (0..x.n_rows()).map(|r| st.model.raw(x.row(r))).collect();
        Ok(Outputs::from([("y_hat".to_string(), Value::Vector(Vector::Numeric(pred)))]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedClassifierState {
    /// One model for two classes (scores class 1), else one per class.
    pub models: Vec<BoostedModel>,
    pub classes: Vec<String>,
}

pub struct GradientBoostingClassifier;

impl Primitive for GradientBoostingClassifier {
    fn key(&self) -> &'static str {
        "gradient_boosting_classifier"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: FIT, produce_inputs: PRODUCE, produce_outputs: OUT }
    }

    fn fit(&self, hp: &Hyperparams, inputs: &Inputs<'_>, seed: u64) -> Result<Vec<u8>> {
        let x = inputs.matrix("X")?;
        let y = inputs.vector("y")?;
        check_rows(x, y.len())?;
        let (classes, codes) = index_labels(y);
        let p = boost_params(hp, x.n_cols())?;
        let targets: Vec<usize> = match classes.len() {
            1 => vec![],
            2 => vec![1],
            k => (0..k).collect(),
        };
        let models = targets
            .into_iter()
            .map(|c| {
                let t: Vec<f64> = codes.iter().map(|&k| if k == c { 1.0 } else { 0.0 }).collect();
                let prior = (t.iter().sum::<f64>() / t.len() as f64).clamp(1e-6, 1.0 - 1e-6);
                boost(x, &t, (prior / (1.0 - prior)).ln(), sigmoid, &p, super::split_seed(seed, c as u64))
            })
            .collect();
        Ok(encode_state(&BoostedClassifierState { models, classes }))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: BoostedClassifierState = decode_state(state)?;
        let x = inputs.matrix("X")?;
        for m in &st.models {
            for t in &m.trees {
                check_width(x, t)?;
            }
        }
        let pred = (0..x.n_rows())
            .map(|r| {
                let row = x.row(r);
                let idx = match st.models.len() {
                    0 => 0,
                    1 => usize::from(sigmoid(st.models[0].raw(row)) > 0.5),
                    _ => {
                        let p: Vec<f64> = st.models.iter().map(|m| sigmoid(m.raw(row))).collect();
                        argmax(&p)
                    }
                };
                st.classes[idx].clone()
            })
            .collect();
        Ok(Outputs::from([("y_hat".to_string(), Value::Vector(Vector::Labels(pred)))]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regressor_reduces_training_error_with_rounds() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 4.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0].sin() * 3.0).collect();
        let x = Value::Matrix(Matrix::from_rows(&rows));
        let yv = Value::Vector(Vector::Numeric(y.clone()));
        let inputs = Inputs::new().with("X", &x).with("y", &yv);
        let mse = |rounds: i64| {
            let mut hp = Hyperparams::new();
            hp.insert("n_rounds".into(), crate::annotations::HyperValue::Int(rounds));
            let st = GradientBoostingRegressor.fit(&hp, &inputs, 0).unwrap();
            let out = GradientBoostingRegressor.produce(&hp, &st, &inputs).unwrap();
            let Value::Vector(Vector::Numeric(p)) = &out["y_hat"] else { unreachable!() };
            p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 40.0
        };
        assert!(mse(50) < mse(5));
    }

    #[test]
    fn multiclass_classifier_fits_training_data() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i / 10) as f64 + (i % 10) as f64 * 0.01]).collect();
        let labels: Vec<String> = (0..30).map(|i| ["x", "y", "z"][i / 10].to_string()).collect();
        let x = Value::Matrix(Matrix::from_rows(&rows));
        let y = Value::Vector(Vector::Labels(labels));
        let inputs = Inputs::new().with("X", &x).with("y", &y);
        let hp = Hyperparams::new();
        let st = GradientBoostingClassifier.fit(&hp, &inputs, 0).unwrap();
        let out = GradientBoostingClassifier.produce(&hp, &st, &inputs).unwrap();
        assert_eq!(out["y_hat"], y);
    }
}
