use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{check_width, grow_tree, Target, Tree, TreeParams, FIT, OUT, PRODUCE};
use super::{
    argmax, check_rows, decode_state, encode_state, index_labels, numeric_target, split_seed,
    Hyperparams, Inputs, Outputs, Params, Primitive, PrimitiveError, Result, Signature,
};
use crate::data::{Matrix, Value, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestState {
    pub trees: Vec<Tree>,
    /// Empty for regression forests.
    pub classes: Vec<String>,
}

struct ForestParams {
    n_trees: usize,
    tree: TreeParams,
    bootstrap: bool,
}

fn forest_params(hp: &Hyperparams, d: usize) -> Result<ForestParams> {
    let p = Params(hp);
    let frac = p.float("feature_subsampling", 0.5)?;
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(PrimitiveError::InvalidHyperparam {
            name: "feature_subsampling".into(),
            reason: "must lie in (0, 1]".into(),
        });
    }
    let max_features = ((frac * d as f64).ceil() as usize).clamp(1, d.max(1));
    Ok(ForestParams {
        n_trees: p.positive("n_trees", 10)?,
        tree: TreeParams {
            max_depth: p.positive("max_depth", 10)?,
            min_leaf: p.positive("min_leaf", 1)?,
            max_features,
        },
        bootstrap: p.boolean("bootstrap", true)?,
    })
}

fn grow_forest(x: &Matrix, target: Target<'_>, params: &ForestParams, seed: u64) -> Vec<Tree> {
    let n = x.n_rows();
    (0..params.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, t as u64));
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(x, target, rows, params.tree, &mut rng)
        })
        .collect()
}

/// Bagged CART classifier; class probabilities are averaged over trees.
pub struct RandomForestClassifier;

impl Primitive for RandomForestClassifier {
    fn key(&self) -> &'static str {
        "random_forest_classifier"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: FIT, produce_inputs: PRODUCE, produce_outputs: OUT }
    }

    fn fit(&self, hp: &Hyperparams, inputs: &Inputs<'_>, seed: u64) -> Result<Vec<u8>> {
        let x = inputs.matrix("X")?;
        let y = inputs.vector("y")?;
        check_rows(x, y.len())?;
        let (classes, codes) = index_labels(y);
        let params = forest_params(hp, x.n_cols())?;
        let trees = grow_forest(x, Target::Classes { y: &codes, n_classes: classes.len() }, &params, seed);
        Ok(encode_state(&ForestState { trees, classes }))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: ForestState = decode_state(state)?;
        let x = inputs.matrix("X")?;
        for t in &st.trees {
            check_width(x, t)?;
        }
        let k = st.classes.len();
        let pred = (0..x.n_rows())
            .map(|r| {
                let mut p = vec![0.0; k];
                for t in &st.trees {
                    for (acc, v) in p.iter_mut().zip(t.leaf(x.row(r))) {
                        *acc += v;
                    }
                }
                st.classes[argmax(&p)].clone()
            })
            .collect();
        Ok(Outputs::from([("y_hat".to_string(), Value::Vector(Vector::Labels(pred)))]))
    }
}

/// Bagged CART regressor; predictions are averaged over trees.
pub struct RandomForestRegressor;

impl Primitive for RandomForestRegressor {
    fn key(&self) -> &'static str {
        "random_forest_regressor"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: FIT, produce_inputs: PRODUCE, produce_outputs: OUT }
    }

    fn fit(&self, hp: &Hyperparams, inputs: &Inputs<'_>, seed: u64) -> Result<Vec<u8>> {
        let x = inputs.matrix("X")?;
        let y = numeric_target(inputs.vector("y")?, "y")?;
        check_rows(x, y.len())?;
        let params = forest_params(hp, x.n_cols())?;
        let trees = grow_forest(x, Target::Values(&y), &params, seed);
        Ok(encode_state(&ForestState { trees, classes: vec![] }))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: ForestState = decode_state(state)?;
        let x = inputs.matrix("X")?;
        for t in &st.trees {
            check_width(x, t)?;
        }
        let n = st.trees.len() as f64;
        let pred = (0..x.n_rows())
            .map(|r| st.trees.iter().map(|t| t.leaf(x.row(r))[0]).sum::<f64>() / n)
            .collect();
        Ok(Outputs::from([("y_hat".to_string(), Value::Vector(Vector::Numeric(pred)))]))
    }
}
