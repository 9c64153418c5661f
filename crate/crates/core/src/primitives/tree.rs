//! CART decision trees (Gini for classification, squared error for
//! regression) shared by the tree, forest and boosting primitives.
//!
//! Split ties resolve to the lowest feature index, then the lowest threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    argmax, check_rows, decode_state, encode_state, index_labels, numeric_target, Hyperparams,
    Inputs, Outputs, Params, Primitive, Result, Signature,
};
use crate::data::{Matrix, Value, ValueKind, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Class distribution (classification) or `[mean]` (regression).
    Leaf(Vec<f64>),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Classes { y: &'a [usize], n_classes: usize },
    Values(&'a [f64]),
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per split; equal to the feature count disables sampling.
    pub max_features: usize,
}

struct Split {
    feature: usize,
    threshold: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

struct Builder<'a, R> {
    x: &'a Matrix,
    target: Target<'a>,
    params: TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn leaf_value(&self, rows: &[usize]) -> Vec<f64> {
        let n = rows.len() as f64;
        match self.target {
            Target::Classes { y, n_classes } => {
                let mut counts = vec![0.0; n_classes];
                for &r in rows {
                    counts[y[r]] += 1.0;
                }
                counts.iter().map(|c| c / n).collect()
            }
            Target::Values(y) => vec![rows.iter().map(|&r| y[r]).sum::<f64>() / n],
        }
    }

    /// Scaled impurity: n * gini or the sum of squared errors.
    fn impurity(&self, rows: &[usize]) -> f64 {
        let n = rows.len() as f64;
        match self.target {
            Target::Classes { y, n_classes } => {
                let mut counts = vec![0.0; n_classes];
                for &r in rows {
                    counts[y[r]] += 1.0;
                }
                n - counts.iter().map(|c| c * c).sum::<f64>() / n
            }
            Target::Values(y) => {
                let s: f64 = rows.iter().map(|&r| y[r]).sum();
                let s2: f64 = rows.iter().map(|&r| y[r] * y[r]).sum();
                (s2 - s * s / n).max(0.0)
            }
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.n_cols();
        if self.params.max_features >= d {
            return (0..d).collect();
        }
        let mut f = rand::seq::index::sample(self.rng, d, self.params.max_features.max(1)).into_vec();
        f.sort_unstable();
        f
    }

    fn best_split(&mut self, rows: &[usize], parent: f64) -> Option<Split> {
        let n = rows.len();
        let min_leaf = self.params.min_leaf.max(1);
        let eps = 1e-12 * (1.0 + parent.abs());
        let mut best: Option<(f64, usize, f64, usize)> = None; // gain, feature, threshold, cut
        let mut best_order: Vec<usize> = Vec::new();
        let mut order: Vec<usize> = rows.to_vec();
        for f in self.candidate_features() {
            order.copy_from_slice(rows);
            let x = self.x;
            order.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
            let mut found: Option<(f64, f64, usize)> = None;
            match self.target {
                Target::Classes { y, n_classes } => {
                    let mut left = vec![0.0; n_classes];
                    let mut right = vec![0.0; n_classes];
                    for &r in &order {
                        right[y[r]] += 1.0;
                    }
                    let mut l_sq = 0.0;
                    let mut r_sq: f64 = right.iter().map(|c| c * c).sum();
                    for i in 1..n {
                        let c = y[order[i - 1]];
                        l_sq += 2.0 * left[c] + 1.0;
                        r_sq -= 2.0 * right[c] - 1.0;
                        left[c] += 1.0;
                        right[c] -= 1.0;
                        if i < min_leaf || n - i < min_leaf {
                            continue;
                        }
                        let (a, b) = (x.get(order[i - 1], f), x.get(order[i], f));
                        if a >= b {
                            continue;
                        }
                        let (nl, nr) = (i as f64, (n - i) as f64);
                        let gain = parent - (nl - l_sq / nl) - (nr - r_sq / nr);
                        if found.is_none_or(|(g, _, _)| gain > g + eps) {
                            found = Some((gain, midpoint(a, b), i));
                        }
                    }
                }
                Target::Values(y) => {
                    let total: f64 = order.iter().map(|&r| y[r]).sum();
                    let total2: f64 = order.iter().map(|&r| y[r] * y[r]).sum();
                    let (mut ls, mut ls2) = (0.0, 0.0);
                    for i in 1..n {
                        let v = y[order[i - 1]];
                        ls += v;
                        ls2 += v * v;
                        if i < min_leaf || n - i < min_leaf {
                            continue;
                        }
                        let (a, b) = (x.get(order[i - 1], f), x.get(order[i], f));
                        if a >= b {
                            continue;
                        }
                        let (nl, nr) = (i as f64, (n - i) as f64);
                        let (rs, rs2) = (total - ls, total2 - ls2);
                        let sse_l = (ls2 - ls * ls / nl).max(0.0);
                        let sse_r = (rs2 - rs * rs / nr).max(0.0);
                        let gain = parent - sse_l - sse_r;
                        if found.is_none_or(|(g, _, _)| gain > g + eps) {
                            found = Some((gain, midpoint(a, b), i));
                        }
                    }
                }
            }
            if let Some((gain, thr, cut)) = found {
                if gain > eps && best.is_none_or(|(g, ..)| gain > g + eps) {
                    best = Some((gain, f, thr, cut));
                    best_order.clone_from(&order);
                }
            }
        }
        best.map(|(_, feature, threshold, cut)| Split {
            feature,
            threshold,
            left: best_order[..cut].to_vec(),
            right: best_order[cut..].to_vec(),
        })
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(&rows)));
        let parent = self.impurity(&rows);
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf.max(1) || parent <= 1e-12 {
            return id;
        }
        let Some(split) = self.best_split(&rows, parent) else { return id };
        let left = self.grow(split.left, depth + 1);
        let right = self.grow(split.right, depth + 1);
        self.nodes[id] =
            Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Grows one tree over `rows` (which may repeat, for bootstrap samples).
pub fn grow_tree<R: Rng>(
    x: &Matrix,
    target: Target<'_>,
    rows: Vec<usize>,
    params: TreeParams,
    rng: &mut R,
) -> Tree {
    let mut b = Builder { x, target, params, rng, nodes: Vec::new() };
    b.grow(rows, 0);
    Tree { nodes: b.nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeClassifierState {
    pub tree: Tree,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRegressorState {
    pub tree: Tree,
}

pub(crate) const FIT: &[(&str, ValueKind)] = &[("X", ValueKind::Matrix), ("y", ValueKind::Vector)];
pub(crate) const PRODUCE: &[(&str, ValueKind)] = &[("X", ValueKind::Matrix)];
pub(crate) const OUT: &[(&str, ValueKind)] = &[("y_hat", ValueKind::Vector)];

pub(crate) fn tree_params(p: &Params<'_>, d: usize, default_depth: i64) -> Result<TreeParams> {
    Ok(TreeParams {
        max_depth: p.positive("max_depth", default_depth)?,
        min_leaf: p.positive("min_leaf", 1)?,
        max_features: d,
    })
}

pub(crate) fn check_width(x: &Matrix, tree: &Tree) -> Result<()> {
    let needed = tree
        .nodes
        .iter()
        .filter_map(|n| match n {
            Node::Split { feature, .. } => Some(feature + 1),
            Node::Leaf(_) => None,
        })
        .max()
        .unwrap_or(0);
    if x.n_cols() < needed {
        return Err(super::PrimitiveError::ShapeMismatch(format!(
            "tree uses {needed} features, input has {}",
            x.n_cols()
        )));
    }
    Ok(())
}

pub struct DecisionTreeClassifier;

impl Primitive for DecisionTreeClassifier {
    fn key(&self) -> &'static str {
        "decision_tree_classifier"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: FIT, produce_inputs: PRODUCE, produce_outputs: OUT }
    }

    fn fit(&self, hp: &Hyperparams, inputs: &Inputs<'_>, seed: u64) -> Result<Vec<u8>> {
        let x = inputs.matrix("X")?;
        let y = inputs.vector("y")?;
        check_rows(x, y.len())?;
        let (classes, codes) = index_labels(y);
        let params = tree_params(&Params(hp), x.n_cols(), 10)?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let tree = grow_tree(
            x,
            Target::Classes { y: &codes, n_classes: classes.len() },
            (0..x.n_rows()).collect(),
            params,
            &mut rng,
        );
        Ok(encode_state(&TreeClassifierState { tree, classes }))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: TreeClassifierState = decode_state(state)?;
        let x = inputs.matrix("X")?;
        check_width(x, &st.tree)?;
        let pred = (0..x.n_rows()).map(|r| st.classes[argmax(st.tree.leaf(x.row(r)))].clone()).collect();
        Ok(Outputs::from([("y_hat".to_string(), Value::Vector(Vector::Labels(pred)))]))
    }
}

pub struct DecisionTreeRegressor;

impl Primitive for DecisionTreeRegressor {
    fn key(&self) -> &'static str {
        "decision_tree_regressor"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: FIT, produce_inputs: PRODUCE, produce_outputs: OUT }
    }

    fn fit(&self, hp: &Hyperparams, inputs: &Inputs<'_>, seed: u64) -> Result<Vec<u8>> {
        let x = inputs.matrix("X")?;
        let y = numeric_target(inputs.vector("y")?, "y")?;
        check_rows(x, y.len())?;
        let params = tree_params(&Params(hp), x.n_cols(), 10)?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let tree = grow_tree(x, Target::Values(&y), (0..x.n_rows()).collect(), params, &mut rng);
        Ok(encode_state(&TreeRegressorState { tree }))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: TreeRegressorState = decode_state(state)?;
        let x = inputs.matrix("X")?;
        check_width(x, &st.tree)?;
        let pred = (0..x.n_rows()).map(|r| st.tree.leaf(x.row(r))[0]).collect();
        Ok(Outputs::from([("y_hat".to_string(), Value::Vector(Vector::Numeric(pred)))]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::HyperValue;
    use rand::SeedableRng;

    fn full(d: usize, depth: usize) -> TreeParams {
        TreeParams { max_depth: depth, min_leaf: 1, max_features: d }
    }

    /// Exhaustive search over every feature and every midpoint between
    /// distinct sorted values, scoring by misclassified count of majority
    /// labels per side.
    fn brute_force_stump(x: &Matrix, y: &[usize], k: usize) -> (usize, f64, usize) {
        let mut best = (usize::MAX, 0usize, 0.0);
        for f in 0..x.n_cols() {
            let mut vals = x.column(f);
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = (w[0] + w[1]) / 2.0;
                let mut errs = 0;
                for side in [true, false] {
                    let mut counts = vec![0usize; k];
                    for r in 0..x.n_rows() {
                        if (x.get(r, f) <= thr) == side {
                            counts[y[r]] += 1;
                        }
                    }
                    errs += counts.iter().sum::<usize>() - counts.iter().max().unwrap();
                }
                if errs < best.0 {
                    best = (errs, f, thr);
                }
            }
        }
        (best.1, best.2, best.0)
    }

    #[test]
    fn stump_on_one_split_dataset() {
        let x = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![1.0], vec![1.0]]);
        let y = [0, 0, 1, 1];
        let (f, thr, errs) = brute_force_stump(&x, &y, 2);
        assert_eq!((f, thr, errs), (0, 0.5, 0));

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let t = grow_tree(&x, Target::Classes { y: &y, n_classes: 2 }, (0..4).collect(), full(1, 1), &mut rng);
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!((*feature, *threshold), (f, thr));
            }
            _ => panic!("expected a split"),
        }
        let acc = (0..4).filter(|&r| argmax(t.leaf(x.row(r))) == y[r]).count();
        assert_eq!(acc, 4);
    }

    #[test]
    fn gain_ties_go_to_lowest_feature() {
        // Both features separate the classes perfectly.
        let x = Matrix::from_rows(&[vec![0.0, 5.0], vec![1.0, 6.0]]);
        let y = [0, 1];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let t = grow_tree(&x, Target::Classes { y: &y, n_classes: 2 }, vec![0, 1], full(2, 3), &mut rng);
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn regression_tree_fits_step_function() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let y = [1.0, 1.0, 5.0, 5.0];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let t = grow_tree(&x, Target::Values(&y), (0..4).collect(), full(1, 4), &mut rng);
        assert_eq!(t.leaf(&[1.5]), &[1.0]);
        assert_eq!(t.leaf(&[3.5]), &[5.0]);
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn min_leaf_and_depth_are_respected() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| (i % 3) as f64).collect();
        let x = Matrix::from_rows(&rows);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let t = grow_tree(
            &x,
            Target::Values(&y),
            (0..20).collect(),
            TreeParams { max_depth: 3, min_leaf: 4, max_features: 1 },
            &mut rng,
        );
        assert!(t.depth() <= 3);
        // Every leaf holds at least min_leaf training rows.
        let mut counts = std::collections::BTreeMap::new();
        for r in 0..20 {
            *counts.entry(t.leaf(x.row(r)).as_ptr() as usize).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 4));
    }

    #[test]
    fn unrestricted_classifier_memorizes_distinct_points() {
        let x = Value::Matrix(Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]));
        let y = Value::Vector(Vector::Labels(vec!["a".into(), "b".into(), "a".into(), "b".into()]));
        let mut hp = Hyperparams::new();
        hp.insert("max_depth".into(), HyperValue::Int(30));
        let st = DecisionTreeClassifier.fit(&hp, &Inputs::new().with("X", &x).with("y", &y), 0).unwrap();
        let out = DecisionTreeClassifier.produce(&hp, &st, &Inputs::new().with("X", &x)).unwrap();
        assert_eq!(out["y_hat"], y);
    }
}
