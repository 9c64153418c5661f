use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemType {
    Classification,
    Regression,
}

impl ProblemType {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemType::Classification => "classification",
            ProblemType::Regression => "regression",
        }
    }
}

impl fmt::Display for ProblemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scoring functions. Every score is "higher is better": `mse` is reported
/// negated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    F1Macro,
    Mse,
    R2,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::F1Macro => "f1_macro",
            Metric::Mse => "mse",
            Metric::R2 => "r2",
        }
    }

    pub fn problem_type(self) -> ProblemType {
        match self {
            Metric::Accuracy | Metric::F1Macro => ProblemType::Classification,
            Metric::Mse | Metric::R2 => ProblemType::Regression,
        }
    }

    /// Scores `pred` against `truth`. `None` when the lengths differ, the
    /// prediction has the wrong kind, or the result is not finite.
    pub fn score(self, truth: &Vector, pred: &Vector) -> Option<f64> {
        if truth.len() != pred.len() || truth.is_empty() {
            return None;
        }
        let s = match self {
            Metric::Accuracy => accuracy(&truth.as_labels(), &pred.as_labels()),
            Metric::F1Macro => f1_macro(&truth.as_labels(), &pred.as_labels()),
            Metric::Mse | Metric::R2 => {
                let (Vector::Numeric(t), Vector::Numeric(p)) = (truth, pred) else { return None };
                if self == Metric::Mse {
                    -mse(t, p)
                } else {
                    r2(t, p)
                }
            }
        };
        s.is_finite().then_some(s)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "f1_macro" => Ok(Metric::F1Macro),
            "mse" => Ok(Metric::Mse),
            "r2" => Ok(Metric::R2),
            _ => Err(format!("unknown metric {s:?}")),
        }
    }
}

pub fn accuracy(truth: &[String], pred: &[String]) -> f64 {
    truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Unweighted mean of per-class F1 over the labels present in either
/// vector. A class with no true or predicted members scores 0.
pub fn f1_macro(truth: &[String], pred: &[String]) -> f64 {
    let classes: BTreeSet<&String> = truth.iter().chain(pred).collect();
    let mut total = 0.0;
    for c in &classes {
        let tp = truth.iter().zip(pred).filter(|(t, p)| t == c && p == c).count() as f64;
        let n_true = truth.iter().filter(|t| t == c).count() as f64;
        let n_pred = pred.iter().filter(|p| p == c).count() as f64;
        if n_true + n_pred > 0.0 {
            total += 2.0 * tp / (n_true + n_pred);
        }
    }
    total / classes.len() as f64
}

pub fn mse(truth: &[f64], pred: &[f64]) -> f64 {
    truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / truth.len() as f64
}

/// Coefficient of determination. A constant target gives 1 for a perfect
/// prediction and 0 otherwise.
pub fn r2(truth: &[f64], pred: &[f64]) -> f64 {
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}
