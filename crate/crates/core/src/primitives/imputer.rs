use serde::{Deserialize, Serialize};

use super::{decode_state, encode_state, Hyperparams, Inputs, Outputs, Params, Primitive, PrimitiveError, Result, Signature};
use crate::data::{ColumnData, Matrix, Table, Value, ValueKind};

/// Fills missing numeric cells with a per-column statistic and emits a matrix.
///
/// Categorical columns are rejected: encode them first.
pub struct SimpleImputer;

/// Learned state: column order and one fill value per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleImputerState {
    pub columns: Vec<String>,
    pub fills: Vec<f64>,
}

fn fill_value(values: &[f64], strategy: &str) -> Result<f64> {
    if values.is_empty() {
        return Ok(0.0);
    }
    match strategy {
        "mean" => Ok(values.iter().sum::<f64>() / values.len() as f64),
        "median" => {
            let mut v = values.to_vec();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
        }
        "mode" => {
            let mut v = values.to_vec();
            v.sort_by(f64::total_cmp);
            let (mut best, mut best_n) = (v[0], 0usize);
            let mut i = 0;
            while i < v.len() {
                let mut j = i;
                while j < v.len() && v[j] == v[i] {
                    j += 1;
                }
                if j - i > best_n {
                    best = v[i];
                    best_n = j - i;
                }
                i = j;
            }
            Ok(best)
        }
        other => Err(PrimitiveError::InvalidHyperparam {
            name: "strategy".into(),
            reason: format!("unknown strategy {other:?}"),
        }),
    }
}

impl SimpleImputerState {
    pub fn fit(table: &Table, strategy: &str) -> Result<Self> {
        let mut fills = Vec::with_capacity(table.n_cols());
        for c in &table.columns {
            match &c.data {
                ColumnData::Numeric(v) => {
                    let present: Vec<f64> = v.iter().flatten().copied().collect();
                    fills.push(fill_value(&present, strategy)?);
                }
                ColumnData::Categorical(_) => {
                    return Err(PrimitiveError::DegenerateInput(format!(
                        "column {:?} is categorical; encode it before imputing",
                        c.name
                    )))
                }
            }
        }
        Ok(SimpleImputerState {
            columns: table.columns.iter().map(|c| c.name.clone()).collect(),
            fills,
        })
    }

    pub fn transform(&self, table: &Table) -> Result<Matrix> {
        if table.column_names() != self.columns.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(PrimitiveError::ShapeMismatch(
                "columns differ from those seen during fit".into(),
            ));
        }
        let n = table.n_rows();
        let d = table.n_cols();
        let mut m = Matrix::zeros(n, d);
        for (j, c) in table.columns.iter().enumerate() {
            let ColumnData::Numeric(v) = &c.data else {
                return Err(PrimitiveError::DegenerateInput(format!("column {:?} is categorical", c.name)));
            };
            for (i, cell) in v.iter().enumerate() {
                m.set(i, j, cell.unwrap_or(self.fills[j]));
            }
        }
        Ok(m)
    }
}

const IO_IN: &[(&str, ValueKind)] = &[("X", ValueKind::Table)];
const IO_OUT: &[(&str, ValueKind)] = &[("X", ValueKind::Matrix)];

impl Primitive for SimpleImputer {
    fn key(&self) -> &'static str {
        "simple_imputer"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: IO_IN, produce_inputs: IO_IN, produce_outputs: IO_OUT }
    }

    fn fit(&self, hp: &Hyperparams, inputs: &Inputs<'_>, _seed: u64) -> Result<Vec<u8>> {
        let strategy = Params(hp).string("strategy", "mean")?;
        Ok(encode_state(&SimpleImputerState::fit(inputs.table("X")?, &strategy)?))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: SimpleImputerState = decode_state(state)?;
        let m = st.transform(inputs.table("X")?)?;
        Ok(Outputs::from([("X".to_string(), Value::Matrix(m))]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    #[test]
    fn mean_of_present_cells() {
        let t = Table::new(vec![Column::numeric("a", vec![Some(1.0), None, Some(3.0)])]);
        let st = SimpleImputerState::fit(&t, "mean").unwrap();
        assert_eq!(st.fills, vec![2.0]);
        assert_eq!(st.transform(&t).unwrap().column(0), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn median_and_mode() {
        let t = Table::new(vec![Column::numeric(
            "a",
            vec![Some(5.0), Some(1.0), None, Some(1.0), Some(9.0)],
        )]);
        assert_eq!(SimpleImputerState::fit(&t, "median").unwrap().fills, vec![3.0]);
        assert_eq!(SimpleImputerState::fit(&t, "mode").unwrap().fills, vec![1.0]);
    }

    #[test]
    fn all_missing_column_fills_zero() {
        let t = Table::new(vec![Column::numeric("a", vec![None, None])]);
        assert_eq!(SimpleImputerState::fit(&t, "mean").unwrap().fills, vec![0.0]);
    }

    #[test]
    fn categorical_column_is_rejected() {
        let t = Table::new(vec![Column::categorical("c", vec![Some("x".into())])]);
        assert!(matches!(
            SimpleImputerState::fit(&t, "mean"),
            Err(PrimitiveError::DegenerateInput(_))
        ));
    }
}
