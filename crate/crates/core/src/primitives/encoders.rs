use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    decode_state, encode_state, Hyperparams, Inputs, Outputs, Params, Primitive, PrimitiveError,
    Result, Signature,
};
use crate::data::{Column, ColumnData, Matrix, Table, Value, ValueKind, Vector};

const TABLE_IO: &[(&str, ValueKind)] = &[("X", ValueKind::Table)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncodedColumn {
    Passthrough(String),
    OneHot { name: String, values: Vec<String> },
}

/// Column plan learned by [`CategoricalEncoder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoderState {
    pub columns: Vec<EncodedColumn>,
}

/// One-hot encodes categorical columns, keeping the `max_labels` most
/// frequent values (ties broken lexicographically). Missing and unseen
/// categories encode to an all-zeros row. Numeric columns pass through.
pub struct CategoricalEncoder;

impl Primitive for CategoricalEncoder {
    fn key(&self) -> &'static str {
        "categorical_encoder"
    }

    fn signature(&self) -> Signature {
        Signature { fit_inputs: TABLE_IO, produce_inputs: TABLE_IO, produce_outputs: TABLE_IO }
    }

    fn fit(&self, hp: &Hyperparams, inputs: &Inputs<'_>, _seed: u64) -> Result<Vec<u8>> {
        let max_labels = Params(hp).positive("max_labels", 10)?;
        let t = inputs.table("X")?;
        let columns = t
            .columns
            .iter()
            .map(|c| match &c.data {
                ColumnData::Numeric(_) => EncodedColumn::Passthrough(c.name.clone()),
                ColumnData::Categorical(v) => {
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for s in v.iter().flatten() {
                        *counts.entry(s.as_str()).or_default() += 1;
                    }
                    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
                    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
                    let mut values: Vec<String> =
                        ranked.into_iter().take(max_labels).map(|(s, _)| s.to_string()).collect();
                    values.sort();
                    EncodedColumn::OneHot { name: c.name.clone(), values }
                }
            })
            .collect();
        Ok(encode_state(&CategoricalEncoderState { columns }))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: CategoricalEncoderState = decode_state(state)?;
        let t = inputs.table("X")?;
        if t.n_cols() != st.columns.len() {
            return Err(PrimitiveError::ShapeMismatch(format!(
                "expected {} columns, got {}",
                st.columns.len(),
                t.n_cols()
            )));
        }
        let mut out = Vec::new();
        for (plan, col) in st.columns.iter().zip(&t.columns) {
            match (plan, &col.data) {
                (EncodedColumn::Passthrough(name), ColumnData::Numeric(_)) if *name == col.name => {
                    out.push(col.clone())
                }
                (EncodedColumn::OneHot { name, values }, ColumnData::Categorical(cells))
                    if *name == col.name =>
                {
                    for v in values {
                        let data = cells
                            .iter()
                            .map(|c| Some(if c.as_deref() == Some(v.as_str()) { 1.0 } else { 0.0 }))
                            .collect();
                        out.push(Column::numeric(format!("{name}={v}"), data));
                    }
                }
                _ => {
                    return Err(PrimitiveError::ShapeMismatch(format!(
                        "column {:?} does not match the fitted layout",
                        col.name
                    )))
                }
            }
        }
        Ok(Outputs::from([("X".to_string(), Value::Table(Table::new(out)))]))
    }
}

/// Sorted class labels learned by [`ClassEncoder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEncoderState {
    pub classes: Vec<String>,
}

/// Maps labels to integer codes in lexicographic class order.
pub struct ClassEncoder;

const Y_IO: &[(&str, ValueKind)] = &[("y", ValueKind::Vector)];

impl Primitive for ClassEncoder {
    fn key(&self) -> &'static str {
        "class_encoder"
    }

    fn signature(&self) -> Signature {
        const OUT: &[(&str, ValueKind)] =
            &[("y", ValueKind::Vector), ("classes", ValueKind::LabelList)];
        Signature { fit_inputs: Y_IO, produce_inputs: Y_IO, produce_outputs: OUT }
    }

    fn fit(&self, _hp: &Hyperparams, inputs: &Inputs<'_>, _seed: u64) -> Result<Vec<u8>> {
        let (classes, _) = super::index_labels(inputs.vector("y")?);
        Ok(encode_state(&ClassEncoderState { classes }))
    }

    fn produce(&self, _hp: &Hyperparams, state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let st: ClassEncoderState = decode_state(state)?;
        let codes = inputs
            .vector("y")?
            .as_labels()
            .into_iter()
            .map(|l| {
                st.classes
                    .binary_search(&l)
                    .map(|i| i as f64)
                    .map_err(|_| PrimitiveError::UnseenCategory(l))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Outputs::from([
            ("y".to_string(), Value::Vector(Vector::Numeric(codes))),
            ("classes".to_string(), Value::LabelList(st.classes)),
        ]))
    }
}

/// Maps integer codes back to labels using a `classes` list.
pub struct ClassDecoder;

impl Primitive for ClassDecoder {
    fn key(&self) -> &'static str {
        "class_decoder"
    }

    fn signature(&self) -> Signature {
        const IN: &[(&str, ValueKind)] =
            &[("y", ValueKind::Vector), ("classes", ValueKind::LabelList)];
        Signature { fit_inputs: &[], produce_inputs: IN, produce_outputs: Y_IO }
    }

    fn produce(&self, _hp: &Hyperparams, _state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let classes = inputs.label_list("classes")?;
        let Vector::Numeric(codes) = inputs.vector("y")? else {
            return Err(PrimitiveError::WrongKind { name: "y (codes)".into(), expected: ValueKind::Vector });
        };
        let labels = codes
            .iter()
            .map(|c| {
                let i = *c as usize;
                if c.fract() != 0.0 || *c < 0.0 || i >= classes.len() {
                    Err(PrimitiveError::UnseenCategory(c.to_string()))
                } else {
                    Ok(classes[i].clone())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Outputs::from([("y".to_string(), Value::Vector(Vector::Labels(labels)))]))
    }
}

/// Emits the sorted distinct labels of `y` as `classes`.
pub struct UniqueCounter;

impl Primitive for UniqueCounter {
    fn key(&self) -> &'static str {
        "unique_counter"
    }

    fn signature(&self) -> Signature {
        const OUT: &[(&str, ValueKind)] = &[("classes", ValueKind::LabelList)];
        Signature { fit_inputs: &[], produce_inputs: Y_IO, produce_outputs: OUT }
    }

    fn produce(&self, _hp: &Hyperparams, _state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let (classes, _) = super::index_labels(inputs.vector("y")?);
        Ok(Outputs::from([("classes".to_string(), Value::LabelList(classes))]))
    }
}

/// Extracts numeric columns as a matrix, dropping categorical ones.
/// Missing cells are an error.
pub struct TableToMatrix;

impl Primitive for TableToMatrix {
    fn key(&self) -> &'static str {
        "table_to_matrix"
    }

    fn signature(&self) -> Signature {
        const OUT: &[(&str, ValueKind)] = &[("X", ValueKind::Matrix)];
        Signature { fit_inputs: &[], produce_inputs: TABLE_IO, produce_outputs: OUT }
    }

    fn produce(&self, _hp: &Hyperparams, _state: &[u8], inputs: &Inputs<'_>) -> Result<Outputs> {
        let t = inputs.table("X")?;
        let numeric: Vec<&Vec<Option<f64>>> = t
            .columns
            .iter()
            .filter_map(|c| match &c.data {
                ColumnData::Numeric(v) => Some(v),
                ColumnData::Categorical(_) => None,
            })
            .collect();
        let n = t.n_rows();
        let mut m = Matrix::zeros(n, numeric.len());
        for (j, col) in numeric.iter().enumerate() {
            for (i, cell) in col.iter().enumerate() {
                let v = cell.ok_or_else(|| {
                    PrimitiveError::DegenerateInput("missing cell; impute before converting".into())
                })?;
                m.set(i, j, v);
            }
        }
        Ok(Outputs::from([("X".to_string(), Value::Matrix(m))]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Value {
        Value::Vector(Vector::Labels(v.iter().map(|s| s.to_string()).collect()))
    }

    #[test]
    fn class_encoder_uses_sorted_classes() {
        let hp = Hyperparams::new();
        let train = labels(&["dog", "cat", "dog"]);
        let st = ClassEncoder.fit(&hp, &Inputs::new().with("y", &train), 0).unwrap();
        let query = labels(&["dog", "cat"]);
        let out = ClassEncoder.produce(&hp, &st, &Inputs::new().with("y", &query)).unwrap();
        assert_eq!(out["y"], Value::Vector(Vector::Numeric(vec![1.0, 0.0])));
        assert_eq!(out["classes"], Value::LabelList(vec!["cat".into(), "dog".into()]));

        let decoded = ClassDecoder
            .produce(&hp, &[], &Inputs::new().with("y", &out["y"]).with("classes", &out["classes"]))
            .unwrap();
        assert_eq!(decoded["y"], query);
    }

    #[test]
    fn class_encoder_rejects_unseen_label() {
        let hp = Hyperparams::new();
        let train = labels(&["a"]);
        let st = ClassEncoder.fit(&hp, &Inputs::new().with("y", &train), 0).unwrap();
        let q = labels(&["b"]);
        assert_eq!(
            ClassEncoder.produce(&hp, &st, &Inputs::new().with("y", &q)).unwrap_err(),
            PrimitiveError::UnseenCategory("b".into())
        );
    }

    #[test]
    fn one_hot_with_unseen_and_missing_rows() {
        let t = Value::Table(Table::new(vec![
            Column::categorical("c", vec![Some("b".into()), Some("a".into()), Some("b".into()), None]),
            Column::numeric("n", vec![Some(1.0), None, Some(3.0), Some(4.0)]),
        ]));
        let mut hp = Hyperparams::new();
        hp.insert("max_labels".into(), crate::annotations::HyperValue::Int(1));
        let st = CategoricalEncoder.fit(&hp, &Inputs::new().with("X", &t), 0).unwrap();
        let q = Value::Table(Table::new(vec![
            Column::categorical("c", vec![Some("b".into()), Some("z".into())]),
            Column::numeric("n", vec![Some(7.0), None]),
        ]));
        let out = CategoricalEncoder.produce(&hp, &st, &Inputs::new().with("X", &q)).unwrap();
        let table = out["X"].as_table().unwrap();
        assert_eq!(table.column_names(), vec!["c=b", "n"]);
        assert_eq!(table.columns[0].data, ColumnData::Numeric(vec![Some(1.0), Some(0.0)]));
        assert_eq!(table.columns[1].data, ColumnData::Numeric(vec![Some(7.0), None]));
    }

    #[test]
    fn unique_counter_counts_classes() {
        let y = labels(&["b", "a", "b", "c"]);
        let out = UniqueCounter.produce(&Hyperparams::new(), &[], &Inputs::new().with("y", &y)).unwrap();
        assert_eq!(out["classes"].as_label_list().unwrap().len(), 3);
    }

    #[test]
    fn table_to_matrix_drops_categoricals_and_rejects_missing() {
        let t = Value::Table(Table::new(vec![
            Column::categorical("c", vec![Some("x".into()), Some("y".into())]),
            Column::numeric("n", vec![Some(1.0), Some(2.0)]),
        ]));
        let hp = Hyperparams::new();
        let out = TableToMatrix.produce(&hp, &[], &Inputs::new().with("X", &t)).unwrap();
        assert_eq!(out["X"].as_matrix().unwrap().column(0), vec![1.0, 2.0]);

        let t = Value::Table(Table::new(vec![Column::numeric("n", vec![Some(1.0), None])]));
        assert!(TableToMatrix.produce(&hp, &[], &Inputs::new().with("X", &t)).is_err());
    }
}
