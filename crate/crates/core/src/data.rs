//! Values that flow between pipeline steps.
//!
//! Tables may hold explicit missing cells. Matrices and vectors may not, so any
//! numeric step must be preceded by imputation.

use std::fmt;

use serde::{Deserialize, Serialize};

/// The closed set of value kinds an ML data type can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Table,
    Matrix,
    Vector,
    Scalar,
    LabelList,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Table => "table",
            ValueKind::Matrix => "matrix",
            ValueKind::Vector => "vector",
            ValueKind::Scalar => "scalar",
            ValueKind::LabelList => "label_list",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "table" => ValueKind::Table,
            "matrix" => ValueKind::Matrix,
            "vector" => ValueKind::Vector,
            "scalar" => ValueKind::Scalar,
            "label_list" => ValueKind::LabelList,
            _ => return None,
        })
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_missing(&self) -> bool {
        match self {
            ColumnData::Numeric(v) => v.iter().any(Option::is_none),
            ColumnData::Categorical(v) => v.iter().any(Option::is_none),
        }
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(rows.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Column { name: name.into(), data: ColumnData::Numeric(values) }
    }

    pub fn categorical(name: impl Into<String>, values: Vec<Option<String>>) -> Self {
        Column { name: name.into(), data: ColumnData::Categorical(values) }
    }
}

/// Column-oriented table with possibly missing cells.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<Column>,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Self {
        Table { columns }
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.data.len())
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Table {
        Table {
            columns: self
                .columns
                .iter()
                .map(|c| Column { name: c.name.clone(), data: c.data.select(rows) })
                .collect(),
        }
    }
}

/// Dense row-major f64 matrix. Cells are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length does not match shape");
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * d);
        for r in rows {
            assert_eq!(r.len(), d, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix { rows: n, cols: d, data }
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix { rows: rows.len(), cols: self.cols, data }
    }
}

/// A one-dimensional value: numeric targets/predictions or string labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Vector {
    Numeric(Vec<f64>),
    Labels(Vec<String>),
}

impl Vector {
    pub fn len(&self) -> usize {
        match self {
            Vector::Numeric(v) => v.len(),
            Vector::Labels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Vector {
        match self {
            Vector::Numeric(v) => Vector::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Vector::Labels(v) => Vector::Labels(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    /// String view of each element; numbers are rendered with their shortest
    /// round-trip representation.
    pub fn as_labels(&self) -> Vec<String> {
        match self {
            Vector::Labels(v) => v.clone(),
            Vector::Numeric(v) => v.iter().map(|x| format_number(*x)).collect(),
        }
    }
}

pub fn format_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Table(Table),
    Matrix(Matrix),
    Vector(Vector),
    Scalar(f64),
    LabelList(Vec<String>),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Table(_) => ValueKind::Table,
            Value::Matrix(_) => ValueKind::Matrix,
            Value::Vector(_) => ValueKind::Vector,
            Value::Scalar(_) => ValueKind::Scalar,
            Value::LabelList(_) => ValueKind::LabelList,
        }
    }

    /// (leading dimension, trailing dimension) used in provenance records.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Value::Table(t) => (t.n_rows(), t.n_cols()),
            Value::Matrix(m) => (m.n_rows(), m.n_cols()),
            Value::Vector(v) => (v.len(), 1),
            Value::Scalar(_) => (1, 1),
            Value::LabelList(l) => (l.len(), 1),
        }
    }

    /// Whether the value respects its kind's storage rules.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Value::Table(t) => {
                let n = t.n_rows();
                t.columns.iter().all(|c| c.data.len() == n)
            }
            Value::Matrix(m) => m.as_slice().iter().all(|x| x.is_finite()),
            Value::Vector(Vector::Numeric(v)) => v.iter().all(|x| x.is_finite()),
            Value::Vector(Vector::Labels(_)) => true,
            Value::Scalar(x) => x.is_finite(),
            Value::LabelList(_) => true,
        }
    }

    pub fn as_table(&self) -> Option<&Table> {
        match self {
            Value::Table(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&Matrix> {
        match self {
            Value::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&Vector> {
        match self {
            Value::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_label_list(&self) -> Option<&[String]> {
        match self {
            Value::LabelList(l) => Some(l),
            _ => None,
        }
    }
}
