//! Task folders: `task.json`, `train.csv`, `test.csv` and an optional
//! `pipelines/` directory of extra template documents.

use std::path::{Path, PathBuf};

use super::StoreError;
use crate::data::{Column, Table, Vector};
use crate::search::{Dataset, ProblemType, Task};

pub const TASK_FILE: &str = "task.json";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const PIPELINES_DIR: &str = "pipelines";

#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub task: Task,
    pub train: Dataset,
    pub test: Dataset,
    /// `pipelines/` when the folder has one.
    pub pipelines_dir: Option<PathBuf>,
}

/// Empty cells and `NaN` in any letter case.
pub fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("nan")
}

struct RawCsv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> Result<RawCsv, StoreError> {
    let bad = |e: csv::Error| StoreError::Csv { path: path.to_path_buf(), message: e.to_string() };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(bad)?;
    let header: Vec<String> = reader.headers().map_err(bad)?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record.map_err(bad)?.iter().map(String::from).collect());
    }
    Ok(RawCsv { header, rows })
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Builds both feature tables with one type per column: numeric when every
/// non-missing cell of the column, in either split, parses as a number.
fn feature_tables(train: &RawCsv, test: &RawCsv, features: &[usize]) -> (Table, Table) {
    let mut train_cols = Vec::new();
    let mut test_cols = Vec::new();
    for &c in features {
        let name = &train.header[c];
        let a: Vec<&str> = train.rows.iter().map(|r| r[c].as_str()).collect();
        let b: Vec<&str> = test.rows.iter().map(|r| r[c].as_str()).collect();
        let numeric = a.iter().chain(&b).all(|v| is_missing(v) || parse_number(v).is_some());
        let build = |cells: &[&str]| {
            if numeric {
                Column::numeric(name.clone(), cells.iter().map(|v| if is_missing(v) { None } else { parse_number(v) }).collect())
            } else {
                Column::categorical(
                    name.clone(),
                    cells.iter().map(|v| (!is_missing(v)).then(|| v.to_string())).collect(),
                )
            }
        };
        train_cols.push(build(&a));
        test_cols.push(build(&b));
    }
    (Table::new(train_cols), Table::new(test_cols))
}

fn target(raw: &RawCsv, column: usize, problem: ProblemType, split: &'static str) -> Result<Vector, StoreError> {
    let mut labels = Vec::with_capacity(raw.rows.len());
    for (i, r) in raw.rows.iter().enumerate() {
        let cell = r[column].trim();
        if is_missing(cell) {
            return Err(StoreError::MissingTargetValue { split, row: i + 1 });
        }
        labels.push(cell.to_string());
    }
    match problem {
        ProblemType::Classification => Ok(Vector::Labels(labels)),
        ProblemType::Regression => labels
            .iter()
            .enumerate()
            .map(|(i, v)| parse_number(v).ok_or_else(|| StoreError::TargetNotNumeric { split, row: i + 1, value: v.clone() }))
            .collect::<Result<_, _>>()
            .map(Vector::Numeric),
    }
}

/// Reads a task folder into its metadata and both splits.
pub fn ingest_task(dir: &Path) -> Result<TaskData, StoreError> {
    let task_path = dir.join(TASK_FILE);
    let text = std::fs::read_to_string(&task_path).map_err(|e| StoreError::io(&task_path, e))?;
    let task: Task = serde_json::from_str(&text).map_err(|e| StoreError::TaskJson { path: task_path.clone(), message: e.to_string() })?;
    task.check().map_err(|e| StoreError::TaskJson { path: task_path, message: e.to_string() })?;

    let train = read_csv(&dir.join(TRAIN_FILE))?;
    let test = read_csv(&dir.join(TEST_FILE))?;
    for (raw, split) in [(&train, "train"), (&test, "test")] {
        if !raw.header.contains(&task.target) {
            return Err(StoreError::MissingTarget { split, target: task.target.clone() });
        }
        if raw.rows.is_empty() {
            return Err(StoreError::EmptySplit(split));
        }
    }
    if train.header != test.header {
        return Err(StoreError::SchemaMismatch { train: train.header.clone(), test: test.header.clone() });
    }
    let target_col = train.header.iter().position(|h| *h == task.target).expect("checked above");
    let features: Vec<usize> = (0..train.header.len()).filter(|&c| c != target_col).collect();
    let (train_x, test_x) = feature_tables(&train, &test, &features);
    let train_y = target(&train, target_col, task.problem_type, "train")?;
    let test_y = target(&test, target_col, task.problem_type, "test")?;
    let pipelines = dir.join(PIPELINES_DIR);
    Ok(TaskData {
        pipelines_dir: pipelines.is_dir().then_some(pipelines),
        task,
        train: Dataset { x: train_x, y: train_y },
        test: Dataset { x: test_x, y: test_y },
    })
}
