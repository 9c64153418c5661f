//! Append-only JSONL results: one line per trial, then one summary line
//! when the search completes.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::search::{SearchResult, SearchTrial, Task, TrialStatus};
use crate::tuning::space::Assignment;

/// Absolute score difference below which two scores tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Settings shared by every line of one search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub task_id: String,
    pub seed: u64,
    pub tuner: String,
    pub selector: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLine {
    #[serde(flatten)]
    pub run: RunInfo,
    pub iteration: usize,
    pub template: String,
    pub template_id: String,
    pub lambda: Assignment,
    pub is_default: bool,
    pub status: TrialStatus,
    pub cv_score: Option<f64>,
    pub cv_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub elapsed_s: f64,
}

impl TrialLine {
    pub fn new(run: &RunInfo, t: &SearchTrial) -> Self {
        TrialLine {
            run: run.clone(),
            iteration: t.iteration,
            template: t.template.clone(),
            template_id: t.template_id.clone(),
            lambda: t.lambda.clone(),
            is_default: t.is_default,
            status: t.status,
            cv_score: t.cv_score,
            cv_sd: t.cv_sd,
            error: t.error.clone(),
            elapsed_s: t.elapsed_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLine {
    pub mark: String,
    pub best_score: Option<f64>,
    pub best_iteration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryLine {
    #[serde(flatten)]
    pub run: RunInfo,
    pub metric: String,
    pub best_template: String,
    pub best_template_id: String,
    pub best_lambda: Assignment,
    pub best_iteration: usize,
    pub cv_score: f64,
    pub cv_sd: f64,
    pub test_score: Option<f64>,
    pub default_score: f64,
    pub improvement_sd: f64,
    pub zero_variance: bool,
    pub n_trials: usize,
    pub n_failed: usize,
    pub checkpoints: Vec<CheckpointLine>,
    pub elapsed_s: f64,
}

impl SummaryLine {
    pub fn new(run: &RunInfo, task: &Task, r: &SearchResult) -> Self {
        SummaryLine {
            run: run.clone(),
            metric: task.metric.to_string(),
            best_template: r.best_template.clone(),
            best_template_id: r.best_pipeline().template.id.clone(),
            best_lambda: r.best_pipeline().lambda.clone(),
            best_iteration: r.best_iteration,
            cv_score: r.cv_score,
            cv_sd: r.cv_sd,
            test_score: r.test_score,
            default_score: r.improvement.default_score,
            improvement_sd: r.improvement.value,
            zero_variance: r.improvement.zero_variance,
            n_trials: r.trials.len(),
            n_failed: r.trials.iter().filter(|t| t.status == TrialStatus::Failed).count(),
            checkpoints: r
                .checkpoints
                .iter()
                .map(|c| CheckpointLine {
                    mark: c.checkpoint.to_string(),
                    best_score: c.best_score,
                    best_iteration: c.best_iteration,
                })
                .collect(),
            elapsed_s: r.trials.last().map_or(0.0, |t| t.completed_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoreLine {
    Trial(TrialLine),
    Summary(SummaryLine),
}

/// Appends whole lines, flushing after each, so a crash loses at most the
/// line being written.
#[derive(Debug)]
pub struct ResultsWriter {
    file: File,
}

impl ResultsWriter {
    pub fn append(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| StoreError::io(path, e))?;
        Ok(ResultsWriter { file })
    }

    pub fn write(&mut self, line: &StoreLine) -> std::io::Result<()> {
        let mut text = serde_json::to_string(line).expect("store lines serialize");
        text.push('\n');
        self.file.write_all(text.as_bytes())?;
        self.file.flush()
    }
}

/// Parsed lines plus the 1-based numbers of lines that did not parse.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreContents {
    pub lines: Vec<StoreLine>,
    pub corrupt: Vec<usize>,
}

impl StoreContents {
    pub fn summaries(&self) -> impl Iterator<Item = &SummaryLine> {
        self.lines.iter().filter_map(|l| match l {
            StoreLine::Summary(s) => Some(s),
            StoreLine::Trial(_) => None,
        })
    }
}

/// Reads a store, skipping (and logging) lines that do not parse. Blank
/// lines are ignored.
pub fn read_store(path: &Path) -> Result<StoreContents, StoreError> {
    let file = File::open(path).map_err(|e| StoreError::io(path, e))?;
    let mut out = StoreContents::default();
    for (i, line) in BufReader::new(file).split(b'\n').enumerate() {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match serde_json::from_slice::<StoreLine>(&line) {
            Ok(l) => out.lines.push(l),
            Err(e) => {
                log::warn!("{}:{}: skipping corrupt line ({e})", path.display(), i + 1);
                out.corrupt.push(i + 1);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub task_id: String,
    pub tuner: String,
    pub selector: String,
    pub seed: u64,
    pub best_template: String,
    pub cv_score: f64,
    pub test_score: Option<f64>,
    pub improvement_sd: f64,
    pub zero_variance: bool,
    pub n_trials: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    /// One row per completed search, stably sorted by task id.
    pub rows: Vec<ReportRow>,
    /// Completed searches won by each template.
    pub template_wins: BTreeMap<String, usize>,
    /// Trial lines in the store, completed or not.
    pub trial_lines: usize,
    pub corrupt_lines: Vec<usize>,
}

pub fn report(contents: &StoreContents) -> Report {
    let mut rows: Vec<ReportRow> = contents
        .summaries()
        .map(|s| ReportRow {
            task_id: s.run.task_id.clone(),
            tuner: s.run.tuner.clone(),
            selector: s.run.selector.clone(),
            seed: s.run.seed,
            best_template: s.best_template.clone(),
            cv_score: s.cv_score,
            test_score: s.test_score,
            improvement_sd: s.improvement_sd,
            zero_variance: s.zero_variance,
            n_trials: s.n_trials,
            n_failed: s.n_failed,
        })
        .collect();
    rows.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let mut template_wins = BTreeMap::new();
    for r in &rows {
        *template_wins.entry(r.best_template.clone()).or_insert(0) += 1;
    }
    Report {
        rows,
        template_wins,
        trial_lines: contents.lines.iter().filter(|l| matches!(l, StoreLine::Trial(_))).count(),
        corrupt_lines: contents.corrupt.clone(),
    }
}

/// Which summary score `compare` pairs up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CompareBy {
    #[default]
    Test,
    Cv,
}

impl std::str::FromStr for CompareBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "test" => Ok(CompareBy::Test),
            "cv" => Ok(CompareBy::Cv),
            _ => Err(format!("unknown score {s:?} (expected test or cv)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Win,
    Loss,
    Tie,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskComparison {
    pub task_id: String,
    pub a: f64,
    pub b: f64,
    /// From A's point of view.
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Sorted by task id.
    pub tasks: Vec<TaskComparison>,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

impl Comparison {
    pub fn win_fraction(&self) -> f64 {
        self.wins as f64 / self.tasks.len() as f64
    }

    pub fn loss_fraction(&self) -> f64 {
        self.losses as f64 / self.tasks.len() as f64
    }

    pub fn tie_fraction(&self) -> f64 {
        self.ties as f64 / self.tasks.len() as f64
    }
}

/// Best score per task over a store's completed searches.
pub fn best_per_task(contents: &StoreContents, by: CompareBy) -> BTreeMap<String, f64> {
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for s in contents.summaries() {
        let score = match by {
            CompareBy::Test => s.test_score,
            CompareBy::Cv => Some(s.cv_score),
        };
        if let Some(score) = score {
            let e = best.entry(s.run.task_id.clone()).or_insert(score);
            *e = e.max(score);
        }
    }
    best
}

/// Pairs the best scores of both stores by task id.
pub fn compare(a: &StoreContents, b: &StoreContents, by: CompareBy) -> Result<Comparison, StoreError> {
    let (a, b) = (best_per_task(a, by), best_per_task(b, by));
    let mut tasks = Vec::new();
    for (task_id, &sa) in &a {
        let Some(&sb) = b.get(task_id) else { continue };
        let outcome = if (sa - sb).abs() < TIE_TOLERANCE {
            Outcome::Tie
        } else if sa > sb {
            Outcome::Win
        } else {
            Outcome::Loss
        };
        tasks.push(TaskComparison { task_id: task_id.clone(), a: sa, b: sb, outcome });
    }
    if tasks.is_empty() {
        return Err(StoreError::NoSharedTasks);
    }
    let count = |o| tasks.iter().filter(|t| t.outcome == o).count();
    let (wins, losses, ties) = (count(Outcome::Win), count(Outcome::Loss), count(Outcome::Tie));
    Ok(Comparison { tasks, wins, losses, ties })
}
