use std::fs;
use std::path::Path;

use proptest::prelude::*;
use tempfile::TempDir;

use super::*;
use crate::data::{ColumnData, Value, Vector};
use crate::primitives::{Inputs, NativeRegistry};
use crate::search::{Metric, ProblemType, TrialStatus};

fn write_task(dir: &Path, task: &str, train: &str, test: &str) {
    fs::write(dir.join(TASK_FILE), task).unwrap();
    fs::write(dir.join(TRAIN_FILE), train).unwrap();
    fs::write(dir.join(TEST_FILE), test).unwrap();
}

const REGRESSION: &str = r#"{"id":"r","problem_type":"regression","metric":"r2","target":"y"}"#;

#[test]
fn numeric_target_with_r2_is_a_regression_task() {
    let d = TempDir::new().unwrap();
    write_task(d.path(), REGRESSION, "a,b,y\n1,x,2.5\n2,z,3\n", "a,b,y\n3,x,1\n");
    let t = ingest_task(d.path()).unwrap();
    assert_eq!(t.task.problem_type, ProblemType::Regression);
    assert_eq!(t.task.metric, Metric::R2);
    assert_eq!(t.train.y, Vector::Numeric(vec![2.5, 3.0]));
    assert_eq!(t.train.x.column_names(), ["a", "b"]);
    assert!(matches!(t.train.x.columns[0].data, ColumnData::Numeric(_)));
    assert!(matches!(t.train.x.columns[1].data, ColumnData::Categorical(_)));
    assert!(t.pipelines_dir.is_none());
}

#[test]
fn missing_tokens_and_type_inference() {
    let d = TempDir::new().unwrap();
    write_task(
        d.path(),
        REGRESSION,
        "a,b,c,y\n1,,nan,1\nNaN,2,oops,2\n3,NAN,5,3\n",
        "a,b,c,y\n,4,6,1\n",
    );
    let t = ingest_task(d.path()).unwrap();
    let cols = &t.train.x.columns;
    assert_eq!(cols[0].data, ColumnData::Numeric(vec![Some(1.0), None, Some(3.0)]));
    assert_eq!(cols[1].data, ColumnData::Numeric(vec![None, Some(2.0), None]));
    // One unparseable cell makes the whole column categorical, in both splits.
    assert_eq!(cols[2].data, ColumnData::Categorical(vec![None, Some("oops".into()), Some("5".into())]));
    assert_eq!(t.test.x.columns[2].data, ColumnData::Categorical(vec![Some("6".into())]));
    assert_eq!(t.test.x.columns[0].data, ColumnData::Numeric(vec![None]));
}

#[test]
fn split_errors() {
    let d = TempDir::new().unwrap();
    write_task(d.path(), REGRESSION, "a,b,y\n1,2,3\n", "a,y\n1,3\n");
    assert!(matches!(ingest_task(d.path()), Err(StoreError::SchemaMismatch { .. })));
    write_task(d.path(), REGRESSION, "a,b\n1,2\n", "a,b\n1,2\n");
    assert!(matches!(ingest_task(d.path()), Err(StoreError::MissingTarget { split: "train", .. })));
    write_task(d.path(), REGRESSION, "a,y\n1,2\n", "a,y\n");
    assert!(matches!(ingest_task(d.path()), Err(StoreError::EmptySplit("test"))));
    write_task(d.path(), REGRESSION, "a,y\n1,big\n", "a,y\n1,2\n");
    assert!(matches!(ingest_task(d.path()), Err(StoreError::TargetNotNumeric { row: 1, .. })));
    write_task(d.path(), r#"{"id":"r","problem_type":"regression","metric":"accuracy","target":"y"}"#, "a,y\n1,2\n", "a,y\n1,2\n");
    assert!(matches!(ingest_task(d.path()), Err(StoreError::TaskJson { .. })));
}

#[test]
fn iris_fixture_has_three_classes() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/iris");
    let t = ingest_task(&dir).unwrap();
    assert_eq!(t.task.problem_type, ProblemType::Classification);
    assert_eq!(t.train.len() + t.test.len(), 150);
    assert_eq!(t.train.x.n_cols(), 4);
    // Oracle: distinct labels straight from the CSV text.
    let text = fs::read_to_string(dir.join("full.csv")).unwrap();
    let mut distinct: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    distinct.sort();
    distinct.dedup();
    let reg = NativeRegistry::builtin();
    let counter = reg.get("unique_counter").unwrap();
    let y = Value::Vector(t.train.y.clone());
    let out = counter.produce(&Default::default(), &[], &Inputs::new().with("y", &y)).unwrap();
    let Some(Value::LabelList(classes)) = out.get("classes") else { panic!() };
    assert_eq!(classes.len(), 3);
    assert_eq!(classes.len(), distinct.len());
}

#[test]
fn pipelines_folder_is_reported() {
    let d = TempDir::new().unwrap();
    write_task(d.path(), REGRESSION, "a,y\n1,2\n", "a,y\n1,2\n");
    fs::create_dir(d.path().join(PIPELINES_DIR)).unwrap();
    assert_eq!(ingest_task(d.path()).unwrap().pipelines_dir, Some(d.path().join(PIPELINES_DIR)));
}

fn run(task: &str) -> RunInfo {
    RunInfo { task_id: task.into(), seed: 0, tuner: "gp-ei".into(), selector: "ucb1".into() }
}

fn summary(task: &str, template: &str, cv: f64, test: Option<f64>) -> StoreLine {
    StoreLine::Summary(SummaryLine {
        run: run(task),
        metric: "accuracy".into(),
        best_template: template.into(),
        best_template_id: "00".into(),
        best_lambda: Default::default(),
        best_iteration: 1,
        cv_score: cv,
        cv_sd: 0.0,
        test_score: test,
        default_score: cv,
        improvement_sd: 0.0,
        zero_variance: true,
        n_trials: 1,
        n_failed: 0,
        checkpoints: Vec::new(),
        elapsed_s: 0.1,
    })
}

fn trial(task: &str, iteration: usize, score: Option<f64>) -> StoreLine {
    StoreLine::Trial(TrialLine {
        run: run(task),
        iteration,
        template: "t".into(),
        template_id: "00".into(),
        lambda: Default::default(),
        is_default: iteration == 1,
        status: if score.is_some() { TrialStatus::Ok } else { TrialStatus::Failed },
        cv_score: score,
        cv_sd: score.map(|_| 0.01),
        error: score.is_none().then(|| "boom".into()),
        elapsed_s: 0.5,
    })
}

fn store_of(lines: &[StoreLine]) -> StoreContents {
    StoreContents { lines: lines.to_vec(), corrupt: Vec::new() }
}

fn write_store(path: &Path, lines: &[StoreLine]) {
    let mut w = ResultsWriter::append(path).unwrap();
    for l in lines {
        w.write(l).unwrap();
    }
}

#[test]
fn lines_round_trip_through_a_file() {
    let d = TempDir::new().unwrap();
    let path = d.path().join("r.jsonl");
    let lines = vec![trial("a", 1, Some(0.5)), trial("a", 2, None), summary("a", "t", 0.5, Some(0.25))];
    write_store(&path, &lines);
    let back = read_store(&path).unwrap();
    assert_eq!(back.lines, lines);
    assert!(back.corrupt.is_empty());
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    assert!(text.lines().next().unwrap().contains(r#""kind":"trial""#));
}

#[test]
fn empty_store_reports_nothing() {
    let r = report(&StoreContents::default());
    assert!(r.rows.is_empty() && r.template_wins.is_empty());
}

#[test]
fn single_search_is_one_row() {
    let r = report(&store_of(&[trial("a", 1, Some(0.5)), trial("a", 2, Some(0.6)), summary("a", "t", 0.6, None)]));
    assert_eq!(r.rows.len(), 1);
    assert_eq!(r.trial_lines, 2);
    assert_eq!(r.template_wins["t"], 1);
}

#[test]
fn corrupt_line_is_skipped_and_counted() {
    let d = TempDir::new().unwrap();
    let path = d.path().join("r.jsonl");
    let lines: Vec<StoreLine> = (0..100).map(|i| summary(&format!("task{:03}", 99 - i), "t", 0.5, None)).collect();
    write_store(&path, &lines);
    let text = fs::read_to_string(&path).unwrap();
    let damaged: Vec<String> =
        text.lines().enumerate().map(|(i, l)| if i == 41 { l[..l.len() / 2].to_string() } else { l.to_string() }).collect();
    fs::write(&path, damaged.join("\n") + "\n").unwrap();
    let contents = read_store(&path).unwrap();
    let r = report(&contents);
    assert_eq!(r.rows.len(), 99);
    assert_eq!(r.corrupt_lines, vec![42]);
    assert!(r.rows.windows(2).all(|w| w[0].task_id <= w[1].task_id));
}

#[test]
fn truncated_store_keeps_its_prefix() {
    let d = TempDir::new().unwrap();
    let path = d.path().join("r.jsonl");
    write_store(&path, &[trial("a", 1, Some(0.5)), summary("a", "t", 0.5, None), trial("b", 1, Some(0.7))]);
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
    let contents = read_store(&path).unwrap();
    assert_eq!(contents.lines.len(), 2);
    assert_eq!(contents.corrupt, vec![3]);
    assert_eq!(report(&contents).rows.len(), 1);
}

#[test]
fn identical_stores_tie_everywhere() {
    let a = store_of(&[summary("x", "t", 0.5, Some(0.4)), summary("y", "t", 0.7, Some(0.9))]);
    let c = compare(&a, &a, CompareBy::Test).unwrap();
    assert_eq!((c.wins, c.losses, c.ties), (0, 0, 2));
    assert_eq!(c.tie_fraction(), 1.0);
}

#[test]
fn three_wins_and_a_tie() {
    let a = store_of(&[
        summary("t1", "t", 0.0, Some(0.9)),
        summary("t2", "t", 0.0, Some(0.8)),
        summary("t3", "t", 0.0, Some(0.7)),
        summary("t4", "t", 0.0, Some(0.5)),
    ]);
    let b = store_of(&[
        summary("t1", "t", 0.0, Some(0.8)),
        summary("t2", "t", 0.0, Some(0.7)),
        summary("t3", "t", 0.0, Some(0.6)),
        summary("t4", "t", 0.0, Some(0.5 + 1e-12)),
    ]);
    let c = compare(&a, &b, CompareBy::Test).unwrap();
    assert_eq!(c.win_fraction(), 0.75);
    assert_eq!(c.tie_fraction(), 0.25);
    assert_eq!(c.tasks.iter().map(|t| t.task_id.as_str()).collect::<Vec<_>>(), ["t1", "t2", "t3", "t4"]);
}

#[test]
fn best_summary_per_task_is_compared() {
    let a = store_of(&[summary("t", "x", 0.2, Some(0.1)), summary("t", "y", 0.9, Some(0.3))]);
    let b = store_of(&[summary("t", "x", 0.5, Some(0.2))]);
    assert_eq!(compare(&a, &b, CompareBy::Test).unwrap().wins, 1);
    assert_eq!(compare(&a, &b, CompareBy::Cv).unwrap().tasks[0].a, 0.9);
}

#[test]
fn disjoint_stores_share_no_tasks() {
    let a = store_of(&[summary("x", "t", 0.5, Some(0.5))]);
    let b = store_of(&[summary("y", "t", 0.5, Some(0.5))]);
    assert!(matches!(compare(&a, &b, CompareBy::Test), Err(StoreError::NoSharedTasks)));
}

proptest! {
    #[test]
    fn comparison_fractions_partition(
        a in proptest::collection::vec((0usize..6, 0u8..4), 1..10),
        b in proptest::collection::vec((0usize..6, 0u8..4), 1..10),
    ) {
        let mk = |v: &[(usize, u8)]| store_of(
            &v.iter().map(|(t, s)| summary(&format!("t{t}"), "x", 0.0, Some(*s as f64 / 4.0))).collect::<Vec<_>>(),
        );
        let (sa, sb) = (mk(&a), mk(&b));
        match (compare(&sa, &sb, CompareBy::Test), compare(&sb, &sa, CompareBy::Test)) {
            (Ok(ab), Ok(ba)) => {
                prop_assert_eq!(ab.ties, ba.ties);
                prop_assert!((ab.win_fraction() + ba.win_fraction() + ab.tie_fraction() - 1.0).abs() < 1e-12);
                let self_cmp = compare(&sa, &sa, CompareBy::Test).unwrap();
                prop_assert_eq!(self_cmp.ties, self_cmp.tasks.len());
            }
            (Err(StoreError::NoSharedTasks), Err(StoreError::NoSharedTasks)) => {}
            other => prop_assert!(false, "asymmetric outcome {:?}", other.0.map(|c| c.tasks.len())),
        }
    }

    #[test]
    fn any_truncation_leaves_a_readable_prefix(cut in 0usize..2000) {
        let d = TempDir::new().unwrap();
        let path = d.path().join("r.jsonl");
        let lines = vec![trial("a", 1, Some(0.5)), trial("a", 2, None), summary("a", "t", 0.5, None), trial("b", 1, Some(0.1))];
        write_store(&path, &lines);
        let bytes = fs::read(&path).unwrap();
        let cut = cut.min(bytes.len());
        fs::write(&path, &bytes[..cut]).unwrap();
        let contents = read_store(&path).unwrap();
        prop_assert!(contents.corrupt.len() <= 1);
        prop_assert_eq!(&contents.lines[..], &lines[..contents.lines.len()]);
    }
}
