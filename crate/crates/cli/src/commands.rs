use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context as _, Result};
use bazaar::annotations::{Catalog, LoadOptions};
use bazaar::data::Value;
use bazaar::execution::{self as exec, fit, produce, Context};
use bazaar::graph::{ambiguities, bind, make_template, recover_graph, render_graph, PipelineDescription};
use bazaar::primitives::NativeRegistry;
use bazaar::search::{
    bundled_sources, filter_templates, load_available_templates, read_template_dir, search, Budget, Checkpoint,
    SearchConfig, SearchError,
};
use bazaar::store::{
    compare, ingest_task, read_store, report, CompareBy, ResultsWriter, RunInfo, StoreLine, SummaryLine, TrialLine,
};
use bazaar::tuning::space::Assignment;

use crate::{Cli, Command, Render, Split};

/// Exit status for a search in which no trial succeeded.
const EXIT_NO_SUCCESS: u8 = 2;

const CATALOG_ENV: &str = "BAZAAR_CATALOG";

struct Env {
    registry: NativeRegistry,
    catalog: Catalog,
}

/// Bundled annotations, then `$BAZAAR_CATALOG` entries, then `--catalog`
/// directories, in that order.
fn load_env(cli: &Cli) -> Result<Env> {
    let registry = NativeRegistry::builtin();
    let mut catalog = bazaar::bundled::catalog(&registry).context("loading the bundled catalog")?;
    let mut dirs: Vec<PathBuf> = std::env::var_os(CATALOG_ENV)
        .map(|v| std::env::split_paths(&v).filter(|p| !p.as_os_str().is_empty()).collect())
        .unwrap_or_default();
    dirs.extend(cli.catalogs.iter().cloned());
    catalog
        .extend_from_dirs(&dirs, &registry, LoadOptions { shadow: cli.shadow })
        .context("loading catalog directories")?;
    Ok(Env { registry, catalog })
}

fn read_description(path: &Path) -> Result<PipelineDescription> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    PipelineDescription::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let env = load_env(&cli)?;
    match cli.command {
        Command::ListPrimitives => list_primitives(&env),
        Command::Recover { pipeline, render } => recover(&env, &pipeline, render),
        Command::Fit { task, pipeline, lambda, seed, out, dump_context } => {
            fit_cmd(&env, &task, &pipeline, lambda.as_deref(), seed, &out, dump_context)
        }
        Command::Predict { model, task, split, out } => predict(&env, &model, &task, split, out.as_deref()),
        Command::Search {
            task,
            budget,
            time_limit,
            cv_k,
            tuner,
            selector,
            seed,
            out,
            templates,
            template_dirs,
            checkpoints,
            save_model,
        } => {
            let checkpoints = checkpoints
                .iter()
                .map(|c| c.parse::<Checkpoint>().map_err(anyhow::Error::msg))
                .collect::<Result<Vec<_>>>()?;
            let budget = Budget {
                max_iterations: budget,
                time_limit: time_limit.map(Duration::from_secs_f64),
                checkpoints,
            };
            let mut config = SearchConfig::new(budget, &tuner, &selector, seed);
            config.cv_folds = cv_k;
            search_cmd(&env, &task, config, &out, templates.as_deref(), &template_dirs, save_model.as_deref())
        }
        Command::Report { store } => report_cmd(&store),
        Command::Compare { a, b, by } => {
            let by: CompareBy = by.parse().map_err(anyhow::Error::msg)?;
            compare_cmd(&a, &b, by)
        }
    }
}

fn list_primitives(env: &Env) -> Result<ExitCode> {
    let mut out = std::io::stdout().lock();
    for ann in env.catalog.iter() {
        let runnable = match &ann.implementation {
            Some(key) if env.registry.get(key).is_some() => "native",
            Some(_) => "missing",
            None => "annotation-only",
        };
        let origin = env.catalog.origin(&ann.name).unwrap_or("?");
        writeln!(out, "{}\t{}\t{}\t{}", ann.name, runnable, origin, ann.description)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn recover(env: &Env, pipeline: &Path, render: Render) -> Result<ExitCode> {
    let desc = read_description(pipeline)?;
    let graph = recover_graph(&desc, &env.catalog)?;
    for a in ambiguities(&graph) {
        eprintln!("warning: {a}");
    }
    match render {
        Render::Dot => print!("{}", render_graph(&graph)),
        Render::Text => {
            for e in &graph.edges {
                println!("{} -> {} [{}]", e.from, e.to, e.label);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_lambda(path: &Path) -> Result<Assignment> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn fit_cmd(
    env: &Env,
    task_dir: &Path,
    pipeline: &Path,
    lambda: Option<&Path>,
    seed: u64,
    out: &Path,
    dump_context: bool,
) -> Result<ExitCode> {
    let data = ingest_task(task_dir)?;
    let mut desc = read_description(pipeline)?;
    if desc.sources.is_none() {
        desc.sources = data.task.sources.clone();
    }
    let template = std::sync::Arc::new(make_template(&desc, &env.catalog)?);
    let mut assignment = template.default_lambda();
    if let Some(path) = lambda {
        for (key, value) in read_lambda(path)? {
            if !assignment.contains_key(&key) {
                bail!("{key} is not a free hyperparameter of this pipeline");
            }
            assignment.insert(key, value);
        }
    }
    let pipeline = bind(&template, &assignment)?;
    let mut ctx = data.train.train_context();
    let fitted = fit(&pipeline, &mut ctx, &env.registry, seed)?;
    if dump_context {
        eprint!("{}", ctx.describe());
    }
    fs::write(out, exec::save(&fitted)).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("fitted {} steps; model written to {}", pipeline.n_steps(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn predict(env: &Env, model: &Path, task_dir: &Path, split: Split, out: Option<&Path>) -> Result<ExitCode> {
    let bytes = fs::read(model).with_context(|| format!("reading {}", model.display()))?;
    let fitted = exec::load(&bytes, &env.catalog, &env.registry)?;
    let data = ingest_task(task_dir)?;
    let set = match split {
        Split::Train => &data.train,
        Split::Test => &data.test,
    };
    let ctx = produce(&fitted, Context::new().with("X", Value::Table(set.x.clone())), &env.registry)?;
    let name = fitted.pipeline.template.graph.sinks.first().map(String::as_str).unwrap_or("y_hat");
    let Some(Value::Vector(pred)) = ctx.get(name) else { bail!("the pipeline produced no {name:?}") };

    let mut csv = String::from("prediction\n");
    for p in pred.as_labels() {
        csv.push_str(&p);
        csv.push('\n');
    }
    match out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    if !set.y.is_empty() {
        match data.task.metric.score(&set.y, pred) {
            Some(s) => eprintln!("{} = {s}", data.task.metric),
            None => eprintln!("{} is undefined for these predictions", data.task.metric),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn search_cmd(
    env: &Env,
    task_dir: &Path,
    config: SearchConfig,
    out: &Path,
    only: Option<&[String]>,
    template_dirs: &[PathBuf],
    save_model: Option<&Path>,
) -> Result<ExitCode> {
    let data = ingest_task(task_dir)?;
    let mut sources = bundled_sources();
    for dir in data.pipelines_dir.iter().chain(template_dirs) {
        sources.extend(read_template_dir(dir)?);
    }
    let mut templates = load_available_templates(&data.task, &sources, &env.catalog)?;
    if let Some(names) = only {
        templates = filter_templates(templates, names);
        if templates.is_empty() {
            bail!("no template matches {}", names.join(", "));
        }
    }
    log::info!("searching {} templates", templates.len());

    let run = RunInfo {
        task_id: data.task.id.clone(),
        seed: config.seed,
        tuner: config.tuner.clone(),
        selector: config.selector.clone(),
    };
    let mut writer = ResultsWriter::append(out)?;
    let mut write_error = None;
    let result = search(&templates, &data.task, &data.train, &data.test, &config, &env.registry, &mut |t| {
        if write_error.is_none() {
            write_error = writer.write(&StoreLine::Trial(TrialLine::new(&run, t))).err();
        }
    });
    if let Some(e) = write_error {
        return Err(e).with_context(|| format!("writing {}", out.display()));
    }
    let result = match result {
        Ok(r) => r,
        Err(e @ SearchError::BudgetExhaustedWithNoSuccess { .. }) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_NO_SUCCESS));
        }
        Err(e) => return Err(e.into()),
    };
    let summary = SummaryLine::new(&run, &data.task, &result);
    writer.write(&StoreLine::Summary(summary.clone())).with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = save_model {
        fs::write(path, exec::save(&result.fitted)).with_context(|| format!("writing {}", path.display()))?;
    }

    let metric = &data.task.metric;
    println!("{:<16}{}", "task", data.task.id);
    println!("{:<16}{} (iteration {})", "best template", summary.best_template, summary.best_iteration);
    println!("{:<16}{:.4} ± {:.4}", format!("cv {metric}"), summary.cv_score, summary.cv_sd);
    println!("{:<16}{}", format!("test {metric}"), fmt_score(summary.test_score));
    if summary.zero_variance {
        println!("{:<16}n/a (all scores equal)", "improvement");
    } else {
        println!("{:<16}{:.3} sd over the default pipeline", "improvement", summary.improvement_sd);
    }
    println!("{:<16}{} ({} failed)", "trials", summary.n_trials, summary.n_failed);
    for c in &summary.checkpoints {
        match c.best_score {
            Some(s) => println!("checkpoint {:>6}: {s:.4}", c.mark),
            None => println!("checkpoint {:>6}: -", c.mark),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn fmt_score(s: Option<f64>) -> String {
    s.map_or_else(|| "-".to_string(), |s| format!("{s:.4}"))
}

fn report_cmd(store: &Path) -> Result<ExitCode> {
    let r = report(&read_store(store)?);
    println!("task\ttuner\tselector\tseed\tbest_template\tcv\ttest\timprovement_sd\ttrials\tfailed");
    for row in &r.rows {
        let improvement =
            if row.zero_variance { "n/a".to_string() } else { format!("{:.3}", row.improvement_sd) };
        println!(
            "{}\t{}\t{}\t{}\t{}\t{:.4}\t{}\t{}\t{}\t{}",
            row.task_id,
            row.tuner,
            row.selector,
            row.seed,
            row.best_template,
            row.cv_score,
            fmt_score(row.test_score),
            improvement,
            row.n_trials,
            row.n_failed
        );
    }
    println!();
    println!("template wins:");
    for (template, wins) in &r.template_wins {
        println!("  {template}\t{wins}");
    }
    println!("{} searches, {} trial lines", r.rows.len(), r.trial_lines);
    if !r.corrupt_lines.is_empty() {
        eprintln!("warning: skipped {} corrupt lines: {:?}", r.corrupt_lines.len(), r.corrupt_lines);
    }
    Ok(ExitCode::SUCCESS)
}

fn compare_cmd(a: &Path, b: &Path, by: CompareBy) -> Result<ExitCode> {
    let c = compare(&read_store(a)?, &read_store(b)?, by)?;
    println!("task\tA\tB\toutcome");
    for t in &c.tasks {
        println!("{}\t{:.4}\t{:.4}\t{:?}", t.task_id, t.a, t.b, t.outcome);
    }
    println!(
        "A wins {:.1}%, loses {:.1}%, ties {:.1}% of {} tasks",
        100.0 * c.win_fraction(),
        100.0 * c.loss_fraction(),
        100.0 * c.tie_fraction(),
        c.tasks.len()
    );
    Ok(ExitCode::SUCCESS)
}
