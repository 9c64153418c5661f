use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

/// Compose, tune and select machine-learning pipelines from annotated
/// primitives.
#[derive(Debug, Parser)]
#[command(name = "bazaar", version)]
struct Cli {
    /// Extra annotation directory, searched after the bundled catalog and
    /// $BAZAAR_CATALOG. Repeatable.
    #[arg(long = "catalog", global = true, value_name = "DIR")]
    catalogs: Vec<PathBuf>,

    /// Let later catalog directories replace same-named primitives.
    #[arg(long, global = true)]
    shadow: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Render {
    Text,
    Dot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the primitives in the catalog.
    ListPrimitives,

    /// Recover the graph of a pipeline description.
    Recover {
        #[arg(long, value_name = "FILE")]
        pipeline: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        render: Render,
    },

    /// Fit a pipeline description on a task's training split.
    Fit {
        #[arg(long, value_name = "DIR")]
        task: PathBuf,
        #[arg(long, value_name = "FILE")]
        pipeline: PathBuf,
        /// JSON object of hyperparameters keyed "<step>.<name>"; unset keys
        /// take their defaults.
        #[arg(long, value_name = "FILE")]
        lambda: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Print the context after fitting.
        #[arg(long)]
        dump_context: bool,
    },

    /// Predict with a fitted pipeline and score when the split has targets.
    Predict {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "DIR")]
        task: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Write predictions as CSV here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },

    /// Search templates and hyperparameters for a task.
    Search {
        #[arg(long, value_name = "DIR")]
        task: PathBuf,
        #[arg(long, default_value_t = 50)]
        budget: usize,
        /// Stop starting new trials after this many seconds.
        #[arg(long, value_name = "SECONDS")]
        time_limit: Option<f64>,
        #[arg(long = "cv-k", default_value_t = bazaar::search::DEFAULT_CV_FOLDS)]
        cv_k: usize,
        #[arg(long, default_value = "gp-ei")]
        tuner: String,
        #[arg(long, default_value = "ucb1")]
        selector: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Results store to append to.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Only use these templates (comma-separated names).
        #[arg(long, value_delimiter = ',')]
        templates: Option<Vec<String>>,
        /// Extra template directory. Repeatable.
        #[arg(long = "template-dir", value_name = "DIR")]
        template_dirs: Vec<PathBuf>,
        /// Report the best score at these marks: iterations (30) or
        /// wall-clock time (90s, 2m). Comma-separated.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<String>,
        /// Save the re-fitted best pipeline here.
        #[arg(long, value_name = "FILE")]
        save_model: Option<PathBuf>,
    },

    /// Summarize a results store.
    Report {
        store: PathBuf,
    },

    /// Compare the best per-task scores of two results stores.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Score to compare: test or cv.
        #[arg(long, default_value = "test")]
        by: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Output piped into `head` and the like is not an error.
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}
