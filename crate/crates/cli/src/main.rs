//! `tl`: topic labeling and label scoring from the command line.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tl_core::config::ModelOn;
use tl_core::{CorpusFormat, DocSource};

use exit::Status;

#[derive(Parser)]
#[command(name = "tl", version, about = "Summarize, cluster, label and score document topics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline and print the approach × dataset score grid.
    Run(RunArgs),
    /// Continue a recorded run, recomputing only what changed or is missing.
    Resume(ResumeArgs),
    /// Score a set of labels against their topics' documents.
    Eval(EvalArgs),
    /// Summarize every document of a corpus.
    Summarize(SummarizeArgs),
    /// Cluster documents into topics with ranked keywords.
    Topics(TopicsArgs),
    /// Choose up to ten documents per topic with one or more strategies.
    Select(SelectArgs),
    /// Generate a label per topic from a selection.
    Label(LabelArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated strategies, by number or name (1,2,3,4).
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ResumeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Must match the recorded configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// jsonl, csv or txt-dir; inferred from the path when omitted.
    #[arg(long)]
    format: Option<CorpusFormat>,
    #[arg(long)]
    strip_newsgroup_boilerplate: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value = "raw")]
    doc_source: DocSource,
    #[arg(long)]
    summaries: Option<PathBuf>,
    /// Config file supplying embedding settings; mock embeddings otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    include_outliers: bool,
    #[arg(long, default_value = "metric_report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SummarizeArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "summaries.json")]
    out: PathBuf,
}

#[derive(Args)]
struct TopicsArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Summaries to cluster; required unless `--model-on raw`.
    #[arg(long)]
    summaries: Option<PathBuf>,
    #[arg(long, default_value = "summary")]
    model_on: ModelOn,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Import an externally fitted topic file instead of clustering.
    #[arg(long)]
    import: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "topics.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    summaries: PathBuf,
    #[arg(long, default_value = "1,2,3,4")]
    strategy: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k_sub: Option<usize>,
    #[arg(long)]
    include_outliers: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "selections.json")]
    out: PathBuf,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    selections: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    summaries: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "labels.json")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Status::Ok.into();
        }
        Err(e) => {
            eprint!("{e}");
            return Status::Invalid.into();
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Resume(a) => commands::resume(a),
        Command::Eval(a) => commands::eval(a),
        Command::Summarize(a) => commands::summarize(a),
        Command::Topics(a) => commands::topics(a),
        Command::Select(a) => commands::select(a),
        Command::Label(a) => commands::label(a),
    };
    match result {
        Ok(status) => status.into(),
        Err(e) => {
            eprintln!("error: {e}");
            e.status.into()
        }
    }
}
