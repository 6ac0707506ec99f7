//! The `genrank` command line.
//!
//! Exit codes are a stable contract: 0 on success, 1 for configuration,
//! input or parse problems, 2 when a model endpoint fails (authentication,
//! transport, retries exhausted).

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{BackendKind, RunConfig, StageSpec};

use crate::rerank::Strategy;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("backend error: {0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Backend(_) => 2,
        }
    }
}

macro_rules! config_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Config(e.to_string())
            }
        }
    )*};
}

config_errors!(crate::index::IndexError, crate::trec::TrecError, crate::eval::EvalError, crate::rerank::RerankError);

impl From<crate::pipeline::PipelineError> for CliError {
    fn from(e: crate::pipeline::PipelineError) -> Self {
        if e.is_backend_error() {
            Self::Backend(e.to_string())
        } else {
            Self::Config(e.to_string())
        }
    }
}

impl From<crate::llm::LlmError> for CliError {
    fn from(e: crate::llm::LlmError) -> Self {
        match e {
            crate::llm::LlmError::InvalidRequest(m) => Self::Config(m),
            other => Self::Backend(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "genrank", version, about = "BM25 retrieval and LLM reranking experiments")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Queries processed in parallel.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    #[command(flatten)]
    pub overrides: Overrides,

    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override values from the config file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Corpus file (JSONL, or TSV for .tsv/.tab).
    #[arg(long, global = true, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Saved index file.
    #[arg(long, global = true, value_name = "PATH")]
    pub index: Option<PathBuf>,
    /// Queries as `qid<TAB>text` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub queries: Option<PathBuf>,
    /// TREC qrels with graded judgments.
    #[arg(long, global = true, value_name = "PATH")]
    pub qrels: Option<PathBuf>,
    /// Run tag written in the last column of run files.
    #[arg(long, global = true)]
    pub tag: Option<String>,
    /// Reranking strategy.
    #[arg(long, global = true, value_enum)]
    pub strategy: Option<Strategy>,
    /// Listwise window size.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Listwise step between windows.
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    /// Number of head documents the reranker may reorder.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Model name sent to the endpoint.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Root URL of an OpenAI-compatible server.
    #[arg(long, global = true, value_name = "URL")]
    pub base_url: Option<String>,
    /// Where ranking prompts are sent.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and save the BM25 index.
    Index {
        /// Overwrite an existing index file.
        #[arg(long)]
        force: bool,
    },
    /// Write the BM25 top-k for every query as a TREC run.
    Retrieve {
        /// Documents per query.
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Run file to write (stdout when omitted and not configured).
        #[arg(long, short, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Rerank an existing run file.
    Rerank {
        /// Input TREC run.
        #[arg(value_name = "RUN")]
        input: PathBuf,
        /// Reranked run file to write.
        #[arg(long, short, value_name = "PATH")]
        output: Option<PathBuf>,
        /// Metadata JSONL (defaults to the output path plus `.meta.jsonl`).
        #[arg(long, value_name = "PATH")]
        metadata: Option<PathBuf>,
    },
    /// Print nDCG@k for one or more run files.
    Evaluate {
        /// TREC run files; each becomes one table row named by file stem.
        #[arg(value_name = "RUN", required = true)]
        runs: Vec<PathBuf>,
        /// nDCG cutoff.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Also write the report as CSV.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Run the configured pipeline end to end.
    Pipeline {
        /// Print the resolved stages and a call estimate, then stop.
        #[arg(long)]
        dry_run: bool,
        /// Keep processing other queries after a query fails.
        #[arg(long)]
        keep_going: bool,
        /// Run file to write.
        #[arg(long, short, value_name = "PATH")]
        output: Option<PathBuf>,
        /// Also write the report as CSV.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
}

/// Loads the config (if any) and applies flag overrides.
fn resolve_settings(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    let set_path = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if let Some(v) = v {
            *slot = Some(v.clone());
        }
    };
    set_path(&mut cfg.corpus_path, &o.corpus);
    set_path(&mut cfg.index_path, &o.index);
    set_path(&mut cfg.queries_path, &o.queries);
    set_path(&mut cfg.qrels_path, &o.qrels);
    if let Some(v) = &o.tag {
        cfg.run_tag = v.clone();
    }
    if let Some(v) = o.strategy {
        cfg.reranker.strategy = v;
    }
    if let Some(v) = o.window {
        cfg.reranker.window = v;
    }
    if let Some(v) = o.stride {
        cfg.reranker.stride = v;
    }
    if let Some(v) = o.depth {
        cfg.reranker.depth = v;
    }
    if let Some(v) = &o.model {
        cfg.reranker.model = v.clone();
    }
    if let Some(v) = &o.base_url {
        cfg.backend.http.base_url = v.clone();
    }
    if let Some(v) = o.backend {
        cfg.backend.kind = v;
    }
    if let Some(v) = cli.workers {
        cfg.workers = v;
    }
    if cfg.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut cfg = resolve_settings(&cli)?;
    match cli.command {
        Command::Index { force } => commands::cmd_index(&cfg, force),
        Command::Retrieve { k, output } => {
            if output.is_some() {
                cfg.output_run_path = output;
            }
            commands::cmd_retrieve(&cfg, k)
        }
        Command::Rerank { input, output, metadata } => {
            if output.is_some() {
                cfg.output_run_path = output;
            }
            if metadata.is_some() {
                cfg.metadata_path = metadata;
            }
            commands::cmd_rerank(&cfg, &input)
        }
        Command::Evaluate { runs, k, csv } => {
            let qrels =
                cfg.qrels_path.clone().ok_or_else(|| CliError::Config("evaluate needs qrels (--qrels PATH)".into()))?;
            commands::cmd_evaluate(&runs, &qrels, k, csv.as_deref())
        }
        Command::Pipeline { dry_run, keep_going, output, csv } => {
            if output.is_some() {
                cfg.output_run_path = output;
            }
            if csv.is_some() {
                cfg.report_csv_path = csv;
            }
            commands::cmd_pipeline(&cfg, dry_run, keep_going)
        }
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap reports usage errors as 2, which is reserved for backend
            // failures here.
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("genrank").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let cli = parse(&["rerank", "run.txt", "--strategy", "pairwise", "--window", "5", "--workers", "3"]);
        let cfg = resolve_settings(&cli).unwrap();
        assert_eq!(cfg.reranker.strategy, Strategy::Pairwise);
        assert_eq!(cfg.reranker.window, 5);
        assert_eq!(cfg.workers, 3);
        assert_eq!(cfg.reranker.stride, 10);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[reranker]\nwindow = 8\nstride = 4\n").unwrap();
        let p = path.to_str().unwrap();
        let cfg = resolve_settings(&parse(&["--config", p, "pipeline", "--stride", "2"])).unwrap();
        assert_eq!((cfg.reranker.window, cfg.reranker.stride), (8, 2));
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 1);
        assert_eq!(CliError::Backend(String::new()).exit_code(), 2);
        let e: CliError = crate::llm::LlmError::MissingApiKey("X".into()).into();
        assert_eq!(e.exit_code(), 2);
    }
}
