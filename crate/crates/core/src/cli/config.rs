//! The TOML run configuration.
//!
//! ```toml
//! corpus_path = "corpus.jsonl"
//! index_path = "index.json"
//! queries_path = "queries.tsv"
//! qrels_path = "qrels.txt"
//! output_run_path = "run.txt"
//! run_tag = "listwise"
//! k_eval = 10
//!
//! [backend]
//! kind = "http"
//! base_url = "https://api.openai.com"
//!
//! [reranker]
//! strategy = "listwise"
//! window = 20
//! stride = 10
//!
//! [[pipeline]]
//! stage = "bm25"
//! k = 100
//! [[pipeline]]
//! stage = "get_text"
//! [[pipeline]]
//! stage = "rerank"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! API keys never appear here; `backend.api_key_env` names the variable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::index::Bm25Params;
use crate::llm::BackendConfig;
use crate::rerank::RerankerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Http,
    /// Answers from qrels; needs `qrels_path`.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: BackendKind,
    #[serde(flatten)]
    pub http: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageSpec {
    Bm25 {
        k: usize,
    },
    /// Load rankings from an existing run file.
    Run {
        path: PathBuf,
    },
    GetText,
    Rerank,
    Cut {
        k: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_path: Option<PathBuf>,
    pub index_path: Option<PathBuf>,
    pub queries_path: Option<PathBuf>,
    pub qrels_path: Option<PathBuf>,
    pub output_run_path: Option<PathBuf>,
    /// Defaults to the run path with `.meta.jsonl` appended.
    pub metadata_path: Option<PathBuf>,
    pub report_csv_path: Option<PathBuf>,
    pub run_tag: String,
    pub k_eval: usize,
    pub workers: usize,
    pub bm25: Bm25Params,
    pub backend: BackendSection,
    pub reranker: RerankerConfig,
    pub pipeline: Vec<StageSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus_path: None,
            index_path: None,
            queries_path: None,
            qrels_path: None,
            output_run_path: None,
            metadata_path: None,
            report_csv_path: None,
            run_tag: "genrank".into(),
            k_eval: 10,
            workers: 1,
            bm25: Bm25Params::default(),
            backend: BackendSection::default(),
            reranker: RerankerConfig::default(),
            pipeline: vec![StageSpec::Bm25 { k: 100 }, StageSpec::GetText, StageSpec::Rerank],
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.corpus_path,
            &mut cfg.index_path,
            &mut cfg.queries_path,
            &mut cfg.qrels_path,
            &mut cfg.output_run_path,
            &mut cfg.metadata_path,
            &mut cfg.report_csv_path,
        ] {
            resolve(base, p);
        }
        for stage in &mut cfg.pipeline {
            if let StageSpec::Run { path } = stage {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        // Inputs named by the config must exist now, not halfway through a run.
        for p in [&cfg.corpus_path, &cfg.queries_path, &cfg.qrels_path].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !crate::model::is_valid_id(&self.run_tag) {
            return Err(CliError::Config(format!("invalid run_tag {:?}", self.run_tag)));
        }
        if self.k_eval == 0 {
            return Err(CliError::Config("k_eval must be at least 1".into()));
        }
        Bm25Params::new(self.bm25.k1, self.bm25.b).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}
