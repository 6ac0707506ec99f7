use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::config::{BackendKind, RunConfig, StageSpec};
use super::CliError;
use crate::eval::{mean_ndcg, render_report, report_csv, EvalResult};
use crate::index::{load_index, read_corpus, save_index, CorpusFormat, InvertedIndex};
use crate::llm::{Backend, ChatRequest, ChatResponse, HttpBackend, LlmError, OracleBackend};
use crate::model::{Query, Ranking};
use crate::pipeline::{run_batch, Bm25Retrieve, Cut, GetText, Pipeline, Rerank, RunSource, Stage, StageState};
use crate::rerank::{Reranker, RunRecord};
use crate::trec::{parse_qrels, parse_queries_tsv, parse_trec_run, write_trec_run};

fn require<'a>(path: &'a Option<PathBuf>, key: &str, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or_else(|| CliError::Config(format!("no {key}: set it in the config or pass {flag}")))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn load_queries(cfg: &RunConfig) -> Result<Vec<Query>, CliError> {
    let path = require(&cfg.queries_path, "queries_path", "--queries")?;
    parse_queries_tsv(&read_text(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_index_file(cfg: &RunConfig) -> Result<Arc<InvertedIndex>, CliError> {
    let path = require(&cfg.index_path, "index_path", "--index")?;
    load_index(path).map(Arc::new).map_err(|e| CliError::Config(format!("cannot load index {}: {e}", path.display())))
}

/// Loads the saved index, or builds one in memory from the corpus when no
/// index file exists yet.
fn index_or_corpus(cfg: &RunConfig) -> Result<Arc<InvertedIndex>, CliError> {
    match (&cfg.index_path, &cfg.corpus_path) {
        (Some(p), _) if p.exists() => load_index_file(cfg),
        (_, Some(corpus)) => {
            let docs = read_corpus(corpus, CorpusFormat::from_path(corpus))?;
            Ok(Arc::new(InvertedIndex::build(docs)?))
        }
        _ => load_index_file(cfg),
    }
}

/// Stand-in used for validation and dry runs; never reaches the network.
struct Offline;

impl Backend for Offline {
    fn complete(&self, _request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        Err(LlmError::Transport("no backend in a dry run".into()))
    }
}

fn make_backend(cfg: &RunConfig, queries: &[Query], index: &InvertedIndex) -> Result<Arc<dyn Backend>, CliError> {
    match cfg.backend.kind {
        BackendKind::Http => Ok(Arc::new(HttpBackend::new(cfg.backend.http.clone())?)),
        BackendKind::Oracle => {
            let path = require(&cfg.qrels_path, "qrels_path (the oracle backend needs qrels)", "--qrels")?;
            let qrels = parse_qrels(&read_text(path)?)?;
            let docs = index.documents().iter().map(|d| (d.id.clone(), d.text.clone()));
            Ok(Arc::new(OracleBackend::new(qrels, queries, docs)))
        }
    }
}

fn metadata_path(cfg: &RunConfig, run_path: &Path) -> PathBuf {
    cfg.metadata_path.clone().unwrap_or_else(|| {
        let mut p = run_path.as_os_str().to_owned();
        p.push(".meta.jsonl");
        PathBuf::from(p)
    })
}

fn write_metadata(path: &Path, records: &[RunRecord]) -> Result<(), CliError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| CliError::Config(e.to_string()))?);
        out.push('\n');
    }
    write_text(path, &out)
}

struct BatchOutput {
    rankings: Vec<Ranking>,
    records: Vec<RunRecord>,
}

/// Runs the batch and splits results. Without `keep_going` the first
/// failure is returned; with it, failures are reported and the most severe
/// one is returned after the successful queries have been kept.
fn execute(
    pipeline: &Pipeline,
    queries: &[Query],
    workers: usize,
    keep_going: bool,
) -> (BatchOutput, Option<CliError>) {
    let mut out = BatchOutput { rankings: Vec::new(), records: Vec::new() };
    let results = match run_batch(pipeline, queries, workers, !keep_going) {
        Ok(r) => r,
        Err(e) => return (out, Some(e.into())),
    };
    let mut worst: Option<CliError> = None;
    for (qid, result) in results {
        match result {
            Ok(StageState { ranking, records, .. }) => {
                out.rankings.push(ranking);
                out.records.extend(records);
            }
            Err(e) => {
                let e = CliError::from(e);
                if keep_going {
                    eprintln!("query {qid}: {e}");
                }
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
                if !keep_going {
                    break;
                }
            }
        }
    }
    (out, worst)
}

pub(super) fn cmd_index(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    let corpus = require(&cfg.corpus_path, "corpus_path", "--corpus")?;
    let out = require(&cfg.index_path, "index_path", "--index")?;
    if out.exists() && !force {
        return Err(CliError::Config(format!("{} already exists; pass --force to rebuild", out.display())));
    }
    let docs = read_corpus(corpus, CorpusFormat::from_path(corpus))
        .map_err(|e| CliError::Config(format!("{}: {e}", corpus.display())))?;
    let index = InvertedIndex::build(docs)?;
    save_index(&index, out)?;
    println!("documents: {}", index.num_docs());
    println!("avgdl: {:.4}", index.avg_doc_length());
    println!("vocabulary: {}", index.vocabulary_size());
    Ok(())
}

pub(super) fn cmd_retrieve(cfg: &RunConfig, k: usize) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::Config("--k must be at least 1".into()));
    }
    let index = load_index_file(cfg)?;
    let queries = load_queries(cfg)?;
    let pipeline = Pipeline::new(Bm25Retrieve::new(index, cfg.bm25, k));
    let (out, err) = execute(&pipeline, &queries, cfg.workers, false);
    if let Some(e) = err {
        return Err(e);
    }
    let text = write_trec_run(&out.rankings, &cfg.run_tag)?;
    match &cfg.output_run_path {
        Some(p) => {
            write_text(p, &text)?;
            eprintln!("wrote {} queries to {}", out.rankings.len(), p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub(super) fn cmd_rerank(cfg: &RunConfig, input: &Path) -> Result<(), CliError> {
    let output = require(&cfg.output_run_path, "output_run_path", "--output")?;
    let runs = parse_trec_run(&read_text(input)?).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
    let index = load_index_file(cfg)?;
    let all_queries = load_queries(cfg)?;
    let by_id: HashMap<&str, &Query> = all_queries.iter().map(|q| (q.id(), q)).collect();
    let mut queries = Vec::with_capacity(runs.len());
    for r in &runs {
        let q = by_id.get(r.query_id()).ok_or_else(|| {
            CliError::Config(format!("run has query {:?} which is not in the queries file", r.query_id()))
        })?;
        queries.push((*q).clone());
    }

    let reranker = Reranker::new(make_backend(cfg, &all_queries, &index)?, cfg.reranker.clone())?;
    let pipeline = Pipeline::new(RunSource::new(runs)) >> GetText::new(index) >> Rerank(reranker);
    let (out, err) = execute(&pipeline, &queries, cfg.workers, false);
    if let Some(e) = err {
        return Err(e);
    }
    write_text(output, &write_trec_run(&out.rankings, &cfg.run_tag)?)?;
    let meta = metadata_path(cfg, output);
    write_metadata(&meta, &out.records)?;
    let calls: usize = out.records.iter().map(|r| r.calls).sum();
    eprintln!(
        "reranked {} queries with {} backend calls; wrote {} and {}",
        out.rankings.len(),
        calls,
        output.display(),
        meta.display()
    );
    Ok(())
}

fn run_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub(super) fn cmd_evaluate(runs: &[PathBuf], qrels: &Path, k: usize, csv: Option<&Path>) -> Result<(), CliError> {
    let qrels = parse_qrels(&read_text(qrels)?).map_err(|e| CliError::Config(format!("{}: {e}", qrels.display())))?;
    let mut results: BTreeMap<String, EvalResult> = BTreeMap::new();
    for path in runs {
        let rankings =
            parse_trec_run(&read_text(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut name = run_name(path);
        if results.contains_key(&name) {
            name = path.display().to_string();
        }
        let result = mean_ndcg(&rankings, &qrels, k)?;
        if !result.skipped.is_empty() {
            eprintln!("{name}: {} queries without relevant judgments skipped", result.skipped.len());
        }
        results.insert(name, result);
    }
    print!("{}", render_report(&results)?);
    if let Some(p) = csv {
        write_text(p, &report_csv(&results)?)?;
    }
    Ok(())
}

fn build_pipeline(
    cfg: &RunConfig,
    index: &Arc<InvertedIndex>,
    backend: Arc<dyn Backend>,
) -> Result<Pipeline, CliError> {
    let mut stages: Vec<Arc<dyn Stage>> = Vec::with_capacity(cfg.pipeline.len());
    for spec in &cfg.pipeline {
        let stage: Arc<dyn Stage> = match spec {
            StageSpec::Bm25 { k } => Arc::new(Bm25Retrieve::new(index.clone(), cfg.bm25, *k)),
            StageSpec::Run { path } => {
                let runs = parse_trec_run(&read_text(path)?)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                Arc::new(RunSource::new(runs))
            }
            StageSpec::GetText => Arc::new(GetText::new(index.clone())),
            StageSpec::Rerank => Arc::new(Rerank(Reranker::new(backend.clone(), cfg.reranker.clone())?)),
            StageSpec::Cut { k } => Arc::new(Cut(*k)),
        };
        stages.push(stage);
    }
    let pipeline = Pipeline::from_stages(stages);
    pipeline.validate()?;
    Ok(pipeline)
}

pub(super) fn cmd_pipeline(cfg: &RunConfig, dry_run: bool, keep_going: bool) -> Result<(), CliError> {
    let index = index_or_corpus(cfg)?;
    let queries = load_queries(cfg)?;
    // Structural problems surface here, before any backend exists.
    let planned = build_pipeline(cfg, &index, Arc::new(Offline))?;

    if dry_run {
        println!("stages:");
        for (i, name) in planned.stage_names().iter().enumerate() {
            println!("  {}. {name}", i + 1);
        }
        let per_query = planned.estimate_calls();
        println!("queries: {}", queries.len());
        println!("estimated backend calls: {per_query} per query, {} total", per_query * queries.len());
        return Ok(());
    }

    let output = require(&cfg.output_run_path, "output_run_path", "--output")?;
    let needs_backend = cfg.pipeline.contains(&StageSpec::Rerank);
    let pipeline =
        if needs_backend { build_pipeline(cfg, &index, make_backend(cfg, &queries, &index)?)? } else { planned };
    let (out, err) = execute(&pipeline, &queries, cfg.workers, keep_going);
    let err = match err {
        Some(e) if !keep_going => return Err(e),
        other => other,
    };

    write_text(output, &write_trec_run(&out.rankings, &cfg.run_tag)?)?;
    if !out.records.is_empty() {
        write_metadata(&metadata_path(cfg, output), &out.records)?;
    }
    if let Some(qrels_path) = &cfg.qrels_path {
        let qrels = parse_qrels(&read_text(qrels_path)?)?;
        let mut results = BTreeMap::new();
        results.insert(cfg.run_tag.clone(), mean_ndcg(&out.rankings, &qrels, cfg.k_eval)?);
        print!("{}", render_report(&results)?);
        if let Some(p) = &cfg.report_csv_path {
            write_text(p, &report_csv(&results)?)?;
        }
    }
    err.map_or(Ok(()), Err)
}
