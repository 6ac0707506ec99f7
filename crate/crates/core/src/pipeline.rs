//! Composable ranking pipelines: `bm25 >> get_text >> reranker`.
//!
//! A [`Pipeline`] is an ordered list of [`Stage`]s. The first stage is a
//! source (BM25 retrieval or a loaded run file) and ignores its input; every
//! later stage transforms the ranking it receives. Document texts travel
//! beside the ranking and are only populated by a [`GetText`] stage, so a
//! reranker placed before one is rejected before any backend call.

use std::collections::{HashMap, HashSet};
use std::ops::Shr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::index::{Bm25Params, IndexError, InvertedIndex};
use crate::model::{top_k, ModelError, Query, Ranking};
use crate::rerank::{RerankError, Reranker, RunRecord};

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("stage introduced document {0:?} that was not in its input")]
    InventedDocument(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline: {0}")]
    Config(String),
    #[error("stage {stage} failed for query {query_id:?}: {source}")]
    Stage {
        stage: String,
        query_id: String,
        #[source]
        source: Box<StageError>,
    },
}

impl PipelineError {
    /// True when the failure came from a model endpoint.
    pub fn is_backend_error(&self) -> bool {
        match self {
            Self::Stage { source, .. } => matches!(**source, StageError::Rerank(RerankError::Backend { .. })),
            Self::Config(_) => false,
        }
    }
}

/// What flows between stages for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct StageState {
    pub ranking: Ranking,
    /// `doc_id -> text`, present once a text stage has run.
    pub texts: Option<HashMap<String, String>>,
    pub records: Vec<RunRecord>,
}

impl StageState {
    pub fn new(query_id: &str) -> Self {
        Self { ranking: Ranking::empty(query_id), texts: None, records: Vec::new() }
    }
}

pub trait Stage: Send + Sync {
    fn name(&self) -> String;

    fn apply(&self, query: &Query, state: StageState) -> Result<StageState, StageError>;

    /// Sources ignore their input ranking.
    fn is_source(&self) -> bool {
        false
    }

    fn requires_texts(&self) -> bool {
        false
    }

    fn provides_texts(&self) -> bool {
        false
    }

    /// Upper bound on output length for an input of `input` documents.
    fn output_bound(&self, input: usize) -> usize {
        input
    }

    /// Upper bound on backend calls for an input of `input` documents.
    fn call_estimate(&self, _input: usize) -> usize {
        0
    }
}

pub struct Bm25Retrieve {
    index: Arc<InvertedIndex>,
    params: Bm25Params,
    k: usize,
}

impl Bm25Retrieve {
    pub fn new(index: Arc<InvertedIndex>, params: Bm25Params, k: usize) -> Self {
        Self { index, params, k }
    }
}

impl Stage for Bm25Retrieve {
    fn name(&self) -> String {
        format!("bm25(k={})", self.k)
    }

    fn apply(&self, query: &Query, _state: StageState) -> Result<StageState, StageError> {
        let mut out = StageState::new(query.id());
        out.ranking = self.index.retrieve(self.params, query, self.k);
        Ok(out)
    }

    fn is_source(&self) -> bool {
        true
    }

    fn output_bound(&self, _input: usize) -> usize {
        self.k.min(self.index.num_docs())
    }
}

/// Replays rankings from an existing run; unknown queries get an empty
/// ranking.
pub struct RunSource {
    rankings: HashMap<String, Ranking>,
}

impl RunSource {
    pub fn new(rankings: impl IntoIterator<Item = Ranking>) -> Self {
        Self { rankings: rankings.into_iter().map(|r| (r.query_id().to_owned(), r)).collect() }
    }
}

impl Stage for RunSource {
    fn name(&self) -> String {
        "run".into()
    }

    fn apply(&self, query: &Query, _state: StageState) -> Result<StageState, StageError> {
        let mut out = StageState::new(query.id());
        if let Some(r) = self.rankings.get(query.id()) {
            out.ranking = r.clone();
        }
        Ok(out)
    }

    fn is_source(&self) -> bool {
        true
    }

    fn output_bound(&self, _input: usize) -> usize {
        self.rankings.values().map(Ranking::len).max().unwrap_or(0)
    }
}

pub struct GetText {
    index: Arc<InvertedIndex>,
}

impl GetText {
    pub fn new(index: Arc<InvertedIndex>) -> Self {
        Self { index }
    }
}

impl Stage for GetText {
    fn name(&self) -> String {
        "get_text".into()
    }

    fn apply(&self, _query: &Query, mut state: StageState) -> Result<StageState, StageError> {
        state.texts = Some(self.index.get_text(&state.ranking)?.into_iter().collect());
        Ok(state)
    }

    fn provides_texts(&self) -> bool {
        true
    }
}

pub struct Cut(pub usize);

impl Stage for Cut {
    fn name(&self) -> String {
        format!("cut({})", self.0)
    }

    fn apply(&self, _query: &Query, mut state: StageState) -> Result<StageState, StageError> {
        state.ranking = top_k(&state.ranking, self.0);
        Ok(state)
    }

    fn output_bound(&self, input: usize) -> usize {
        input.min(self.0)
    }
}

pub struct Identity;

impl Stage for Identity {
    fn name(&self) -> String {
        "identity".into()
    }

    fn apply(&self, _query: &Query, state: StageState) -> Result<StageState, StageError> {
        Ok(state)
    }
}

pub struct Rerank(pub Reranker);

impl Stage for Rerank {
    fn name(&self) -> String {
        let c = self.0.config();
        format!(
            "rerank({}, model={}, depth={}, window={}, stride={})",
            c.strategy, c.model, c.depth, c.window, c.stride
        )
    }

    fn apply(&self, query: &Query, mut state: StageState) -> Result<StageState, StageError> {
        let texts =
            state.texts.as_ref().ok_or_else(|| RerankError::Config("reranker input has no document texts".into()))?;
        let outcome = self.0.rerank(query, &state.ranking, texts)?;
        state.records.push(RunRecord::new(self.0.config(), query.id(), outcome.calls, outcome.unparseable));
        state.ranking = outcome.ranking;
        Ok(state)
    }

    fn requires_texts(&self) -> bool {
        true
    }

    fn call_estimate(&self, input: usize) -> usize {
        self.0.config().expected_calls(input)
    }
}

#[derive(Clone)]
pub struct Pipeline {
    stages: Vec<Arc<dyn Stage>>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.stage_names()).finish()
    }
}

impl Pipeline {
    pub fn new(first: impl Stage + 'static) -> Self {
        Self { stages: vec![Arc::new(first)] }
    }

    pub fn from_stages(stages: Vec<Arc<dyn Stage>>) -> Self {
        Self { stages }
    }

    pub fn then(mut self, stage: impl Stage + 'static) -> Self {
        self.stages.push(Arc::new(stage));
        self
    }

    pub fn then_shared(mut self, stage: Arc<dyn Stage>) -> Self {
        self.stages.push(stage);
        self
    }

    /// Appends all stages of `other`.
    pub fn then_pipeline(mut self, other: Pipeline) -> Self {
        self.stages.extend(other.stages);
        self
    }

    pub fn stages(&self) -> &[Arc<dyn Stage>] {
        &self.stages
    }

    pub fn stage_names(&self) -> Vec<String> {
        self.stages.iter().map(|s| s.name()).collect()
    }

    /// Structural checks that run before any query is processed.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |m: String| Err(PipelineError::Config(m));
        let Some(first) = self.stages.first() else {
            return invalid("pipeline has no stages".into());
        };
        if !first.is_source() {
            return invalid(format!("first stage {} is not a retrieval source", first.name()));
        }
        let mut has_texts = false;
        for stage in &self.stages[1..] {
            if stage.is_source() {
                return invalid(format!("source stage {} must come first", stage.name()));
            }
            if stage.requires_texts() && !has_texts {
                return invalid(format!("stage {} needs document texts; add get_text before it", stage.name()));
            }
            has_texts |= stage.provides_texts();
        }
        Ok(())
    }

    /// Upper bound on backend calls for one query.
    pub fn estimate_calls(&self) -> usize {
        let mut len = 0;
        let mut calls = 0;
        for stage in &self.stages {
            calls += stage.call_estimate(len);
            len = stage.output_bound(len);
        }
        calls
    }

    /// Runs every stage for one query and returns the final state.
    pub fn run(&self, query: &Query) -> Result<StageState, PipelineError> {
        self.validate()?;
        let mut state = StageState::new(query.id());
        for stage in &self.stages {
            let fail = |source: StageError| PipelineError::Stage {
                stage: stage.name(),
                query_id: query.id().to_owned(),
                source: Box::new(source),
            };
            let input_ids: Option<HashSet<String>> =
                (!stage.is_source()).then(|| state.ranking.doc_ids().map(str::to_owned).collect());
            state = stage.apply(query, state).map_err(fail)?;
            state.ranking.validate().map_err(|e| fail(e.into()))?;
            if let Some(input) = input_ids {
                if let Some(id) = state.ranking.doc_ids().find(|id| !input.contains(*id)) {
                    return Err(fail(StageError::InventedDocument(id.to_owned())));
                }
            }
        }
        Ok(state)
    }

    pub fn search(&self, query: &Query) -> Result<Ranking, PipelineError> {
        self.run(query).map(|s| s.ranking)
    }
}

/// `a >> b` appends a stage.
impl<S: Stage + 'static> Shr<S> for Pipeline {
    type Output = Pipeline;

    fn shr(self, rhs: S) -> Pipeline {
        self.then(rhs)
    }
}

impl Shr<Pipeline> for Pipeline {
    type Output = Pipeline;

    fn shr(self, rhs: Pipeline) -> Pipeline {
        self.then_pipeline(rhs)
    }
}

pub fn compose(a: Pipeline, b: impl Stage + 'static) -> Pipeline {
    a.then(b)
}

/// Per-query outcomes of [`run_batch`], keyed by query id.
pub type BatchResults = Vec<(String, Result<StageState, PipelineError>)>;

/// Runs queries independently on up to `workers` threads. Results come back
/// in query order. With `stop_on_error`, queries not yet started are skipped
/// after the first failure.
pub fn run_batch(
    pipeline: &Pipeline,
    queries: &[Query],
    workers: usize,
    stop_on_error: bool,
) -> Result<BatchResults, PipelineError> {
    pipeline.validate()?;
    let next = AtomicUsize::new(0);
    let stop = std::sync::atomic::AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<StageState, PipelineError>>>> =
        Mutex::new((0..queries.len()).map(|_| None).collect());
    let worker = || loop {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= queries.len() {
            break;
        }
        let result = pipeline.run(&queries[i]);
        if result.is_err() && stop_on_error {
            stop.store(true, Ordering::Relaxed);
        }
        slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
    };
    let workers = workers.clamp(1, queries.len().max(1));
    if workers == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(worker);
            }
        });
    }
    let slots = slots.into_inner().unwrap_or_else(|e| e.into_inner());
    Ok(queries.iter().zip(slots).filter_map(|(q, slot)| slot.map(|r| (q.id().to_owned(), r))).collect())
}
