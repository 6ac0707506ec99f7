//! Second-stage generative rerankers.
//!
//! Every strategy reorders only the head of the input ranking (the first
//! `rerank_depth` entries), appends the tail unchanged, and emits synthetic
//! descending scores `n, n-1, ..., 1` so the result is a valid [`Ranking`].
//! Ties always fall back to the first-stage order.

mod listwise;
mod pairwise;
mod parse;
mod pointwise;

pub use listwise::{rerank_listwise_sliding, window_starts};
pub use pairwise::{rerank_pairwise_allpairs, PairwiseOutcome};
pub use parse::{parse_pairwise_verdict, parse_permutation, parse_pointwise_score, ParsedPermutation, Verdict};
pub use pointwise::rerank_pointwise;

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{Backend, ChatRequest, LlmError};
use crate::model::{Document, ModelError, Query, Ranking};
use crate::prompt::{PromptBundle, PromptError, TruncationPolicy, MAX_WINDOW, MIN_WINDOW, PROMPT_VERSION};

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("invalid reranker configuration: {0}")]
    Config(String),
    #[error("no text for document {0:?}; add a get_text stage before reranking")]
    MissingText(String),
    #[error("unparseable model response: {0:?}")]
    Unparseable(String),
    #[error("backend failed for query {query_id:?} ({context}): {source}")]
    Backend {
        query_id: String,
        context: String,
        #[source]
        source: LlmError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Pointwise,
    Pairwise,
    Listwise,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pointwise => "pointwise",
            Self::Pairwise => "pairwise",
            Self::Listwise => "listwise",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankerConfig {
    pub strategy: Strategy,
    /// Number of head documents that are reordered.
    pub depth: usize,
    pub window: usize,
    pub stride: usize,
    pub model: String,
    pub max_doc_tokens: usize,
}

impl Default for RerankerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Listwise,
            depth: 100,
            window: 20,
            stride: 10,
            model: "gpt-4o-mini".into(),
            max_doc_tokens: crate::prompt::DEFAULT_MAX_DOC_TOKENS,
        }
    }
}

impl RerankerConfig {
    pub fn validate(&self) -> Result<(), RerankError> {
        let invalid = |m: String| Err(RerankError::Config(m));
        if self.depth == 0 {
            return invalid("depth must be at least 1".into());
        }
        if self.stride == 0 || self.stride > self.window {
            return invalid(format!("stride must be in 1..=window ({}), got {}", self.window, self.stride));
        }
        if self.strategy == Strategy::Listwise && !(MIN_WINDOW..=MAX_WINDOW).contains(&self.window) {
            return invalid(format!("window must be in {MIN_WINDOW}..={MAX_WINDOW}, got {}", self.window));
        }
        if self.model.trim().is_empty() {
            return invalid("model must be set".into());
        }
        self.truncation()?;
        Ok(())
    }

    pub fn truncation(&self) -> Result<TruncationPolicy, RerankError> {
        Ok(TruncationPolicy::new(self.max_doc_tokens)?)
    }

    /// Number of head documents for an input of length `n`.
    pub fn head_len(&self, n: usize) -> usize {
        self.depth.min(n)
    }

    /// Exact number of backend calls needed to rerank `n` documents.
    pub fn expected_calls(&self, n: usize) -> usize {
        let m = self.head_len(n);
        match self.strategy {
            Strategy::Pointwise => m,
            Strategy::Pairwise if m < 2 => 0,
            Strategy::Pairwise => m * (m - 1),
            Strategy::Listwise => window_starts(m, self.window, self.stride).len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankOutcome {
    pub ranking: Ranking,
    pub calls: usize,
    pub unparseable: usize,
}

/// One JSON-lines metadata record per reranked query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: String,
    pub strategy: Strategy,
    pub model: String,
    pub window: usize,
    pub stride: usize,
    pub depth: usize,
    pub prompt_version: String,
    pub calls: usize,
    pub unparseable: usize,
}

impl RunRecord {
    pub fn new(cfg: &RerankerConfig, query_id: &str, calls: usize, unparseable: usize) -> Self {
        Self {
            query_id: query_id.to_owned(),
            strategy: cfg.strategy,
            model: cfg.model.clone(),
            window: cfg.window,
            stride: cfg.stride,
            depth: cfg.depth,
            prompt_version: PROMPT_VERSION.to_owned(),
            calls,
            unparseable,
        }
    }
}

/// Completion budget per call. Listwise answers grow with the window.
fn max_tokens(cfg: &RerankerConfig) -> u32 {
    match cfg.strategy {
        Strategy::Pointwise => 16,
        Strategy::Pairwise => 8,
        Strategy::Listwise => (8 * cfg.window).max(64) as u32,
    }
}

pub(crate) fn request(cfg: &RerankerConfig, bundle: PromptBundle) -> Result<ChatRequest, RerankError> {
    ChatRequest::new(cfg.model.clone(), bundle.messages, max_tokens(cfg))
        .map_err(|e| RerankError::Config(e.to_string()))
}

/// Head documents with their texts; fails before any backend call if a text
/// is missing.
pub(crate) fn head_documents(
    ranking: &Ranking,
    texts: &HashMap<String, String>,
    m: usize,
) -> Result<Vec<Document>, RerankError> {
    ranking
        .doc_ids()
        .take(m)
        .map(|id| {
            let text = texts.get(id).ok_or_else(|| RerankError::MissingText(id.to_owned()))?;
            Ok(Document::new(id, text.clone())?)
        })
        .collect()
}

/// Reassembles `head order ++ tail` with synthetic scores.
pub(crate) fn assemble(
    ranking: &Ranking,
    head: impl IntoIterator<Item = String>,
    m: usize,
) -> Result<Ranking, RerankError> {
    let tail = ranking.doc_ids().skip(m).map(str::to_owned);
    Ok(Ranking::from_order(ranking.query_id(), head.into_iter().chain(tail))?)
}

/// Runs `jobs` independent tasks on at most `limit` threads and returns the
/// results in job order. On failure the error of the lowest failing job is
/// returned.
pub(crate) fn run_bounded<T, F>(jobs: usize, limit: usize, task: F) -> Result<Vec<T>, RerankError>
where
    T: Send,
    F: Fn(usize) -> Result<T, RerankError> + Sync,
{
    let workers = limit.clamp(1, 64).min(jobs);
    if workers <= 1 {
        return (0..jobs).map(&task).collect();
    }
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<T, RerankError>>>> = Mutex::new((0..jobs).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs {
                    break;
                }
                let result = task(i);
                if result.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
            });
        }
    });
    let slots = slots.into_inner().unwrap_or_else(|e| e.into_inner());
    let mut out = Vec::with_capacity(jobs);
    for slot in slots {
        match slot {
            Some(Ok(v)) => out.push(v),
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    Ok(out)
}

/// A configured reranker bound to a backend.
#[derive(Clone)]
pub struct Reranker {
    backend: Arc<dyn Backend>,
    config: RerankerConfig,
}

impl std::fmt::Debug for Reranker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Reranker").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Reranker {
    pub fn new(backend: Arc<dyn Backend>, config: RerankerConfig) -> Result<Self, RerankError> {
        config.validate()?;
        Ok(Self { backend, config })
    }

    pub fn config(&self) -> &RerankerConfig {
        &self.config
    }

    pub fn rerank(
        &self,
        query: &Query,
        ranking: &Ranking,
        texts: &HashMap<String, String>,
    ) -> Result<RerankOutcome, RerankError> {
        let backend: &dyn Backend = self.backend.as_ref();
        match self.config.strategy {
            Strategy::Pointwise => rerank_pointwise(backend, query, ranking, texts, &self.config),
            Strategy::Pairwise => {
                rerank_pairwise_allpairs(backend, query, ranking, texts, &self.config).map(|p| p.outcome)
            }
            Strategy::Listwise => rerank_listwise_sliding(backend, query, ranking, texts, &self.config),
        }
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use std::collections::HashMap;
    use std::sync::atomic::{AtomicUsize, Ordering};

    use crate::llm::{Backend, ChatRequest, ChatResponse, LlmError, OracleBackend};
    use crate::model::Ranking;

    /// Wraps a backend and counts calls.
    pub struct Counting<B> {
        pub inner: B,
        pub calls: AtomicUsize,
        pub in_flight: usize,
    }

    impl<B> Counting<B> {
        pub fn new(inner: B) -> Self {
            Self { inner, calls: AtomicUsize::new(0), in_flight: 1 }
        }

        pub fn calls(&self) -> usize {
            self.calls.load(Ordering::SeqCst)
        }
    }

    impl<B: Backend> Backend for Counting<B> {
        fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.complete(request)
        }

        fn max_in_flight(&self) -> usize {
            self.in_flight
        }
    }

    /// Always answers with the same text.
    pub struct Fixed(pub &'static str);

    impl Backend for Fixed {
        fn complete(&self, _: &ChatRequest) -> Result<ChatResponse, LlmError> {
            Ok(ChatResponse { content: self.0.into(), ..Default::default() })
        }
    }

    /// Documents `ids[i]` get text `"passage about <id>"` and `grades[i]`.
    pub fn setup(ids: &[&str], grades: &[u32]) -> (Ranking, HashMap<String, String>, OracleBackend) {
        let ranking = Ranking::from_order("q1", ids.iter().copied()).unwrap();
        let texts: HashMap<String, String> =
            ids.iter().map(|id| (id.to_string(), format!("passage about {id}"))).collect();
        let g = ids.iter().zip(grades).map(|(id, g)| (id.to_string(), *g)).collect();
        let oracle = OracleBackend::with_grades(g, texts.iter().map(|(k, v)| (k.clone(), v.clone())));
        (ranking, texts, oracle)
    }

    pub fn order(r: &Ranking) -> Vec<&str> {
        r.doc_ids().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    fn cfg(strategy: Strategy) -> RerankerConfig {
        RerankerConfig { strategy, ..Default::default() }
    }

    #[test]
    fn config_validation() {
        assert!(RerankerConfig::default().validate().is_ok());
        assert!(RerankerConfig { stride: 21, ..Default::default() }.validate().is_err());
        assert!(RerankerConfig { stride: 0, ..Default::default() }.validate().is_err());
        assert!(RerankerConfig { depth: 0, ..Default::default() }.validate().is_err());
        assert!(RerankerConfig { window: 1, stride: 1, ..Default::default() }.validate().is_err());
        assert!(RerankerConfig { max_doc_tokens: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn expected_call_counts() {
        let mut c = cfg(Strategy::Pointwise);
        c.depth = 10;
        assert_eq!(c.expected_calls(30), 10);
        c.strategy = Strategy::Pairwise;
        assert_eq!(c.expected_calls(5), 20);
        assert_eq!(c.expected_calls(1), 0);
        c.strategy = Strategy::Listwise;
        c.window = 2;
        c.stride = 1;
        assert_eq!(c.expected_calls(4), 3);
    }

    #[test]
    fn strategies_agree_when_window_covers_head() {
        let ids = ["a", "b", "c", "d", "e", "f"];
        let (ranking, texts, oracle) = setup(&ids, &[1, 0, 3, 1, 2, 0]);
        let backend: Arc<dyn Backend> = Arc::new(oracle);
        let orders: Vec<Vec<String>> = [Strategy::Pointwise, Strategy::Pairwise, Strategy::Listwise]
            .into_iter()
            .map(|s| {
                let r = Reranker::new(backend.clone(), cfg(s)).unwrap();
                let out = r.rerank(&Query::new("q1", "q").unwrap(), &ranking, &texts).unwrap();
                out.ranking.doc_ids().map(str::to_owned).collect()
            })
            .collect();
        assert_eq!(orders[0], ["c", "e", "a", "d", "b", "f"]);
        assert_eq!(orders[0], orders[1]);
        assert_eq!(orders[1], orders[2]);
    }

    #[test]
    fn run_record_json() {
        let rec = RunRecord::new(&RerankerConfig::default(), "q1", 4, 1);
        let line = serde_json::to_string(&rec).unwrap();
        assert!(line.contains(r#""strategy":"listwise""#));
        assert!(line.contains(r#""window":20"#) && line.contains(r#""stride":10"#));
        assert!(line.contains(&format!(r#""prompt_version":"{PROMPT_VERSION}""#)));
        assert_eq!(serde_json::from_str::<RunRecord>(&line).unwrap(), rec);
    }

    #[test]
    fn bounded_runner_keeps_order_and_reports_first_error() {
        let out = run_bounded(50, 8, |i| Ok(i * 2)).unwrap();
        assert_eq!(out, (0..50).map(|i| i * 2).collect::<Vec<_>>());
        let err = run_bounded(50, 1, |i| if i >= 7 { Err(RerankError::MissingText(i.to_string())) } else { Ok(i) });
        assert!(matches!(err, Err(RerankError::MissingText(s)) if s == "7"));
    }
}
