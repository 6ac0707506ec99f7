//! Domain value types shared by every stage: queries, documents, rankings
//! and graded relevance judgments.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid identifier {0:?}: must be non-empty and contain no whitespace")]
    InvalidId(String),
    #[error("query {0:?} has empty text")]
    EmptyQueryText(String),
    #[error("non-finite score {score} for document {doc_id:?}")]
    NonFiniteScore { doc_id: String, score: f64 },
    #[error("ranking for {query_id:?} violates invariants: {reason}")]
    InvalidRanking { query_id: String, reason: String },
}

pub(crate) fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(char::is_whitespace)
}

fn check_id(id: &str) -> Result<(), ModelError> {
    if is_valid_id(id) {
        Ok(())
    } else {
        Err(ModelError::InvalidId(id.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    id: String,
    text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, ModelError> {
        let (id, text) = (id.into(), text.into());
        check_id(&id)?;
        if text.trim().is_empty() {
            return Err(ModelError::EmptyQueryText(id));
        }
        Ok(Self { id, text })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl Document {
    /// Empty text is allowed and scores as a zero-length document.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, ModelError> {
        let id = id.into();
        check_id(&id)?;
        Ok(Self { id, text: text.into(), title: None })
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// An ordered, scored list of documents for one query.
///
/// Construction always goes through a validating path, so a `Ranking` value
/// has unique doc ids, non-increasing finite scores and ranks `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    query_id: String,
    entries: Vec<ScoredDoc>,
}

impl Ranking {
    pub fn empty(query_id: impl Into<String>) -> Self {
        Self { query_id: query_id.into(), entries: Vec::new() }
    }

    /// Builds a ranking from `(doc_id, score)` pairs that are already in rank
    /// order. Ranks are assigned `1..=n`.
    pub fn from_ordered<I, S>(query_id: impl Into<String>, ordered: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let entries = ordered
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| ScoredDoc { doc_id: doc_id.into(), score, rank: i + 1 })
            .collect();
        let ranking = Self { query_id: query_id.into(), entries };
        ranking.validate()?;
        Ok(ranking)
    }

    /// Assigns synthetic descending scores `n, n-1, ..., 1` to an ordering of
    /// doc ids. Used by rerankers that produce an order rather than scores.
    pub fn from_order<I, S>(query_id: impl Into<String>, order: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ids: Vec<String> = order.into_iter().map(Into::into).collect();
        let n = ids.len();
        Self::from_ordered(query_id, ids.into_iter().enumerate().map(|(i, id)| (id, (n - i) as f64)))
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn entries(&self) -> &[ScoredDoc] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::InvalidRanking { query_id: self.query_id.clone(), reason };
        let mut seen = HashSet::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            if !e.score.is_finite() {
                return Err(ModelError::NonFiniteScore { doc_id: e.doc_id.clone(), score: e.score });
            }
            if e.rank != i + 1 {
                return Err(bad(format!("entry {} has rank {}", i, e.rank)));
            }
            if !seen.insert(e.doc_id.as_str()) {
                return Err(bad(format!("duplicate doc id {:?}", e.doc_id)));
            }
            if i > 0 && self.entries[i - 1].score < e.score {
                return Err(bad(format!("score increases at rank {}", e.rank)));
            }
        }
        Ok(())
    }
}

/// Sorts scores descending with ties broken by doc id ascending.
pub fn ranking_from_scores<I, S>(query_id: impl Into<String>, scores: I) -> Result<Ranking, ModelError>
where
    I: IntoIterator<Item = (S, f64)>,
    S: Into<String>,
{
    let mut pairs: Vec<(String, f64)> = scores.into_iter().map(|(d, s)| (d.into(), s)).collect();
    if let Some((doc_id, score)) = pairs.iter().find(|(_, s)| !s.is_finite()) {
        return Err(ModelError::NonFiniteScore { doc_id: doc_id.clone(), score: *score });
    }
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ranking::from_ordered(query_id, pairs)
}

/// Keeps the first `min(k, n)` entries. `k == 0` yields an empty ranking.
pub fn top_k(ranking: &Ranking, k: usize) -> Ranking {
    Ranking { query_id: ranking.query_id.clone(), entries: ranking.entries.iter().take(k).cloned().collect() }
}

/// Graded relevance judgments keyed by `(query_id, doc_id)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    by_query: HashMap<String, HashMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Later insertions for the same pair override earlier ones.
    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.by_query.entry(query_id.into()).or_default().insert(doc_id.into(), grade);
    }

    /// Unjudged pairs of a judged query grade 0; `None` only when the query
    /// has no judgments at all.
    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.by_query.get(query_id).map(|docs| docs.get(doc_id).copied().unwrap_or(0))
    }

    pub fn has_query(&self, query_id: &str) -> bool {
        self.by_query.contains_key(query_id)
    }

    pub fn judgments(&self, query_id: &str) -> Option<&HashMap<String, u32>> {
        self.by_query.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.by_query.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_query.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
