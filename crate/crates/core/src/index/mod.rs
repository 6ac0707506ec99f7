//! First-stage retrieval: tokenization, inverted index construction and
//! Okapi BM25 scoring.

mod corpus;
mod store;

pub use corpus::{parse_jsonl_corpus, parse_tsv_corpus, read_corpus, CorpusFormat};
pub use store::{load_index, save_index, INDEX_FORMAT, INDEX_FORMAT_VERSION};

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::model::{ranking_from_scores, Document, ModelError, Query, Ranking};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus has no tokens (average document length would be 0)")]
    ZeroAverageLength,
    #[error("duplicate document id {0:?}")]
    DuplicateDoc(String),
    #[error("unknown document id {0:?}")]
    UnknownDoc(String),
    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    InvalidParams { k1: f64, b: f64 },
    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Lowercases and splits on maximal runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, IndexError> {
        if !(k1.is_finite() && k1 >= 0.0 && (0.0..=1.0).contains(&b)) {
            return Err(IndexError::InvalidParams { k1, b });
        }
        Ok(Self { k1, b })
    }
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// One `(document number, term frequency)` pair. Document numbers index the
/// id-sorted document table, so posting lists are sorted by doc id.
pub type Posting = (u32, u32);

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    docs: Vec<Document>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
    avg_doc_length: f64,
    by_id: HashMap<String, u32>,
}

impl InvertedIndex {
    /// Builds the index. The result does not depend on corpus order.
    pub fn build<I>(corpus: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = Document>,
    {
        let mut docs: Vec<Document> = corpus.into_iter().collect();
        if docs.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = docs.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(IndexError::DuplicateDoc(w[0].id.clone()));
        }

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (num, doc) in docs.iter().enumerate() {
            let tokens = tokenize(&doc.text);
            doc_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((num as u32, count));
            }
        }
        Self::from_parts(docs, doc_lengths, postings)
    }

    pub(crate) fn from_parts(
        docs: Vec<Document>,
        doc_lengths: Vec<u32>,
        postings: BTreeMap<String, Vec<Posting>>,
    ) -> Result<Self, IndexError> {
        if docs.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = total as f64 / docs.len() as f64;
        if avg_doc_length <= 0.0 {
            return Err(IndexError::ZeroAverageLength);
        }
        let by_id = docs.iter().enumerate().map(|(i, d)| (d.id.clone(), i as u32)).collect();
        Ok(Self { docs, doc_lengths, postings, avg_doc_length, by_id })
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.by_id.get(doc_id).map(|&n| self.doc_lengths[n as usize])
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&n| &self.docs[n as usize])
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub(crate) fn doc_lengths_raw(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub(crate) fn postings_raw(&self) -> &BTreeMap<String, Vec<Posting>> {
        &self.postings
    }

    /// Non-negative idf: `ln((N - df + 0.5) / (df + 0.5) + 1)`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.doc_freq(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, params: Bm25Params, idf: f64, tf: u32, dl: u32) -> f64 {
        let tf = f64::from(tf);
        let norm = 1.0 - params.b + params.b * f64::from(dl) / self.avg_doc_length;
        idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
    }

    /// BM25 score of one document. Repeated query terms count once.
    pub fn bm25_score(&self, params: Bm25Params, query_terms: &[String], doc_id: &str) -> Result<f64, IndexError> {
        let num = *self.by_id.get(doc_id).ok_or_else(|| IndexError::UnknownDoc(doc_id.to_owned()))?;
        let dl = self.doc_lengths[num as usize];
        let mut score = 0.0;
        for term in distinct(query_terms) {
            let list = self.postings(term);
            if let Ok(pos) = list.binary_search_by_key(&num, |p| p.0) {
                score += self.term_weight(params, self.idf(term), list[pos].1, dl);
            }
        }
        Ok(score)
    }

    /// Term-at-a-time BM25 over every matching document, cut to the top `k`.
    pub fn retrieve(&self, params: Bm25Params, query: &Query, k: usize) -> Ranking {
        let terms = tokenize(query.text());
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in distinct(&terms) {
            let idf = self.idf(term);
            for &(num, tf) in self.postings(term) {
                let w = self.term_weight(params, idf, tf, self.doc_lengths[num as usize]);
                *acc.entry(num).or_default() += w;
            }
        }
        let scored = acc.into_iter().filter(|&(_, s)| s > 0.0).map(|(num, s)| (self.docs[num as usize].id.clone(), s));
        let ranking = ranking_from_scores(query.id(), scored).expect("BM25 weights are finite for a valid index");
        crate::model::top_k(&ranking, k)
    }

    /// Document texts in ranking order.
    pub fn get_text(&self, ranking: &Ranking) -> Result<Vec<(String, String)>, IndexError> {
        ranking
            .doc_ids()
            .map(|id| {
                self.document(id)
                    .map(|d| (id.to_owned(), d.text.clone()))
                    .ok_or_else(|| IndexError::UnknownDoc(id.to_owned()))
            })
            .collect()
    }
}

fn distinct(terms: &[String]) -> impl Iterator<Item = &str> {
    let mut seen = HashSet::new();
    terms.iter().map(String::as_str).filter(move |t| seen.insert(*t))
}
