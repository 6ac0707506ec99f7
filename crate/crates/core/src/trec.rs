//! TREC run (`qid Q0 docid rank score tag`) and qrels (`qid 0 docid grade`)
//! readers and writers.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{is_valid_id, ModelError, Qrels, Query, Ranking};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrecError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate entry for query {query_id:?} document {doc_id:?}")]
    Duplicate { line: usize, query_id: String, doc_id: String },
    #[error("invalid run tag {0:?}: must be non-empty and contain no whitespace")]
    InvalidTag(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn parse_err(line: usize, message: impl Into<String>) -> TrecError {
    TrecError::Parse { line, message: message.into() }
}

/// Non-blank lines with their 1-based line numbers. `\r\n` is accepted.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, fields)| !fields.is_empty())
}

/// Parses a run file into one ranking per query, in order of first
/// appearance. Entries are ordered by score descending (file order breaks
/// ties) and ranks are renumbered from 1.
pub fn parse_trec_run(text: &str) -> Result<Vec<Ranking>, TrecError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();

    for (line, fields) in content_lines(text) {
        let [qid, _q0, docid, rank, score, _tag] = fields[..] else {
            return Err(parse_err(line, format!("expected 6 fields, found {}", fields.len())));
        };
        rank.parse::<i64>().map_err(|_| parse_err(line, format!("unparseable rank {rank:?}")))?;
        let score: f64 = score.parse().map_err(|_| parse_err(line, format!("unparseable score {score:?}")))?;
        if !score.is_finite() {
            return Err(parse_err(line, format!("non-finite score {score}")));
        }
        if !seen.insert((qid.to_owned(), docid.to_owned())) {
            return Err(TrecError::Duplicate { line, query_id: qid.to_owned(), doc_id: docid.to_owned() });
        }
        groups
            .entry(qid.to_owned())
            .or_insert_with(|| {
                order.push(qid.to_owned());
                Vec::new()
            })
            .push((docid.to_owned(), score));
    }

    order
        .into_iter()
        .map(|qid| {
            let mut entries = groups.remove(&qid).unwrap_or_default();
            entries.sort_by(|a, b| b.1.total_cmp(&a.1));
            Ok(Ranking::from_ordered(qid, entries)?)
        })
        .collect()
}

/// Writes rankings as run lines with scores at 6 decimal places.
pub fn write_trec_run(rankings: &[Ranking], tag: &str) -> Result<String, TrecError> {
    if !is_valid_id(tag) {
        return Err(TrecError::InvalidTag(tag.to_owned()));
    }
    let mut out = String::new();
    for ranking in rankings {
        ranking.validate()?;
        for e in ranking.entries() {
            writeln!(out, "{} Q0 {} {} {:.6} {}", ranking.query_id(), e.doc_id, e.rank, e.score, tag)
                .expect("writing to a String cannot fail");
        }
    }
    Ok(out)
}

/// Parses a qrels file. Duplicate pairs: the last line wins.
pub fn parse_qrels(text: &str) -> Result<Qrels, TrecError> {
    let mut qrels = Qrels::new();
    for (line, fields) in content_lines(text) {
        let [qid, _iter, docid, grade] = fields[..] else {
            return Err(parse_err(line, format!("expected 4 fields, found {}", fields.len())));
        };
        let grade: i64 = grade.parse().map_err(|_| parse_err(line, format!("unparseable grade {grade:?}")))?;
        if grade < 0 {
            return Err(parse_err(line, format!("negative grade {grade}")));
        }
        let grade = u32::try_from(grade).map_err(|_| parse_err(line, "grade out of range"))?;
        qrels.insert(qid, docid, grade);
    }
    Ok(qrels)
}

/// Parses a `qid<TAB>text` topics file. Blank lines are ignored and query
/// ids must be unique.
pub fn parse_queries_tsv(text: &str) -> Result<Vec<Query>, TrecError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let (qid, body) = raw.split_once('\t').ok_or_else(|| parse_err(line, "expected qid<TAB>text"))?;
        let qid = qid.trim();
        if !seen.insert(qid.to_owned()) {
            return Err(parse_err(line, format!("duplicate query id {qid:?}")));
        }
        out.push(Query::new(qid, body.trim()).map_err(|e| parse_err(line, e.to_string()))?);
    }
    Ok(out)
}
