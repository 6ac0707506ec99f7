//! nDCG@k against graded qrels, and plain-text or CSV result tables.
//!
//! Gain is `2^g - 1`, the discount `log2(i + 1)`, and the ideal ordering is
//! taken over every judged document of the query, retrieved or not. Queries
//! without any positively graded document are skipped from the mean.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{Qrels, Ranking};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cutoff k must be at least 1")]
    ZeroCutoff,
    #[error("negative grade {0}")]
    NegativeGrade(i64),
    #[error("duplicate ranking for query {0:?}")]
    DuplicateQuery(String),
    #[error("results mix cutoffs {0} and {1}")]
    MixedCutoff(usize, usize),
    #[error("csv: {0}")]
    Csv(String),
}

pub fn dcg_at_k(grades: &[i64], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroCutoff);
    }
    if let Some(&g) = grades.iter().find(|&&g| g < 0) {
        return Err(EvalError::NegativeGrade(g));
    }
    Ok(grades.iter().take(k).enumerate().map(|(i, &g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2()).sum())
}

/// `None` marks a query that cannot be evaluated (no judged document with a
/// positive grade).
pub fn ndcg_at_k(ranking: &Ranking, qrels: &Qrels, k: usize) -> Result<Option<f64>, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroCutoff);
    }
    let Some(judged) = qrels.judgments(ranking.query_id()) else {
        return Ok(None);
    };
    let mut ideal: Vec<i64> = judged.values().map(|&g| i64::from(g)).collect();
    if !ideal.iter().any(|&g| g > 0) {
        return Ok(None);
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let grades: Vec<i64> = ranking.doc_ids().take(k).map(|d| i64::from(judged.get(d).copied().unwrap_or(0))).collect();
    Ok(Some(dcg_at_k(&grades, k)? / dcg_at_k(&ideal, k)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub k: usize,
    pub per_query: BTreeMap<String, f64>,
    /// `None` when every query was skipped.
    pub mean: Option<f64>,
    pub skipped: Vec<String>,
}

pub fn mean_ndcg(rankings: &[Ranking], qrels: &Qrels, k: usize) -> Result<EvalResult, EvalError> {
    let mut seen = HashSet::new();
    let mut per_query = BTreeMap::new();
    let mut skipped = Vec::new();
    for r in rankings {
        if !seen.insert(r.query_id()) {
            return Err(EvalError::DuplicateQuery(r.query_id().to_owned()));
        }
        match ndcg_at_k(r, qrels, k)? {
            Some(v) => {
                per_query.insert(r.query_id().to_owned(), v);
            }
            None => skipped.push(r.query_id().to_owned()),
        }
    }
    let mean = (!per_query.is_empty()).then(|| per_query.values().sum::<f64>() / per_query.len() as f64);
    Ok(EvalResult { k, per_query, mean, skipped })
}

fn common_k<'a>(results: impl IntoIterator<Item = &'a EvalResult>) -> Result<Option<usize>, EvalError> {
    let mut k = None;
    for r in results {
        match k {
            None => k = Some(r.k),
            Some(prev) if prev != r.k => return Err(EvalError::MixedCutoff(prev, r.k)),
            _ => {}
        }
    }
    Ok(k)
}

fn format_mean(mean: Option<f64>) -> String {
    mean.map_or_else(|| "n/a".to_owned(), |m| format!("{m:.3}"))
}

/// Aligned plain-text table, one row per run, values to 3 decimals.
pub fn render_report(results: &BTreeMap<String, EvalResult>) -> Result<String, EvalError> {
    let k = common_k(results.values())?.unwrap_or(10);
    let header = ("run".to_owned(), format!("nDCG@{k}"));
    let rows: Vec<(String, String)> = results.iter().map(|(name, r)| (name.clone(), format_mean(r.mean))).collect();
    let width = rows.iter().map(|(n, _)| n.chars().count()).chain([header.0.len()]).max().unwrap_or(0);
    let mut out = String::new();
    for (name, value) in std::iter::once(&header).chain(&rows) {
        let pad = width - name.chars().count();
        writeln!(out, "{name}{}  {value}", " ".repeat(pad)).expect("writing to a String cannot fail");
    }
    Ok(out)
}

/// CSV with header `run_name,ndcg@k`; empty value for `n/a`.
pub fn report_csv(results: &BTreeMap<String, EvalResult>) -> Result<String, EvalError> {
    let k = common_k(results.values())?.unwrap_or(10);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| EvalError::Csv(e.to_string());
    w.write_record(["run_name", &format!("ndcg@{k}")]).map_err(csv_err)?;
    for (name, r) in results {
        let value = r.mean.map(|m| m.to_string()).unwrap_or_default();
        w.write_record([name.as_str(), &value]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| EvalError::Csv(e.to_string()))
}

/// Reads back [`report_csv`] output as `(k, run -> mean)`.
pub fn parse_report_csv(text: &str) -> Result<(usize, BTreeMap<String, Option<f64>>), EvalError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| EvalError::Csv(e.to_string());
    let headers = r.headers().map_err(csv_err)?.clone();
    let k = headers
        .get(1)
        .and_then(|h| h.strip_prefix("ndcg@"))
        .and_then(|k| k.parse().ok())
        .ok_or_else(|| EvalError::Csv(format!("unexpected header {headers:?}")))?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let value = match rec.get(1).unwrap_or_default() {
            "" => None,
            v => Some(v.parse().map_err(|_| EvalError::Csv(format!("bad value {v:?}")))?),
        };
        out.insert(rec.get(0).unwrap_or_default().to_owned(), value);
    }
    Ok((k, out))
}
