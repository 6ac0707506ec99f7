//! Index persistence as a single JSON document with a format header.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IndexError, InvertedIndex, Posting};
use crate::model::Document;

pub const INDEX_FORMAT: &str = "genrank-index";
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct StoredRef<'a> {
    format: &'static str,
    version: u32,
    documents: &'a [Document],
    doc_lengths: &'a [u32],
    postings: &'a BTreeMap<String, Vec<Posting>>,
}

#[derive(Deserialize)]
struct Stored {
    format: String,
    version: u32,
    documents: Vec<Document>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
}

pub fn save_index(index: &InvertedIndex, path: &Path) -> Result<(), IndexError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let stored = StoredRef {
        format: INDEX_FORMAT,
        version: INDEX_FORMAT_VERSION,
        documents: index.documents(),
        doc_lengths: index.doc_lengths_raw(),
        postings: index.postings_raw(),
    };
    serde_json::to_writer(&mut out, &stored).map_err(|e| IndexError::Format(e.to_string()))?;
    out.flush()?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<InvertedIndex, IndexError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let stored: Stored = serde_json::from_reader(reader).map_err(|e| IndexError::Format(e.to_string()))?;
    if stored.format != INDEX_FORMAT || stored.version != INDEX_FORMAT_VERSION {
        return Err(IndexError::Format(format!("unsupported index format {}/{}", stored.format, stored.version)));
    }
    let n = stored.documents.len();
    if stored.doc_lengths.len() != n {
        return Err(IndexError::Format("document length table size mismatch".into()));
    }
    if stored.documents.windows(2).any(|w| w[0].id >= w[1].id) {
        return Err(IndexError::Format("document table is not sorted by id".into()));
    }
    for (term, list) in &stored.postings {
        let sorted = list.windows(2).all(|w| w[0].0 < w[1].0);
        if !sorted || list.iter().any(|&(d, tf)| d as usize >= n || tf == 0) {
            return Err(IndexError::Format(format!("corrupt posting list for {term:?}")));
        }
    }
    InvertedIndex::from_parts(stored.documents, stored.doc_lengths, stored.postings)
}
