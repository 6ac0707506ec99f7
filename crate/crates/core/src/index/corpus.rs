use std::path::Path;

use super::IndexError;
use crate::model::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One JSON object per line with `id`, `text` and optional `title`.
    Jsonl,
    /// `id<TAB>text`
    Tsv,
}

impl CorpusFormat {
    /// `.tsv`/`.tab` are TSV, anything else is read as JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv" | "tab") => Self::Tsv,
            _ => Self::Jsonl,
        }
    }
}

#[derive(serde::Deserialize)]
struct JsonDoc {
    id: String,
    text: String,
    #[serde(default)]
    title: Option<String>,
}

fn corpus_err(line: usize, message: impl ToString) -> IndexError {
    IndexError::Corpus { line, message: message.to_string() }
}

pub fn parse_jsonl_corpus(text: &str) -> Result<Vec<Document>, IndexError> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: JsonDoc = serde_json::from_str(line).map_err(|e| corpus_err(i + 1, e))?;
        let mut doc = Document::new(raw.id, raw.text).map_err(|e| corpus_err(i + 1, e))?;
        doc.title = raw.title;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn parse_tsv_corpus(text: &str) -> Result<Vec<Document>, IndexError> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line.split_once('\t').ok_or_else(|| corpus_err(i + 1, "expected id<TAB>text"))?;
        docs.push(Document::new(id, body).map_err(|e| corpus_err(i + 1, e))?);
    }
    Ok(docs)
}

pub fn read_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Document>, IndexError> {
    let text = std::fs::read_to_string(path)?;
    match format {
        CorpusFormat::Jsonl => parse_jsonl_corpus(&text),
        CorpusFormat::Tsv => parse_tsv_corpus(&text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_with_optional_title() {
        let docs =
            parse_jsonl_corpus("{\"id\":\"d1\",\"text\":\"a b\"}\n\n{\"id\":\"d2\",\"text\":\"c\",\"title\":\"T\"}\n")
                .unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1].title.as_deref(), Some("T"));
        assert!(matches!(parse_jsonl_corpus("{\"id\":\"d1\"}"), Err(IndexError::Corpus { line: 1, .. })));
    }

    #[test]
    fn tsv_keeps_tabs_in_text() {
        let docs = parse_tsv_corpus("d1\tone\ttwo\r\nd2\t\n").unwrap();
        assert_eq!(docs[0].text, "one\ttwo");
        assert_eq!(docs[1].text, "");
        assert!(matches!(parse_tsv_corpus("d1 no tab"), Err(IndexError::Corpus { line: 1, .. })));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(CorpusFormat::from_path(Path::new("c.tsv")), CorpusFormat::Tsv);
        assert_eq!(CorpusFormat::from_path(Path::new("c.jsonl")), CorpusFormat::Jsonl);
    }
}
