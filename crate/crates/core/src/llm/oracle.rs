//! A backend that answers ranking prompts from known relevance grades.
//!
//! The oracle reads the prompt back with [`parse_prompt`], maps each passage
//! to the document it came from and answers as a perfect judge would:
//! listwise prompts get identifiers sorted by grade (window position breaks
//! ties), pointwise prompts get the bare grade, pairwise prompts get the
//! letter of the higher-graded passage (`A` on ties).

use std::collections::HashMap;

use super::{estimate_tokens, Backend, ChatRequest, ChatResponse, LlmError};
use crate::model::{Qrels, Query};
use crate::prompt::{normalize_passage_text, parse_prompt, untruncated_prefix, PromptShape};

#[derive(Debug, Clone)]
enum Grades {
    /// One grade table regardless of the query in the prompt.
    Fixed(HashMap<String, u32>),
    PerQuery {
        qrels: Qrels,
        /// normalized query text -> query ids sharing that text
        queries: HashMap<String, Vec<String>>,
    },
}

#[derive(Debug, Clone)]
pub struct OracleBackend {
    grades: Grades,
    /// normalized document text -> doc ids
    texts: HashMap<String, Vec<String>>,
}

fn unrecognized(msg: impl Into<String>) -> LlmError {
    LlmError::UnrecognizedPrompt(msg.into())
}

fn text_table<I, S, T>(docs: I) -> HashMap<String, Vec<String>>
where
    I: IntoIterator<Item = (S, T)>,
    S: Into<String>,
    T: AsRef<str>,
{
    let mut texts: HashMap<String, Vec<String>> = HashMap::new();
    for (id, text) in docs {
        texts.entry(normalize_passage_text(text.as_ref())).or_default().push(id.into());
    }
    texts
}

impl OracleBackend {
    /// Grades come from `qrels` for the query whose text appears in the
    /// prompt; unjudged documents grade 0.
    pub fn new<I, S, T>(qrels: Qrels, queries: &[Query], docs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut by_text: HashMap<String, Vec<String>> = HashMap::new();
        for q in queries {
            by_text.entry(normalize_passage_text(q.text())).or_default().push(q.id().to_owned());
        }
        Self { grades: Grades::PerQuery { qrels, queries: by_text }, texts: text_table(docs) }
    }

    /// A fixed `doc_id -> grade` table used for every prompt.
    pub fn with_grades<I, S, T>(grades: HashMap<String, u32>, docs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        Self { grades: Grades::Fixed(grades), texts: text_table(docs) }
    }

    fn grade_of_doc(&self, query: &str, doc_id: &str) -> Result<u32, LlmError> {
        match &self.grades {
            Grades::Fixed(g) => Ok(g.get(doc_id).copied().unwrap_or(0)),
            Grades::PerQuery { qrels, queries } => {
                let ids = queries.get(query).ok_or_else(|| unrecognized(format!("unknown query text {query:?}")))?;
                let mut grades = ids.iter().map(|qid| qrels.grade(qid, doc_id).unwrap_or(0));
                let first = grades.next().unwrap_or(0);
                if grades.all(|g| g == first) {
                    Ok(first)
                } else {
                    Err(unrecognized(format!("query text {query:?} maps to conflicting judgments")))
                }
            }
        }
    }

    fn grade_of_passage(&self, query: &str, passage: &str) -> Result<u32, LlmError> {
        let (prefix, truncated) = untruncated_prefix(passage);
        let candidates: Vec<&String> = if truncated {
            self.texts.iter().filter(|(text, _)| text.starts_with(prefix)).flat_map(|(_, ids)| ids).collect()
        } else {
            self.texts.get(passage).map(|ids| ids.iter().collect()).unwrap_or_default()
        };
        let mut grades = candidates.iter().map(|id| self.grade_of_doc(query, id));
        let first =
            grades.next().ok_or_else(|| unrecognized(format!("passage matches no known document: {passage:?}")))??;
        for g in grades {
            if g? != first {
                return Err(unrecognized(format!("passage is ambiguous: {passage:?}")));
            }
        }
        Ok(first)
    }

    /// The oracle's answer text for a prompt.
    pub fn answer(&self, request: &ChatRequest) -> Result<String, LlmError> {
        match parse_prompt(&request.messages) {
            Some(PromptShape::Pointwise { query, document }) => {
                Ok(self.grade_of_passage(&query, &document)?.to_string())
            }
            Some(PromptShape::Pairwise { query, passage_a, passage_b }) => {
                let a = self.grade_of_passage(&query, &passage_a)?;
                let b = self.grade_of_passage(&query, &passage_b)?;
                Ok(if a >= b { "A" } else { "B" }.to_owned())
            }
            Some(PromptShape::Listwise { query, passages }) => {
                let grades =
                    passages.iter().map(|p| self.grade_of_passage(&query, p)).collect::<Result<Vec<_>, _>>()?;
                let mut order: Vec<usize> = (0..grades.len()).collect();
                order.sort_by(|&i, &j| grades[j].cmp(&grades[i]).then(i.cmp(&j)));
                Ok(order.iter().map(|i| format!("[{}]", i + 1)).collect::<Vec<_>>().join(" > "))
            }
            None => Err(unrecognized("prompt does not match any known template")),
        }
    }
}

impl Backend for OracleBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let content = self.answer(request)?;
        let prompt_tokens = request.messages.iter().map(|m| estimate_tokens(&m.content) as u64).sum();
        Ok(ChatResponse { completion_tokens: estimate_tokens(&content) as u64, content, prompt_tokens })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatMessage;
    use crate::model::Document;
    use crate::prompt::{build_listwise_prompt, build_pairwise_prompt, build_pointwise_prompt, TruncationPolicy};

    fn req(bundle: crate::prompt::PromptBundle) -> ChatRequest {
        ChatRequest::new("oracle", bundle.messages, 64).unwrap()
    }

    fn grades(pairs: &[(&str, u32)]) -> HashMap<String, u32> {
        pairs.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    fn q() -> Query {
        Query::new("q1", "cats").unwrap()
    }

    #[test]
    fn listwise_sorted_by_grade() {
        let docs = [("d1", "one"), ("d2", "two"), ("d3", "three")];
        let oracle = OracleBackend::with_grades(grades(&[("d1", 0), ("d2", 3), ("d3", 1)]), docs);
        let b = build_listwise_prompt(&q(), &docs, TruncationPolicy::default()).unwrap();
        assert_eq!(oracle.complete(&req(b)).unwrap().content, "[2] > [3] > [1]");
    }

    #[test]
    fn listwise_ties_keep_window_order() {
        let docs = [("a", "x"), ("b", "y"), ("c", "z")];
        let oracle = OracleBackend::with_grades(grades(&[("c", 1)]), docs);
        let b = build_listwise_prompt(&q(), &docs, TruncationPolicy::default()).unwrap();
        assert_eq!(oracle.answer(&req(b)).unwrap(), "[3] > [1] > [2]");
    }

    #[test]
    fn pointwise_bare_grade() {
        let oracle = OracleBackend::with_grades(grades(&[("d1", 2)]), [("d1", "cats purr")]);
        let doc = Document::new("d1", "cats purr").unwrap();
        let b = build_pointwise_prompt(&q(), &doc, TruncationPolicy::default()).unwrap();
        assert_eq!(oracle.answer(&req(b)).unwrap(), "2");
    }

    #[test]
    fn pairwise_higher_grade_and_tie() {
        let docs = [("d1", "one"), ("d2", "two"), ("d3", "three")];
        let oracle = OracleBackend::with_grades(grades(&[("d1", 1), ("d2", 1), ("d3", 2)]), docs);
        let d = |id: &str, t: &str| Document::new(id, t).unwrap();
        let p = TruncationPolicy::default();
        let tie = build_pairwise_prompt(&q(), &d("d1", "one"), &d("d2", "two"), p).unwrap();
        assert_eq!(oracle.answer(&req(tie)).unwrap(), "A");
        let b_wins = build_pairwise_prompt(&q(), &d("d1", "one"), &d("d3", "three"), p).unwrap();
        assert_eq!(oracle.answer(&req(b_wins)).unwrap(), "B");
    }

    #[test]
    fn resolves_truncated_passages() {
        let long = "word ".repeat(100);
        let oracle = OracleBackend::with_grades(grades(&[("d1", 3)]), [("d1", long.as_str()), ("d2", "short")]);
        let p = TruncationPolicy::new(5).unwrap();
        let b = build_listwise_prompt(&q(), &[("d2", "short"), ("d1", long.as_str())], p).unwrap();
        assert_eq!(oracle.answer(&req(b)).unwrap(), "[2] > [1]");
    }

    #[test]
    fn per_query_grades_from_qrels() {
        let mut qrels = Qrels::new();
        qrels.insert("q1", "d1", 2);
        qrels.insert("q2", "d2", 3);
        let queries = [Query::new("q1", "cats").unwrap(), Query::new("q2", "dogs").unwrap()];
        let docs = [("d1", "one"), ("d2", "two")];
        let oracle = OracleBackend::new(qrels, &queries, docs);
        let p = TruncationPolicy::default();
        let b = build_listwise_prompt(&queries[0], &docs, p).unwrap();
        assert_eq!(oracle.answer(&req(b)).unwrap(), "[1] > [2]");
        let b = build_listwise_prompt(&queries[1], &docs, p).unwrap();
        assert_eq!(oracle.answer(&req(b)).unwrap(), "[2] > [1]");
        let other = Query::new("q3", "birds").unwrap();
        let b = build_listwise_prompt(&other, &docs, p).unwrap();
        assert!(matches!(oracle.answer(&req(b)), Err(LlmError::UnrecognizedPrompt(_))));
    }

    #[test]
    fn rejects_unknown_shapes() {
        let oracle = OracleBackend::with_grades(HashMap::new(), [("d1", "x")]);
        let r = ChatRequest::new("m", vec![ChatMessage::user("rank these please")], 8).unwrap();
        assert!(matches!(oracle.complete(&r), Err(LlmError::UnrecognizedPrompt(_))));
    }

    #[test]
    fn is_deterministic() {
        let docs = [("d1", "one"), ("d2", "two"), ("d3", "three")];
        let oracle = OracleBackend::with_grades(grades(&[("d1", 1), ("d2", 1), ("d3", 2)]), docs);
        let b = build_listwise_prompt(&q(), &docs, TruncationPolicy::default()).unwrap();
        let r = req(b);
        assert_eq!(oracle.complete(&r).unwrap(), oracle.complete(&r).unwrap());
    }
}
