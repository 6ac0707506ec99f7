//! Pointwise, pairwise and listwise prompt construction.
//!
//! Wording lives in the versioned template files under `templates/`; every
//! run records [`PROMPT_VERSION`] so outputs can be traced to the exact text
//! the model saw. Passage and query text is whitespace-normalized to a single
//! line before insertion, which keeps the rendered prompts line-oriented and
//! lets [`parse_prompt`] recover their structure.

mod template;

pub use template::{render, TemplateError};

use thiserror::Error;

use crate::llm::{estimate_tokens, ChatMessage, Role};
use crate::model::{Document, Query};

pub const PROMPT_VERSION: &str = include_str!("../../templates/v1/VERSION").trim_ascii();

const LISTWISE_SYSTEM: &str = include_str!("../../templates/v1/listwise_system.txt");
const LISTWISE_USER: &str = include_str!("../../templates/v1/listwise_user.txt");
const POINTWISE_SYSTEM: &str = include_str!("../../templates/v1/pointwise_system.txt");
const POINTWISE_USER: &str = include_str!("../../templates/v1/pointwise_user.txt");
const PAIRWISE_SYSTEM: &str = include_str!("../../templates/v1/pairwise_system.txt");
const PAIRWISE_USER: &str = include_str!("../../templates/v1/pairwise_user.txt");

pub const POINTWISE_INSTRUCTION: &str = "Output only an integer from 0 to 3.";
pub const PAIRWISE_INSTRUCTION: &str = "Output only the letter A or B.";
pub const LISTWISE_INSTRUCTION: &str = "in the exact format [i] > [j] > ... and nothing else.";

/// Highest grade on the pointwise scale.
pub const MAX_GRADE: u32 = 3;

pub const MIN_WINDOW: usize = 2;
pub const MAX_WINDOW: usize = 100;

pub const DEFAULT_MAX_DOC_TOKENS: usize = 300;

const ELLIPSIS: char = '…';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("pairwise prompt needs two distinct documents, got {0:?} twice")]
    SameDocument(String),
    #[error("listwise window must hold {MIN_WINDOW}..={MAX_WINDOW} passages, got {0}")]
    WindowSize(usize),
    #[error("truncation budget must be at least 1 token")]
    ZeroBudget,
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TruncationPolicy {
    max_doc_tokens: usize,
}

impl TruncationPolicy {
    pub fn new(max_doc_tokens: usize) -> Result<Self, PromptError> {
        if max_doc_tokens == 0 {
            return Err(PromptError::ZeroBudget);
        }
        Ok(Self { max_doc_tokens })
    }

    pub fn max_doc_tokens(&self) -> usize {
        self.max_doc_tokens
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { max_doc_tokens: DEFAULT_MAX_DOC_TOKENS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub messages: Vec<ChatMessage>,
    /// Doc id at each 1-based listwise position; empty for other shapes.
    pub window_doc_ids: Vec<String>,
}

/// Cuts text over budget at the last whitespace boundary within
/// `4 * max_doc_tokens` characters and appends `…`. Without a usable
/// boundary the cut is hard.
pub fn truncate_doc(text: &str, policy: TruncationPolicy) -> String {
    if estimate_tokens(text) <= policy.max_doc_tokens {
        return text.to_owned();
    }
    let limit = 4 * policy.max_doc_tokens;
    let (end, next) = match text.char_indices().nth(limit) {
        Some((i, c)) => (i, Some(c)),
        None => (text.len(), None),
    };
    let prefix = &text[..end];
    let cut = if next.is_some_and(char::is_whitespace) {
        prefix
    } else {
        match prefix.rfind(char::is_whitespace) {
            Some(i) => &prefix[..i],
            None => prefix,
        }
    };
    let cut = match cut.trim_end() {
        "" => prefix,
        trimmed => trimmed,
    };
    format!("{cut}{ELLIPSIS}")
}

/// Collapses every whitespace run to one space so a passage fits one line.
fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn passage(text: &str, policy: TruncationPolicy) -> String {
    truncate_doc(&one_line(text), policy)
}

fn bundle(system: &str, user: String, window_doc_ids: Vec<String>) -> PromptBundle {
    PromptBundle {
        messages: vec![ChatMessage::system(system.trim_end()), ChatMessage::user(user.trim_end())],
        window_doc_ids,
    }
}

pub fn build_pointwise_prompt(
    query: &Query,
    doc: &Document,
    policy: TruncationPolicy,
) -> Result<PromptBundle, PromptError> {
    let user =
        render(POINTWISE_USER, &[("query", &one_line(query.text())), ("document", &passage(&doc.text, policy))])?;
    Ok(bundle(POINTWISE_SYSTEM, user, Vec::new()))
}

pub fn build_pairwise_prompt(
    query: &Query,
    doc_a: &Document,
    doc_b: &Document,
    policy: TruncationPolicy,
) -> Result<PromptBundle, PromptError> {
    if doc_a.id == doc_b.id {
        return Err(PromptError::SameDocument(doc_a.id.clone()));
    }
    let user = render(
        PAIRWISE_USER,
        &[
            ("query", &one_line(query.text())),
            ("passage_a", &passage(&doc_a.text, policy)),
            ("passage_b", &passage(&doc_b.text, policy)),
        ],
    )?;
    Ok(bundle(PAIRWISE_SYSTEM, user, Vec::new()))
}

pub fn build_listwise_prompt<S: AsRef<str>, T: AsRef<str>>(
    query: &Query,
    window: &[(S, T)],
    policy: TruncationPolicy,
) -> Result<PromptBundle, PromptError> {
    if !(MIN_WINDOW..=MAX_WINDOW).contains(&window.len()) {
        return Err(PromptError::WindowSize(window.len()));
    }
    let passages = window
        .iter()
        .enumerate()
        .map(|(i, (_, text))| format!("[{}] {}", i + 1, passage(text.as_ref(), policy)))
        .collect::<Vec<_>>()
        .join("\n");
    let num = window.len().to_string();
    let user = render(LISTWISE_USER, &[("num", &num), ("query", &one_line(query.text())), ("passages", &passages)])?;
    let ids = window.iter().map(|(id, _)| id.as_ref().to_owned()).collect();
    Ok(bundle(LISTWISE_SYSTEM, user, ids))
}

/// The structure recovered from a rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptShape {
    Pointwise { query: String, document: String },
    Pairwise { query: String, passage_a: String, passage_b: String },
    Listwise { query: String, passages: Vec<String> },
}

fn field<'a>(content: &'a str, label: &str) -> Option<&'a str> {
    content.lines().find_map(|l| l.strip_prefix(label))
}

/// Recognizes prompts produced by this module's builders. Returns `None` for
/// anything else.
pub fn parse_prompt(messages: &[ChatMessage]) -> Option<PromptShape> {
    let user = &messages.iter().rev().find(|m| m.role == Role::User)?.content;
    let last_line = user.lines().last()?.trim_end();
    if last_line == POINTWISE_INSTRUCTION {
        Some(PromptShape::Pointwise {
            query: field(user, "Query: ")?.to_owned(),
            document: field(user, "Document: ")?.to_owned(),
        })
    } else if last_line == PAIRWISE_INSTRUCTION {
        Some(PromptShape::Pairwise {
            query: field(user, "Query: ")?.to_owned(),
            passage_a: field(user, "Passage A: ")?.to_owned(),
            passage_b: field(user, "Passage B: ")?.to_owned(),
        })
    } else if last_line.ends_with(LISTWISE_INSTRUCTION) {
        let query = field(user, "Search Query: ")?.to_owned();
        let mut passages = Vec::new();
        for line in user.lines() {
            let marker = format!("[{}] ", passages.len() + 1);
            if let Some(text) = line.strip_prefix(&marker) {
                passages.push(text.to_owned());
            } else if line == marker.trim_end() {
                passages.push(String::new());
            }
        }
        (passages.len() >= MIN_WINDOW).then_some(PromptShape::Listwise { query, passages })
    } else {
        None
    }
}

/// Strips the truncation marker, returning the kept prefix and whether the
/// passage was truncated.
pub fn untruncated_prefix(passage: &str) -> (&str, bool) {
    match passage.strip_suffix(ELLIPSIS) {
        Some(p) => (p, true),
        None => (passage, false),
    }
}

/// Normalizes text the same way the builders do before insertion.
pub fn normalize_passage_text(text: &str) -> String {
    one_line(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(text: &str) -> Query {
        Query::new("q1", text).unwrap()
    }

    fn d(id: &str, text: &str) -> Document {
        Document::new(id, text).unwrap()
    }

    fn budget(n: usize) -> TruncationPolicy {
        TruncationPolicy::new(n).unwrap()
    }

    fn user_content(b: &PromptBundle) -> &str {
        &b.messages[1].content
    }

    #[test]
    fn truncate_identity_within_budget() {
        assert_eq!(truncate_doc("a b", budget(10)), "a b");
    }

    #[test]
    fn truncate_hard_cut_without_whitespace() {
        assert_eq!(truncate_doc(&"x".repeat(100), budget(1)), "xxxx…");
    }

    #[test]
    fn truncate_at_word_boundary() {
        // 4 * 2 = 8 chars: "alpha be" -> last boundary after "alpha"
        assert_eq!(truncate_doc("alpha beta gamma", budget(2)), "alpha…");
        // boundary right at the limit keeps the full prefix
        assert_eq!(truncate_doc("abcd efgh ijkl", budget(1)), "abcd…");
        assert_eq!(truncate_doc("    xxxxxxxxxxxx", budget(1)), "    …");
    }

    #[test]
    fn pointwise_template() {
        let b = build_pointwise_prompt(&q("cats"), &d("d1", "cats purr"), budget(300)).unwrap();
        let u = user_content(&b);
        assert!(u.contains("Query: cats"));
        assert!(u.contains("Document: cats purr"));
        assert!(u.ends_with(POINTWISE_INSTRUCTION));
        assert!(b.window_doc_ids.is_empty());
        assert_eq!(b.messages[0].role, Role::System);
        let again = build_pointwise_prompt(&q("cats"), &d("d1", "cats purr"), budget(300)).unwrap();
        assert_eq!(b, again);
    }

    #[test]
    fn pairwise_template() {
        let b = build_pairwise_prompt(&q("q"), &d("d1", "first"), &d("d2", "second"), budget(300)).unwrap();
        let u = user_content(&b);
        let (a, bb) = (u.find("Passage A:").unwrap(), u.find("Passage B:").unwrap());
        assert!(a < bb);
        assert!(u.ends_with(PAIRWISE_INSTRUCTION));
        assert!(b.window_doc_ids.is_empty());

        let swapped = build_pairwise_prompt(&q("q"), &d("d2", "second"), &d("d1", "first"), budget(300)).unwrap();
        let s = user_content(&swapped);
        assert!(s.contains("Passage A: second") && s.contains("Passage B: first"));
        assert_eq!(u.lines().last(), s.lines().last());

        assert_eq!(
            build_pairwise_prompt(&q("q"), &d("d1", "x"), &d("d1", "x"), budget(300)),
            Err(PromptError::SameDocument("d1".into()))
        );
    }

    #[test]
    fn listwise_template() {
        let b = build_listwise_prompt(&q("q"), &[("d9", "t1"), ("d4", "t2")], budget(300)).unwrap();
        let u = user_content(&b);
        assert!(u.contains("[1] t1\n[2] t2"));
        assert!(u.ends_with(LISTWISE_INSTRUCTION));
        assert_eq!(b.window_doc_ids, ["d9", "d4"]);
        assert_eq!(build_listwise_prompt(&q("q"), &[("d9", "t1")], budget(300)), Err(PromptError::WindowSize(1)));
        let big: Vec<(String, String)> = (0..101).map(|i| (format!("d{i}"), "t".into())).collect();
        assert_eq!(build_listwise_prompt(&q("q"), &big, budget(300)), Err(PromptError::WindowSize(101)));
    }

    #[test]
    fn multiline_text_is_flattened() {
        let b = build_listwise_prompt(&q("two\nlines"), &[("a", "x\n\ny"), ("b", "")], budget(300)).unwrap();
        assert_eq!(
            parse_prompt(&b.messages),
            Some(PromptShape::Listwise { query: "two lines".into(), passages: vec!["x y".into(), String::new()] })
        );
    }

    #[test]
    fn parse_recognizes_all_shapes() {
        let p = build_pointwise_prompt(&q("cats"), &d("d1", "cats purr"), budget(300)).unwrap();
        assert_eq!(
            parse_prompt(&p.messages),
            Some(PromptShape::Pointwise { query: "cats".into(), document: "cats purr".into() })
        );
        let p = build_pairwise_prompt(&q("cats"), &d("d1", "a"), &d("d2", "b"), budget(300)).unwrap();
        assert_eq!(
            parse_prompt(&p.messages),
            Some(PromptShape::Pairwise { query: "cats".into(), passage_a: "a".into(), passage_b: "b".into() })
        );
        assert_eq!(parse_prompt(&[ChatMessage::user("hello")]), None);
    }

    #[test]
    fn prompt_version_is_pinned() {
        assert_eq!(PROMPT_VERSION, "genrank-prompts-v1");
    }

    proptest! {
        #[test]
        fn truncation_respects_budget(text in "[a-z \n]{0,200}", n in 1usize..20) {
            let out = truncate_doc(&text, budget(n));
            prop_assert!(estimate_tokens(&out) <= n + 1);
        }

        #[test]
        fn listwise_ids_are_consecutive(texts in proptest::collection::vec("[a-z ]{0,30}", 2..30)) {
            let window: Vec<(String, String)> =
                texts.iter().enumerate().map(|(i, t)| (format!("d{i}"), t.clone())).collect();
            let b = build_listwise_prompt(&q("q"), &window, budget(5)).unwrap();
            match parse_prompt(&b.messages) {
                Some(PromptShape::Listwise { passages, .. }) => {
                    prop_assert_eq!(passages.len(), window.len());
                    for p in &passages {
                        prop_assert!(estimate_tokens(p) <= 6);
                    }
                }
                other => prop_assert!(false, "unexpected {:?}", other),
            }
        }
    }
}
