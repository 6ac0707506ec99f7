//! `{placeholder}` substitution for prompt templates.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template references unknown placeholder {{{0}}}")]
    Unknown(String),
    #[error("unterminated placeholder at byte {0}")]
    Unterminated(usize),
}

/// Single-pass substitution: inserted values are never re-scanned, so a
/// passage containing `{query}` stays literal.
pub fn render(template: &str, values: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    let mut offset = 0;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or(TemplateError::Unterminated(offset + open))?;
        let name = &after[..close];
        let value = values
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| TemplateError::Unknown(name.to_owned()))?;
        out.push_str(value);
        let consumed = open + 1 + close + 1;
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_all_occurrences() {
        let s = render("{a} and {b}, {a}!", &[("a", "x"), ("b", "y")]).unwrap();
        assert_eq!(s, "x and y, x!");
    }

    #[test]
    fn values_are_not_rescanned() {
        let s = render("Q: {query}", &[("query", "{query}")]).unwrap();
        assert_eq!(s, "Q: {query}");
    }

    #[test]
    fn errors() {
        assert_eq!(render("{nope}", &[]), Err(TemplateError::Unknown("nope".into())));
        assert_eq!(render("ab {x", &[("x", "1")]), Err(TemplateError::Unterminated(3)));
    }
}
