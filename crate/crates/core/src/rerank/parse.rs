//! Tolerant readers for model output.

use super::RerankError;

/// Digit runs in textual order; values too large for `u64` come back as
/// `None` so callers can treat them as out of range.
fn integers(text: &str) -> impl Iterator<Item = Option<u64>> + '_ {
    text.split(|c: char| !c.is_ascii_digit()).filter(|s| !s.is_empty()).map(|s| s.parse().ok())
}

/// A full permutation of `1..=window_len`, in model preference order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPermutation {
    pub order: Vec<usize>,
}

impl ParsedPermutation {
    /// 0-based positions, most relevant first.
    pub fn zero_based(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().map(|i| i - 1)
    }
}

/// Reads every integer in the response and repairs the sequence into a
/// permutation: out-of-range values and repeats are dropped, missing
/// identifiers are appended in ascending order.
pub fn parse_permutation(response: &str, window_len: usize) -> Result<ParsedPermutation, RerankError> {
    let mut found = false;
    let mut seen = vec![false; window_len + 1];
    let mut order = Vec::with_capacity(window_len);
    for value in integers(response) {
        found = true;
        let Some(v) = value.and_then(|v| usize::try_from(v).ok()) else {
            continue;
        };
        if (1..=window_len).contains(&v) && !seen[v] {
            seen[v] = true;
            order.push(v);
        }
    }
    if !found {
        return Err(RerankError::Unparseable(response.to_owned()));
    }
    order.extend((1..=window_len).filter(|&i| !seen[i]));
    Ok(ParsedPermutation { order })
}

/// First integer in the response (a directly preceding `-` makes it
/// negative), clamped to `[0, max_grade]`.
pub fn parse_pointwise_score(response: &str, max_grade: u32) -> Result<u32, RerankError> {
    let start =
        response.find(|c: char| c.is_ascii_digit()).ok_or_else(|| RerankError::Unparseable(response.to_owned()))?;
    let negative = response[..start].ends_with('-');
    let digits = response[start..].split(|c: char| !c.is_ascii_digit()).next().unwrap_or_default();
    if negative {
        return Ok(0);
    }
    Ok(match digits.parse::<u64>() {
        Ok(v) => v.min(u64::from(max_grade)) as u32,
        Err(_) => max_grade,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    A,
    B,
}

/// `A` or `B` as the first letter of the response, ignoring leading
/// punctuation such as quotes, brackets or markdown emphasis.
pub fn parse_pairwise_verdict(response: &str) -> Result<Verdict, RerankError> {
    let rest = response.trim_start_matches(|c: char| !c.is_alphanumeric());
    let mut chars = rest.chars();
    let first = chars.next();
    let bounded = chars.next().is_none_or(|c| !c.is_alphanumeric());
    match (first, bounded) {
        (Some('A'), true) => Ok(Verdict::A),
        (Some('B'), true) => Ok(Verdict::B),
        _ => Err(RerankError::Unparseable(response.to_owned())),
    }
}
