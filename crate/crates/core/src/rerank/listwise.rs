use std::collections::HashMap;

use super::{assemble, head_documents, parse_permutation, request, RerankError, RerankOutcome, RerankerConfig};
use crate::llm::Backend;
use crate::model::{Query, Ranking};
use crate::prompt::build_listwise_prompt;

/// Window start offsets for one back-to-front pass over a head of `head`
/// documents: `head - window`, then down by `stride`, ending at 0. A head
/// that fits in one window yields `[0]`; fewer than two documents yield none.
pub fn window_starts(head: usize, window: usize, stride: usize) -> Vec<usize> {
    if head < 2 {
        return Vec::new();
    }
    if head <= window {
        return vec![0];
    }
    let stride = stride.max(1);
    let mut start = head - window;
    let mut starts = vec![start];
    while start > 0 {
        start = start.saturating_sub(stride);
        starts.push(start);
    }
    starts
}

/// Single sliding-window pass from the bottom of the head to the top. Each
/// window is reordered in place by the model's permutation; an unparseable
/// answer leaves the window as it was.
pub fn rerank_listwise_sliding(
    backend: &dyn Backend,
    query: &Query,
    ranking: &Ranking,
    texts: &HashMap<String, String>,
    cfg: &RerankerConfig,
) -> Result<RerankOutcome, RerankError> {
    cfg.validate()?;
    let m = cfg.head_len(ranking.len());
    let docs = head_documents(ranking, texts, m)?;
    let policy = cfg.truncation()?;

    // Indices into `docs`, current order.
    let mut current: Vec<usize> = (0..m).collect();
    let starts = window_starts(m, cfg.window, cfg.stride);
    let mut unparseable = 0;
    for &start in &starts {
        let end = (start + cfg.window).min(m);
        let window: Vec<(&str, &str)> =
            current[start..end].iter().map(|&i| (docs[i].id.as_str(), docs[i].text.as_str())).collect();
        let req = request(cfg, build_listwise_prompt(query, &window, policy)?)?;
        let response = backend.complete(&req).map_err(|source| RerankError::Backend {
            query_id: query.id().to_owned(),
            context: format!("window starting at {start}"),
            source,
        })?;
        match parse_permutation(&response.content, end - start) {
            Ok(perm) => {
                let slice: Vec<usize> = current[start..end].to_vec();
                for (dst, src) in perm.zero_based().enumerate() {
                    current[start + dst] = slice[src];
                }
            }
            Err(RerankError::Unparseable(_)) => unparseable += 1,
            Err(e) => return Err(e),
        }
    }

    let ranking = assemble(ranking, current.iter().map(|&i| docs[i].id.clone()), m)?;
    Ok(RerankOutcome { ranking, calls: starts.len(), unparseable })
}
