use std::collections::HashMap;

use super::{
    assemble, head_documents, parse_pointwise_score, request, run_bounded, RerankError, RerankOutcome, RerankerConfig,
};
use crate::llm::Backend;
use crate::model::{Query, Ranking};
use crate::prompt::{build_pointwise_prompt, MAX_GRADE};

/// Grades each head document with one prompt and sorts the head by grade
/// (first-stage rank breaks ties). Unparseable answers grade 0.
pub fn rerank_pointwise(
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

    let graded = run_bounded(docs.len(), backend.max_in_flight(), |i| {
        let doc = &docs[i];
        let req = request(cfg, build_pointwise_prompt(query, doc, policy)?)?;
        let response = backend.complete(&req).map_err(|source| RerankError::Backend {
            query_id: query.id().to_owned(),
            context: format!("document {}", doc.id),
            source,
        })?;
        Ok(parse_pointwise_score(&response.content, MAX_GRADE).ok())
    })?;

    let unparseable = graded.iter().filter(|g| g.is_none()).count();
    let mut head: Vec<(usize, u32)> = graded.iter().map(|g| g.unwrap_or(0)).enumerate().collect();
    head.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let ranking = assemble(ranking, head.into_iter().map(|(i, _)| docs[i].id.clone()), m)?;
    Ok(RerankOutcome { ranking, calls: m, unparseable })
}
