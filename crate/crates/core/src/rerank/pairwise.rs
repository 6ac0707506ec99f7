use std::collections::HashMap;

use super::{
    assemble, head_documents, parse_pairwise_verdict, request, run_bounded, RerankError, RerankOutcome, RerankerConfig,
    Verdict,
};
use crate::llm::Backend;
use crate::model::{Query, Ranking};
use crate::prompt::build_pairwise_prompt;

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseOutcome {
    pub outcome: RerankOutcome,
    /// Win counts per head document, in first-stage order.
    pub wins: Vec<(String, usize)>,
}

/// All-pairs tournament over the head. Each unordered pair is asked in both
/// presentation orders and every verdict is one win for the named passage;
/// an unparseable verdict counts for passage A.
pub fn rerank_pairwise_allpairs(
    backend: &dyn Backend,
    query: &Query,
    ranking: &Ranking,
    texts: &HashMap<String, String>,
    cfg: &RerankerConfig,
) -> Result<PairwiseOutcome, RerankError> {
    cfg.validate()?;
    let m = cfg.head_len(ranking.len());
    if m < 2 {
        return Ok(PairwiseOutcome {
            outcome: RerankOutcome { ranking: ranking.clone(), calls: 0, unparseable: 0 },
            wins: ranking.doc_ids().take(m).map(|id| (id.to_owned(), 0)).collect(),
        });
    }
    let docs = head_documents(ranking, texts, m)?;
    let policy = cfg.truncation()?;
    let pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|a| (0..m).filter(move |&b| b != a).map(move |b| (a, b))).collect();

    let verdicts = run_bounded(pairs.len(), backend.max_in_flight(), |i| {
        let (a, b) = pairs[i];
        let req = request(cfg, build_pairwise_prompt(query, &docs[a], &docs[b], policy)?)?;
        let response = backend.complete(&req).map_err(|source| RerankError::Backend {
            query_id: query.id().to_owned(),
            context: format!("pair {} vs {}", docs[a].id, docs[b].id),
            source,
        })?;
        Ok(parse_pairwise_verdict(&response.content).ok())
    })?;

    let mut wins = vec![0usize; m];
    let mut unparseable = 0;
    for (&(a, b), verdict) in pairs.iter().zip(&verdicts) {
        match verdict {
            Some(Verdict::A) => wins[a] += 1,
            Some(Verdict::B) => wins[b] += 1,
            None => {
                unparseable += 1;
                wins[a] += 1;
            }
        }
    }

    let mut head: Vec<usize> = (0..m).collect();
    head.sort_by(|&x, &y| wins[y].cmp(&wins[x]).then(x.cmp(&y)));
    let ranking = assemble(ranking, head.iter().map(|&i| docs[i].id.clone()), m)?;
    Ok(PairwiseOutcome {
        outcome: RerankOutcome { ranking, calls: pairs.len(), unparseable },
        wins: docs.iter().map(|d| d.id.clone()).zip(wins).collect(),
    })
}
