//! Two-stage retrieval experiments: BM25 first-stage retrieval, composable
//! ranking pipelines and LLM-based generative reranking (pointwise, pairwise
//! and listwise sliding-window), with TREC-format I/O and nDCG@k evaluation.

pub mod cli;
pub mod eval;
pub mod index;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod prompt;
pub mod rerank;
pub mod trec;
