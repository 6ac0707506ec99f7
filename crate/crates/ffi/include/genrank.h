#ifndef GENRANK_H
#define GENRANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values are stable.
 */
typedef enum GenrankStatus {
  GENRANK_STATUS_OK = 0,
  GENRANK_STATUS_NULL_ARGUMENT = 1,
  GENRANK_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed corpus, run, qrels or parameters.
   */
  GENRANK_STATUS_INVALID_INPUT = 3,
  GENRANK_STATUS_IO = 4,
  /**
   * The caller's buffer is too small; the required length was written.
   */
  GENRANK_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * No query could be evaluated (no positively graded judgments).
   */
  GENRANK_STATUS_NOT_EVALUABLE = 6,
  /**
   * The model response contained no integers.
   */
  GENRANK_STATUS_UNPARSEABLE = 7,
  GENRANK_STATUS_PANIC = 99,
} GenrankStatus;

typedef enum GenrankCorpusFormat {
  /**
   * One `{"id": ..., "text": ..., "title": ...}` object per line.
   */
  GENRANK_CORPUS_FORMAT_JSONL = 0,
  /**
   * `id<TAB>text` per line.
   */
  GENRANK_CORPUS_FORMAT_TSV = 1,
} GenrankCorpusFormat;

/**
 * Opaque handle to a built BM25 index.
 */
typedef struct GenrankIndex GenrankIndex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next genrank call on this thread.
 */
const char *genrank_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *genrank_version(void);

void genrank_string_free(char *s);

/**
 * Builds an index from corpus text held in memory.
 */
enum GenrankStatus genrank_index_build(const char *corpus,
                                       enum GenrankCorpusFormat format,
                                       struct GenrankIndex **out);

enum GenrankStatus genrank_index_load(const char *path, struct GenrankIndex **out);

enum GenrankStatus genrank_index_save(const struct GenrankIndex *index, const char *path);

/**
 * Releases an index handle. NULL is ignored.
 */
void genrank_index_free(struct GenrankIndex *index);

/**
 * Number of documents, or 0 for a NULL handle.
 */
size_t genrank_index_num_docs(const struct GenrankIndex *index);

/**
 * BM25 score of one document for a free-text query.
 */
enum GenrankStatus genrank_index_bm25_score(const struct GenrankIndex *index,
                                            const char *query,
                                            const char *doc_id,
                                            double k1,
                                            double b,
                                            double *out);

/**
 * Retrieves the top `k` documents for every query of a `qid<TAB>text`
 * topics string and returns a TREC run. Free the result with
 * `genrank_string_free`.
 */
enum GenrankStatus genrank_index_retrieve(const struct GenrankIndex *index,
                                          const char *queries_tsv,
                                          size_t k,
                                          double k1,
                                          double b,
                                          const char *run_tag,
                                          char **out_run);

/**
 * Mean nDCG@k of a TREC run against qrels, both given as text. Returns
 * `GENRANK_STATUS_NOT_EVALUABLE` when no query has a positively graded judgment.
 */
enum GenrankStatus genrank_ndcg_mean(const char *run_text,
                                     const char *qrels_text,
                                     size_t k,
                                     double *out);

/**
 * Parses a listwise model answer into a full permutation of
 * `1..=window_len`, written to `out` (capacity `out_cap`). The permutation
 * length is always written to `out_len`, also when the buffer is too small.
 */
enum GenrankStatus genrank_parse_permutation(const char *response,
                                             size_t window_len,
                                             size_t *out,
                                             size_t out_cap,
                                             size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GENRANK_H */
