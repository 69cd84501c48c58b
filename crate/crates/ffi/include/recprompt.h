#ifndef RECPROMPT_H
#define RECPROMPT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum RpStatus {
  RP_STATUS_OK = 0,
  RP_STATUS_NULL_POINTER = 1,
  RP_STATUS_INVALID_ARGUMENT = 2,
  RP_STATUS_INVALID_UTF8 = 3,
  RP_STATUS_PARSE_REJECT = 4,
  RP_STATUS_INCOMPLETE_GRID = 5,
  RP_STATUS_UNKNOWN_NAME = 6,
  RP_STATUS_PANIC = 7,
} RpStatus;

// Opaque accuracy grid: (dataset, spec) -> mean nDCG.
typedef struct RpGrid RpGrid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free.
const char *rp_version(void);

// Release a string returned by this library.
//
// # Safety
// `ptr` must have been returned by this library and not freed already.
void rp_string_free(char *ptr);

// Binary-relevance nDCG@k. `ranking` is a permutation of 1..=len as
// 1-based candidate indices; `positive_mask` marks relevant candidates.
//
// # Safety
// `ranking` and `positive_mask` must point to `len` readable elements and
// `out` to a writable double.
enum RpStatus rp_ndcg_at_k(const uint32_t *ranking,
                           const uint8_t *positive_mask,
                           uintptr_t len,
                           uint32_t k,
                           double *out);

// Monte-Carlo mean nDCG@k of uniform-random rankings.
//
// # Safety
// `out` must point to a writable double.
enum RpStatus rp_random_baseline(uint32_t n_pos,
                                 uint32_t n_cand,
                                 uint32_t k,
                                 uint64_t trials,
                                 uint64_t seed,
                                 double *out);

// Parse a model completion into a full ranking. On success `out_ranking`
// (length `n_candidates`) holds a permutation of 1..=n_candidates; missing
// candidates were appended in seeded random order.
//
// # Safety
// `text` must be a NUL-terminated string and `out_ranking` must point to
// `n_candidates` writable elements.
enum RpStatus rp_parse_ranking(const char *text,
                               uint32_t n_candidates,
                               uint64_t completion_seed,
                               uint32_t *out_ranking);

// JSON array of the default grid's canonical spec names (90 entries).
//
// # Safety
// `out_json` must point to a writable `char*`.
enum RpStatus rp_default_grid_names(char **out_json);

// New empty result grid.
struct RpGrid *rp_grid_new(void);

// Release a grid handle.
//
// # Safety
// `grid` must come from `rp_grid_new` and not be used afterwards.
void rp_grid_free(struct RpGrid *grid);

// Insert or replace one (dataset, spec) accuracy cell. The spec name uses
// the canonical shorthand, e.g. "R-10-T" or "SE-100-TCD".
//
// # Safety
// `grid` must be a live handle; `dataset` and `spec_name` NUL-terminated.
enum RpStatus rp_grid_add(struct RpGrid *grid,
                          const char *dataset,
                          const char *spec_name,
                          double mean_ndcg);

// Number of cells in the grid.
//
// # Safety
// `grid` must be a live handle.
uintptr_t rp_grid_len(const struct RpGrid *grid);

// Grid-search selection on one dataset; writes the outcome as JSON
// {"strategy","spec","val_ndcg","shortlist"}.
//
// # Safety
// `grid` must be a live handle; `dataset` NUL-terminated; `out_json`
// writable.
enum RpStatus rp_grid_select_gs(const struct RpGrid *grid,
                                const char *dataset,
                                char **out_json);

// RPI selection on one dataset (pairwise averaging, default summary
// sizes); requires both approaches' full factorials in the grid.
//
// # Safety
// Same contracts as `rp_grid_select_gs`.
enum RpStatus rp_grid_select_rpi(const struct RpGrid *grid,
                                 const char *dataset,
                                 char **out_json);

// Full RPI analysis of one approach ("sampling" or "summarizing") on one
// dataset, as JSON.
//
// # Safety
// Same contracts as `rp_grid_select_gs`; `approach` NUL-terminated.
enum RpStatus rp_grid_rpi_table(const struct RpGrid *grid,
                                const char *dataset,
                                const char *approach,
                                char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECPROMPT_H */
