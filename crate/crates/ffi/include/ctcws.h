#ifndef CTCWS_H
#define CTCWS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  CTCWS_STATUS_OK = 0,
  CTCWS_STATUS_NULL_POINTER = 1,
  CTCWS_STATUS_INVALID_ARGUMENT = 2,
  CTCWS_STATUS_INVALID_UTF8 = 3,
  CTCWS_STATUS_BIAS_LIST = 4,
  CTCWS_STATUS_GRAPH = 5,
  CTCWS_STATUS_DIMENSION_MISMATCH = 6,
  CTCWS_STATUS_SESSION_CLOSED = 7,
  CTCWS_STATUS_INTERNAL = 8,
} CtcwsStatus;

/**
 * Immutable bias graph plus the vocabulary used for greedy decoding.
 */
typedef struct CtcwsGraph CtcwsGraph;

/**
 * One streaming utterance.
 */
typedef struct CtcwsSession CtcwsSession;

/**
 * Spotting and merge tunables, passed by value.
 */
typedef struct {
  double cb_weight;
  /**
   * Beam width in log score; `INFINITY` disables pruning.
   */
  double beam_threshold;
  double min_per_frame_score;
  size_t max_keyword_frames;
  double intersection_threshold;
  double score_margin;
  bool allow_insertion;
} CtcwsConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *ctcws_version(void);

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next library call on the same thread.
 */
const char *ctcws_last_error_message(void);

/**
 * Default tunables.
 */
CtcwsConfig ctcws_config_default(void);

/**
 * Builds a bias graph from bias-list text (`surface<TAB>id,id,...` per line).
 *
 * `vocab_text` is optional: one token string per line, `vocab_size` lines.
 * When given it tokenizes entries without ids and drives greedy decoding;
 * otherwise every token is treated as its own word. A negative `blank_id`
 * selects `vocab_size - 1`.
 *
 * # Safety
 * String arguments must be NULL or NUL-terminated; `out` must be writable.
 */
CtcwsStatus ctcws_graph_new(const char *bias_text,
                            const char *vocab_text,
                            size_t vocab_size,
                            int64_t blank_id,
                            CtcwsGraph **out);

/**
 * Number of distinct bias phrases in the graph (0 for NULL).
 *
 * # Safety
 * `graph` must be NULL or a live handle.
 */
size_t ctcws_graph_keyword_count(const CtcwsGraph *graph);

/**
 * # Safety
 * `graph` must be NULL or a handle from [`ctcws_graph_new`] not yet freed.
 * Sessions created from it stay valid.
 */
void ctcws_graph_free(CtcwsGraph *graph);

/**
 * Starts a streaming session; `config` may be NULL for defaults.
 *
 * # Safety
 * `graph` must be a live handle, `config` NULL or readable, `out` writable.
 */
CtcwsStatus ctcws_session_new(const CtcwsGraph *graph,
                              const CtcwsConfig *config,
                              CtcwsSession **out);

/**
 * Feeds `frames` rows of natural-log probabilities (row-major, `vocab`
 * columns). On success `*delta_out` (if non-NULL) receives the newly
 * committed text, possibly empty, and `*frontier_out` (if non-NULL) the
 * commit frontier in frames.
 *
 * # Safety
 * `data` must point to `frames * vocab` readable floats (may be NULL when
 * `frames` is 0); out pointers must be NULL or writable.
 */
CtcwsStatus ctcws_session_push(CtcwsSession *session,
                               const float *data,
                               size_t frames,
                               size_t vocab,
                               char **delta_out,
                               size_t *frontier_out);

/**
 * Ends the utterance, committing everything still held. Further pushes
 * return `CTCWS_STATUS_SESSION_CLOSED`.
 *
 * # Safety
 * `session` must be a live handle; `delta_out` NULL or writable.
 */
CtcwsStatus ctcws_session_flush(CtcwsSession *session, char **delta_out);

/**
 * Full committed transcript so far, as a new string.
 *
 * # Safety
 * `session` must be a live handle; `out` writable.
 */
CtcwsStatus ctcws_session_transcript(const CtcwsSession *session, char **out);

/**
 * Frames consumed so far (0 for NULL).
 *
 * # Safety
 * `session` must be NULL or a live handle.
 */
size_t ctcws_session_frames_seen(const CtcwsSession *session);

/**
 * # Safety
 * `session` must be NULL or a handle from [`ctcws_session_new`] not yet freed.
 */
void ctcws_session_free(CtcwsSession *session);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void ctcws_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CTCWS_H */
