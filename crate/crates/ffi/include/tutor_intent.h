#ifndef TUTOR_INTENT_H
#define TUTOR_INTENT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TiStatus {
  TI_STATUS_OK = 0,
  TI_STATUS_NULL_POINTER = 1,
  TI_STATUS_INVALID_UTF8 = 2,
  TI_STATUS_IO = 3,
  TI_STATUS_INVALID_MODEL = 4,
  TI_STATUS_INVALID_ARGUMENT = 5,
  TI_STATUS_CLASSIFY_FAILED = 6,
  TI_STATUS_CONVERSATION_COMPLETE = 7,
  TI_STATUS_PANIC = 99,
} TiStatus;

typedef enum TiIntent {
  TI_INTENT_CONTINUE = 0,
  TI_INTENT_CHANGE_TOPIC = 1,
} TiIntent;

typedef enum TiTurnKind {
  TI_TURN_KIND_REPLY = 0,
  TI_TURN_KIND_CHANGE_TOPIC_REQUESTED = 1,
  TI_TURN_KIND_CONVERSATION_COMPLETE = 2,
} TiTurnKind;

/**
 * Opaque forest model handle.
 */
typedef struct TiModel TiModel;

/**
 * Opaque dialogue session handle.
 */
typedef struct TiSession TiSession;

/**
 * Metric suite for one confusion matrix. `undefined_mask` has bit i set
 * when the i-th field (in declaration order, from `macro_f1`) hit a zero
 * denominator and was reported as 0.
 */
typedef struct TiMetrics {
  double macro_f1;
  double macro_precision;
  double macro_recall;
  double change_precision;
  double change_recall;
  double change_f1;
  double continue_precision;
  double continue_recall;
  double continue_f1;
  uint32_t undefined_mask;
} TiMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the calling thread's last failure; empty if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *ti_last_error_message(void);

/**
 * Model file format version this library writes, as a static string.
 */
const char *ti_model_format_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a pointer obtained from this library, freed once.
 */
void ti_string_free(char *s);

/**
 * Loads a forest model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TiStatus ti_model_load(const char *path, struct TiModel **out);

/**
 * Parses a model from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum TiStatus ti_model_from_json(const char *json, struct TiModel **out);

/**
 * # Safety
 * `model` must be NULL or a live handle from `ti_model_load`/`ti_model_from_json`.
 */
void ti_model_free(struct TiModel *model);

/**
 * Classifies one message. `out_probability` receives P(change_topic).
 *
 * # Safety
 * `model` must be a live handle; `text` a NUL-terminated string; out
 * pointers writable.
 */
enum TiStatus ti_model_classify(const struct TiModel *model,
                                const char *text,
                                enum TiIntent *out_intent,
                                double *out_probability);

/**
 * Metric suite from confusion counts (change_topic is the positive class).
 *
 * # Safety
 * `out` must be writable.
 */
enum TiStatus ti_metrics_from_confusion(uint64_t tp,
                                        uint64_t fp,
                                        uint64_t fn_,
                                        uint64_t tn,
                                        struct TiMetrics *out);

/**
 * Cohen's kappa and percent agreement for `n` label pairs, each label a
 * `TiIntent` value (0 or 1).
 *
 * # Safety
 * `labels_a` and `labels_b` must point to `n` readable `int32_t`s; out
 * pointers writable.
 */
enum TiStatus ti_kappa(const int32_t *labels_a,
                       const int32_t *labels_b,
                       size_t n,
                       double *out_kappa,
                       double *out_agreement);

/**
 * 1 if a model reply signals the `<exit>` sentinel, 0 if not, -1 on a NULL
 * or non-UTF-8 argument.
 *
 * # Safety
 * `reply` must be NULL or a NUL-terminated string.
 */
int32_t ti_sentinel_fires(const char *reply);

/**
 * Starts a lesson driven by `model`, with the bundled phase scripts and
 * scripted replies. The session keeps its own reference to the model.
 *
 * # Safety
 * `model` must be a live handle; `conversation_id` a NUL-terminated
 * string; `out` writable.
 */
enum TiStatus ti_session_new(const struct TiModel *model,
                             const char *conversation_id,
                             double act_threshold,
                             double confirm_threshold,
                             struct TiSession **out);

/**
 * # Safety
 * `session` must be NULL or a live handle from `ti_session_new`.
 */
void ti_session_free(struct TiSession *session);

/**
 * Current phase (1..6), or 0 once the lesson is complete; -1 for NULL.
 *
 * # Safety
 * `session` must be NULL or a live handle.
 */
int32_t ti_session_phase(const struct TiSession *session);

/**
 * Handles one student message. `out_text` receives the reply text for
 * `TI_TURN_KIND_REPLY` (free it with `ti_string_free`) and NULL otherwise;
 * `out_phase` receives the phase after the turn (6 once complete).
 *
 * # Safety
 * `session` must be a live handle; `text` a NUL-terminated string; out
 * pointers writable.
 */
enum TiStatus ti_session_turn(struct TiSession *session,
                              const char *text,
                              enum TiTurnKind *out_kind,
                              char **out_text,
                              int32_t *out_phase);

/**
 * Session state as JSON (caller frees with `ti_string_free`).
 *
 * # Safety
 * `session` must be a live handle; `out` writable.
 */
enum TiStatus ti_session_state_json(const struct TiSession *session, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TUTOR_INTENT_H */
