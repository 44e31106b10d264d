#ifndef BIAN_H
#define BIAN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum BianStatus {
  BIAN_STATUS_OK = 0,
  BIAN_STATUS_NULL_POINTER = 1,
  BIAN_STATUS_INVALID_ARGUMENT = 2,
  BIAN_STATUS_IO = 3,
  BIAN_STATUS_FORMAT = 4,
  BIAN_STATUS_CONFIG = 5,
  BIAN_STATUS_SHAPE = 6,
  BIAN_STATUS_TRAINING = 7,
  /*
   A verification ran and did not pass.
   */
  BIAN_STATUS_CHECK_FAILED = 8,
  /*
   A panic was caught; the handle arguments are left untouched.
   */
  BIAN_STATUS_INTERNAL = 9,
} BianStatus;

/*
 Opaque graph handle.
 */
typedef struct BianGraph BianGraph;

/*
 Opaque model handle.
 */
typedef struct BianModel BianModel;

/*
 Message of the last failed call on this thread, or NULL. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *bian_last_error(void);

/*
 Reads a dataset file.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BianStatus bian_graph_load(const char *path, struct BianGraph **out);

/*
 Writes a dataset file.

 # Safety
 `graph` must come from this library and `path` be NUL-terminated.
 */
enum BianStatus bian_graph_save(const struct BianGraph *graph, const char *path);

/*
 Generates a synthetic graph from a spec such as
 `"n=5000,fraud_rate=0.05,s=0.9,seed=1"`; NULL or `""` uses defaults.

 # Safety
 `spec` must be NULL or NUL-terminated; `out` must be valid.
 */
enum BianStatus bian_graph_generate(const char *spec, struct BianGraph **out);

/*
 # Safety
 `graph` must be NULL or a handle from this library.
 */
size_t bian_graph_num_nodes(const struct BianGraph *graph);

/*
 # Safety
 `graph` must be NULL or a handle from this library.
 */
size_t bian_graph_num_edges(const struct BianGraph *graph);

/*
 # Safety
 `graph` must be NULL or a handle from this library not yet freed.
 */
void bian_graph_free(struct BianGraph *graph);

/*
 Trains a model. `config` holds `key=value` lines and may be NULL for
 defaults.

 # Safety
 `graph` must come from this library, `config` be NULL or
 NUL-terminated and `out` valid.
 */
enum BianStatus bian_model_train(const struct BianGraph *graph,
                                 const char *config,
                                 struct BianModel **out);

/*
 # Safety
 `path` must be NUL-terminated and `out` valid.
 */
enum BianStatus bian_model_load(const char *path, struct BianModel **out);

/*
 # Safety
 `model` must come from this library and `path` be NUL-terminated.
 */
enum BianStatus bian_model_save(const struct BianModel *model, const char *path);

/*
 Writes one logit per entry of `nodes` into `out` (both of length `len`).

 # Safety
 Handles must come from this library; `nodes` and `out` must point to
 `len` elements (they may be NULL when `len` is 0).
 */
enum BianStatus bian_model_predict(const struct BianModel *model,
                                   const struct BianGraph *graph,
                                   const size_t *nodes,
                                   size_t len,
                                   double *out);

/*
 Test-split AUROC of `model` on `graph`.

 # Safety
 Handles must come from this library and `out` be valid.
 */
enum BianStatus bian_model_test_auroc(const struct BianModel *model,
                                      const struct BianGraph *graph,
                                      double *out);

/*
 # Safety
 `model` must be NULL or a handle from this library not yet freed.
 */
void bian_model_free(struct BianModel *model);

/*
 AUROC of `scores` against 0/1 `labels`, both of length `len`.

 # Safety
 `scores` and `labels` must point to `len` elements; `out` must be valid.
 */
enum BianStatus bian_auroc(const double *scores, const uint8_t *labels, size_t len, double *out);

/*
 Randomized check of the temporal encoding identity and temporal
 attention shift invariance. Writes the worst residual and shift change
 (either pointer may be NULL) and returns `CheckFailed` if a bound is
 exceeded.

 # Safety
 Non-NULL output pointers must be valid.
 */
enum BianStatus bian_verify_lemma(size_t trials,
                                  uint64_t seed,
                                  double *max_residual,
                                  double *max_shift_delta);

#endif  /* BIAN_H */
