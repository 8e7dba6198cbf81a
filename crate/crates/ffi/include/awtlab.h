#ifndef AWTLAB_H
#define AWTLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum AwtStatus {
  AWT_STATUS_OK = 0,
  AWT_STATUS_NULL_POINTER = 1,
  AWT_STATUS_INVALID_ARGUMENT = 2,
  AWT_STATUS_CONFIG = 3,
  AWT_STATUS_SHAPE = 4,
  AWT_STATUS_FORMAT = 5,
  AWT_STATUS_IO = 6,
  AWT_STATUS_NON_FINITE = 7,
  AWT_STATUS_DIVERGENCE = 8,
  AWT_STATUS_PANIC = 9,
} AwtStatus;

typedef enum AwtMethod {
  AWT_METHOD_MI = 0,
  AWT_METHOD_NI = 1,
  AWT_METHOD_VMI = 2,
  AWT_METHOD_EMI = 3,
  AWT_METHOD_PGN = 4,
  AWT_METHOD_NCS = 5,
  AWT_METHOD_AWT = 6,
} AwtMethod;

typedef enum AwtArch {
  AWT_ARCH_MLP_SMALL = 0,
  AWT_ARCH_MLP_WIDE = 1,
  AWT_ARCH_CNN_SMALL = 2,
} AwtArch;

// Adversarial examples crafted on one surrogate.
typedef struct AwtBatch AwtBatch;

// A labelled image set.
typedef struct AwtDataset AwtDataset;

// A trained model together with its checkpoint.
typedef struct AwtModel AwtModel;

// Training knobs; fill with [`awt_train_config_default`] and adjust.
typedef struct AwtTrainConfig {
  size_t epochs;
  size_t batch;
  double lr;
  double momentum;
} AwtTrainConfig;

// Attack knobs; fill with [`awt_attack_config_default`] and adjust.
typedef struct AwtAttackConfig {
  // An [`AwtMethod`] code.
  uint32_t method;
  double eps;
  size_t steps;
  double alpha;
  double mu;
  size_t n_samples;
  double zeta;
  double omega;
  double beta;
  double lr;
  uint64_t rng_seed;
} AwtAttackConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or an empty string.
// The pointer stays valid until the next failing call on this thread.
const char *awt_last_error(void);

// Library version as a static NUL-terminated string.
const char *awt_version(void);

// Generates the glyph train and test splits.
//
// # Safety
// `train` and `test` must be valid pointers to writable handle slots.
enum AwtStatus awt_dataset_generate(uint64_t seed,
                                    size_t n_train,
                                    size_t n_test,
                                    struct AwtDataset **train,
                                    struct AwtDataset **test);

// # Safety
// `file` must be a NUL-terminated string and `dataset` a writable handle slot.
enum AwtStatus awt_dataset_load(const char *file, struct AwtDataset **dataset);

// # Safety
// `dataset` must come from this library and `file` be NUL-terminated.
enum AwtStatus awt_dataset_save(const struct AwtDataset *dataset, const char *file);

// Number of samples, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or come from this library.
size_t awt_dataset_len(const struct AwtDataset *dataset);

// # Safety
// `dataset` must be null or come from this library, and not be used again.
void awt_dataset_free(struct AwtDataset *dataset);

// Writes the default training recipe into `config`.
//
// # Safety
// `config` must be a valid writable pointer.
enum AwtStatus awt_train_config_default(struct AwtTrainConfig *config);

// Trains a model of architecture `arch` (an [`AwtArch`] code) from seed `seed`.
//
// # Safety
// Dataset handles must come from this library; `config` and `model` must be
// valid pointers.
enum AwtStatus awt_model_train(uint32_t arch,
                               uint64_t seed,
                               const struct AwtDataset *train,
                               const struct AwtDataset *test,
                               const struct AwtTrainConfig *config,
                               struct AwtModel **model);

// # Safety
// `file` must be NUL-terminated and `model` a writable handle slot.
enum AwtStatus awt_model_load(const char *file, struct AwtModel **model);

// # Safety
// `model` must come from this library and `file` be NUL-terminated.
enum AwtStatus awt_model_save(const struct AwtModel *model, const char *file);

// Content hash of the checkpoint.
//
// # Safety
// `model` must come from this library and `hash` be writable.
enum AwtStatus awt_model_hash(const struct AwtModel *model, uint64_t *hash);

// Top-1 accuracy on `dataset`.
//
// # Safety
// Handles must come from this library and `acc` be writable.
enum AwtStatus awt_model_accuracy(const struct AwtModel *model,
                                  const struct AwtDataset *dataset,
                                  double *acc);

// # Safety
// `model` must be null or come from this library, and not be used again.
void awt_model_free(struct AwtModel *model);

// Writes the defaults for `method` (an [`AwtMethod`] code) with budget
// `eps` over `steps` iterations into `config`.
//
// # Safety
// `config` must be a valid writable pointer.
enum AwtStatus awt_attack_config_default(uint32_t method,
                                         double eps,
                                         size_t steps,
                                         struct AwtAttackConfig *config);

// Attacks the first `n` samples of `dataset` (all when `n` is 0) on `surrogate`.
//
// # Safety
// Handles must come from this library; `config` and `batch` must be valid.
enum AwtStatus awt_attack(const struct AwtModel *surrogate,
                          const struct AwtDataset *dataset,
                          size_t n,
                          const struct AwtAttackConfig *config,
                          struct AwtBatch **batch);

// # Safety
// `batch` must come from this library.
size_t awt_batch_len(const struct AwtBatch *batch);

// Largest absolute pixel change in the batch.
//
// # Safety
// `batch` must come from this library and `value` be writable.
enum AwtStatus awt_batch_max_perturbation(const struct AwtBatch *batch, double *value);

// # Safety
// `batch` must come from this library and `file` be NUL-terminated.
enum AwtStatus awt_batch_save(const struct AwtBatch *batch, const char *file);

// # Safety
// `file` must be NUL-terminated and `batch` a writable handle slot.
enum AwtStatus awt_batch_load(const char *file, struct AwtBatch **batch);

// # Safety
// `batch` must be null or come from this library, and not be used again.
void awt_batch_free(struct AwtBatch *batch);

// Fraction of adversarial examples that `target` misclassifies.
//
// # Safety
// Handles must come from this library and `rate` be writable.
enum AwtStatus awt_attack_success_rate(const struct AwtModel *target,
                                       const struct AwtBatch *batch,
                                       double *rate);

// Weight-perturbation transferability score of `batch` on `surrogate`.
//
// # Safety
// Handles must come from this library and `score` be writable.
enum AwtStatus awt_transfer_score(const struct AwtBatch *batch,
                                  const struct AwtModel *surrogate,
                                  double eps,
                                  size_t n_eta,
                                  uint64_t seed,
                                  double *score);

// Runs the experiment described by the TOML file at `config` and writes the
// report files into `out_dir` (the config's own directory when null).
//
// # Safety
// `config` must be NUL-terminated; `out_dir` must be null or NUL-terminated.
enum AwtStatus awt_experiment_run(const char *config, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AWTLAB_H */
