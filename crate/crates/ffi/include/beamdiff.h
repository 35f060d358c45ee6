#ifndef BEAMDIFF_H
#define BEAMDIFF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum BdStatus {
  BD_STATUS_OK = 0,
  BD_STATUS_NULL_POINTER = 1,
  BD_STATUS_INVALID_ARGUMENT = 2,
  BD_STATUS_CONFIG = 3,
  BD_STATUS_VALIDATION = 4,
  BD_STATUS_CONTRACT = 5,
  BD_STATUS_TRAINING = 6,
  BD_STATUS_FORMAT = 7,
  BD_STATUS_IO = 8,
  BD_STATUS_USAGE = 9,
  BD_STATUS_PANIC = 10,
} BdStatus;

/**
 * Opaque experiment: configuration plus channel model.
 */
typedef struct BdExperiment BdExperiment;

/**
 * Opaque set of trained models.
 */
typedef struct BdModels BdModels;

/**
 * Opaque online proposer with its own history and random stream.
 */
typedef struct BdSession BdSession;

/**
 * Seed-averaged evaluation metrics. `r_probe` is NaN when no miss occurred.
 */
typedef struct BdMetrics {
  double exec_snr_db;
  double oracle_snr_db;
  double oracle_gap_db;
  double p_miss;
  double r_probe;
  double top1_coverage;
  double top2_coverage;
  double top4_coverage;
} BdMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 */
size_t bd_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bd_version(void);

/**
 * Builds an experiment from a JSON configuration document.
 */
enum BdStatus bd_experiment_from_json(const char *json, struct BdExperiment **out);

/**
 * Builds an experiment from the built-in `"desk"` or `"full"` profile.
 */
enum BdStatus bd_experiment_from_profile(const char *name, struct BdExperiment **out);

void bd_experiment_free(struct BdExperiment *exp);

/**
 * Codebook size and probing budget of an experiment.
 */
enum BdStatus bd_experiment_dims(const struct BdExperiment *exp, size_t *n_beams, size_t *probes);

/**
 * Writes `train.jsonl` and `eval.jsonl` into `out_dir`.
 */
enum BdStatus bd_gen_data(const struct BdExperiment *exp, const char *out_dir);

/**
 * Collects behavior data and trains the selected models.
 */
enum BdStatus bd_models_train(const struct BdExperiment *exp,
                              bool d3pm,
                              bool trm,
                              struct BdModels **out);

enum BdStatus bd_models_load(const struct BdExperiment *exp,
                             const char *path,
                             struct BdModels **out);

enum BdStatus bd_models_save(const struct BdModels *models, const char *path);

void bd_models_free(struct BdModels *models);

/**
 * Evaluates a proposer on the held-out trajectories and writes the
 * seed-averaged metrics. `models` may be null for non-learned proposers.
 */
enum BdStatus bd_evaluate(const struct BdExperiment *exp,
                          const struct BdModels *models,
                          const char *proposer,
                          size_t seeds,
                          struct BdMetrics *out);

/**
 * Starts an online session for a proposer. The first `warmup_slots`
 * proposals follow the round-robin sweep. The oracle stub needs the true
 * SNR profile and is not available here.
 */
enum BdStatus bd_session_new(const struct BdExperiment *exp,
                             const struct BdModels *models,
                             const char *proposer,
                             uint64_t seed,
                             struct BdSession **out);

void bd_session_free(struct BdSession *session);

/**
 * Proposes the probe set for the next slot into `probes_out` (capacity
 * `probes_cap` ≥ P) and the ordered proposal list into `list_out` (up to
 * `list_cap` entries; `list_len` receives the number written).
 */
enum BdStatus bd_session_propose(struct BdSession *session,
                                 uint32_t *probes_out,
                                 size_t probes_cap,
                                 uint32_t *list_out,
                                 size_t list_cap,
                                 size_t *list_len);

/**
 * Reports the feedback (dB, one per probe in proposal order) for the last
 * proposed probe set. Returns the served probe position in `served_pos`.
 */
enum BdStatus bd_session_observe(struct BdSession *session,
                                 const double *feedback_db,
                                 size_t n,
                                 size_t *served_pos);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEAMDIFF_H */
