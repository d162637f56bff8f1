#ifndef GFLSWING_H
#define GFLSWING_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GflStatus {
  GFL_STATUS_OK = 0,
  GFL_STATUS_NULL_POINTER = 1,
  GFL_STATUS_INVALID_ARGUMENT = 2,
  GFL_STATUS_IO = 3,
  GFL_STATUS_CONFIG = 4,
  GFL_STATUS_SIMULATION = 5,
  GFL_STATUS_STABILITY = 6,
  GFL_STATUS_OUT_OF_RANGE = 7,
  GFL_STATUS_PANIC = 99,
} GflStatus;

// Resolved run configuration.
typedef struct GflConfig GflConfig;

// Simulated trajectory.
typedef struct GflTrajectory GflTrajectory;

typedef struct GflSample {
  double t;
  double v_pcc_mag;
  double v_pcc_angle;
} GflSample;

typedef struct GflInverterSample {
  double theta_cg;
  double i_mag;
  double i_q;
  double v_gq;
  bool limited;
  bool tripped;
} GflInverterSample;

// Optional times are NaN and optional indices -1 when absent.
typedef struct GflVerdict {
  bool stable;
  int64_t first_unstable_index;
  double t_unstable;
  double t_settled;
  double max_angle_excursion;
} GflVerdict;

typedef struct GflCct {
  double cct;
  double bracket_lo;
  double bracket_hi;
  uint64_t evaluations;
  // Fleet index of the first unit to lose synchronism past the CCT.
  int64_t first_unstable_index;
} GflCct;

typedef struct GflComparison {
  double cct_nonuniform;
  double cct_uniform;
  double delta;
} GflComparison;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread. Empty after a success.
// The pointer stays valid until the next call on this thread.
const char *gfl_last_error(void);

// Library version, static storage.
const char *gfl_version(void);

// The bundled five-inverter configuration.
//
// # Safety
// `out_cfg` must be null or valid for writes.
enum GflStatus gfl_config_bundled(struct GflConfig **out_cfg);

// Reads a TOML configuration file.
//
// # Safety
// `path` must be null or a NUL-terminated string; `out_cfg` null or valid for writes.
enum GflStatus gfl_config_load(const char *path, struct GflConfig **out_cfg);

// Parses a TOML configuration held in memory.
//
// # Safety
// As for [`gfl_config_load`].
enum GflStatus gfl_config_parse(const char *text, struct GflConfig **out_cfg);

// # Safety
// `cfg` must be null or a handle from this library not yet freed.
void gfl_config_free(struct GflConfig *cfg);

// # Safety
// `cfg` must be a live handle or null; `n` null or valid for writes.
enum GflStatus gfl_config_n_inverters(const struct GflConfig *cfg, size_t *n);

// Overrides the integration step, seconds.
//
// # Safety
// `cfg` must be a live handle or null.
enum GflStatus gfl_config_set_dt(struct GflConfig *cfg, double dt);

// Writes the configuration hash (64 hex digits plus NUL) into `buf`.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
enum GflStatus gfl_config_hash(const struct GflConfig *cfg, char *buf, size_t len);

// Runs the configured scenario.
//
// # Safety
// `cfg` must be a live handle or null; `out_traj` null or valid for writes.
enum GflStatus gfl_simulate(const struct GflConfig *cfg, struct GflTrajectory **out_traj);

// Runs the configured fault cleared `clearing_time` seconds after inception,
// for the search's post-clearing horizon. Stops early once a unit is lost.
//
// # Safety
// As for [`gfl_simulate`].
enum GflStatus gfl_simulate_clearing(const struct GflConfig *cfg,
                                     double clearing_time,
                                     struct GflTrajectory **out_traj);

// # Safety
// `traj` must be null or a handle from this library not yet freed.
void gfl_trajectory_free(struct GflTrajectory *traj);

// Number of records.
//
// # Safety
// `traj` must be a live handle or null.
size_t gfl_trajectory_len(const struct GflTrajectory *traj);

// # Safety
// `traj` must be a live handle or null.
size_t gfl_trajectory_n_inverters(const struct GflTrajectory *traj);

// PCC quantities of record `k`.
//
// # Safety
// `traj` must be a live handle or null; `sample` null or valid for writes.
enum GflStatus gfl_trajectory_sample(const struct GflTrajectory *traj,
                                     size_t k,
                                     struct GflSample *sample);

// State of inverter `i` at record `k`.
//
// # Safety
// As for [`gfl_trajectory_sample`].
enum GflStatus gfl_trajectory_inverter(const struct GflTrajectory *traj,
                                       size_t k,
                                       size_t i,
                                       struct GflInverterSample *sample);

// Classifies a trajectory with the configuration's stability criteria.
//
// # Safety
// Handles must be live or null; `verdict` null or valid for writes.
enum GflStatus gfl_classify(const struct GflConfig *cfg,
                            const struct GflTrajectory *traj,
                            struct GflVerdict *verdict);

// Critical clearing time of the configured fleet and fault.
//
// # Safety
// `cfg` must be a live handle or null; `result` null or valid for writes.
enum GflStatus gfl_find_cct(const struct GflConfig *cfg, struct GflCct *result);

// CCT of the configured fleet against its uniform counterpart.
//
// # Safety
// As for [`gfl_find_cct`].
enum GflStatus gfl_compare(const struct GflConfig *cfg, struct GflComparison *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GFLSWING_H */
