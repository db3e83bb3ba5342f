#ifndef CHEMOFLUID_H
#define CHEMOFLUID_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum CfStatus {
  CF_STATUS_OK = 0,
  CF_STATUS_NULL_POINTER = 1,
  CF_STATUS_INVALID_ARGUMENT = 2,
  CF_STATUS_CONFIG = 3,
  CF_STATUS_INVALID_PARAMETERS = 4,
  CF_STATUS_INITIAL_DATA = 5,
  CF_STATUS_SOLVER_FAILURE = 6,
  CF_STATUS_NON_FINITE = 7,
  CF_STATUS_IO = 8,
  CF_STATUS_CHECKPOINT = 9,
  // The end time of the run has been reached.
  CF_STATUS_FINISHED = 10,
  CF_STATUS_BUFFER_TOO_SMALL = 11,
  CF_STATUS_INTERNAL = 99,
} CfStatus;

// Fields that can be copied out of a simulation.
typedef enum CfField {
  // Cell density, one value per cell.
  CF_FIELD_N = 0,
  // Chemical concentration `c = z² - α²`, one value per cell.
  CF_FIELD_C = 1,
  // Shifted square-root variable `z`, one value per cell.
  CF_FIELD_Z = 2,
  // Pressure, one value per cell.
  CF_FIELD_P = 3,
  // x-normal face velocities.
  CF_FIELD_U0 = 4,
  // y-normal face velocities.
  CF_FIELD_U1 = 5,
  // z-normal face velocities (3D only).
  CF_FIELD_U2 = 6,
} CfField;

// Opaque simulation handle.
typedef struct CfSimulation CfSimulation;

// Grid geometry; unused trailing axes have one cell and zero faces.
typedef struct CfGridInfo {
  uint32_t dim;
  uint64_t cells[3];
  double lengths[3];
  uint64_t num_cells;
  uint64_t num_faces[3];
} CfGridInfo;

// Diagnostics of one step; same meaning as the CSV columns.
typedef struct CfRecord {
  uint64_t step;
  double time;
  double mass_n;
  double min_n;
  double min_z;
  double max_z;
  double l2_z_sq;
  double cum_z_increments;
  double grad_z_cum;
  double energy_a;
  double dissipation_d;
  uint64_t picard_iters;
  double max_eq_residual;
} CfRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *cf_version(void);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`) and returns the full message
// length in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t cf_last_error_message(char *buf, size_t len);

// Creates a simulation from config text. Relative file paths inside the
// config resolve against `base_dir` (the current directory when null).
// Output settings are ignored; nothing is written to disk.
//
// # Safety
// `config_text` must be a valid NUL-terminated string, `base_dir` null or
// a valid NUL-terminated string, and `out` a valid pointer.
enum CfStatus cf_simulation_new(const char *config_text,
                                const char *base_dir,
                                struct CfSimulation **out);

// Releases a simulation; null is a no-op.
//
// # Safety
// `sim` must be null or a handle from `cf_simulation_new` not yet freed.
void cf_simulation_free(struct CfSimulation *sim);

// Grid geometry of the simulation.
//
// # Safety
// `sim` must be a live handle and `out` a valid pointer.
enum CfStatus cf_simulation_grid(const struct CfSimulation *sim, struct CfGridInfo *out);

// Diagnostics of the current state (the step-0 record before any step).
//
// # Safety
// `sim` must be a live handle and `out` a valid pointer.
enum CfStatus cf_simulation_initial_record(const struct CfSimulation *sim, struct CfRecord *out);

// Advances one time step and stores its diagnostics in `out` (may be
// null). Returns `Finished` without stepping once `t_end` is reached.
//
// # Safety
// `sim` must be a live handle not used concurrently; `out` null or valid.
enum CfStatus cf_simulation_step(struct CfSimulation *sim, struct CfRecord *out);

// Number of values of `field` (cells or faces).
//
// # Safety
// `sim` must be a live handle and `out_len` a valid pointer.
enum CfStatus cf_simulation_field_len(const struct CfSimulation *sim,
                                      enum CfField field,
                                      size_t *out_len);

// Copies `field` (x fastest) into `buf`, which must hold at least
// `cf_simulation_field_len` values.
//
// # Safety
// `sim` must be a live handle and `buf` point to `len` writable doubles.
enum CfStatus cf_simulation_copy_field(const struct CfSimulation *sim,
                                       enum CfField field,
                                       double *buf,
                                       size_t len);

// Writes the current state as a binary checkpoint.
//
// # Safety
// `sim` must be a live handle and `path` a valid NUL-terminated string.
enum CfStatus cf_simulation_write_checkpoint(const struct CfSimulation *sim, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHEMOFLUID_H */
