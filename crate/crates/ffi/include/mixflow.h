#ifndef MIXFLOW_H
#define MIXFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  MIXFLOW_STATUS_OK = 0,
  MIXFLOW_STATUS_NULL_POINTER = 1,
  MIXFLOW_STATUS_INVALID_UTF8 = 2,
  MIXFLOW_STATUS_INVALID_CONFIG = 3,
  MIXFLOW_STATUS_NUMERICAL = 4,
  MIXFLOW_STATUS_IO = 5,
  MIXFLOW_STATUS_OUT_OF_RANGE = 6,
  MIXFLOW_STATUS_PANIC = 7,
} MixflowStatus;

// Parsed experiment configuration.
typedef struct MixflowConfig MixflowConfig;

// Trajectories and metrics of a finished run.
typedef struct MixflowResult MixflowResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next call into the library from the same thread.
const char *mixflow_last_error(void);

// Parses a JSON config; an empty string gives the defaults.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
MixflowStatus mixflow_config_parse(const char *json, MixflowConfig **out);

// Serializes a config to JSON. Free the string with [`mixflow_string_free`].
//
// # Safety
// `cfg` must come from [`mixflow_config_parse`]; `out` must be valid.
MixflowStatus mixflow_config_to_json(const MixflowConfig *cfg, char **out);

// # Safety
// `cfg` must come from [`mixflow_config_parse`] or be null.
void mixflow_config_free(MixflowConfig *cfg);

// Runs the configured experiment (baseline or controlled).
//
// # Safety
// `cfg` must come from [`mixflow_config_parse`]; `out` must be valid.
MixflowStatus mixflow_run(const MixflowConfig *cfg, MixflowResult **out);

// # Safety
// `res` must come from [`mixflow_run`] or be null.
void mixflow_result_free(MixflowResult *res);

// Number of cells, or 0 for a null handle.
//
// # Safety
// `res` must come from [`mixflow_run`] or be null.
size_t mixflow_result_cells(const MixflowResult *res);

// Number of stored time levels (`nt + 1`), or 0 for a null handle.
//
// # Safety
// `res` must come from [`mixflow_run`] or be null.
size_t mixflow_result_steps(const MixflowResult *res);

// Copies the normalized L2 and H^-1 deviation series. Either output may be
// null; non-null buffers need room for [`mixflow_result_steps`] values.
//
// # Safety
// Non-null buffers must hold at least `len` doubles.
MixflowStatus mixflow_result_metrics(const MixflowResult *res,
                                     double *normalized_l2,
                                     double *hm1_deviation,
                                     size_t len);

// Copies `rho1`, `rho2` and the total density at one time level. Outputs
// may be null; non-null buffers need room for [`mixflow_result_cells`] values.
//
// # Safety
// Non-null buffers must hold at least `len` doubles.
MixflowStatus mixflow_result_densities(const MixflowResult *res,
                                       size_t step,
                                       double *rho1,
                                       double *rho2,
                                       double *total,
                                       size_t len);

// Run summary as JSON. Free the string with [`mixflow_string_free`].
//
// # Safety
// `res` must come from [`mixflow_run`]; `out` must be valid.
MixflowStatus mixflow_result_summary_json(const MixflowResult *res, char **out);

// Writes the CSV, JSON and (when `emit_svg` is nonzero) SVG files into `dir`.
//
// # Safety
// `res` must come from [`mixflow_run`]; `dir` must be a NUL-terminated path.
MixflowStatus mixflow_result_write(const MixflowResult *res, const char *dir, int emit_svg);

// # Safety
// `s` must be a string returned by this library or null.
void mixflow_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIXFLOW_H */
