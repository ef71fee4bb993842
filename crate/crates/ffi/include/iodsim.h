#ifndef IODSIM_H
#define IODSIM_H

/* Generated by cbindgen from the iodsim-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the CLI exit codes.
 */
typedef enum IodsimStatus {
  IODSIM_STATUS_OK = 0,
  IODSIM_STATUS_VALIDATION_ERROR = 1,
  IODSIM_STATUS_SYNTAX_ERROR = 2,
  IODSIM_STATUS_RUNTIME_ERROR = 3,
  IODSIM_STATUS_IO_ERROR = 4,
  IODSIM_STATUS_INVALID_ARGUMENT = 5,
} IodsimStatus;

/**
 * Opaque parsed-and-validated scenario.
 */
typedef struct IodsimScenario IodsimScenario;

/**
 * Summary of a completed run.
 */
typedef struct IodsimRunStats {
  uint64_t events_processed;
  double wall_seconds;
  double virtual_seconds;
} IodsimRunStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses and validates scenario JSON into an opaque handle.
 *
 * On success `*out` owns the scenario. Warnings (and on failure, errors)
 * are reported through `diagnostics` when it is non-NULL.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out` must be a valid
 * pointer; `diagnostics` may be NULL.
 */
enum IodsimStatus iodsim_scenario_parse(const char *json,
                                        struct IodsimScenario **out,
                                        char **diagnostics);

/**
 * Reads a scenario file and parses it like [`iodsim_scenario_parse`].
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be valid;
 * `diagnostics` may be NULL.
 */
enum IodsimStatus iodsim_scenario_load_file(const char *path,
                                            struct IodsimScenario **out,
                                            char **diagnostics);

/**
 * Overrides the seed of a parsed scenario.
 *
 * # Safety
 * `scenario` must be a live handle from this library.
 */
enum IodsimStatus iodsim_scenario_set_seed(struct IodsimScenario *scenario, uint64_t seed);

/**
 * Overrides the virtual duration of a parsed scenario.
 *
 * # Safety
 * `scenario` must be a live handle from this library.
 */
enum IodsimStatus iodsim_scenario_set_duration(struct IodsimScenario *scenario, double seconds);

/**
 * Runs the scenario, writing the XML report, traces, captures and the
 * progress log under `results_dir` (created if absent).
 *
 * # Safety
 * `scenario` must be a live handle; `results_dir` a valid NUL-terminated
 * string; `stats_out` and `error_out` may be NULL.
 */
enum IodsimStatus iodsim_scenario_run(struct IodsimScenario *scenario,
                                      const char *results_dir,
                                      struct IodsimRunStats *stats_out,
                                      char **error_out);

/**
 * Computes a KPI CSV (`power`, `rssi`, `throughput`, `storage`, `latency`,
 * `plr` or `perf`) from a results directory. `window_s <= 0` selects the
 * default 1 s window.
 *
 * # Safety
 * `results_dir` and `kpi` must be valid NUL-terminated strings; `csv_out`
 * must be valid; `error_out` may be NULL.
 */
enum IodsimStatus iodsim_analyze(const char *results_dir,
                                 const char *kpi,
                                 double window_s,
                                 char **csv_out,
                                 char **error_out);

/**
 * Releases a scenario handle. NULL is a no-op.
 *
 * # Safety
 * `scenario` must come from this library and not be freed twice.
 */
void iodsim_scenario_free(struct IodsimScenario *scenario);

/**
 * Releases a string handed out by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void iodsim_string_free(char *s);

/**
 * Library version as a static string; do not free.
 */
const char *iodsim_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IODSIM_H */
