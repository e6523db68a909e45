#ifndef AICON_H
#define AICON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define AICON_DOMAIN_NAV2D 0

#define AICON_DOMAIN_PUSHT 1

#define AICON_MODE_FULL 0

#define AICON_MODE_FULL_NO_NOISE 1

#define AICON_MODE_STEEPEST 2

#define AICON_MODE_NO_EXPLORATION 3

typedef enum AiconStatus {
  AICON_STATUS_OK = 0,
  AICON_STATUS_NULL_POINTER = 1,
  AICON_STATUS_INVALID_ARGUMENT = 2,
  AICON_STATUS_PARSE = 3,
  AICON_STATUS_IO = 4,
  /**
   * Non-finite or degenerate numerics inside the controller or a model.
   */
  AICON_STATUS_NUMERICAL = 5,
  AICON_STATUS_INFEASIBLE_SCENARIO = 6,
  /**
   * The rollout already finished.
   */
  AICON_STATUS_FINISHED = 7,
  AICON_STATUS_PANIC = 8,
} AiconStatus;

/**
 * Outcome tables of a benchmark batch.
 */
typedef struct AiconReport AiconReport;

/**
 * A single task of either domain.
 */
typedef struct AiconScenario AiconScenario;

/**
 * A closed-loop rollout advanced one control tick at a time.
 */
typedef struct AiconSession AiconSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating to `len` bytes. Returns the full message
 * length without the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t aicon_last_error(char *buf, size_t len);

/**
 * Draws the scenario with index 0 of a batch seeded by `seed`.
 *
 * # Safety
 * `out` must be a valid pointer to write the new handle to.
 */
enum AiconStatus aicon_scenario_generate(uint32_t domain,
                                         uint64_t seed,
                                         struct AiconScenario **out);

/**
 * Parses the first scenario of a scenario file given as TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AiconStatus aicon_scenario_from_toml(const char *toml, struct AiconScenario **out);

/**
 * # Safety
 * `scenario` must be null or a handle from this library not yet freed.
 */
void aicon_scenario_free(struct AiconScenario *scenario);

/**
 * Starts a rollout of `scenario` under `mode` with default settings.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum AiconStatus aicon_session_new(const struct AiconScenario *scenario,
                                   uint32_t mode,
                                   struct AiconSession **out);

/**
 * Runs one control tick. `action` receives the commanded velocity and
 * `done` is set once the task is solved or the tick budget is spent.
 *
 * # Safety
 * `session` must be a live handle; `action` must point to two doubles and
 * `done` to one bool.
 */
enum AiconStatus aicon_session_step(struct AiconSession *session, double *action, bool *done);

/**
 * Ground-truth agent (nav2d) or pusher (pushT) position.
 *
 * # Safety
 * `session` must be a live handle and `xy` must point to two doubles.
 */
enum AiconStatus aicon_session_position(const struct AiconSession *session, double *xy);

/**
 * Ticks run so far and whether the task has been solved.
 *
 * # Safety
 * `session` must be a live handle; outputs must be valid pointers.
 */
enum AiconStatus aicon_session_status(const struct AiconSession *session,
                                      size_t *ticks,
                                      bool *success);

/**
 * # Safety
 * `session` must be null or a handle from this library not yet freed.
 */
void aicon_session_free(struct AiconSession *session);

/**
 * Generates `n` scenarios from `seed` and runs each under the modes in
 * `modes[0..n_modes]` on `jobs` threads.
 *
 * # Safety
 * `modes` must point to `n_modes` values and `out` must be valid.
 */
enum AiconStatus aicon_bench_run(uint32_t domain,
                                 size_t n,
                                 uint64_t seed,
                                 const uint32_t *modes,
                                 size_t n_modes,
                                 size_t jobs,
                                 struct AiconReport **out);

/**
 * Successes and scenario count of one mode in a report.
 *
 * # Safety
 * `report` must be a live handle; outputs must be valid pointers.
 */
enum AiconStatus aicon_report_successes(const struct AiconReport *report,
                                        uint32_t mode,
                                        size_t *successes,
                                        size_t *scenarios);

/**
 * Writes the report's CSV tables into the existing directory `dir`.
 *
 * # Safety
 * `report` must be a live handle and `dir` a NUL-terminated path.
 */
enum AiconStatus aicon_report_write_csv(const struct AiconReport *report, const char *dir);

/**
 * # Safety
 * `report` must be null or a handle from this library not yet freed.
 */
void aicon_report_free(struct AiconReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AICON_H */
