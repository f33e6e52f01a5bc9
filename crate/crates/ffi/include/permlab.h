#ifndef PERMLAB_H
#define PERMLAB_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PermlabStatus {
  PERMLAB_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  PERMLAB_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  PERMLAB_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed JSON or a value outside its domain.
   */
  PERMLAB_STATUS_INVALID_INPUT = 3,
  /**
   * Unknown descriptor, target or other name.
   */
  PERMLAB_STATUS_NOT_FOUND = 4,
  /**
   * A panic was caught at the boundary. The handle involved should not be
   * used further.
   */
  PERMLAB_STATUS_INTERNAL = 5,
} PermlabStatus;

typedef enum PermlabOutcome {
  PERMLAB_OUTCOME_GRANTED = 0,
  PERMLAB_OUTCOME_DENIED = 1,
  PERMLAB_OUTCOME_PROMPT = 2,
  PERMLAB_OUTCOME_UNSUPPORTED = 3,
} PermlabOutcome;

typedef enum PermlabAction {
  PERMLAB_ACTION_ALLOW = 0,
  PERMLAB_ACTION_DENY = 1,
  PERMLAB_ACTION_IGNORE = 2,
  /**
   * The caller expects no prompt.
   */
  PERMLAB_ACTION_NONE = 3,
} PermlabAction;

/**
 * Registry, matrix and scanner patterns.
 */
typedef struct PermlabLab PermlabLab;

/**
 * A simulated permission store.
 */
typedef struct PermlabStore PermlabStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Do not free.
 */
const char *permlab_version(void);

/**
 * Copy of the last error message on this thread, or null when the last call
 * succeeded. Free with `permlab_string_free`.
 */
char *permlab_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void permlab_string_free(char *s);

/**
 * Builds a lab. Each JSON argument may be null to use the embedded data.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum PermlabStatus permlab_lab_new(const char *registry_json,
                                   const char *matrix_json,
                                   const char *patterns_json,
                                   struct PermlabLab **out);

/**
 * # Safety
 * `lab` must be null or a handle from `permlab_lab_new` not yet freed.
 */
void permlab_lab_free(struct PermlabLab *lab);

/**
 * Writes the registry as a JSON array of descriptors.
 *
 * # Safety
 * `lab` must be a live handle; `out` must be writable.
 */
enum PermlabStatus permlab_registry_json(const struct PermlabLab *lab, char **out);

/**
 * Writes the raw state code (`g`, `p`, `d`, `-` or `g*`) of one matrix cell.
 *
 * # Safety
 * `lab` must be a live handle; strings NUL-terminated; `out` writable.
 */
enum PermlabStatus permlab_matrix_cell(const struct PermlabLab *lab,
                                       const char *descriptor,
                                       const char *target,
                                       char **out);

/**
 * Classifies an observation such as
 * `{"context": "tab", "states": {"nfc": "denied"}}`. `candidates_json` is
 * null for all targets or a JSON array of target ids.
 *
 * # Safety
 * `lab` must be a live handle; strings null or NUL-terminated; `out`
 * writable.
 */
enum PermlabStatus permlab_classify(const struct PermlabLab *lab,
                                    const char *observation_json,
                                    const char *candidates_json,
                                    char **out);

/**
 * Plans probes separating the targets in `targets_json` (a JSON array of
 * ids). `context` is `installed`, `tab` or null for tab. Writes
 * `{"probes": [...], "groups": [[...]], "verified": bool}`.
 *
 * # Safety
 * `lab` must be a live handle; strings null or NUL-terminated; `out`
 * writable.
 */
enum PermlabStatus permlab_plan_probes(const struct PermlabLab *lab,
                                       const char *targets_json,
                                       uint32_t max_probes,
                                       const char *context,
                                       char **out);

/**
 * Replays a scenario document and writes its trace. A scenario whose
 * expectations fail still returns `Ok`; check `"passed"` in the trace.
 *
 * # Safety
 * `lab` must be a live handle; `scenario_json` NUL-terminated; `out`
 * writable.
 */
enum PermlabStatus permlab_run_scenario(const struct PermlabLab *lab,
                                        const char *scenario_json,
                                        char **out);

/**
 * Scans offline fixture sites and writes the report. `dirs_json` is a JSON
 * array of directory paths. Unreadable fixtures appear under `"failures"`.
 *
 * # Safety
 * `lab` must be a live handle; `dirs_json` NUL-terminated; `out` writable.
 */
enum PermlabStatus permlab_scan_fixtures(const struct PermlabLab *lab,
                                         const char *dirs_json,
                                         char **out);

/**
 * Creates a store. `config_json` takes the shape of a scenario `config`
 * object; null means all defaults. The store stays valid after the lab is
 * freed.
 *
 * # Safety
 * `lab` must be a live handle; `config_json` null or NUL-terminated; `out`
 * writable.
 */
enum PermlabStatus permlab_store_new(const struct PermlabLab *lab,
                                     const char *config_json,
                                     struct PermlabStore **out);

/**
 * # Safety
 * `store` must be null or a handle from `permlab_store_new` not yet freed.
 */
void permlab_store_free(struct PermlabStore *store);

/**
 * Read-only query. Unknown descriptor names yield `Unsupported`.
 *
 * # Safety
 * `store` must be a live handle; strings NUL-terminated; `out` writable.
 */
enum PermlabStatus permlab_store_query(const struct PermlabStore *store,
                                       const char *actor_json,
                                       const char *descriptor,
                                       enum PermlabOutcome *out);

/**
 * Requests a permission, applying `action` if a prompt is shown.
 *
 * # Safety
 * `store` must be a live handle; strings NUL-terminated; `out` writable.
 */
enum PermlabStatus permlab_store_request(struct PermlabStore *store,
                                         const char *actor_json,
                                         const char *descriptor,
                                         enum PermlabAction action,
                                         bool remember,
                                         enum PermlabOutcome *out);

/**
 * Session boundary for the actor's scope. Closing an installed app is the
 * same operation.
 *
 * # Safety
 * `store` must be a live handle; `actor_json` NUL-terminated.
 */
enum PermlabStatus permlab_store_session_end(struct PermlabStore *store, const char *actor_json);

/**
 * Writes the leakage audit for the actors in `actors_json`, a JSON array of
 * actor objects.
 *
 * # Safety
 * `store` must be a live handle; `actors_json` NUL-terminated; `out`
 * writable.
 */
enum PermlabStatus permlab_store_leakage_audit(const struct PermlabStore *store,
                                               const char *actors_json,
                                               char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERMLAB_H */
