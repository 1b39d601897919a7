#ifndef PROGFIX_H
#define PROGFIX_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  PF_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  PF_STATUS_NULL = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  PF_STATUS_UTF8 = 2,
  /**
   * Source or expression text failed to parse or lower.
   */
  PF_STATUS_PARSE = 3,
  /**
   * A problem directory or its cluster store could not be read.
   */
  PF_STATUS_IO = 4,
  /**
   * No stored representative has the attempt's control flow, or none
   * could be repaired.
   */
  PF_STATUS_NO_MATCH = 5,
  /**
   * The repair budget ran out.
   */
  PF_STATUS_TIMEOUT = 6,
  /**
   * The engine panicked; the handle arguments are still valid.
   */
  PF_STATUS_PANIC = 7,
} PfStatus;

/**
 * A problem with its inputs and stored representatives.
 */
typedef struct PfProblem PfProblem;

/**
 * A parsed and lowered attempt.
 */
typedef struct PfProgram PfProgram;

/**
 * A successful repair and its rendered feedback.
 */
typedef struct PfRepair PfRepair;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into the library on the same thread.
 */
const char *pf_last_error_message(void);

/**
 * Parses and lowers one attempt. `name` labels the program in repair
 * results.
 *
 * # Safety
 * `name` and `source` must be null or nul-terminated strings; `out` must
 * be null or valid for writes.
 */
PfStatus pf_program_parse(const char *name, const char *source, PfProgram **out);

/**
 * # Safety
 * `p` must be null or a handle from [`pf_program_parse`] not yet freed.
 */
void pf_program_free(PfProgram *p);

/**
 * Opens a problem directory whose cluster store has been built.
 *
 * # Safety
 * `dir` must be null or a nul-terminated string; `out` must be null or
 * valid for writes.
 */
PfStatus pf_problem_open(const char *dir, PfProblem **out);

/**
 * # Safety
 * `p` must be null or a handle from [`pf_problem_open`] not yet freed.
 */
void pf_problem_free(PfProblem *p);

/**
 * Whether the attempt returns the expected output on every input.
 *
 * # Safety
 * Handles must be live; `out` must be null or valid for writes.
 */
PfStatus pf_problem_is_correct(const PfProblem *problem, const PfProgram *program, bool *out);

/**
 * Repairs an attempt against the problem's representatives within
 * `timeout_ms` milliseconds.
 *
 * # Safety
 * Handles must be live; `out` must be null or valid for writes.
 */
PfStatus pf_problem_repair(const PfProblem *problem,
                           const PfProgram *program,
                           uint64_t timeout_ms,
                           PfRepair **out);

/**
 * # Safety
 * `r` must be null or a handle from [`pf_problem_repair`] not yet freed.
 */
void pf_repair_free(PfRepair *r);

/**
 * Total tree-edit cost of the repair; 0 for a null handle.
 *
 * # Safety
 * `r` must be null or a live repair handle.
 */
size_t pf_repair_total_cost(const PfRepair *r);

/**
 * Number of modifications in the repair; 0 for a null handle.
 *
 * # Safety
 * `r` must be null or a live repair handle.
 */
size_t pf_repair_modification_count(const PfRepair *r);

/**
 * The full repair record as JSON. Free the string with
 * [`pf_string_free`].
 *
 * # Safety
 * `r` must be a live repair handle; `out` must be null or valid for
 * writes.
 */
PfStatus pf_repair_json(const PfRepair *r, char **out);

/**
 * The rendered feedback as JSON (`items` and `fallback`). Free the string
 * with [`pf_string_free`].
 *
 * # Safety
 * `r` must be a live repair handle; `out` must be null or valid for
 * writes.
 */
PfStatus pf_repair_feedback_json(const PfRepair *r, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library not yet freed.
 */
void pf_string_free(char *s);

/**
 * Tree edit distance between two expressions in surface syntax.
 *
 * # Safety
 * `a` and `b` must be null or nul-terminated strings; `out` must be null
 * or valid for writes.
 */
PfStatus pf_tree_distance(const char *a, const char *b, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROGFIX_H */
