#ifndef ANAFLOW_H
#define ANAFLOW_H

/* Generated by cbindgen from anaflow-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible calls. Anything other than `Ok`
 * leaves a message readable through [`af_last_error`].
 */
typedef enum AfStatus {
  AF_STATUS_OK = 0,
  AF_STATUS_NULL_ARGUMENT = 1,
  AF_STATUS_INVALID_UTF8 = 2,
  AF_STATUS_PARSE_ERROR = 3,
  AF_STATUS_DOMAIN_ERROR = 4,
} AfStatus;

/**
 * Opaque netlist handle. Create with [`af_netlist_parse`], release with
 * [`af_netlist_free`].
 */
typedef struct AfNetlist AfNetlist;

/**
 * Recovery comparison of a predicted netlist against a reference.
 */
typedef struct AfRecovery {
  bool exact_match;
  double component_accuracy;
  double edge_accuracy;
} AfRecovery;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null after a
 * success. The pointer stays valid until the next call on this thread.
 */
const char *af_last_error(void);

/**
 * Parse SPICE text into a netlist handle.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum AfStatus af_netlist_parse(const char *text, struct AfNetlist **out);

/**
 * Release a netlist handle. Null is a no-op.
 *
 * # Safety
 * `h` must come from [`af_netlist_parse`] and not be freed twice.
 */
void af_netlist_free(struct AfNetlist *h);

/**
 * Number of devices in the netlist; 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t af_netlist_device_count(const struct AfNetlist *h);

/**
 * Number of distinct nets in the netlist; 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t af_netlist_net_count(const struct AfNetlist *h);

/**
 * Serialize the netlist back to SPICE. Caller frees via
 * [`af_string_free`]; null for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
char *af_netlist_serialize(const struct AfNetlist *h);

/**
 * Canonical form of the netlist: equal strings mean isomorphic circuits.
 * Caller frees via [`af_string_free`]; null for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
char *af_netlist_canonical(const struct AfNetlist *h);

/**
 * Release a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void af_string_free(char *s);

/**
 * Score `pred` against the reference `truth`.
 *
 * # Safety
 * All pointers must be live; `out` must be writable.
 */
enum AfStatus af_recovery_score(const struct AfNetlist *pred,
                                const struct AfNetlist *truth,
                                struct AfRecovery *out);

/**
 * Unbiased pass@k estimate from `n` attempts with `c` successes.
 * Requires 0 <= c <= n and 1 <= k <= n.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum AfStatus af_pass_at_k(size_t n, size_t c, size_t k, double *out);

/**
 * Lower bound on joint multi-branch success: 1 - prod(1 - p_b). Branch
 * probabilities outside [0, 1] are rejected.
 *
 * # Safety
 * `probs` must point to `len` doubles; `out` must be a valid pointer.
 */
enum AfStatus af_joint_pass_lower_bound(const double *probs, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANAFLOW_H */
