#ifndef MABMECH_H
#define MABMECH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Checks accepted by [`mab_check`].
typedef enum MabCheck {
  MAB_CHECK_POINTWISE = 0,
  MAB_CHECK_EXPSEP = 1,
  MAB_CHECK_WEAKSEP = 2,
  MAB_CHECK_TRUTHFUL = 3,
  MAB_CHECK_NORMALIZED = 4,
} MabCheck;

// Status codes; the first four match the command-line exit codes.
typedef enum MabStatus {
  MAB_STATUS_OK = 0,
  MAB_STATUS_VIOLATION = 1,
  MAB_STATUS_CONFIG = 2,
  MAB_STATUS_BUDGET = 3,
  MAB_STATUS_NULL_POINTER = 4,
  MAB_STATUS_NON_DETERMINISTIC = 5,
  MAB_STATUS_PANIC = 6,
} MabStatus;

// A named rule with its payment scheme, fixed `k` and `T`.
typedef struct MabMechanism MabMechanism;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Length in bytes of the last error message on this thread, without the
// terminating NUL; 0 when there is none.
size_t mab_last_error_length(void);

// Copies the last error message, NUL-terminated and truncated to fit, into
// `buf`. Returns the number of bytes written excluding the NUL.
//
// # Safety
// `buf` must be valid for `len` bytes or null.
size_t mab_last_error_message(char *buf, size_t len);

// Static version string.
const char *mab_version(void);

// Creates a mechanism for `rule` (`naive`, `ucb1`, `elimination`, `psim`).
//
// # Safety
// `rule` must be a NUL-terminated string and `out` a valid pointer.
enum MabStatus mab_mechanism_new(const char *rule,
                                 size_t agents,
                                 size_t horizon,
                                 double v_max,
                                 struct MabMechanism **out);

// Releases a handle; null is ignored.
//
// # Safety
// `h` must come from [`mab_mechanism_new`] and not be used afterwards.
void mab_mechanism_free(struct MabMechanism *h);

// Runs the mechanism on a fixed realization.
//
// `bids` has `k` entries, `clicks` `k * T` row-major bytes. Writes the
// shown agent per round to `out_agents` (`T` entries), whether it was
// clicked to `out_clicked` (`T` entries) and payments to `out_payments`
// (`k` entries). Output pointers may be null to skip them.
//
// # Safety
// All non-null pointers must be valid for the stated lengths.
enum MabStatus mab_mechanism_run(struct MabMechanism *h,
                                 const double *bids,
                                 const uint8_t *clicks,
                                 uint64_t seed,
                                 size_t *out_agents,
                                 uint8_t *out_clicked,
                                 double *out_payments);

// Myerson payment of `agent` for the handle's allocation rule on a fixed
// realization, with bisection tolerance `tol * b_agent` (`tol <= 0` picks
// the default `1e-9`).
//
// # Safety
// `bids` must hold `k` values, `clicks` `k * T` bytes, `out` be valid.
enum MabStatus mab_myerson_payment(struct MabMechanism *h,
                                   const double *bids,
                                   const uint8_t *clicks,
                                   size_t agent,
                                   double tol,
                                   double *out);

// PSim per-click price of `agent` given committed exploration clicks
// per agent, with the default phase parameters for `(k, T, v_max)`.
//
// # Safety
// `bids` and `clicks` must hold `k` values and `out` be valid.
enum MabStatus mab_psim_price(size_t agents,
                              size_t horizon,
                              double v_max,
                              const double *bids,
                              const uint64_t *clicks,
                              size_t agent,
                              double *out);

// Exhaustive check of a named rule over all `2^(kT)` realizations and the
// common grid `grid[0..grid_len]` for bids and values. Returns
// [`MabStatus::Ok`] when the property holds, [`MabStatus::Violation`]
// when it fails (the counterexample text is then the last error message)
// and [`MabStatus::Budget`] when `k * T > max_kt`.
//
// # Safety
// `rule` must be NUL-terminated and `grid` valid for `grid_len` values.
enum MabStatus mab_check(const char *rule,
                         size_t agents,
                         size_t horizon,
                         enum MabCheck check,
                         const double *grid,
                         size_t grid_len,
                         size_t max_kt);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MABMECH_H */
