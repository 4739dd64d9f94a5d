#ifndef PASS_OPT_H
#define PASS_OPT_H

/* Generated by cbindgen from pass-opt-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible API call.
typedef enum PassOptStatus {
  PASS_OPT_STATUS_OK = 0,
  PASS_OPT_STATUS_NULL_ARGUMENT = 1,
  PASS_OPT_STATUS_INVALID_UTF8 = 2,
  PASS_OPT_STATUS_CONFIG_ERROR = 3,
  PASS_OPT_STATUS_INFEASIBLE = 4,
  PASS_OPT_STATUS_SOLVER_ERROR = 5,
  PASS_OPT_STATUS_UNKNOWN_SOLVER = 6,
  PASS_OPT_STATUS_BAD_INPUT = 7,
} PassOptStatus;

// Opaque scenario handle: a concrete deployment (geometry, users, SINR
// floor) plus solver options parsed from the config.
typedef struct PassOptScenario PassOptScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. The pointer
// stays valid until the next failing call from the same thread; never free
// it.
const char *pass_opt_last_error(void);

// Build a scenario handle from TOML config text (same format as the CLI
// `--config` file). When the config omits user positions they are drawn from
// `seed` exactly as the CLI does.
//
// # Safety
// `config_toml` must be a valid NUL-terminated C string and `out` a valid
// pointer; on success `*out` owns the handle.
enum PassOptStatus pass_opt_scenario_from_toml(const char *config_toml,
                                               uint64_t seed,
                                               struct PassOptScenario **out);

// Release a scenario handle. Accepts NULL.
//
// # Safety
// `scenario` must be NULL or a pointer previously returned by
// [`pass_opt_scenario_from_toml`], not yet freed.
void pass_opt_scenario_free(struct PassOptScenario *scenario);

// Run a solver (`"bnb-su"`, `"bnb-su-equal"`, `"bnb-mu"`, `"matching"`,
// `"vanilla-matching"`, `"baseline-mimo"`, `"continuous-grid"`,
// `"exhaustive"`) and return a JSON result object
// `{solver, power_w, power_dbm, iterations, gap_w}` through `out_json`.
//
// # Safety
// `scenario` must be a live handle; `solver` a NUL-terminated string;
// `out_json` a valid pointer. The returned string must be freed with
// [`pass_opt_string_free`].
enum PassOptStatus pass_opt_solve(const struct PassOptScenario *scenario,
                                  const char *solver,
                                  char **out_json);

// Release a string returned by this library. Accepts NULL.
//
// # Safety
// `s` must be NULL or a pointer previously produced by this library's
// out-string parameters, not yet freed.
void pass_opt_string_free(char *s);

// Equal-power spacing solver over one waveguide: for `active[l] != 0` the
// spacing (mm) realizing the `1/sqrt(L^s)` radiation ratio lands in
// `spacings_mm[l]` and the ratio in `ratios[l]`; inactive slots receive -1
// and 0.
//
// # Safety
// `active`, `spacings_mm` and `ratios` must point to at least `len`
// elements each.
enum PassOptStatus pass_opt_equal_power_spacings(double omega0_per_mm,
                                                 double alpha_per_mm,
                                                 double coupler_len_mm,
                                                 const uint8_t *active,
                                                 uintptr_t len,
                                                 double *spacings_mm,
                                                 double *ratios);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PASS_OPT_H */
