//! C ABI for the pass-opt toolkit: opaque scenario handles built from TOML
//! config text, solver invocation returning JSON, and the equal-power spacing
//! solver over plain arrays.
//!
//! Conventions:
//! * Every fallible call returns a [`PassOptStatus`]; `PASS_OPT_STATUS_OK`
//!   is zero.
//! * On failure, [`pass_opt_last_error`] returns a thread-local message valid
//!   until the next failing call on the same thread.
//! * Strings returned through out-pointers are owned by the library and must
//!   be released with [`pass_opt_string_free`]; scenario handles with
//!   [`pass_opt_scenario_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use pass_opt::coupling::{equal_power_spacings, CouplingParams};
use pass_opt::harness::{run_solver, trial_users, RunOptions, SolverKind, SweepVar};
use pass_opt::model::Scenario;
use pass_opt::watts_to_dbm;

/// Result of every fallible API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassOptStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    Infeasible = 4,
    SolverError = 5,
    UnknownSolver = 6,
    BadInput = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl AsRef<str>) {
    let sanitized: String =
        message.as_ref().chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call from the same thread; never free
/// it.
#[no_mangle]
pub extern "C" fn pass_opt_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Opaque scenario handle: a concrete deployment (geometry, users, SINR
/// floor) plus solver options parsed from the config.
pub struct PassOptScenario {
    scenario: Scenario,
    run: RunOptions,
}

/// Build a scenario handle from TOML config text (same format as the CLI
/// `--config` file). When the config omits user positions they are drawn from
/// `seed` exactly as the CLI does.
///
/// # Safety
/// `config_toml` must be a valid NUL-terminated C string and `out` a valid
/// pointer; on success `*out` owns the handle.
#[no_mangle]
pub unsafe extern "C" fn pass_opt_scenario_from_toml(
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut PassOptScenario,
) -> PassOptStatus {
    if config_toml.is_null() || out.is_null() {
        set_error("null argument");
        return PassOptStatus::NullArgument;
    }
    let text = match CStr::from_ptr(config_toml).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("config text is not valid UTF-8");
            return PassOptStatus::InvalidUtf8;
        }
    };
    let cfg = match pass_opt::config::ConfigFile::parse(text) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return PassOptStatus::ConfigError;
        }
    };
    let template = match cfg.template() {
        Ok(t) => t,
        Err(e) => {
            set_error(e.to_string());
            return PassOptStatus::ConfigError;
        }
    };
    let users = trial_users(&template, SweepVar::None, 0.0, seed, 0);
    let scenario = match template.scenario_at(SweepVar::None, 0.0, Some(users)) {
        Ok(s) => s,
        Err(e) => {
            set_error(e.to_string());
            return PassOptStatus::ConfigError;
        }
    };
    let run = RunOptions {
        solver: cfg.solver_options(),
        epsilon_w: cfg.solver.epsilon_w,
        bnb_max_iterations: cfg.solver.bnb_max_iterations,
        ..RunOptions::default()
    };
    *out = Box::into_raw(Box::new(PassOptScenario { scenario, run }));
    PassOptStatus::Ok
}

/// Release a scenario handle. Accepts NULL.
///
/// # Safety
/// `scenario` must be NULL or a pointer previously returned by
/// [`pass_opt_scenario_from_toml`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pass_opt_scenario_free(scenario: *mut PassOptScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Run a solver (`"bnb-su"`, `"bnb-su-equal"`, `"bnb-mu"`, `"matching"`,
/// `"vanilla-matching"`, `"baseline-mimo"`, `"continuous-grid"`,
/// `"exhaustive"`) and return a JSON result object
/// `{solver, power_w, power_dbm, iterations, gap_w}` through `out_json`.
///
/// # Safety
/// `scenario` must be a live handle; `solver` a NUL-terminated string;
/// `out_json` a valid pointer. The returned string must be freed with
/// [`pass_opt_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pass_opt_solve(
    scenario: *const PassOptScenario,
    solver: *const c_char,
    out_json: *mut *mut c_char,
) -> PassOptStatus {
    if scenario.is_null() || solver.is_null() || out_json.is_null() {
        set_error("null argument");
        return PassOptStatus::NullArgument;
    }
    let name = match CStr::from_ptr(solver).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("solver name is not valid UTF-8");
            return PassOptStatus::InvalidUtf8;
        }
    };
    let Some(kind) = SolverKind::parse(name) else {
        set_error(format!("unknown solver {name:?}"));
        return PassOptStatus::UnknownSolver;
    };
    let handle = &*scenario;
    match run_solver(kind, &handle.scenario, &handle.run) {
        Ok((power_w, iterations, gap_w)) => {
            let json = serde_json::json!({
                "solver": kind.name(),
                "power_w": power_w,
                "power_dbm": watts_to_dbm(power_w),
                "iterations": iterations,
                "gap_w": if gap_w.is_nan() { None } else { Some(gap_w) },
            });
            match CString::new(json.to_string()) {
                Ok(s) => {
                    *out_json = s.into_raw();
                    PassOptStatus::Ok
                }
                Err(_) => {
                    set_error("result contained interior NUL");
                    return PassOptStatus::SolverError;
                }
            }
        }
        Err(e) => {
            set_error(e.to_string());
            let msg = e.to_string();
            if msg.contains("infeasible") {
                PassOptStatus::Infeasible
            } else {
                PassOptStatus::SolverError
            }
        }
    }
}

/// Release a string returned by this library. Accepts NULL.
///
/// # Safety
/// `s` must be NULL or a pointer previously produced by this library's
/// out-string parameters, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pass_opt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Equal-power spacing solver over one waveguide: for `active[l] != 0` the
/// spacing (mm) realizing the `1/sqrt(L^s)` radiation ratio lands in
/// `spacings_mm[l]` and the ratio in `ratios[l]`; inactive slots receive -1
/// and 0.
///
/// # Safety
/// `active`, `spacings_mm` and `ratios` must point to at least `len`
/// elements each.
#[no_mangle]
pub unsafe extern "C" fn pass_opt_equal_power_spacings(
    omega0_per_mm: f64,
    alpha_per_mm: f64,
    coupler_len_mm: f64,
    active: *const u8,
    len: usize,
    spacings_mm: *mut f64,
    ratios: *mut f64,
) -> PassOptStatus {
    if active.is_null() || spacings_mm.is_null() || ratios.is_null() {
        set_error("null argument");
        return PassOptStatus::NullArgument;
    }
    if len == 0 {
        set_error("empty pattern");
        return PassOptStatus::BadInput;
    }
    let flags: Vec<bool> =
        std::slice::from_raw_parts(active, len).iter().map(|&b| b != 0).collect();
    let params = CouplingParams::new(omega0_per_mm, alpha_per_mm, coupler_len_mm);
    match equal_power_spacings(&flags, &params) {
        Ok(plan) => {
            let out_s = std::slice::from_raw_parts_mut(spacings_mm, len);
            let out_r = std::slice::from_raw_parts_mut(ratios, len);
            for l in 0..len {
                out_s[l] = plan.spacings[l].unwrap_or(-1.0);
                out_r[l] = plan.ratios[l];
            }
            PassOptStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            PassOptStatus::BadInput
        }
    }
}
