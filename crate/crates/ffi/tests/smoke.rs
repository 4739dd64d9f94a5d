//! End-to-end exercise of the C ABI from Rust: handle lifecycle, solver
//! round trips, error paths, and the spacing array call.

use std::ffi::{CStr, CString};
use std::ptr;

use pass_opt_ffi::{
    pass_opt_equal_power_spacings, pass_opt_last_error, pass_opt_scenario_free,
    pass_opt_scenario_from_toml, pass_opt_solve, pass_opt_string_free, PassOptScenario,
    PassOptStatus,
};

const CONFIG: &str = r#"
[scenario]
num_waveguides = 2
num_users = 2
antennas_per_waveguide = 3
span_x = 10.0
span_y = 10.0
height = 5.0
noise_dbm = -80.0
sinr_min_db = 20.0
user_positions = [[2.0, 7.0], [8.0, 3.0]]
"#;

fn build_scenario() -> *mut PassOptScenario {
    let toml = CString::new(CONFIG).unwrap();
    let mut handle: *mut PassOptScenario = ptr::null_mut();
    let status = unsafe { pass_opt_scenario_from_toml(toml.as_ptr(), 0, &mut handle) };
    assert_eq!(status, PassOptStatus::Ok);
    assert!(!handle.is_null());
    handle
}

#[test]
fn solve_round_trip() {
    let handle = build_scenario();
    for solver in ["matching", "bnb-mu", "baseline-mimo", "exhaustive"] {
        let name = CString::new(solver).unwrap();
        let mut json: *mut std::ffi::c_char = ptr::null_mut();
        let status = unsafe { pass_opt_solve(handle, name.as_ptr(), &mut json) };
        assert_eq!(status, PassOptStatus::Ok, "{solver}");
        let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
        unsafe { pass_opt_string_free(json) };
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["solver"], solver);
        let p = parsed["power_w"].as_f64().unwrap();
        assert!(p.is_finite() && p > 0.0, "{solver}: {text}");
    }
    unsafe { pass_opt_scenario_free(handle) };
}

#[test]
fn pass_power_beats_baseline_here() {
    let handle = build_scenario();
    let mut powers = Vec::new();
    for solver in ["matching", "baseline-mimo"] {
        let name = CString::new(solver).unwrap();
        let mut json: *mut std::ffi::c_char = ptr::null_mut();
        assert_eq!(unsafe { pass_opt_solve(handle, name.as_ptr(), &mut json) }, PassOptStatus::Ok);
        let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
        unsafe { pass_opt_string_free(json) };
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        powers.push(parsed["power_w"].as_f64().unwrap());
    }
    assert!(powers[0] < powers[1], "matching {} vs baseline {}", powers[0], powers[1]);
    unsafe { pass_opt_scenario_free(handle) };
}

#[test]
fn error_paths_set_messages() {
    // null argument
    let status = unsafe { pass_opt_scenario_from_toml(ptr::null(), 0, ptr::null_mut()) };
    assert_eq!(status, PassOptStatus::NullArgument);

    // malformed config
    let bad = CString::new("[scenario]\nnum_waveguides = -3\n").unwrap();
    let mut handle: *mut PassOptScenario = ptr::null_mut();
    let status = unsafe { pass_opt_scenario_from_toml(bad.as_ptr(), 0, &mut handle) };
    assert_eq!(status, PassOptStatus::ConfigError);
    let msg = unsafe { CStr::from_ptr(pass_opt_last_error()) }.to_str().unwrap();
    assert!(!msg.is_empty());

    // unknown solver
    let handle = build_scenario();
    let name = CString::new("simulated-annealing").unwrap();
    let mut json: *mut std::ffi::c_char = ptr::null_mut();
    let status = unsafe { pass_opt_solve(handle, name.as_ptr(), &mut json) };
    assert_eq!(status, PassOptStatus::UnknownSolver);
    unsafe { pass_opt_scenario_free(handle) };
}

#[test]
fn spacing_array_contract() {
    let active = [1u8, 0, 1, 1];
    let mut spacings = [0.0f64; 4];
    let mut ratios = [0.0f64; 4];
    let status = unsafe {
        pass_opt_equal_power_spacings(
            0.33,
            0.24615,
            5.0,
            active.as_ptr(),
            4,
            spacings.as_mut_ptr(),
            ratios.as_mut_ptr(),
        )
    };
    assert_eq!(status, PassOptStatus::Ok);
    assert_eq!(spacings[1], -1.0);
    assert_eq!(ratios[1], 0.0);
    let beta = 1.0 / 3f64.sqrt();
    for l in [0, 2, 3] {
        assert!((ratios[l] - beta).abs() < 1e-12);
        assert!(spacings[l] > 0.0);
    }
    // empty pattern is rejected
    let status = unsafe {
        pass_opt_equal_power_spacings(
            0.33,
            0.24615,
            5.0,
            [0u8; 2].as_ptr(),
            2,
            spacings.as_mut_ptr(),
            ratios.as_mut_ptr(),
        )
    };
    assert_eq!(status, PassOptStatus::BadInput);
}
