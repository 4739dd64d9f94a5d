//! Optimization toolkit for pinching-antenna systems (PASS).
//!
//! A PASS feeds baseband signals through dielectric waveguides and radiates
//! them via small couplers ("pinching antennas") that can be activated at
//! pre-mounted discrete locations. This crate models the waveguide-to-antenna
//! power coupling, builds the joint transmit/pinching beamforming problem, and
//! solves it three ways:
//!
//! * [`bnb_su`] — globally optimal single-user design via branch-and-bound
//!   over binary activations with an LP relaxation bound,
//! * [`bnb_mu`] — globally optimal multi-user design via branch-and-bound over
//!   mixed binary/continuous boxes with a McCormick-relaxed SOCP bound,
//! * [`matching`] — a low-complexity welfare-driven many-to-many matching game
//!   with KKT closed-form transmit beamforming.
//!
//! [`harness`] adds baselines (conventional MIMO, continuous-placement grid
//! search, exhaustive enumeration) and a seeded experiment runner that writes
//! CSV results. The `pass-opt` binary exposes everything as CLI verbs.

pub mod bnb_mu;
pub mod bnb_su;
pub mod config;
pub mod coupling;
pub mod harness;
pub mod matching;
pub mod model;
pub mod socp;

pub use model::{ActivationPattern, ChannelSet, Geometry, Scenario};

/// Propagation speed used throughout (m/s). The round 3e8 convention keeps
/// derived quantities like the 15 GHz carrier wavelength at exactly 0.02 m.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Convert watts to dBm.
pub fn watts_to_dbm(p_watts: f64) -> f64 {
    10.0 * (p_watts / 1.0e-3).log10()
}

/// Convert dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1.0e-3 * 10f64.powf(dbm / 10.0)
}

/// Convert a dB ratio to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_round_trip() {
        for &p in &[1e-11, 2.5e-7, 1e-3, 3.0] {
            let back = dbm_to_watts(watts_to_dbm(p));
            assert!((back - p).abs() / p < 1e-12);
        }
        assert!((dbm_to_watts(-80.0) - 1e-11).abs() < 1e-26);
        assert!((db_to_linear(20.0) - 100.0).abs() < 1e-12);
    }
}
