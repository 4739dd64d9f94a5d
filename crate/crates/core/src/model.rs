//! Physical layer: deployment geometry, free-space and in-waveguide channel
//! responses, activation patterns, and SINR evaluation.
//!
//! Conventions used throughout the crate:
//!
//! * Powers are watts internally; dBm only at reporting boundaries.
//! * `response(l, n, k)` stores the conjugated free-space coefficient
//!   `sqrt(phi) e^{-i 2 pi d / lambda} / d` — exactly the entry of the row
//!   vector `h_k^H`, so downstream products with the in-waveguide phase
//!   accumulate propagation delays additively.
//! * Antennas are indexed `(l, n)` with flat index `m = n * L + l`; antenna 1
//!   sits closest to the feed point.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SPEED_OF_LIGHT;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("antenna grid spacing {spacing} m does not exceed the carrier wavelength {wavelength} m")]
    SpacingBelowWavelength { spacing: f64, wavelength: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("waveguide {0} has no active antenna but carries beamforming power")]
    EmptyPoweredWaveguide(usize),
}

/// Orientation of a waveguide in the deployment plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Antennas spread along x at the feed's y coordinate.
    X,
    /// Antennas spread along y at the feed's x coordinate.
    Y,
}

/// Placement of one waveguide: its axis and feed-point plane coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WaveguideLayout {
    pub axis: Axis,
    pub feed_x: f64,
    pub feed_y: f64,
}

/// Full experiment description; the single source of truth every solver and
/// baseline consumes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub num_waveguides: usize,
    pub num_users: usize,
    pub antennas_per_waveguide: usize,
    /// Deployment span along x (m).
    pub span_x: f64,
    /// Deployment span along y (m).
    pub span_y: f64,
    /// Waveguide/antenna height above the user plane (m).
    pub height: f64,
    /// Carrier frequency (Hz).
    pub carrier_freq_hz: f64,
    /// Effective refractive index of the dielectric waveguide.
    pub effective_index: f64,
    /// Noise power (W).
    pub noise_power_w: f64,
    /// Minimum per-user SINR (linear ratio).
    pub sinr_min: f64,
    /// User plane coordinates (x, y) in metres.
    pub user_positions: Vec<(f64, f64)>,
    pub waveguide_layout: Vec<WaveguideLayout>,
    /// Per-entry beamforming power budget bounding the multi-user search box;
    /// calibrated from a feasibility probe when absent.
    pub power_budget_w: Option<f64>,
}

impl Scenario {
    /// Deployment rule used in the reference experiments: waveguides 1..2 run
    /// parallel to x with feeds at `(0, n S_y / 2)`; waveguides 3..4 run
    /// parallel to y with feeds at `((n - 2) S_x / 2, 0)`.
    pub fn default_layout(
        num_waveguides: usize,
        span_x: f64,
        span_y: f64,
    ) -> Result<Vec<WaveguideLayout>, ModelError> {
        if num_waveguides > 4 {
            return Err(ModelError::InvalidScenario(format!(
                "no default layout for {num_waveguides} waveguides; provide one explicitly"
            )));
        }
        Ok((1..=num_waveguides)
            .map(|n| {
                if n <= 2 {
                    WaveguideLayout { axis: Axis::X, feed_x: 0.0, feed_y: n as f64 * span_y / 2.0 }
                } else {
                    WaveguideLayout {
                        axis: Axis::Y,
                        feed_x: (n as f64 - 3.0) * span_x / 2.0,
                        feed_y: 0.0,
                    }
                }
            })
            .collect())
    }

    pub fn carrier_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn guided_wavelength(&self) -> f64 {
        self.carrier_wavelength() / self.effective_index
    }

    /// Antenna grid interval along each waveguide's span.
    pub fn grid_interval(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.span_x / self.antennas_per_waveguide as f64,
            Axis::Y => self.span_y / self.antennas_per_waveguide as f64,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.num_waveguides * self.antennas_per_waveguide
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidScenario(msg.to_string()));
        if self.num_waveguides == 0 || self.num_users == 0 || self.antennas_per_waveguide == 0 {
            return bad("counts must be at least 1");
        }
        if self.height <= 0.0 {
            return bad("height must be positive");
        }
        if self.carrier_freq_hz <= 0.0 || self.effective_index < 1.0 {
            return bad("carrier frequency must be positive and n_eff >= 1");
        }
        if self.noise_power_w <= 0.0 || self.sinr_min <= 0.0 {
            return bad("noise power and SINR floor must be positive");
        }
        if self.user_positions.len() != self.num_users {
            return bad("user position count must match num_users");
        }
        if self.waveguide_layout.len() != self.num_waveguides {
            return bad("waveguide layout count must match num_waveguides");
        }
        let lambda = self.carrier_wavelength();
        for wg in &self.waveguide_layout {
            let spacing = self.grid_interval(wg.axis);
            if spacing <= lambda {
                return Err(ModelError::SpacingBelowWavelength { spacing, wavelength: lambda });
            }
        }
        Ok(())
    }
}

/// Concrete 3D coordinates derived from a [`Scenario`].
#[derive(Debug, Clone)]
pub struct Geometry {
    /// Antenna positions, flat index `m = n * L + l`.
    pub antenna_positions: Vec<[f64; 3]>,
    pub feed_points: Vec<[f64; 3]>,
    pub user_positions: Vec<[f64; 3]>,
    pub guided_wavelength: f64,
    pub carrier_wavelength: f64,
    pub num_waveguides: usize,
    pub antennas_per_waveguide: usize,
}

/// Cell-centered antenna grid: antenna `l` (1-based) sits at
/// `span * (l - 1/2) / L` along its waveguide's axis, so no antenna coincides
/// with the feed point.
pub fn build_geometry(scenario: &Scenario) -> Result<Geometry, ModelError> {
    scenario.validate()?;
    let l_count = scenario.antennas_per_waveguide;
    let mut antenna_positions = Vec::with_capacity(scenario.num_antennas());
    let mut feed_points = Vec::with_capacity(scenario.num_waveguides);
    for wg in &scenario.waveguide_layout {
        feed_points.push([wg.feed_x, wg.feed_y, scenario.height]);
        for l in 1..=l_count {
            let along = match wg.axis {
                Axis::X => scenario.span_x,
                Axis::Y => scenario.span_y,
            } * (l as f64 - 0.5)
                / l_count as f64;
            let pos = match wg.axis {
                Axis::X => [along, wg.feed_y, scenario.height],
                Axis::Y => [wg.feed_x, along, scenario.height],
            };
            antenna_positions.push(pos);
        }
    }
    let user_positions =
        scenario.user_positions.iter().map(|&(x, y)| [x, y, 0.0]).collect();
    Ok(Geometry {
        antenna_positions,
        feed_points,
        user_positions,
        guided_wavelength: scenario.guided_wavelength(),
        carrier_wavelength: scenario.carrier_wavelength(),
        num_waveguides: scenario.num_waveguides,
        antennas_per_waveguide: l_count,
    })
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// `e^{-i 2 pi d / lambda}` with the cycle count reduced before scaling, so
/// phases stay accurate at distances thousands of wavelengths out.
fn phase_factor(distance: f64, wavelength: f64) -> Complex64 {
    let cycles = distance / wavelength;
    let reduced = cycles - cycles.floor();
    Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * reduced)
}

/// Conjugated free-space coefficients `sqrt(phi) e^{-i 2 pi d / lambda} / d`
/// per `(antenna m, user k)`, flat index `m * K + k`.
pub fn free_space_channels(geometry: &Geometry, scenario: &Scenario) -> Vec<Complex64> {
    let phi = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * scenario.carrier_freq_hz);
    let amp = phi.sqrt();
    let mut out =
        Vec::with_capacity(geometry.antenna_positions.len() * geometry.user_positions.len());
    for &pa in &geometry.antenna_positions {
        for &pu in &geometry.user_positions {
            let d = dist(pa, pu);
            out.push(phase_factor(d, geometry.carrier_wavelength) * (amp / d));
        }
    }
    out
}

/// Unit-modulus in-waveguide responses `e^{-i 2 pi ||pa - feed|| / lambda_w}`
/// per antenna, flat index `m`.
pub fn in_waveguide_phases(geometry: &Geometry) -> Vec<Complex64> {
    let l_count = geometry.antennas_per_waveguide;
    geometry
        .antenna_positions
        .iter()
        .enumerate()
        .map(|(m, &pa)| {
            let feed = geometry.feed_points[m / l_count];
            phase_factor(dist(pa, feed), geometry.guided_wavelength)
        })
        .collect()
}

/// Free-space and in-waveguide responses for one deployment.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub num_waveguides: usize,
    pub antennas_per_waveguide: usize,
    pub num_users: usize,
    /// Reference channel gain `phi = c / (4 pi f_c)`.
    pub reference_gain: f64,
    pub noise_power_w: f64,
    response: Vec<Complex64>,
    inwg: Vec<Complex64>,
}

impl ChannelSet {
    pub fn build(geometry: &Geometry, scenario: &Scenario) -> Self {
        Self {
            num_waveguides: geometry.num_waveguides,
            antennas_per_waveguide: geometry.antennas_per_waveguide,
            num_users: geometry.user_positions.len(),
            reference_gain: SPEED_OF_LIGHT
                / (4.0 * std::f64::consts::PI * scenario.carrier_freq_hz),
            noise_power_w: scenario.noise_power_w,
            response: free_space_channels(geometry, scenario),
            inwg: in_waveguide_phases(geometry),
        }
    }

    /// Build directly from a scenario.
    pub fn from_scenario(scenario: &Scenario) -> Result<Self, ModelError> {
        let geo = build_geometry(scenario)?;
        Ok(Self::build(&geo, scenario))
    }

    pub fn num_antennas(&self) -> usize {
        self.num_waveguides * self.antennas_per_waveguide
    }

    /// Conjugated free-space coefficient for antenna `(l, n)` toward user `k`.
    pub fn response(&self, l: usize, n: usize, k: usize) -> Complex64 {
        self.response[(n * self.antennas_per_waveguide + l) * self.num_users + k]
    }

    /// In-waveguide phase of antenna `(l, n)`.
    pub fn inwg(&self, l: usize, n: usize) -> Complex64 {
        self.inwg[n * self.antennas_per_waveguide + l]
    }

    /// Combined per-antenna coefficient `g~ * h^H` toward user `k`; summing
    /// these over an activation pattern (scaled by the radiation ratios)
    /// yields the per-waveguide effective channel.
    pub fn coeff(&self, l: usize, n: usize, k: usize) -> Complex64 {
        self.inwg(l, n) * self.response(l, n, k)
    }

    /// All combined coefficients for one user, flat over `m = n * L + l`.
    pub fn user_coeffs(&self, k: usize) -> Vec<Complex64> {
        let l_count = self.antennas_per_waveguide;
        (0..self.num_antennas())
            .map(|m| self.coeff(m % l_count, m / l_count, k))
            .collect()
    }

    /// CSV dump: one row per `(l, n, k)` with
    /// `l,n,k,distance_m,abs_h,arg_h,arg_g`. The antenna-user distance is
    /// recovered exactly from `|h| = sqrt(phi) / d`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "antenna,waveguide,user,distance_m,abs_h,arg_h,arg_g")?;
        for n in 0..self.num_waveguides {
            for l in 0..self.antennas_per_waveguide {
                for k in 0..self.num_users {
                    let h = self.response(l, n, k);
                    let g = self.inwg(l, n);
                    writeln!(
                        out,
                        "{},{},{},{:.9},{:.9e},{:.9},{:.9}",
                        l + 1,
                        n + 1,
                        k + 1,
                        self.reference_gain.sqrt() / h.norm(),
                        h.norm(),
                        h.arg(),
                        g.arg()
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Binary antenna-activation state, `L x N` grid stored flat as `m = n*L + l`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationPattern {
    flags: Vec<bool>,
    pub antennas_per_waveguide: usize,
    pub num_waveguides: usize,
}

impl ActivationPattern {
    pub fn empty(antennas_per_waveguide: usize, num_waveguides: usize) -> Self {
        Self {
            flags: vec![false; antennas_per_waveguide * num_waveguides],
            antennas_per_waveguide,
            num_waveguides,
        }
    }

    pub fn all_active(antennas_per_waveguide: usize, num_waveguides: usize) -> Self {
        Self {
            flags: vec![true; antennas_per_waveguide * num_waveguides],
            antennas_per_waveguide,
            num_waveguides,
        }
    }

    pub fn from_flags(
        flags: Vec<bool>,
        antennas_per_waveguide: usize,
        num_waveguides: usize,
    ) -> Self {
        assert_eq!(flags.len(), antennas_per_waveguide * num_waveguides);
        Self { flags, antennas_per_waveguide, num_waveguides }
    }

    pub fn is_active(&self, l: usize, n: usize) -> bool {
        self.flags[n * self.antennas_per_waveguide + l]
    }

    pub fn set(&mut self, l: usize, n: usize, on: bool) {
        self.flags[n * self.antennas_per_waveguide + l] = on;
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    /// Activated antennas per waveguide, `L_n^s`.
    pub fn counts(&self) -> Vec<usize> {
        (0..self.num_waveguides)
            .map(|n| {
                self.flags[n * self.antennas_per_waveguide..(n + 1) * self.antennas_per_waveguide]
                    .iter()
                    .filter(|&&a| a)
                    .count()
            })
            .collect()
    }

    pub fn total_active(&self) -> usize {
        self.flags.iter().filter(|&&a| a).count()
    }

    /// Waveguide rows as bit strings, antenna 1 first: `["110100", ...]`.
    pub fn row_strings(&self) -> Vec<String> {
        (0..self.num_waveguides)
            .map(|n| {
                (0..self.antennas_per_waveguide)
                    .map(|l| if self.is_active(l, n) { '1' } else { '0' })
                    .collect()
            })
            .collect()
    }
}

/// Per-user effective channels `h~_k` as row coefficients: entry `n` multiplies
/// `w_{n,k}` directly (no conjugation) in every SINR expression.
pub type EffectiveChannels = Vec<Vec<Complex64>>;

/// Aggregate per-antenna coefficients into per-waveguide effective channels
/// under explicit radiation ratios (`ratios[m] = 0` wherever inactive).
pub fn effective_channel(
    channels: &ChannelSet,
    pattern: &ActivationPattern,
    ratios: &[f64],
) -> Result<EffectiveChannels, ModelError> {
    if ratios.len() != channels.num_antennas() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} ratios for {} antennas",
            ratios.len(),
            channels.num_antennas()
        )));
    }
    let l_count = channels.antennas_per_waveguide;
    let mut out = Vec::with_capacity(channels.num_users);
    for k in 0..channels.num_users {
        let mut row = Vec::with_capacity(channels.num_waveguides);
        for n in 0..channels.num_waveguides {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..l_count {
                if pattern.is_active(l, n) {
                    acc += ratios[n * l_count + l] * channels.coeff(l, n, k);
                }
            }
            row.push(acc);
        }
        out.push(row);
    }
    Ok(out)
}

/// Effective channels under equal-power radiation `beta = 1/sqrt(L_n^s)`.
/// Waveguides with no active antenna contribute zero.
pub fn equal_power_effective(channels: &ChannelSet, pattern: &ActivationPattern) -> EffectiveChannels {
    let counts = pattern.counts();
    let l_count = channels.antennas_per_waveguide;
    let mut ratios = vec![0.0; channels.num_antennas()];
    for n in 0..channels.num_waveguides {
        if counts[n] == 0 {
            continue;
        }
        let beta = 1.0 / (counts[n] as f64).sqrt();
        for l in 0..l_count {
            if pattern.is_active(l, n) {
                ratios[n * l_count + l] = beta;
            }
        }
    }
    effective_channel(channels, pattern, &ratios).expect("ratio vector sized to channel set")
}

/// Per-user SINR of beamforming columns `w_k` against effective channels:
/// `SINR_k = |h~_k . w_k|^2 / (sum_{k' != k} |h~_k . w_k'|^2 + sigma^2)`.
pub fn sinr_of(weights: &[Vec<Complex64>], effective: &EffectiveChannels, noise_power: f64) -> Vec<f64> {
    let k_count = weights.len();
    (0..k_count)
        .map(|k| {
            let dot = |w: &[Complex64]| -> Complex64 {
                effective[k].iter().zip(w).map(|(h, w)| h * w).sum()
            };
            let signal = dot(&weights[k]).norm_sqr();
            let interference: f64 =
                (0..k_count).filter(|&kk| kk != k).map(|kk| dot(&weights[kk]).norm_sqr()).sum();
            signal / (interference + noise_power)
        })
        .collect()
}

/// A transmit beamforming design with cached power and SINR bookkeeping.
#[derive(Debug, Clone)]
pub struct BeamformingSolution {
    /// Per-user beamforming columns `w_k` (length N each).
    pub per_user: Vec<Vec<Complex64>>,
    pub total_power_w: f64,
    pub per_user_sinr: Vec<f64>,
}

impl BeamformingSolution {
    pub fn from_weights(
        per_user: Vec<Vec<Complex64>>,
        effective: &EffectiveChannels,
        noise_power: f64,
    ) -> Self {
        let total_power_w =
            per_user.iter().map(|w| w.iter().map(|c| c.norm_sqr()).sum::<f64>()).sum();
        let per_user_sinr = sinr_of(&per_user, effective, noise_power);
        Self { per_user, total_power_w, per_user_sinr }
    }
}
