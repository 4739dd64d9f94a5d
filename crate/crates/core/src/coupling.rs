//! Adjustable power-radiation model for pinching antennas.
//!
//! A pinching antenna acts as a non-contact coupler tapping power off its
//! waveguide. The exchanged fraction follows the exponential coupling law
//! `kappa(S) = omega0 * exp(-alpha * S)` in the antenna-to-waveguide spacing
//! `S`, and the amplitude radiated by antenna `l` depletes what is left for
//! the antennas behind it:
//!
//! ```text
//! beta_l = a_l sin(kappa_l D) * prod_{i<l} sqrt(1 - a_i sin^2(kappa_i D))
//! ```
//!
//! This module provides the law itself, the sequential spacing solvers that
//! invert it for arbitrary and equal-power radiation targets, the cross-section
//! closed forms used as fitting oracles, and the least-squares fit that
//! recovers `(omega0, alpha)` from sampled coupling curves.
//!
//! All lengths in this module are millimetres; `kappa`, `omega0` and `alpha`
//! are per-millimetre.

use std::f64::consts::{FRAC_PI_2, PI};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("coupling argument kappa*D = {0} exceeds pi/2 (over-coupling at spacing {1} mm)")]
    OverCoupling(f64, f64),
    #[error("target radiation ratio infeasible at antenna {index}: delta = {delta} > 1")]
    InfeasibleTarget { index: usize, delta: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate samples: all spacings equal")]
    DegenerateSamples,
    #[error("sample {0}: coupling coefficient must be positive, got {1}")]
    NonPositiveSample(usize, f64),
    #[error("no active antenna in pattern")]
    EmptyPattern,
    #[error("length mismatch: {0} flags vs {1} values")]
    LengthMismatch(usize, usize),
    #[error("spacing {0} mm violates edge-to-edge precondition S >= 2b = {1} mm")]
    SpacingBelowContact(f64, f64),
    #[error("evanescent condition violated: alpha^2 = {0} is not positive")]
    NotEvanescent(f64),
}

/// Constants of the exponential coupling law plus the coupler length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams {
    /// Amplitude constant `omega0` (mm^-1).
    pub omega0: f64,
    /// Cladding decay constant `alpha` (mm^-1).
    pub alpha: f64,
    /// Fabricated coupling length `D^PA` of each antenna (mm).
    pub coupler_len: f64,
}

impl CouplingParams {
    pub fn new(omega0: f64, alpha: f64, coupler_len: f64) -> Self {
        Self { omega0, alpha, coupler_len }
    }

    /// Fitted constants for the 15 GHz rectangular-guide setup:
    /// omega0 = 0.3300 mm^-1, alpha = 0.24615 mm^-1, D^PA = 5 mm.
    pub fn reference() -> Self {
        Self::new(0.3300, 0.24615, 5.0)
    }

    /// Minimum usable spacing: where `sin(kappa(S) * D) = 1`, i.e. the
    /// coupling argument reaches pi/2 and a single antenna radiates fully.
    pub fn s_min(&self) -> f64 {
        (self.omega0 * self.coupler_len / FRAC_PI_2).ln() / self.alpha
    }
}

/// Coupling coefficient `kappa = omega0 * exp(-alpha S)` (mm^-1).
pub fn coupling_coefficient(spacing: f64, params: &CouplingParams) -> f64 {
    params.omega0 * (-params.alpha * spacing).exp()
}

/// Waveguide cross-section shape for the analytical coupling oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Rectangular,
    Circular,
}

/// Cross-section parameters feeding the closed-form coupling oracles.
///
/// The oracle formulas are exponential (rectangular) or nearly exponential
/// (circular, extra 1/S factor) in the center-to-center spacing `S`; they are
/// what the `(omega0, alpha)` law is fitted against.
#[derive(Debug, Clone, Copy)]
pub struct CrossSection {
    pub shape: Shape,
    /// Half width / core radius `b` (mm). The core width is `2b`.
    pub half_width: f64,
    pub n_eff: f64,
    pub n_clad: f64,
    /// Carrier wavelength (mm).
    pub wavelength: f64,
    /// Transverse core wavenumber `k0` (mm^-1).
    pub transverse_wavenumber: f64,
    /// Relative index contrast `Delta0`.
    pub index_contrast: f64,
}

impl CrossSection {
    /// Build a cross-section, back-solving `k0` from a target cladding decay
    /// constant: `k0 = sqrt(4 pi^2 / lambda^2 (n_eff^2 - n_clad^2) - alpha^2)`.
    ///
    /// Typical use specifies only the fitted `alpha`, not the field
    /// parameters, so this is the practical way to instantiate the oracle.
    pub fn from_target_alpha(
        shape: Shape,
        half_width: f64,
        n_eff: f64,
        n_clad: f64,
        wavelength: f64,
        target_alpha: f64,
        index_contrast: Option<f64>,
    ) -> Result<Self, CouplingError> {
        let w2 = 4.0 * PI * PI / (wavelength * wavelength) * (n_eff * n_eff - n_clad * n_clad);
        let k0_sq = w2 - target_alpha * target_alpha;
        if k0_sq <= 0.0 {
            return Err(CouplingError::NotEvanescent(k0_sq));
        }
        let delta0 = index_contrast
            .unwrap_or((n_eff * n_eff - n_clad * n_clad) / (2.0 * n_eff * n_eff));
        Ok(Self {
            shape,
            half_width,
            n_eff,
            n_clad,
            wavelength,
            transverse_wavenumber: k0_sq.sqrt(),
            index_contrast: delta0,
        })
    }

    /// Cladding decay constant `alpha` (mm^-1); errors when the guided mode is
    /// not evanescent in the cladding.
    pub fn alpha(&self) -> Result<f64, CouplingError> {
        let a2 = 4.0 * PI * PI / (self.wavelength * self.wavelength)
            * (self.n_eff * self.n_eff - self.n_clad * self.n_clad)
            - self.transverse_wavenumber * self.transverse_wavenumber;
        if a2 <= 0.0 {
            return Err(CouplingError::NotEvanescent(a2));
        }
        Ok(a2.sqrt())
    }

    /// Normalized frequency `v`.
    pub fn normalized_frequency(&self) -> f64 {
        match self.shape {
            Shape::Rectangular => {
                2.0 * PI / self.wavelength
                    * self.n_eff
                    * self.half_width
                    * (2.0 * self.index_contrast).sqrt()
            }
            Shape::Circular => {
                2.0 * PI / self.wavelength
                    * self.half_width
                    * (self.n_eff * self.n_eff - self.n_clad * self.n_clad).sqrt()
            }
        }
    }
}

/// Closed-form coupling coefficient for two identical rectangular guides with
/// edge-to-edge gap `S - 2b`:
///
/// `kappa = sqrt(2 Delta0)/b * k0^2 alpha^2 b^4 / ((1 + alpha b) v^3) * exp(-alpha (S - 2b))`
pub fn oracle_kappa_rect(cs: &CrossSection, spacing: f64) -> Result<f64, CouplingError> {
    debug_assert_eq!(cs.shape, Shape::Rectangular);
    let two_b = 2.0 * cs.half_width;
    if spacing < two_b {
        return Err(CouplingError::SpacingBelowContact(spacing, two_b));
    }
    let alpha = cs.alpha()?;
    let b = cs.half_width;
    let k0 = cs.transverse_wavenumber;
    let v = cs.normalized_frequency();
    let prefactor = (2.0 * cs.index_contrast).sqrt() / b * (k0 * k0 * alpha * alpha * b.powi(4))
        / ((1.0 + alpha * b) * v.powi(3));
    Ok(prefactor * (-alpha * (spacing - two_b)).exp())
}

/// Closed-form coupling coefficient for two identical circular guides; unlike
/// the rectangular case it carries an extra `1/S`, so the exponential fit is
/// only approximate here:
///
/// `kappa = sqrt(Delta0)/b * u^2/(K1^2(w) v^3) * sqrt(pi b)/(w S) * exp(-alpha (S - 2b))`
pub fn oracle_kappa_circ(cs: &CrossSection, spacing: f64) -> Result<f64, CouplingError> {
    debug_assert_eq!(cs.shape, Shape::Circular);
    let two_b = 2.0 * cs.half_width;
    if spacing < two_b {
        return Err(CouplingError::SpacingBelowContact(spacing, two_b));
    }
    let alpha = cs.alpha()?;
    let b = cs.half_width;
    let u = b * cs.transverse_wavenumber;
    let w = b * alpha;
    let v = cs.normalized_frequency();
    let prefactor = cs.index_contrast.sqrt() / b * (u * u)
        / (bessel_k1(w).powi(2) * v.powi(3))
        * (PI * b).sqrt()
        / (w * spacing);
    Ok(prefactor * (-alpha * (spacing - two_b)).exp())
}

/// Result of fitting `ln kappa = ln omega0 - alpha S` by least squares.
#[derive(Debug, Clone, Copy)]
pub struct FittedCoupling {
    pub omega0: f64,
    pub alpha: f64,
    /// Root-mean-square residual of `ln kappa` over the samples.
    pub log_rms_residual: f64,
}

impl FittedCoupling {
    pub fn with_coupler_len(self, coupler_len: f64) -> CouplingParams {
        CouplingParams::new(self.omega0, self.alpha, coupler_len)
    }
}

/// Linear least-squares fit of `ln kappa` against `S` over `(S, kappa)`
/// samples; `omega0 = exp(intercept)`, `alpha = -slope`.
pub fn fit_exponential(samples: &[(f64, f64)]) -> Result<FittedCoupling, CouplingError> {
    if samples.len() < 2 {
        return Err(CouplingError::TooFewSamples { needed: 2, got: samples.len() });
    }
    for (i, &(_, kappa)) in samples.iter().enumerate() {
        if kappa <= 0.0 {
            return Err(CouplingError::NonPositiveSample(i, kappa));
        }
    }
    let n = samples.len() as f64;
    let mean_s = samples.iter().map(|&(s, _)| s).sum::<f64>() / n;
    let mean_y = samples.iter().map(|&(_, k)| k.ln()).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(s, k) in samples {
        sxx += (s - mean_s) * (s - mean_s);
        sxy += (s - mean_s) * (k.ln() - mean_y);
    }
    if sxx == 0.0 {
        return Err(CouplingError::DegenerateSamples);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_s;
    let rss: f64 = samples
        .iter()
        .map(|&(s, k)| {
            let r = k.ln() - (intercept + slope * s);
            r * r
        })
        .sum();
    Ok(FittedCoupling {
        omega0: intercept.exp(),
        alpha: -slope,
        log_rms_residual: (rss / n).sqrt(),
    })
}

/// Spacing assignment along one waveguide together with the radiation ratios
/// it realizes. Entries are `None` for inactive antennas.
#[derive(Debug, Clone)]
pub struct SpacingPlan {
    pub spacings: Vec<Option<f64>>,
    pub ratios: Vec<f64>,
    /// Number of activated antennas closer to the feed point than antenna `l`.
    pub prior_active: Vec<usize>,
}

impl SpacingPlan {
    /// Spacings of the activated antennas only, in feed-to-end order.
    pub fn active_spacings(&self) -> Vec<f64> {
        self.spacings.iter().filter_map(|s| *s).collect()
    }

    /// One CSV row per antenna: `waveguide,antenna,active,spacing_mm,beta`.
    pub fn write_csv<W: std::io::Write>(
        &self,
        out: &mut W,
        waveguide: usize,
    ) -> std::io::Result<()> {
        for (l, (s, beta)) in self.spacings.iter().zip(&self.ratios).enumerate() {
            match s {
                Some(s) => writeln!(out, "{},{},1,{:.6},{:.9}", waveguide, l + 1, s, beta)?,
                None => writeln!(out, "{},{},0,,0.0", waveguide, l + 1)?,
            }
        }
        Ok(())
    }
}

/// Evaluate the sequential radiation recursion along one waveguide.
///
/// `beta_l = a_l sin(kappa_l D) prod_{i<l} sqrt(1 - a_i sin^2(kappa_i D))`;
/// inactive antennas radiate nothing and do not deplete the running product.
/// Spacings must keep every coupling argument within `[0, pi/2]`.
pub fn radiation_ratios(
    active: &[bool],
    spacings: &[f64],
    params: &CouplingParams,
) -> Result<Vec<f64>, CouplingError> {
    if active.len() != spacings.len() {
        return Err(CouplingError::LengthMismatch(active.len(), spacings.len()));
    }
    let mut ratios = Vec::with_capacity(active.len());
    let mut residual_amp = 1.0f64; // prod sqrt(1 - delta_i^2) so far
    for (l, (&a, &s)) in active.iter().zip(spacings).enumerate() {
        if !a {
            ratios.push(0.0);
            continue;
        }
        let arg = coupling_coefficient(s, params) * params.coupler_len;
        if arg > FRAC_PI_2 + 1e-12 {
            return Err(CouplingError::OverCoupling(arg, s));
        }
        let delta = arg.min(FRAC_PI_2).sin();
        ratios.push(delta * residual_amp);
        residual_amp *= (1.0 - delta * delta).max(0.0).sqrt();
        let _ = l;
    }
    Ok(ratios)
}

/// Solve spacings that realize arbitrary target ratios, one antenna at a time
/// from the feed point outward.
///
/// With `P_{l-1} = 1 - sum_{i<l} beta_i^2` the remaining power fraction, each
/// active antenna needs `delta_l = beta_l / sqrt(P_{l-1})` and the spacing
/// `S_l = ln(omega0 D / asin(delta_l)) / alpha`. A `delta` exceeding 1 means
/// the requested ratio is physically impossible and is rejected outright
/// rather than clamped.
pub fn spacing_for_targets(
    targets: &[f64],
    active: &[bool],
    params: &CouplingParams,
) -> Result<SpacingPlan, CouplingError> {
    if targets.len() != active.len() {
        return Err(CouplingError::LengthMismatch(active.len(), targets.len()));
    }
    let mut spacings = vec![None; active.len()];
    let mut prior = vec![0usize; active.len()];
    let mut residual = 1.0f64;
    let mut active_seen = 0usize;
    for l in 0..active.len() {
        prior[l] = active_seen;
        if !active[l] {
            continue;
        }
        let delta = targets[l] / residual.max(0.0).sqrt();
        // tolerate float overshoot of the physical limit by 1e-12; anything
        // beyond is a genuinely infeasible target and fails loudly
        if !delta.is_finite() || !(0.0..=1.0 + 1e-12).contains(&delta) {
            return Err(CouplingError::InfeasibleTarget { index: l, delta });
        }
        let delta = delta.min(1.0);
        spacings[l] = Some((params.omega0 * params.coupler_len / delta.asin()).ln() / params.alpha);
        residual -= targets[l] * targets[l];
        active_seen += 1;
    }
    if active_seen == 0 {
        return Err(CouplingError::EmptyPattern);
    }
    let flat: Vec<f64> = spacings.iter().map(|s| s.unwrap_or(0.0)).collect();
    let ratios = radiation_ratios(active, &flat, params)?;
    Ok(SpacingPlan { spacings, ratios, prior_active: prior })
}

/// Spacings achieving equal-power radiation `beta_l = 1/sqrt(L^s)` for every
/// activated antenna: `delta_l = 1/sqrt(L^s - rho_l)` with `rho_l` the number
/// of activated antennas before `l`.
pub fn equal_power_spacings(
    active: &[bool],
    params: &CouplingParams,
) -> Result<SpacingPlan, CouplingError> {
    let total: usize = active.iter().filter(|&&a| a).count();
    if total == 0 {
        return Err(CouplingError::EmptyPattern);
    }
    let mut spacings = vec![None; active.len()];
    let mut ratios = vec![0.0; active.len()];
    let mut prior = vec![0usize; active.len()];
    let beta = 1.0 / (total as f64).sqrt();
    let mut seen = 0usize;
    for l in 0..active.len() {
        prior[l] = seen;
        if !active[l] {
            continue;
        }
        let delta = 1.0 / ((total - seen) as f64).sqrt();
        spacings[l] = Some((params.omega0 * params.coupler_len / delta.asin()).ln() / params.alpha);
        ratios[l] = beta;
        seen += 1;
    }
    Ok(SpacingPlan { spacings, ratios, prior_active: prior })
}

/// Modified Bessel function of the second kind, order one.
///
/// Polynomial approximations from Abramowitz & Stegun 9.8.3/9.8.5/9.8.7/9.8.8;
/// absolute error below 1e-7 on the oracle's operating range.
pub fn bessel_k1(x: f64) -> f64 {
    if x <= 2.0 {
        let t = x / 3.75;
        let t2 = t * t;
        let i1 = x
            * (0.5
                + t2 * (0.87890594
                    + t2 * (0.51498869
                        + t2 * (0.15084934
                            + t2 * (0.02658733 + t2 * (0.00301532 + t2 * 0.00032411))))));
        let u = x / 2.0;
        let u2 = u * u;
        let series = 1.0
            + u2 * (0.15443144
                + u2 * (-0.67278579
                    + u2 * (-0.18156897
                        + u2 * (-0.01919402 + u2 * (-0.00110404 + u2 * (-0.00004686))))));
        (x * (x / 2.0).ln() * i1 + series) / x
    } else {
        let t = 2.0 / x;
        let series = 1.25331414
            + t * (0.23498619
                + t * (-0.03655620
                    + t * (0.01504268 + t * (-0.00780353 + t * (0.00325614 + t * (-0.00068245))))));
        series * (-x).exp() / x.sqrt()
    }
}
