//! Experiment orchestration: scenario presets, conventional-MIMO and
//! continuous-placement baselines, the exhaustive oracle, and seeded batch
//! sweeps emitting CSV results.
//!
//! Determinism contract: a run is a pure function of the experiment spec.
//! User positions derive from `(seed, trial)` through a counter-based
//! generator as unit-square draws scaled by the current spans, so trials stay
//! paired across solvers and sweep values. Result rows keep their job order
//! regardless of the worker pool, and wall-clock timings never enter the CSV.

use num_complex::Complex64;
use rand::{Rng as _, SeedableRng as _};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bnb_mu::{bnb_multi_user, exhaustive_multi_user, MuOptions};
use crate::bnb_su::{bnb_single_user, exhaustive_single_user, BnbError, CountMode, SuOptions};
use crate::matching::{welfare_matching, MatchOptions, MatchingError};
use crate::model::{ActivationPattern, ModelError, Scenario, WaveguideLayout};
use crate::socp::{power_min_socp, SocpError, SolverOptions};
use crate::{watts_to_dbm, ChannelSet, SPEED_OF_LIGHT};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Socp(#[from] SocpError),
    #[error(transparent)]
    Bnb(#[from] BnbError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error("{0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Scenario parameters minus the per-trial user draw.
#[derive(Debug, Clone)]
pub struct ScenarioTemplate {
    pub num_waveguides: usize,
    pub num_users: usize,
    pub antennas_per_waveguide: usize,
    pub span_x: f64,
    pub span_y: f64,
    pub height: f64,
    pub carrier_freq_hz: f64,
    pub effective_index: f64,
    pub noise_power_w: f64,
    pub sinr_min: f64,
    pub explicit_users: Option<Vec<(f64, f64)>>,
    pub explicit_layout: Option<Vec<WaveguideLayout>>,
    pub power_budget_w: Option<f64>,
}

/// Reference small-scale setup: N = K = 2, L = 6, 10 m x 10 m, 20 dB SINR
/// floor, 15 GHz carrier, -80 dBm noise.
pub fn paper_small() -> ScenarioTemplate {
    ScenarioTemplate {
        num_waveguides: 2,
        num_users: 2,
        antennas_per_waveguide: 6,
        span_x: 10.0,
        span_y: 10.0,
        height: 5.0,
        carrier_freq_hz: 15.0e9,
        effective_index: 1.4,
        noise_power_w: 1e-11,
        sinr_min: 100.0,
        explicit_users: None,
        explicit_layout: None,
        power_budget_w: None,
    }
}

/// Swept quantity of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    None,
    SinrMinDb,
    AntennasPerWaveguide,
    SpanX,
}

impl SweepVar {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "sinr_min_db" | "gamma_db" => Some(Self::SinrMinDb),
            "antennas_per_waveguide" | "l" => Some(Self::AntennasPerWaveguide),
            "span_x" | "s_x" => Some(Self::SpanX),
            "none" => Some(Self::None),
            _ => None,
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::SinrMinDb => "sinr_min_db",
            Self::AntennasPerWaveguide => "antennas_per_waveguide",
            Self::SpanX => "span_x",
        }
    }
}

impl ScenarioTemplate {
    /// Concrete scenario at one sweep point; `users` overrides the template's
    /// explicit positions (callers pass the per-trial draw).
    pub fn scenario_at(
        &self,
        sweep: SweepVar,
        value: f64,
        users: Option<Vec<(f64, f64)>>,
    ) -> Result<Scenario, HarnessError> {
        let mut t = self.clone();
        match sweep {
            SweepVar::None => {}
            SweepVar::SinrMinDb => t.sinr_min = crate::db_to_linear(value),
            SweepVar::AntennasPerWaveguide => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(HarnessError::Invalid(format!(
                        "antenna sweep value {value} is not a positive integer"
                    )));
                }
                t.antennas_per_waveguide = value as usize;
            }
            SweepVar::SpanX => t.span_x = value,
        }
        let layout = match &t.explicit_layout {
            Some(l) => l.clone(),
            None => Scenario::default_layout(t.num_waveguides, t.span_x, t.span_y)?,
        };
        let user_positions = users
            .or_else(|| t.explicit_users.clone())
            .ok_or_else(|| HarnessError::Invalid("no user positions supplied".into()))?;
        let sc = Scenario {
            num_waveguides: t.num_waveguides,
            num_users: t.num_users,
            antennas_per_waveguide: t.antennas_per_waveguide,
            span_x: t.span_x,
            span_y: t.span_y,
            height: t.height,
            carrier_freq_hz: t.carrier_freq_hz,
            effective_index: t.effective_index,
            noise_power_w: t.noise_power_w,
            sinr_min: t.sinr_min,
            user_positions,
            waveguide_layout: layout,
            power_budget_w: t.power_budget_w,
        };
        sc.validate()?;
        Ok(sc)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Unit-square user draws for one `(seed, trial)` pair; scale by the spans to
/// place users. Counter-based so trials are independent of evaluation order.
pub fn unit_user_draws(seed: u64, trial: usize, num_users: usize) -> Vec<(f64, f64)> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(trial as u64 + 1)));
    (0..num_users).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect()
}

/// User positions for one trial under the template spans.
pub fn trial_users(
    template: &ScenarioTemplate,
    sweep: SweepVar,
    value: f64,
    seed: u64,
    trial: usize,
) -> Vec<(f64, f64)> {
    if let Some(explicit) = &template.explicit_users {
        return explicit.clone();
    }
    let span_x = if sweep == SweepVar::SpanX { value } else { template.span_x };
    unit_user_draws(seed, trial, template.num_users)
        .into_iter()
        .map(|(ux, uy)| (ux * span_x, uy * template.span_y))
        .collect()
}

/// Available solver backends for an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    BnbSu,
    BnbSuEqual,
    BnbMu,
    Matching,
    VanillaMatching,
    BaselineMimo,
    ContinuousGrid,
    Exhaustive,
}

impl SolverKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "bnb-su" => Some(Self::BnbSu),
            "bnb-su-equal" => Some(Self::BnbSuEqual),
            "bnb-mu" => Some(Self::BnbMu),
            "matching" => Some(Self::Matching),
            "vanilla-matching" => Some(Self::VanillaMatching),
            "baseline-mimo" => Some(Self::BaselineMimo),
            "continuous-grid" => Some(Self::ContinuousGrid),
            "exhaustive" => Some(Self::Exhaustive),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::BnbSu => "bnb-su",
            Self::BnbSuEqual => "bnb-su-equal",
            Self::BnbMu => "bnb-mu",
            Self::Matching => "matching",
            Self::VanillaMatching => "vanilla-matching",
            Self::BaselineMimo => "baseline-mimo",
            Self::ContinuousGrid => "continuous-grid",
            Self::Exhaustive => "exhaustive",
        }
    }
}

/// Conventional fully digital MIMO baseline: `K` antennas at the base-station
/// origin with half-wavelength spacing along x, one RF chain per antenna,
/// power-minimal beamforming under the same SINR floor.
pub fn baseline_mimo(scenario: &Scenario, solver: &SolverOptions) -> Result<f64, HarnessError> {
    let k_count = scenario.num_users;
    let lambda = scenario.carrier_wavelength();
    let phi = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * scenario.carrier_freq_hz);
    let amp = phi.sqrt();
    // conjugated channel rows per user over the K BS antennas
    let mut rows: Vec<Vec<Complex64>> = Vec::with_capacity(k_count);
    for &(ux, uy) in &scenario.user_positions {
        let mut row = Vec::with_capacity(k_count);
        for a in 0..k_count {
            let pos = [a as f64 * lambda / 2.0, 0.0, scenario.height];
            let d = ((pos[0] - ux).powi(2) + (pos[1] - uy).powi(2) + pos[2].powi(2)).sqrt();
            let cycles = d / lambda;
            let phase = -2.0 * std::f64::consts::PI * (cycles - cycles.floor());
            row.push(Complex64::from_polar(amp / d, phase));
        }
        rows.push(row);
    }
    let weights =
        power_min_socp(&rows, scenario.noise_power_w, scenario.sinr_min, solver).map_err(|e| {
            match e {
                SocpError::Infeasible => {
                    HarnessError::Invalid("baseline MIMO SINR set infeasible".into())
                }
                other => HarnessError::Socp(other),
            }
        })?;
    Ok(weights.iter().map(|w| w.iter().map(|c| c.norm_sqr()).sum::<f64>()).sum())
}

fn continuous_coeff(
    scenario: &Scenario,
    wg: &WaveguideLayout,
    along: f64,
    user: (f64, f64),
) -> Complex64 {
    let lambda = scenario.carrier_wavelength();
    let lambda_w = scenario.guided_wavelength();
    let phi = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * scenario.carrier_freq_hz);
    let pos = match wg.axis {
        crate::model::Axis::X => [along, wg.feed_y, scenario.height],
        crate::model::Axis::Y => [wg.feed_x, along, scenario.height],
    };
    let feed = [wg.feed_x, wg.feed_y, scenario.height];
    let d_feed = ((pos[0] - feed[0]).powi(2) + (pos[1] - feed[1]).powi(2)).sqrt();
    let d_user =
        ((pos[0] - user.0).powi(2) + (pos[1] - user.1).powi(2) + scenario.height.powi(2)).sqrt();
    let wrap = |cycles: f64| -2.0 * std::f64::consts::PI * (cycles - cycles.floor());
    let g = Complex64::from_polar(1.0, wrap(d_feed / lambda_w));
    let h = Complex64::from_polar(phi.sqrt() / d_user, wrap(d_user / lambda));
    g * h
}

fn continuous_power(
    scenario: &Scenario,
    positions: &[Vec<f64>],
    solver: &SolverOptions,
) -> f64 {
    let n_count = scenario.num_waveguides;
    let k_count = scenario.num_users;
    let mut rows = vec![vec![Complex64::new(0.0, 0.0); n_count]; k_count];
    for (n, wg) in scenario.waveguide_layout.iter().enumerate() {
        let cnt = positions[n].len();
        let beta = 1.0 / (cnt as f64).sqrt();
        for (k, &user) in scenario.user_positions.iter().enumerate() {
            for &along in &positions[n] {
                rows[k][n] += beta * continuous_coeff(scenario, wg, along, user);
            }
        }
    }
    if k_count == 1 {
        let denom: f64 = rows[0].iter().map(|c| c.norm_sqr()).sum();
        if denom == 0.0 {
            return f64::INFINITY;
        }
        return scenario.noise_power_w * scenario.sinr_min / denom;
    }
    match power_min_socp(&rows, scenario.noise_power_w, scenario.sinr_min, solver) {
        Ok(w) => w.iter().map(|col| col.iter().map(|c| c.norm_sqr()).sum::<f64>()).sum(),
        Err(_) => f64::INFINITY,
    }
}

/// Continuous-placement benchmark: `active_per_waveguide` antennas per
/// waveguide positioned anywhere on a uniform grid of `grid_points` along the
/// span, optimized by coordinate descent (three sweeps, first-improvement on
/// a full per-coordinate grid scan). Heuristic benchmark, no certificate.
pub fn continuous_grid_search(
    scenario: &Scenario,
    grid_points: usize,
    active_per_waveguide: usize,
    solver: &SolverOptions,
) -> Result<f64, HarnessError> {
    if grid_points == 0 || active_per_waveguide == 0 {
        return Err(HarnessError::Invalid("grid search needs positive sizes".into()));
    }
    let n_count = scenario.num_waveguides;
    let grid_of = |span: f64| -> Vec<f64> {
        (0..grid_points).map(|i| span * (i as f64 + 0.5) / grid_points as f64).collect()
    };
    // initialize spread over the span quantiles
    let mut positions: Vec<Vec<f64>> = scenario
        .waveguide_layout
        .iter()
        .map(|wg| {
            let span = match wg.axis {
                crate::model::Axis::X => scenario.span_x,
                crate::model::Axis::Y => scenario.span_y,
            };
            (0..active_per_waveguide)
                .map(|j| span * (j as f64 + 0.5) / active_per_waveguide as f64)
                .collect()
        })
        .collect();
    let mut best = continuous_power(scenario, &positions, solver);
    for _sweep in 0..3 {
        for n in 0..n_count {
            let span = match scenario.waveguide_layout[n].axis {
                crate::model::Axis::X => scenario.span_x,
                crate::model::Axis::Y => scenario.span_y,
            };
            for j in 0..active_per_waveguide {
                let original = positions[n][j];
                let mut best_here = (original, best);
                for &candidate in &grid_of(span) {
                    positions[n][j] = candidate;
                    let p = continuous_power(scenario, &positions, solver);
                    if p < best_here.1 {
                        best_here = (candidate, p);
                    }
                }
                positions[n][j] = best_here.0;
                best = best_here.1;
            }
        }
    }
    Ok(best)
}

/// Globally optimal reference by enumeration: closed-form ranking for one
/// user, fixed-activation conic solves otherwise. Capped at `M <= 14`.
pub fn exhaustive_oracle(
    channels: &ChannelSet,
    sinr_min: f64,
    solver: &SolverOptions,
) -> Result<(ActivationPattern, f64), HarnessError> {
    if channels.num_antennas() > 14 {
        return Err(HarnessError::Invalid(format!(
            "exhaustive search capped at M <= 14, got {}",
            channels.num_antennas()
        )));
    }
    if channels.num_users == 1 {
        exhaustive_single_user(channels, 0, sinr_min)
            .ok_or_else(|| HarnessError::Invalid("no feasible pattern".into()))
    } else {
        Ok(exhaustive_multi_user(channels, sinr_min, solver)?)
    }
}

/// Full experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub template: ScenarioTemplate,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    pub solvers: Vec<SolverKind>,
    pub trials: usize,
    pub seed: u64,
    pub grid_points: usize,
    pub solver: SolverOptions,
    pub epsilon_w: Option<f64>,
    pub bnb_max_iterations: Option<u64>,
}

/// One solver run inside an experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub sweep_value: f64,
    pub trial: usize,
    pub solver: String,
    pub power_w: f64,
    pub power_dbm: f64,
    pub iterations: u64,
    /// Final bound gap where the solver provides one, else NaN.
    pub gap_w: f64,
    /// Wall-clock milliseconds; informational only, never written to CSV.
    #[serde(skip)]
    pub wall_ms: f64,
    pub error: Option<String>,
}

/// Knobs shared by all solver backends in a batch run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub solver: SolverOptions,
    pub epsilon_w: Option<f64>,
    pub bnb_max_iterations: Option<u64>,
    pub grid_points: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            epsilon_w: None,
            bnb_max_iterations: None,
            grid_points: 50,
        }
    }
}

/// Run one solver on one concrete scenario; returns
/// `(power_w, iterations, gap_w)` with NaN gaps where no bound exists.
pub fn run_solver(
    kind: SolverKind,
    scenario: &Scenario,
    opts: &RunOptions,
) -> Result<(f64, u64, f64), HarnessError> {
    let channels = ChannelSet::from_scenario(scenario)?;
    match kind {
        SolverKind::BnbSu | SolverKind::BnbSuEqual => {
            if scenario.num_users != 1 {
                return Err(HarnessError::Invalid(
                    "single-user solvers need num_users = 1".into(),
                ));
            }
            let su = SuOptions {
                epsilon: opts.epsilon_w,
                mode: if kind == SolverKind::BnbSu {
                    CountMode::PerWaveguideSearch
                } else {
                    CountMode::EqualCounts
                },
                solver: opts.solver,
                ..SuOptions::default()
            };
            let out = bnb_single_user(&channels, 0, scenario.sinr_min, &su)?;
            Ok((out.power_w, out.iterations, out.final_gap_w))
        }
        SolverKind::BnbMu => {
            let mu = MuOptions {
                epsilon: opts.epsilon_w,
                power_budget: scenario.power_budget_w,
                solver: opts.solver,
                max_iterations: opts.bnb_max_iterations.unwrap_or(200_000),
                record_trace: false,
            };
            let out = bnb_multi_user(&channels, scenario.sinr_min, &mu)?;
            Ok((out.power_w, out.iterations, out.gap_w))
        }
        SolverKind::Matching | SolverKind::VanillaMatching => {
            let m = MatchOptions {
                vanilla: kind == SolverKind::VanillaMatching,
                solver: opts.solver,
                ..MatchOptions::default()
            };
            let out = welfare_matching(&channels, scenario.sinr_min, &m)?;
            Ok((out.power_w, out.swaps_accepted, f64::NAN))
        }
        SolverKind::BaselineMimo => {
            let p = baseline_mimo(scenario, &opts.solver)?;
            Ok((p, 0, f64::NAN))
        }
        SolverKind::ContinuousGrid => {
            let p = continuous_grid_search(scenario, opts.grid_points, 1, &opts.solver)?;
            Ok((p, 0, f64::NAN))
        }
        SolverKind::Exhaustive => {
            let (_, p) = exhaustive_oracle(&channels, scenario.sinr_min, &opts.solver)?;
            Ok((p, 0, f64::NAN))
        }
    }
}

/// Execute the experiment spec: the record list is ordered by (value, trial, solver) and
/// byte-stable given the seed. Individual trial failures are recorded in the
/// row, not raised.
pub fn run_experiment(spec: &ExperimentSpec) -> Vec<ResultRecord> {
    let values: Vec<f64> =
        if spec.values.is_empty() { vec![f64::NAN] } else { spec.values.clone() };
    let mut jobs = Vec::new();
    for &value in &values {
        for trial in 0..spec.trials {
            for &kind in &spec.solvers {
                jobs.push((value, trial, kind));
            }
        }
    }
    let run_opts = RunOptions {
        solver: spec.solver,
        epsilon_w: spec.epsilon_w,
        bnb_max_iterations: spec.bnb_max_iterations,
        grid_points: spec.grid_points,
    };
    jobs.into_par_iter()
        .map(|(value, trial, kind)| {
            let started = std::time::Instant::now();
            let users = trial_users(&spec.template, spec.sweep, value, spec.seed, trial);
            let outcome = spec
                .template
                .scenario_at(spec.sweep, value, Some(users))
                .and_then(|sc| run_solver(kind, &sc, &run_opts));
            let wall_ms = started.elapsed().as_secs_f64() * 1e3;
            match outcome {
                Ok((power, iterations, gap)) => ResultRecord {
                    sweep_value: value,
                    trial,
                    solver: kind.name().to_string(),
                    power_w: power,
                    power_dbm: watts_to_dbm(power),
                    iterations,
                    gap_w: gap,
                    wall_ms,
                    error: None,
                },
                Err(e) => ResultRecord {
                    sweep_value: value,
                    trial,
                    solver: kind.name().to_string(),
                    power_w: f64::NAN,
                    power_dbm: f64::NAN,
                    iterations: 0,
                    gap_w: f64::NAN,
                    wall_ms,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

fn fmt_or_empty(v: f64, precision: usize) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.precision$e}")
    }
}

/// Write `results.csv`: one row per record, deterministic formatting.
pub fn write_results_csv<W: std::io::Write>(
    out: &mut W,
    sweep: SweepVar,
    records: &[ResultRecord],
) -> std::io::Result<()> {
    writeln!(out, "sweep,value,trial,solver,power_w,power_dbm,iterations,gap_w,error")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            sweep.key(),
            fmt_or_empty(r.sweep_value, 6),
            r.trial,
            r.solver,
            fmt_or_empty(r.power_w, 9),
            if r.power_dbm.is_nan() { String::new() } else { format!("{:.6}", r.power_dbm) },
            r.iterations,
            fmt_or_empty(r.gap_w, 3),
            r.error.as_deref().unwrap_or(""),
        )?;
    }
    Ok(())
}

/// Write `summary.txt`: per (sweep value, solver) mean/min/max dBm.
pub fn write_summary<W: std::io::Write>(
    out: &mut W,
    sweep: SweepVar,
    spec: &ExperimentSpec,
    records: &[ResultRecord],
) -> std::io::Result<()> {
    let values: Vec<f64> =
        if spec.values.is_empty() { vec![f64::NAN] } else { spec.values.clone() };
    writeln!(out, "sweep={} trials={} seed={}", sweep.key(), spec.trials, spec.seed)?;
    for &value in &values {
        for kind in &spec.solvers {
            let sel: Vec<&ResultRecord> = records
                .iter()
                .filter(|r| {
                    r.solver == kind.name()
                        && (r.sweep_value == value
                            || (r.sweep_value.is_nan() && value.is_nan()))
                })
                .collect();
            let ok: Vec<f64> =
                sel.iter().filter(|r| r.error.is_none()).map(|r| r.power_dbm).collect();
            let failures = sel.len() - ok.len();
            if ok.is_empty() {
                writeln!(
                    out,
                    "value={} solver={} n=0 failures={}",
                    fmt_or_empty(value, 6),
                    kind.name(),
                    failures
                )?;
                continue;
            }
            let mean = ok.iter().sum::<f64>() / ok.len() as f64;
            let min = ok.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let max = ok.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            writeln!(
                out,
                "value={} solver={} n={} mean_dbm={:.6} min_dbm={:.6} max_dbm={:.6} failures={}",
                fmt_or_empty(value, 6),
                kind.name(),
                ok.len(),
                mean,
                min,
                max,
                failures
            )?;
        }
    }
    Ok(())
}
