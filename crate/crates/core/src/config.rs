//! Config-file loading: a TOML document with `[scenario]`, `[coupling]`,
//! `[solver]`, and `[experiment]` sections. Noise is written in dBm and the
//! SINR floor in dB; both are converted to linear units at parse time.

use serde::Deserialize;
use thiserror::Error;

use crate::coupling::CouplingParams;
use crate::harness::{ScenarioTemplate, SolverKind, SweepVar};
use crate::model::{Axis, WaveguideLayout};
use crate::socp::SolverOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub coupling: CouplingSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub experiment: Option<ExperimentSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub num_waveguides: usize,
    pub num_users: usize,
    pub antennas_per_waveguide: usize,
    pub span_x: f64,
    pub span_y: f64,
    pub height: f64,
    #[serde(default = "default_carrier")]
    pub carrier_freq_hz: f64,
    #[serde(default = "default_n_eff")]
    pub effective_index: f64,
    #[serde(default = "default_noise_dbm")]
    pub noise_dbm: f64,
    #[serde(default = "default_sinr_db")]
    pub sinr_min_db: f64,
    #[serde(default)]
    pub user_positions: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub waveguides: Option<Vec<WaveguideSection>>,
    #[serde(default)]
    pub power_budget_w: Option<f64>,
}

fn default_carrier() -> f64 {
    15.0e9
}
fn default_n_eff() -> f64 {
    1.4
}
fn default_noise_dbm() -> f64 {
    -80.0
}
fn default_sinr_db() -> f64 {
    20.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideSection {
    pub axis: String,
    pub feed: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingSection {
    pub omega0_per_mm: f64,
    pub alpha_per_mm: f64,
    pub coupler_len_mm: f64,
    pub cross_section: Option<CrossSectionSection>,
}

impl Default for CouplingSection {
    fn default() -> Self {
        let p = CouplingParams::reference();
        Self {
            omega0_per_mm: p.omega0,
            alpha_per_mm: p.alpha,
            coupler_len_mm: p.coupler_len,
            cross_section: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossSectionSection {
    /// "rectangular" | "circular"
    #[serde(default = "default_shape")]
    pub shape: String,
    #[serde(default = "default_half_width")]
    pub half_width_mm: f64,
    #[serde(default = "default_n_clad")]
    pub n_clad: f64,
    #[serde(default)]
    pub index_contrast: Option<f64>,
}

fn default_shape() -> String {
    "rectangular".into()
}
fn default_half_width() -> f64 {
    5.0
}
fn default_n_clad() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tolerance: f64,
    pub max_iterations: u32,
    /// Branch-and-bound termination gap in watts; solver defaults apply when
    /// absent.
    pub epsilon_w: Option<f64>,
    pub bnb_max_iterations: Option<u64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            tolerance: o.tolerance,
            max_iterations: o.max_iterations,
            epsilon_w: None,
            bnb_max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub sweep: Option<String>,
    #[serde(default)]
    pub values: Vec<f64>,
    pub solvers: Vec<String>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_trials() -> usize {
    1
}
fn default_grid_points() -> usize {
    50
}

impl ConfigFile {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ConfigFile = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if let Some(wgs) = &self.scenario.waveguides {
            for w in wgs {
                if w.axis != "x" && w.axis != "y" {
                    return Err(ConfigError::Invalid(format!(
                        "waveguide axis must be \"x\" or \"y\", got {:?}",
                        w.axis
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn coupling_params(&self) -> CouplingParams {
        CouplingParams::new(
            self.coupling.omega0_per_mm,
            self.coupling.alpha_per_mm,
            self.coupling.coupler_len_mm,
        )
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
        }
    }

    pub fn template(&self) -> Result<ScenarioTemplate, ConfigError> {
        let s = &self.scenario;
        let layout = match &s.waveguides {
            Some(wgs) => Some(
                wgs.iter()
                    .map(|w| WaveguideLayout {
                        axis: if w.axis == "x" { Axis::X } else { Axis::Y },
                        feed_x: w.feed[0],
                        feed_y: w.feed[1],
                    })
                    .collect::<Vec<_>>(),
            ),
            None => None,
        };
        Ok(ScenarioTemplate {
            num_waveguides: s.num_waveguides,
            num_users: s.num_users,
            antennas_per_waveguide: s.antennas_per_waveguide,
            span_x: s.span_x,
            span_y: s.span_y,
            height: s.height,
            carrier_freq_hz: s.carrier_freq_hz,
            effective_index: s.effective_index,
            noise_power_w: crate::dbm_to_watts(s.noise_dbm),
            sinr_min: crate::db_to_linear(s.sinr_min_db),
            explicit_users: s
                .user_positions
                .as_ref()
                .map(|u| u.iter().map(|p| (p[0], p[1])).collect()),
            explicit_layout: layout,
            power_budget_w: s.power_budget_w,
        })
    }

    pub fn experiment_plan(&self) -> Result<Option<crate::harness::ExperimentSpec>, ConfigError> {
        let Some(exp) = &self.experiment else {
            return Ok(None);
        };
        let sweep = match exp.sweep.as_deref() {
            None | Some("none") => SweepVar::None,
            Some(name) => SweepVar::parse(name)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown sweep {name:?}")))?,
        };
        let solvers = exp
            .solvers
            .iter()
            .map(|s| {
                SolverKind::parse(s)
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown solver {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Some(crate::harness::ExperimentSpec {
            template: self.template()?,
            sweep,
            values: exp.values.clone(),
            solvers,
            trials: exp.trials,
            seed: exp.seed,
            grid_points: exp.grid_points,
            solver: self.solver_options(),
            epsilon_w: self.solver.epsilon_w,
            bnb_max_iterations: self.solver.bnb_max_iterations,
        }))
    }
}
