//! Command-line front end: scenario solvers, baselines, coupling tools, and
//! batch experiments driven by a TOML config.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pass_opt::bnb_mu::{bnb_multi_user, MuOptions};
use pass_opt::bnb_su::{bnb_single_user, CountMode, SuOptions};
use pass_opt::config::ConfigFile;
use pass_opt::coupling::{
    equal_power_spacings, fit_exponential, oracle_kappa_circ, oracle_kappa_rect, CrossSection,
    Shape,
};
use pass_opt::harness::{
    baseline_mimo, exhaustive_oracle, run_experiment, trial_users, write_results_csv,
    write_summary, ExperimentSpec, SweepVar,
};
use pass_opt::matching::{verify_pairwise_stable, welfare_matching, MatchOptions};
use pass_opt::model::Scenario;
use pass_opt::{watts_to_dbm, ChannelSet};

#[derive(Parser)]
#[command(
    name = "pass-opt",
    about = "Pinching-antenna system beamforming optimization toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config with [scenario], [coupling], [solver], [experiment].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for randomized user placement (used when the config gives no
    /// explicit positions).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Globally optimal single-user activation (branch-and-bound).
    SuSolve {
        #[command(flatten)]
        common: Common,
        /// Force an equal activation count on every waveguide.
        #[arg(long)]
        equal_counts: bool,
        /// Write the per-iteration bound trace to trace.csv.
        #[arg(long)]
        trace: bool,
        /// Write the channel dump to channels.csv.
        #[arg(long)]
        dump_channels: bool,
    },
    /// Globally optimal multi-user activation (branch-and-bound).
    MuSolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        dump_channels: bool,
    },
    /// Welfare-driven many-to-many matching (suboptimal, fast).
    MatchSolve {
        #[command(flatten)]
        common: Common,
        /// Accept swaps on individual utilities instead of total welfare.
        #[arg(long)]
        vanilla: bool,
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        dump_channels: bool,
    },
    /// Conventional fully digital MIMO baseline at the base station.
    Baseline {
        #[command(flatten)]
        common: Common,
    },
    /// Exhaustive activation enumeration (M <= 14).
    Exhaustive {
        #[command(flatten)]
        common: Common,
    },
    /// Batch sweep over a scenario parameter; writes results.csv/summary.txt.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Override the config sweep, e.g. `sinr_min_db=10,15,20`.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Fit the exponential coupling law to samples or to a cross-section
    /// oracle.
    CouplingFit {
        #[command(flatten)]
        common: Common,
        /// CSV of `spacing_mm,kappa_per_mm` rows (header optional).
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Generate samples from the analytical oracle instead:
        /// "rect" or "circ".
        #[arg(long)]
        oracle: Option<String>,
        /// Edge-to-edge gap range sampled from the oracle (mm).
        #[arg(long, default_value_t = 20.0)]
        gap_max: f64,
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Equal-power spacing plan for an activation pattern.
    SpacingPlan {
        #[command(flatten)]
        common: Common,
        /// Number of activated antennas (pattern = first `count` slots).
        #[arg(long)]
        count: Option<usize>,
        /// Explicit activation bits along one waveguide, e.g. "110101".
        #[arg(long)]
        pattern: Option<String>,
    },
}

#[derive(Serialize)]
struct SolveSummary {
    solver: String,
    power_w: f64,
    power_dbm: f64,
    pattern: Vec<String>,
    counts: Vec<usize>,
    iterations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairwise_stable: Option<bool>,
    per_user_sinr: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate_xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate_t_max: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    certificate_violations: Vec<String>,
}

fn load_config(common: &Common) -> Result<ConfigFile> {
    let path = common.config.as_ref().context("--config is required for this command")?;
    Ok(ConfigFile::load(path)?)
}

fn scenario_from(cfg: &ConfigFile, seed: u64) -> Result<Scenario> {
    let template = cfg.template()?;
    let users = trial_users(&template, SweepVar::None, 0.0, seed, 0);
    Ok(template.scenario_at(SweepVar::None, 0.0, Some(users))?)
}

fn ensure_out(dir: &Option<PathBuf>) -> Result<Option<PathBuf>> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d)
            .with_context(|| format!("cannot create output directory {}", d.display()))?;
        return Ok(Some(d.clone()));
    }
    Ok(None)
}

fn dump_channels_csv(dir: &Path, channels: &ChannelSet) -> Result<()> {
    let mut f = std::fs::File::create(dir.join("channels.csv"))?;
    channels.write_csv(&mut f)?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> Result<()> {
    if let Ok(threads) = std::env::var("PASS_OPT_THREADS") {
        let n: usize =
            threads.parse().context("PASS_OPT_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool already initialized")?;
    }
    let cli = Cli::parse();
    match cli.command {
        Command::SuSolve { common, equal_counts, trace, dump_channels } => {
            let cfg = load_config(&common)?;
            let sc = scenario_from(&cfg, common.seed)?;
            if sc.num_users != 1 {
                bail!("su-solve requires num_users = 1 (got {})", sc.num_users);
            }
            let channels = ChannelSet::from_scenario(&sc)?;
            let opts = SuOptions {
                epsilon: cfg.solver.epsilon_w,
                mode: if equal_counts {
                    CountMode::EqualCounts
                } else {
                    CountMode::PerWaveguideSearch
                },
                solver: cfg.solver_options(),
                record_trace: trace,
                ..SuOptions::default()
            };
            let out = bnb_single_user(&channels, 0, sc.sinr_min, &opts)?;
            let dir = ensure_out(&common.out)?;
            if let Some(dir) = &dir {
                if trace {
                    let mut f = std::fs::File::create(dir.join("trace.csv"))?;
                    writeln!(f, "counts,iteration,glb_w,gub_w")?;
                    for row in &out.trace {
                        let counts: Vec<String> =
                            row.counts.iter().map(|c| c.to_string()).collect();
                        writeln!(
                            f,
                            "{},{},{:.9e},{:.9e}",
                            counts.join("|"),
                            row.iteration,
                            row.glb_w,
                            row.gub_w
                        )?;
                    }
                }
                if dump_channels {
                    dump_channels_csv(dir, &channels)?;
                }
            }
            print_json(&SolveSummary {
                solver: if equal_counts { "bnb-su-equal" } else { "bnb-su" }.into(),
                power_w: out.power_w,
                power_dbm: watts_to_dbm(out.power_w),
                pattern: out.pattern.row_strings(),
                counts: out.counts.clone(),
                iterations: out.iterations,
                gap_w: Some(out.final_gap_w),
                epsilon_w: None,
                rounds: None,
                pairwise_stable: None,
                per_user_sinr: vec![sc.sinr_min],
                certificate_xi: None,
                certificate_t_max: None,
                certificate_violations: vec![],
            })
        }
        Command::MuSolve { common, trace, dump_channels } => {
            let cfg = load_config(&common)?;
            let sc = scenario_from(&cfg, common.seed)?;
            let channels = ChannelSet::from_scenario(&sc)?;
            let opts = MuOptions {
                epsilon: cfg.solver.epsilon_w,
                power_budget: sc.power_budget_w,
                solver: cfg.solver_options(),
                max_iterations: cfg.solver.bnb_max_iterations.unwrap_or(200_000),
                record_trace: true,
            };
            let out = bnb_multi_user(&channels, sc.sinr_min, &opts)?;
            let dir = ensure_out(&common.out)?;
            if let Some(dir) = &dir {
                if trace {
                    let mut f = std::fs::File::create(dir.join("trace.csv"))?;
                    writeln!(f, "iteration,glb_w,gub_w,phi_max")?;
                    for row in &out.trace {
                        writeln!(
                            f,
                            "{},{:.9e},{:.9e},{:.6e}",
                            row.iteration, row.glb_w, row.gub_w, row.phi_max
                        )?;
                    }
                }
                if dump_channels {
                    dump_channels_csv(dir, &channels)?;
                }
            }
            print_json(&SolveSummary {
                solver: "bnb-mu".into(),
                power_w: out.power_w,
                power_dbm: watts_to_dbm(out.power_w),
                pattern: out.pattern.row_strings(),
                counts: out.pattern.counts(),
                iterations: out.iterations,
                gap_w: Some(out.gap_w),
                epsilon_w: Some(out.epsilon_w),
                rounds: None,
                pairwise_stable: None,
                per_user_sinr: out.solution.per_user_sinr.clone(),
                certificate_xi: Some(out.certificate.xi),
                certificate_t_max: Some(out.certificate.t_max),
                certificate_violations: out.certificate_violations.clone(),
            })
        }
        Command::MatchSolve { common, vanilla, trace, dump_channels } => {
            let cfg = load_config(&common)?;
            let sc = scenario_from(&cfg, common.seed)?;
            let channels = ChannelSet::from_scenario(&sc)?;
            let opts =
                MatchOptions { vanilla, solver: cfg.solver_options(), ..MatchOptions::default() };
            let out = welfare_matching(&channels, sc.sinr_min, &opts)?;
            let stable = verify_pairwise_stable(&out.state, &channels, sc.sinr_min, &opts)?;
            let dir = ensure_out(&common.out)?;
            if let Some(dir) = &dir {
                if trace {
                    let mut f = std::fs::File::create(dir.join("trace.csv"))?;
                    writeln!(f, "round,swaps_evaluated,swaps_accepted,power_dbm")?;
                    for row in &out.trace {
                        writeln!(
                            f,
                            "{},{},{},{:.6}",
                            row.round, row.swaps_evaluated, row.swaps_accepted, row.power_dbm
                        )?;
                    }
                }
                if dump_channels {
                    dump_channels_csv(dir, &channels)?;
                }
            }
            print_json(&SolveSummary {
                solver: if vanilla { "vanilla-matching" } else { "matching" }.into(),
                power_w: out.power_w,
                power_dbm: watts_to_dbm(out.power_w),
                pattern: out.state.pattern.row_strings(),
                counts: out.state.pattern.counts(),
                iterations: out.swaps_accepted,
                gap_w: None,
                epsilon_w: None,
                rounds: Some(out.rounds),
                pairwise_stable: Some(stable),
                per_user_sinr: out.per_user_sinr.clone(),
                certificate_xi: None,
                certificate_t_max: None,
                certificate_violations: vec![],
            })
        }
        Command::Baseline { common } => {
            let cfg = load_config(&common)?;
            let sc = scenario_from(&cfg, common.seed)?;
            let power = baseline_mimo(&sc, &cfg.solver_options())?;
            #[derive(Serialize)]
            struct BaselineOut {
                solver: &'static str,
                power_w: f64,
                power_dbm: f64,
                antennas: usize,
            }
            print_json(&BaselineOut {
                solver: "baseline-mimo",
                power_w: power,
                power_dbm: watts_to_dbm(power),
                antennas: sc.num_users,
            })
        }
        Command::Exhaustive { common } => {
            let cfg = load_config(&common)?;
            let sc = scenario_from(&cfg, common.seed)?;
            let channels = ChannelSet::from_scenario(&sc)?;
            let (pattern, power) =
                exhaustive_oracle(&channels, sc.sinr_min, &cfg.solver_options())?;
            #[derive(Serialize)]
            struct ExhaustiveOut {
                solver: &'static str,
                power_w: f64,
                power_dbm: f64,
                pattern: Vec<String>,
                counts: Vec<usize>,
            }
            print_json(&ExhaustiveOut {
                solver: "exhaustive",
                power_w: power,
                power_dbm: watts_to_dbm(power),
                pattern: pattern.row_strings(),
                counts: pattern.counts(),
            })
        }
        Command::Experiment { common, sweep } => {
            let cfg = load_config(&common)?;
            let mut spec: ExperimentSpec = cfg
                .experiment_plan()?
                .context("config needs an [experiment] section for this command")?;
            if common.seed != 0 {
                spec.seed = common.seed;
            }
            if let Some(expr) = sweep {
                let (key, values) =
                    expr.split_once('=').context("--sweep expects key=v1,v2,...")?;
                spec.sweep = SweepVar::parse(key)
                    .ok_or_else(|| anyhow!("unknown sweep key {key:?}"))?;
                spec.values = values
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .context("sweep values must be numbers")?;
            }
            let records = run_experiment(&spec);
            let dir = ensure_out(&common.out)?.unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir)?;
            let mut results = std::fs::File::create(dir.join("results.csv"))?;
            write_results_csv(&mut results, spec.sweep, &records)?;
            let mut summary = std::fs::File::create(dir.join("summary.txt"))?;
            write_summary(&mut summary, spec.sweep, &spec, &records)?;
            let failures = records.iter().filter(|r| r.error.is_some()).count();
            println!(
                "wrote {} records to {} ({} failures); summary.txt alongside",
                records.len(),
                dir.join("results.csv").display(),
                failures
            );
            Ok(())
        }
        Command::CouplingFit { common, samples, oracle, gap_max, points } => {
            let params = common
                .config
                .as_ref()
                .map(|p| ConfigFile::load(p))
                .transpose()?
                .map(|c| c.coupling_params())
                .unwrap_or_else(pass_opt::coupling::CouplingParams::reference);
            let data: Vec<(f64, f64)> = if let Some(path) = samples {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                let mut rows = Vec::new();
                for (i, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let mut parts = line.split(',');
                    let s: f64 = match parts.next().map(str::trim).map(str::parse) {
                        Some(Ok(v)) => v,
                        _ if i == 0 => continue, // header row
                        _ => bail!("bad sample line {}: {line:?}", i + 1),
                    };
                    let k: f64 = parts
                        .next()
                        .map(str::trim)
                        .context("missing kappa column")?
                        .parse()
                        .with_context(|| format!("bad kappa on line {}", i + 1))?;
                    rows.push((s, k));
                }
                rows
            } else {
                let shape = match oracle.as_deref() {
                    Some("rect") | None => Shape::Rectangular,
                    Some("circ") => Shape::Circular,
                    Some(other) => bail!("unknown oracle {other:?} (use rect|circ)"),
                };
                // cross-section matched to the configured law: 2b = 10 mm,
                // air cladding, k0 back-solved from the target alpha
                let cs = CrossSection::from_target_alpha(
                    shape,
                    5.0,
                    1.4,
                    1.0,
                    20.0,
                    params.alpha,
                    None,
                )?;
                (0..points)
                    .map(|i| 10.0 + gap_max * i as f64 / (points.max(2) - 1) as f64)
                    .map(|s| {
                        let k = match shape {
                            Shape::Rectangular => oracle_kappa_rect(&cs, s),
                            Shape::Circular => oracle_kappa_circ(&cs, s),
                        };
                        k.map(|k| (s, k))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            };
            let fit = fit_exponential(&data)?;
            if let Some(dir) = ensure_out(&common.out)? {
                let mut f = std::fs::File::create(dir.join("coupling_samples.csv"))?;
                writeln!(f, "spacing_mm,kappa_per_mm")?;
                for (s, k) in &data {
                    writeln!(f, "{s:.6},{k:.9e}")?;
                }
            }
            #[derive(Serialize)]
            struct FitOut {
                omega0_per_mm: f64,
                alpha_per_mm: f64,
                log_rms_residual: f64,
                samples: usize,
                s_min_mm: f64,
            }
            print_json(&FitOut {
                omega0_per_mm: fit.omega0,
                alpha_per_mm: fit.alpha,
                log_rms_residual: fit.log_rms_residual,
                samples: data.len(),
                s_min_mm: fit.with_coupler_len(params.coupler_len).s_min(),
            })
        }
        Command::SpacingPlan { common, count, pattern } => {
            let params = common
                .config
                .as_ref()
                .map(|p| ConfigFile::load(p))
                .transpose()?
                .map(|c| c.coupling_params())
                .unwrap_or_else(pass_opt::coupling::CouplingParams::reference);
            let active: Vec<bool> = match (count, pattern) {
                (Some(c), None) => vec![true; c],
                (None, Some(bits)) => bits
                    .chars()
                    .map(|c| match c {
                        '1' => Ok(true),
                        '0' => Ok(false),
                        other => Err(anyhow!("pattern must be binary, found {other:?}")),
                    })
                    .collect::<Result<Vec<_>>>()?,
                _ => bail!("provide exactly one of --count or --pattern"),
            };
            let started = std::time::Instant::now();
            let plan = equal_power_spacings(&active, &params)?;
            let elapsed_us = started.elapsed().as_secs_f64() * 1e6;
            if let Some(dir) = ensure_out(&common.out)? {
                let mut f = std::fs::File::create(dir.join("spacing_plan.csv"))?;
                writeln!(f, "waveguide,antenna,active,spacing_mm,beta")?;
                plan.write_csv(&mut f, 1)?;
            }
            #[derive(Serialize)]
            struct PlanOut {
                spacings_mm: Vec<f64>,
                ratios: Vec<f64>,
                s_min_mm: f64,
                elapsed_us: f64,
            }
            print_json(&PlanOut {
                spacings_mm: plan.active_spacings(),
                ratios: plan.ratios.iter().copied().filter(|&b| b > 0.0).collect(),
                s_min_mm: params.s_min(),
                elapsed_us,
            })
        }
    }
}
