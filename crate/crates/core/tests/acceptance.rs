//! Acceptance suite: one test per numbered criterion, each printing a
//! `criterion N: PASS/FAIL` line with the measured quantities.
//!
//! Criteria 5, 6 and 8 share the same twenty multi-user instances (computed
//! once); the remaining criteria are self-contained.

use std::sync::OnceLock;
use std::time::Instant;

use pass_opt::bnb_mu::{bnb_multi_user, MuOptions, MuOutcome};
use pass_opt::bnb_su::{bnb_single_user, exhaustive_single_user, SuOptions};
use pass_opt::coupling::{
    coupling_coefficient, equal_power_spacings, radiation_ratios, CouplingParams,
};
use pass_opt::harness::{
    baseline_mimo, exhaustive_oracle, paper_small, run_experiment, trial_users,
    write_results_csv, ExperimentSpec, ScenarioTemplate, SolverKind, SweepVar,
};
use pass_opt::matching::{
    kkt_beamformer, verify_pairwise_stable, welfare_matching, MatchOptions,
};
use pass_opt::model::{ActivationPattern, Scenario};
use pass_opt::socp::{mccormick, solve_fixed_activation, SolverOptions};
use pass_opt::{watts_to_dbm, ChannelSet};

use rand::{Rng as _, SeedableRng as _};
use rand_chacha::ChaCha8Rng;

/// Criterion 1. Equal-power spacing sequence against the reference constants.
///
/// The third reference constant (4.633 mm) is inconsistent with the closed
/// form the other five satisfy: `S_3 = ln(omega0 D / asin(1/2)) / alpha =
/// 4.6630 mm` with the same `(omega0, alpha, D)` that reproduce every other
/// entry to within +/-0.001 mm, and criteria 2-3 pin the same formula. The
/// suite asserts the criterion as stated, so this test documents the
/// discrepancy by failing on that element; the checks above it prove the
/// implementation matches the closed form exactly.
#[test]
fn acceptance_01_equal_power_spacing_sequence() {
    let params = CouplingParams::new(0.3300, 0.24615, 5.0);
    let started = Instant::now();
    let plan = equal_power_spacings(&[true; 6], &params).expect("plan");
    let elapsed = started.elapsed();
    let spacings = plan.active_spacings();

    // implementation == closed form, element by element
    for (l, &s) in spacings.iter().enumerate() {
        let delta = 1.0 / ((6 - l) as f64).sqrt();
        let oracle = (params.omega0 * params.coupler_len / delta.asin()).ln() / params.alpha;
        assert!((s - oracle).abs() < 1e-12, "element {l} drifts from the closed form");
    }
    assert!(elapsed.as_secs_f64() < 1e-3, "runtime {elapsed:?} exceeds 1 ms");

    let reference = [5.554, 5.157, 4.633, 4.006, 3.016, 0.200];
    let mut failed = Vec::new();
    for (l, (&got, &want)) in spacings.iter().zip(&reference).enumerate() {
        let ok = (got - want).abs() <= 1e-3;
        println!(
            "criterion 1: element {} = {:.4} mm vs reference {:.3} mm -> {}",
            l + 1,
            got,
            want,
            if ok { "ok" } else { "MISMATCH" }
        );
        if !ok {
            failed.push((l + 1, got, want));
        }
    }
    if failed.is_empty() {
        println!("criterion 1: PASS — sequence matches within ±0.001 mm in {elapsed:?}");
    } else {
        println!("criterion 1: FAIL — {failed:?}");
        panic!(
            "reference constant inconsistent with the closed form the other five satisfy: \
             element 3 evaluates to 4.6630 mm, not 4.633 mm (all other elements match \
             within ±0.001 mm)"
        );
    }
}

/// Criterion 2. Minimum spacing where `sin(kappa(S) * D) = 1`.
#[test]
fn acceptance_02_minimum_spacing() {
    let params = CouplingParams::new(0.3300, 0.24615, 5.0);
    let s_min = params.s_min();
    assert!(
        (s_min - 0.1999).abs() <= 5e-4,
        "criterion 2: FAIL — s_min {s_min} outside 0.1999 ± 0.0005"
    );
    let arg = coupling_coefficient(s_min, &params) * params.coupler_len;
    assert!((arg.sin() - 1.0).abs() < 1e-12);
    println!("criterion 2: PASS — s_min = {s_min:.6} mm");
}

/// Criterion 3. Radiation-ratio exactness over every pattern with L <= 8.
#[test]
fn acceptance_03_radiation_ratio_exactness() {
    let params = CouplingParams::new(0.3300, 0.24615, 5.0);
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut patterns = 0u64;
    for len in 1..=8usize {
        for bits in 1u32..(1 << len) {
            let active: Vec<bool> = (0..len).map(|l| bits >> l & 1 == 1).collect();
            let ls = active.iter().filter(|&&a| a).count() as f64;
            let plan = equal_power_spacings(&active, &params).expect("plan");
            let flat: Vec<f64> = plan.spacings.iter().map(|s| s.unwrap_or(0.0)).collect();
            let betas = radiation_ratios(&active, &flat, &params).expect("ratios");
            for (l, &a) in active.iter().enumerate() {
                let target = if a { 1.0 / ls.sqrt() } else { 0.0 };
                worst = worst.max((betas[l] - target).abs());
            }
            patterns += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(worst < 1e-9, "criterion 3: FAIL — max deviation {worst:e}");
    assert!(elapsed.as_secs_f64() < 1.0, "criterion 3: FAIL — took {elapsed:?}");
    println!(
        "criterion 3: PASS — {patterns} patterns, max |beta - 1/sqrt(Ls)| = {worst:.2e} in {elapsed:?}"
    );
}

/// Criterion 4. Single-user global optimality on 50 random instances.
#[test]
fn acceptance_04_single_user_global_optimality() {
    let mut template = paper_small();
    template.num_users = 1;
    let started = Instant::now();
    let mut max_nodes = 0u64;
    let mut max_err = 0.0f64;
    for trial in 0..50 {
        let users = trial_users(&template, SweepVar::None, 0.0, 505, trial);
        let sc = template.scenario_at(SweepVar::None, 0.0, Some(users)).expect("scenario");
        let ch = ChannelSet::from_scenario(&sc).expect("channels");
        let eps = 1e-6 * sc.noise_power_w * sc.sinr_min;
        let out = bnb_single_user(&ch, 0, sc.sinr_min, &SuOptions::default()).expect("bnb");
        let (_, oracle) = exhaustive_single_user(&ch, 0, sc.sinr_min).expect("oracle");
        assert!(
            (out.power_w - oracle).abs() <= eps,
            "criterion 4: FAIL — trial {trial}: bnb {} vs oracle {oracle} (eps {eps:e})",
            out.power_w
        );
        assert!(
            out.nodes_created <= 1 << 13,
            "criterion 4: FAIL — trial {trial}: {} nodes exceeds 2^13",
            out.nodes_created
        );
        max_nodes = max_nodes.max(out.nodes_created);
        max_err = max_err.max((out.power_w - oracle).abs());
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "criterion 4: FAIL — suite took {elapsed:?}");
    println!(
        "criterion 4: PASS — 50 instances, max |bnb - oracle| = {max_err:.2e} W, max nodes = {max_nodes}, {elapsed:?}"
    );
}

struct MuInstance {
    scenario: Scenario,
    channels: ChannelSet,
    outcome: MuOutcome,
    oracle_power: f64,
}

fn mu_template() -> ScenarioTemplate {
    let mut t = paper_small();
    t.antennas_per_waveguide = 3;
    t
}

fn mu_instances() -> &'static Vec<MuInstance> {
    static INSTANCES: OnceLock<Vec<MuInstance>> = OnceLock::new();
    INSTANCES.get_or_init(|| {
        let template = mu_template();
        (0..20)
            .map(|trial| {
                let users = trial_users(&template, SweepVar::None, 0.0, 42, trial);
                let scenario =
                    template.scenario_at(SweepVar::None, 0.0, Some(users)).expect("scenario");
                let channels = ChannelSet::from_scenario(&scenario).expect("channels");
                let outcome = bnb_multi_user(&channels, scenario.sinr_min, &MuOptions::default())
                    .expect("bnb");
                let (_, oracle_power) =
                    exhaustive_oracle(&channels, scenario.sinr_min, &SolverOptions::default())
                        .expect("oracle");
                MuInstance { scenario, channels, outcome, oracle_power }
            })
            .collect()
    })
}

/// Criterion 5. Multi-user global optimality on 20 instances plus a
/// paper-scale smoke run.
///
/// The L = 6, K = N = 4 instance cannot be certified against 2^24 exhaustive
/// search at desk scale, and its McCormick relaxation closes the bound gap
/// only logarithmically, so the smoke run pins a coarse certificate
/// (eps = 0.5 x all-active probe power) and checks clean termination with
/// gap <= eps under the full bounding/certificate machinery.
#[test]
fn acceptance_05_multi_user_global_optimality() {
    let started = Instant::now();
    let mut max_rel = 0.0f64;
    for (trial, inst) in mu_instances().iter().enumerate() {
        let out = &inst.outcome;
        assert!(
            out.power_w <= inst.oracle_power + out.epsilon_w,
            "criterion 5: FAIL — trial {trial}: bnb {} vs oracle {} (eps {:e})",
            out.power_w,
            inst.oracle_power,
            out.epsilon_w
        );
        assert!(
            out.gap_w <= out.epsilon_w * (1.0 + 1e-9),
            "criterion 5: FAIL — trial {trial}: final gap {} > eps {}",
            out.gap_w,
            out.epsilon_w
        );
        for w in out.trace.windows(2) {
            assert!(
                w[1].glb_w >= w[0].glb_w - 1e-18,
                "criterion 5: FAIL — trial {trial}: GLB not monotone"
            );
            assert!(
                w[1].gub_w <= w[0].gub_w + 1e-18,
                "criterion 5: FAIL — trial {trial}: GUB not monotone"
            );
        }
        max_rel = max_rel.max((out.power_w - inst.oracle_power).abs() / inst.oracle_power);
    }

    // paper-scale smoke run: L = 6, K = N = 4
    let mut big = paper_small();
    big.num_waveguides = 4;
    big.num_users = 4;
    big.antennas_per_waveguide = 6;
    let users = trial_users(&big, SweepVar::None, 0.0, 11, 0);
    let sc = big.scenario_at(SweepVar::None, 0.0, Some(users)).expect("scenario");
    let ch = ChannelSet::from_scenario(&sc).expect("channels");
    let probe = solve_fixed_activation(
        &ActivationPattern::all_active(6, 4),
        &ch,
        sc.sinr_min,
        &SolverOptions::default(),
    )
    .expect("probe");
    let opts = MuOptions {
        epsilon: Some(0.5 * probe.total_power_w),
        max_iterations: 20_000,
        ..MuOptions::default()
    };
    let smoke = bnb_multi_user(&ch, sc.sinr_min, &opts).expect("paper-scale run");
    assert!(
        smoke.iterations < opts.max_iterations,
        "criterion 5: FAIL — paper-scale run hit the iteration cap"
    );
    assert!(
        smoke.gap_w <= smoke.epsilon_w,
        "criterion 5: FAIL — paper-scale gap {} > eps {}",
        smoke.gap_w,
        smoke.epsilon_w
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1200.0, "criterion 5: FAIL — took {elapsed:?}");
    println!(
        "criterion 5: PASS — 20 instances within eps (max rel dev {max_rel:.2e}); paper-scale \
         M=24 run terminated in {} iterations with gap {:.3e} <= eps {:.3e}; {elapsed:?}",
        smoke.iterations, smoke.gap_w, smoke.epsilon_w
    );
}

/// Criterion 6. Lemma-style edge-length certificate on every multi-user run.
#[test]
fn acceptance_06_certificate() {
    for (trial, inst) in mu_instances().iter().enumerate() {
        assert!(
            inst.outcome.certificate_violations.is_empty(),
            "criterion 6: FAIL — trial {trial}: {:?}",
            inst.outcome.certificate_violations
        );
        // spot-check the instrumented inequality from the recorded trace
        let cert = inst.outcome.certificate;
        let m = inst.channels.num_antennas() as f64;
        let b = (inst.channels.num_antennas()
            + 2 * inst.channels.num_waveguides * inst.channels.num_users) as f64;
        let cap = (2.0 * m * inst.outcome.power_budget_w * b).sqrt();
        for row in &inst.outcome.trace {
            let gap = (row.gub_w - row.glb_w).max(0.0);
            assert!(
                gap <= cap * row.phi_max + 1e-6 * row.gub_w.max(1e-30),
                "criterion 6: FAIL — trial {trial} iter {}: gap {gap:e} > sqrt(2 M P0 B) phi = {:e}",
                row.iteration,
                cap * row.phi_max
            );
            if row.phi_max <= cert.xi {
                assert!(gap <= inst.outcome.epsilon_w * (1.0 + 1e-6));
            }
        }
    }
    println!("criterion 6: PASS — certificate inequalities hold at every recorded iteration");
}

/// Criterion 7. KKT/SOCP agreement on 100 random fixed activations, K <= 4.
///
/// Draws whose fixed-activation problem is genuinely infeasible (crossing
/// waveguides can activate the same lattice point, collapsing the channel
/// rank) are not power-comparable; both solvers must classify them as
/// infeasible and the draw is replaced so that exactly 100 feasible
/// comparisons run.
#[test]
fn acceptance_07_kkt_socp_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let mut max_rel = 0.0f64;
    let mut max_sinr_rel = 0.0f64;
    let mut compared = 0usize;
    let mut infeasible_draws = 0usize;
    let mut trial = 0usize;
    while compared < 100 {
        trial += 1;
        let k = 1 + trial % 4;
        let mut template = paper_small();
        template.num_waveguides = k.max(2);
        template.num_users = k;
        template.antennas_per_waveguide = 3;
        let users = trial_users(&template, SweepVar::None, 0.0, 7000, trial);
        let sc = template.scenario_at(SweepVar::None, 0.0, Some(users)).expect("scenario");
        let ch = ChannelSet::from_scenario(&sc).expect("channels");
        let mut pattern = ActivationPattern::empty(3, sc.num_waveguides);
        for n in 0..sc.num_waveguides {
            let mut any = false;
            for l in 0..3 {
                if rng.gen_bool(0.55) {
                    pattern.set(l, n, true);
                    any = true;
                }
            }
            if !any {
                pattern.set(rng.gen_range(0..3), n, true);
            }
        }
        let socp = solve_fixed_activation(&pattern, &ch, sc.sinr_min, &SolverOptions::default());
        let kkt = kkt_beamformer(&pattern, &ch, sc.sinr_min);
        let socp = match socp {
            Ok(sol) => sol,
            Err(pass_opt::socp::SocpError::Infeasible) => {
                assert!(
                    kkt.is_err(),
                    "criterion 7: FAIL — trial {trial}: SOCP infeasible but KKT returned a solution"
                );
                infeasible_draws += 1;
                continue;
            }
            Err(e) => panic!("criterion 7: FAIL — trial {trial}: solver error {e}"),
        };
        let kkt = kkt.unwrap_or_else(|e| {
            panic!("criterion 7: FAIL — trial {trial} (K={k}): kkt failed on feasible instance: {e}")
        });
        let kkt_power: f64 = kkt.per_user_power_w.iter().sum();
        let rel = (kkt_power - socp.total_power_w).abs() / socp.total_power_w;
        assert!(
            rel < 1e-6,
            "criterion 7: FAIL — trial {trial} (K={k}): kkt {kkt_power} socp {} rel {rel:e}",
            socp.total_power_w
        );
        max_rel = max_rel.max(rel);
        for &s in &kkt.per_user_sinr {
            let sr = (s / sc.sinr_min - 1.0).abs();
            assert!(sr < 1e-6, "criterion 7: FAIL — trial {trial}: SINR rel dev {sr:e}");
            max_sinr_rel = max_sinr_rel.max(sr);
        }
        compared += 1;
    }
    println!(
        "criterion 7: PASS — 100 feasible instances ({infeasible_draws} degenerate draws agreed \
         infeasible), max power rel dev {max_rel:.2e}, max SINR rel dev {max_sinr_rel:.2e}"
    );
}

/// Criterion 8. Matching quality and stability on the criterion-5 instances.
#[test]
fn acceptance_08_matching_quality() {
    let opts = MatchOptions::default();
    let mut excesses = Vec::new();
    for (trial, inst) in mu_instances().iter().enumerate() {
        let out = welfare_matching(&inst.channels, inst.scenario.sinr_min, &opts)
            .expect("matching");
        assert!(
            out.rounds <= 50,
            "criterion 8: FAIL — trial {trial}: {} rounds",
            out.rounds
        );
        for w in out.accepted_powers_w.windows(2) {
            assert!(
                w[1] < w[0],
                "criterion 8: FAIL — trial {trial}: accepted-swap trace not strictly decreasing"
            );
        }
        let stable =
            verify_pairwise_stable(&out.state, &inst.channels, inst.scenario.sinr_min, &opts)
                .expect("stability check");
        assert!(stable, "criterion 8: FAIL — trial {trial}: final matching unstable");
        let bnb = inst.outcome.power_w;
        assert!(
            out.power_w >= bnb - inst.outcome.epsilon_w,
            "criterion 8: FAIL — trial {trial}: matching {} beat bnb {bnb}",
            out.power_w
        );
        excesses.push((out.power_w - bnb) / bnb);
    }
    // the 25% bound guards the reported mean: no per-instance tolerance is
    // claimed for a local search, only "near-optimal on average"
    let mean = excesses.iter().sum::<f64>() / excesses.len() as f64;
    let max = excesses.iter().cloned().fold(0.0f64, f64::max);
    assert!(
        mean <= 0.25,
        "criterion 8: FAIL — mean relative excess {:.3}% > 25%",
        100.0 * mean
    );
    println!(
        "criterion 8: PASS — 20 instances stable, mean relative excess over BnB = {:.3}% (max {:.3}%)",
        100.0 * mean,
        100.0 * max
    );
}

/// Criterion 9. Trend reproduction at desk scale.
#[test]
fn acceptance_09_trends() {
    // (a) power strictly increasing in the SINR floor for every solver
    let mut t4 = paper_small();
    t4.antennas_per_waveguide = 4;
    let gammas = [10.0, 15.0, 20.0, 25.0];
    for trial in 0..3 {
        let mut last: Vec<f64> = vec![f64::NEG_INFINITY; 4];
        for &db in &gammas {
            let users = trial_users(&t4, SweepVar::SinrMinDb, db, 901, trial);
            let sc = t4.scenario_at(SweepVar::SinrMinDb, db, Some(users)).expect("scenario");
            let ch = ChannelSet::from_scenario(&sc).expect("channels");
            let powers = [
                bnb_multi_user(&ch, sc.sinr_min, &MuOptions::default()).expect("bnb").power_w,
                welfare_matching(&ch, sc.sinr_min, &MatchOptions::default())
                    .expect("matching")
                    .power_w,
                baseline_mimo(&sc, &SolverOptions::default()).expect("baseline"),
                exhaustive_oracle(&ch, sc.sinr_min, &SolverOptions::default())
                    .expect("oracle")
                    .1,
            ];
            for (i, (&p, prev)) in powers.iter().zip(&last).enumerate() {
                assert!(
                    p > *prev,
                    "criterion 9a: FAIL — solver {i} not strictly increasing at {db} dB (trial {trial})"
                );
            }
            last = powers.to_vec();
        }
    }
    println!("criterion 9: (a) PASS — power strictly increasing in gamma for bnb-mu, matching, baseline, exhaustive");

    // (b) matching power non-increasing in L
    let tpl = paper_small();
    let mut means = Vec::new();
    for l in [4.0, 6.0, 8.0, 10.0] {
        let mut acc = 0.0;
        for trial in 0..8 {
            let users = trial_users(&tpl, SweepVar::AntennasPerWaveguide, l, 77, trial);
            let sc =
                tpl.scenario_at(SweepVar::AntennasPerWaveguide, l, Some(users)).expect("scenario");
            let ch = ChannelSet::from_scenario(&sc).expect("channels");
            acc += watts_to_dbm(
                welfare_matching(&ch, sc.sinr_min, &MatchOptions::default())
                    .expect("matching")
                    .power_w,
            );
        }
        means.push(acc / 8.0);
    }
    for w in means.windows(2) {
        assert!(
            w[1] <= w[0] + 1e-9,
            "criterion 9b: FAIL — mean dBm increased with L: {means:?}"
        );
    }
    println!("criterion 9: (b) PASS — matching mean dBm over L {{4,6,8,10}} = {means:?}");

    // (c) matching beats the baseline on at least 95 of 100 paired draws
    let mut wins = 0;
    for trial in 0..100 {
        let users = trial_users(&tpl, SweepVar::None, 0.0, 909, trial);
        let sc = tpl.scenario_at(SweepVar::None, 0.0, Some(users)).expect("scenario");
        let ch = ChannelSet::from_scenario(&sc).expect("channels");
        let m = welfare_matching(&ch, sc.sinr_min, &MatchOptions::default());
        let b = baseline_mimo(&sc, &SolverOptions::default());
        if let (Ok(m), Ok(b)) = (m, b) {
            if m.power_w <= b {
                wins += 1;
            }
        }
    }
    assert!(wins >= 95, "criterion 9c: FAIL — matching beat baseline on only {wins}/100");
    println!("criterion 9: (c) PASS — matching <= baseline on {wins}/100 paired instances");

    // (d) baseline mean dBm grows faster in the spatial range than matching
    let spans = [5.0, 10.0, 15.0];
    let mut match_means = Vec::new();
    let mut base_means = Vec::new();
    for &span in &spans {
        let mut m_acc = 0.0;
        let mut b_acc = 0.0;
        for trial in 0..8 {
            let users = trial_users(&tpl, SweepVar::SpanX, span, 313, trial);
            let sc = tpl.scenario_at(SweepVar::SpanX, span, Some(users)).expect("scenario");
            let ch = ChannelSet::from_scenario(&sc).expect("channels");
            m_acc += watts_to_dbm(
                welfare_matching(&ch, sc.sinr_min, &MatchOptions::default())
                    .expect("matching")
                    .power_w,
            );
            b_acc += watts_to_dbm(baseline_mimo(&sc, &SolverOptions::default()).expect("baseline"));
        }
        match_means.push(m_acc / 8.0);
        base_means.push(b_acc / 8.0);
    }
    let match_slope = match_means[2] - match_means[0];
    let base_slope = base_means[2] - base_means[0];
    assert!(
        base_slope > match_slope,
        "criterion 9d: FAIL — baseline slope {base_slope:.3} dB not steeper than matching {match_slope:.3} dB"
    );
    println!(
        "criterion 9: (d) PASS — dBm growth over S_x 5->15 m: baseline {base_slope:.3} dB vs matching {match_slope:.3} dB"
    );
    println!("criterion 9: PASS — all four trend checks hold");
}

/// Criterion 10. McCormick soundness: Monte Carlo containment and point-box
/// collapse.
#[test]
fn acceptance_10_mccormick_soundness() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let xl = rng.gen_range(-5.0..5.0);
        let xu = xl + rng.gen_range(0.0..6.0);
        let yl = rng.gen_range(-5.0..5.0);
        let yu = yl + rng.gen_range(0.0..6.0);
        let env = mccormick((xl, xu), (yl, yu)).expect("envelope");
        let x = rng.gen_range(xl..=xu);
        let y = rng.gen_range(yl..=yu);
        assert!(
            env.contains(x, y, x * y, 1e-9),
            "criterion 10: FAIL — z = xy escaped its envelope at ({x}, {y})"
        );
    }
    for _ in 0..100 {
        let a = rng.gen_range(-5.0..5.0);
        let b = rng.gen_range(-5.0..5.0);
        let env = mccormick((a, a), (b, b)).expect("point envelope");
        let (lo, hi) = env.z_interval(a, b);
        assert!((lo - a * b).abs() <= 1e-12 && (hi - a * b).abs() <= 1e-12);
    }
    println!("criterion 10: PASS — 1000 boxes contained z = xy; point boxes force equality to 1e-12");
}

/// Criterion 11. Determinism: identical seeds produce byte-identical CSV.
#[test]
fn acceptance_11_determinism() {
    let mut template = paper_small();
    template.antennas_per_waveguide = 4;
    let spec = ExperimentSpec {
        template,
        sweep: SweepVar::SinrMinDb,
        values: vec![15.0, 20.0],
        solvers: vec![SolverKind::Matching, SolverKind::BaselineMimo, SolverKind::BnbMu],
        trials: 3,
        seed: 4242,
        grid_points: 10,
        solver: SolverOptions::default(),
        epsilon_w: None,
        bnb_max_iterations: None,
    };
    let mut first = Vec::new();
    write_results_csv(&mut first, spec.sweep, &run_experiment(&spec)).expect("csv");
    let mut second = Vec::new();
    write_results_csv(&mut second, spec.sweep, &run_experiment(&spec)).expect("csv");
    assert_eq!(first, second, "criterion 11: FAIL — results.csv differs between runs");
    assert!(first.len() > 100);
    println!(
        "criterion 11: PASS — two runs produced byte-identical results.csv ({} bytes)",
        first.len()
    );
}
