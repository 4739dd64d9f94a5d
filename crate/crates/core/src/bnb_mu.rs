//! Globally optimal multi-user design: branch-and-bound over the mixed
//! binary/continuous vector `(a, Re D, Im D)` with the McCormick-relaxed SOCP
//! as the bounding function and projection-based upper bounds.
//!
//! Binary edges split into the two fixed points, continuous edges split at
//! their midpoint. Because the envelope collapses to the exact bilinear
//! product once the activation coordinates are fixed, boxes whose binary part
//! is resolved bound themselves exactly and fathom immediately; at desk-scale
//! power budgets (`2 sqrt(P0) < 1`) the search therefore behaves like a pure
//! binary tree.
//!
//! Every run instruments the edge-length certificate: with
//! `xi = eps / sqrt(2 M P0 B)`, a selected box with max edge below `xi` must
//! witness `GUB - GLB <= eps`, and the gap must stay below
//! `sqrt(2 M P0 B) * phi_max` at every iteration.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::bnb_su::{BnbError, BoxBounds};
use crate::model::{ActivationPattern, BeamformingSolution, ChannelSet};
use crate::socp::{
    build_joint_relaxation, solve_conic, solve_fixed_activation, SocpError, SolveStatus, SolverOptions,
};

/// Termination certificate constants.
#[derive(Debug, Clone, Copy)]
pub struct Certificate {
    /// Edge-length threshold `xi = eps / sqrt(2 M P0 B)`.
    pub xi: f64,
    /// Initial continuous volume `(2 sqrt(P0))^(2NK)`.
    pub psi_vol: f64,
    /// Worst-case branching iterations `ceil(psi_vol / xi^(2NK) * 2^(B+1) - 1)`;
    /// astronomically loose in practice and stored as `f64` (possibly
    /// infinite) for that reason.
    pub t_max: f64,
}

/// Certificate constants for a given instance size and tolerance.
pub fn certificate(
    num_antennas: usize,
    num_waveguides: usize,
    num_users: usize,
    power_budget: f64,
    epsilon: f64,
) -> Certificate {
    let b_dim = (num_antennas + 2 * num_waveguides * num_users) as f64;
    let cont_dim = (2 * num_waveguides * num_users) as f64;
    let xi = epsilon / (2.0 * num_antennas as f64 * power_budget * b_dim).sqrt();
    let psi_vol = (2.0 * power_budget.sqrt()).powf(cont_dim);
    // log-space to survive the exponents
    let ln_t = psi_vol.ln() - cont_dim * xi.ln() + (b_dim + 1.0) * std::f64::consts::LN_2;
    let t_max = if ln_t > 700.0 { f64::INFINITY } else { (ln_t.exp() - 1.0).ceil() };
    Certificate { xi, psi_vol, t_max }
}

#[derive(Debug, Clone)]
struct MuNode {
    bounds: BoxBounds,
    power_lb: f64,
    relaxed_a: Vec<f64>,
    relaxed_d: Vec<Complex64>,
    id: u64,
}

/// Split the selected box along its longest edge: binary edges become the
/// two fixed points, continuous edges halve. Equal-length ties prefer binary
/// edges; among tied binary edges the most fractional relaxed activation is
/// split first (falling back to the lowest index when no relaxation is
/// given).
pub fn branch_mixed(
    bounds: &BoxBounds,
    num_binary: usize,
    relaxed_a: Option<&[f64]>,
) -> (BoxBounds, BoxBounds, usize) {
    let (mut edge, len) = bounds.longest_edge();
    if edge < num_binary {
        if let Some(rel) = relaxed_a {
            // all free binary edges share the maximum length 1
            let mut best = f64::INFINITY;
            for i in 0..num_binary {
                if bounds.edge_length(i) >= len {
                    let frac = (rel[i] - 0.5).abs();
                    if frac < best - 1e-15 {
                        best = frac;
                        edge = i;
                    }
                }
            }
        }
    }
    let mut minus = bounds.clone();
    let mut plus = bounds.clone();
    if edge < num_binary {
        minus.hi[edge] = 0.0;
        plus.lo[edge] = 1.0;
    } else {
        let mid = 0.5 * (bounds.lo[edge] + bounds.hi[edge]);
        minus.hi[edge] = mid;
        plus.lo[edge] = mid;
    }
    (minus, plus, edge)
}

/// Round a relaxed activation into a pattern respecting box fixings, then
/// repair any waveguide that rounding emptied while its relaxed beamforming
/// still carries power (activate its strongest relaxed coordinate). Returns
/// the projected pattern, the recovered beamforming, and the upper bound
/// (`+inf` encodes an infeasible projection).
pub fn upper_bound_from_projection(
    relaxed_a: &[f64],
    relaxed_d: &[Complex64],
    bounds: &BoxBounds,
    channels: &ChannelSet,
    sinr_min: f64,
    solver: &SolverOptions,
    cache: &mut HashMap<Vec<bool>, Option<(f64, BeamformingSolution)>>,
) -> (Option<ActivationPattern>, Option<BeamformingSolution>, f64) {
    let l_count = channels.antennas_per_waveguide;
    let n_count = channels.num_waveguides;
    let k_count = channels.num_users;
    let m = channels.num_antennas();
    let mut pattern = ActivationPattern::empty(l_count, n_count);
    for mm in 0..m {
        let on = if bounds.lo[mm] > 0.5 {
            true
        } else if bounds.hi[mm] < 0.5 {
            false
        } else {
            relaxed_a[mm] >= 0.5
        };
        pattern.set(mm % l_count, mm / l_count, on);
    }
    // repair: a zero row whose relaxed beamforming is non-negligible gets its
    // strongest available coordinate activated so the 1/sqrt(L_n) recovery
    // stays well-defined
    let counts = pattern.counts();
    for n in 0..n_count {
        if counts[n] > 0 {
            continue;
        }
        let carried: f64 = (0..k_count).map(|k| relaxed_d[n * k_count + k].norm_sqr()).sum();
        if carried <= 1e-24 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for l in 0..l_count {
            if bounds.hi[n * l_count + l] > 0.5 {
                let v = relaxed_a[n * l_count + l];
                if best.map_or(true, |(_, bv)| v > bv) {
                    best = Some((l, v));
                }
            }
        }
        if let Some((l, _)) = best {
            pattern.set(l, n, true);
        }
    }
    let key = pattern.flags().to_vec();
    let entry = cache.entry(key).or_insert_with(|| {
        match solve_fixed_activation(&pattern, channels, sinr_min, solver) {
            Ok(sol) => Some((sol.total_power_w, sol)),
            Err(_) => None,
        }
    });
    match entry {
        Some((p, sol)) => (Some(pattern), Some(sol.clone()), *p),
        None => (Some(pattern), None, f64::INFINITY),
    }
}

/// Pattern determined by a box whose binary coordinates are all fixed.
fn forced_binary(
    bounds: &BoxBounds,
    num_binary: usize,
    antennas_per_waveguide: usize,
    num_waveguides: usize,
) -> Option<ActivationPattern> {
    let mut pattern = ActivationPattern::empty(antennas_per_waveguide, num_waveguides);
    for m in 0..num_binary {
        if bounds.lo[m] > 0.5 {
            pattern.set(m % antennas_per_waveguide, m / antennas_per_waveguide, true);
        } else if bounds.hi[m] >= 0.5 {
            return None; // still free
        }
    }
    Some(pattern)
}

#[derive(Debug, Clone)]
pub struct MuTraceRow {
    pub iteration: u64,
    pub glb_w: f64,
    pub gub_w: f64,
    /// Max edge length of the box selected at this iteration.
    pub phi_max: f64,
}

#[derive(Debug, Clone)]
pub struct MuOptions {
    /// Termination gap (W); defaults to
    /// `max(1e-6 sigma^2 gamma, 1e-6 * root power)` and is floored at ten
    /// times the solver tolerance on the root power scale, below which bound
    /// validity cannot be distinguished from solver noise.
    pub epsilon: Option<f64>,
    /// Per-entry power budget bounding the continuous box; defaults to
    /// `100 x` the all-active feasibility probe power.
    pub power_budget: Option<f64>,
    pub solver: SolverOptions,
    /// Hard safety cap on branching iterations.
    pub max_iterations: u64,
    pub record_trace: bool,
}

impl Default for MuOptions {
    fn default() -> Self {
        Self {
            epsilon: None,
            power_budget: None,
            solver: SolverOptions::default(),
            max_iterations: 200_000,
            record_trace: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MuOutcome {
    pub pattern: ActivationPattern,
    pub solution: BeamformingSolution,
    pub power_w: f64,
    pub gap_w: f64,
    pub iterations: u64,
    pub nodes_created: u64,
    pub epsilon_w: f64,
    pub power_budget_w: f64,
    pub certificate: Certificate,
    /// Edge-length certificate checks that failed (empty on healthy runs).
    pub certificate_violations: Vec<String>,
    pub trace: Vec<MuTraceRow>,
    /// `||W||_F^2` recomputed from the recovery identity `W = sqrt(L_n) D`.
    pub recovery_power_w: f64,
}

/// Branch-and-bound over `(a, Re D, Im D)` minimizing total transmit power
/// under per-user SINR constraints.
pub fn bnb_multi_user(
    channels: &ChannelSet,
    sinr_min: f64,
    opts: &MuOptions,
) -> Result<MuOutcome, BnbError> {
    let m = channels.num_antennas();
    let n_count = channels.num_waveguides;
    let k_count = channels.num_users;
    let b_dim = m + 2 * n_count * k_count;

    // root feasibility probe: all antennas active
    let all_on = ActivationPattern::all_active(channels.antennas_per_waveguide, n_count);
    let root_probe = match solve_fixed_activation(&all_on, channels, sinr_min, &opts.solver) {
        Ok(sol) => sol,
        Err(SocpError::Infeasible) => {
            return Err(BnbError::Infeasible(
                "all-active feasibility probe is infeasible".into(),
            ))
        }
        Err(e) => return Err(e.into()),
    };
    let root_power = root_probe.total_power_w;
    // The optimum over patterns cannot exceed the all-active power, so the
    // probe power (plus slack) bounds every |d| the optimum can use; a tight
    // box keeps the envelopes sharp.
    let p0 = opts.power_budget.unwrap_or(1.001 * root_power);
    let noise_floor = 1e-6 * channels.noise_power_w * sinr_min;
    let epsilon = opts
        .epsilon
        .unwrap_or((1e-6 * root_power).max(noise_floor))
        .max(10.0 * opts.solver.tolerance * root_power);
    let cert = certificate(m, n_count, k_count, p0, epsilon);
    let gap_cap = (2.0 * m as f64 * p0 * b_dim as f64).sqrt();
    let cert_slack = 100.0 * opts.solver.tolerance;

    let mut gub = root_power;
    let mut incumbent_pattern = all_on;
    let mut incumbent_solution = root_probe;
    let mut fixed_cache: HashMap<Vec<bool>, Option<(f64, BeamformingSolution)>> = HashMap::new();
    fixed_cache.insert(
        incumbent_pattern.flags().to_vec(),
        Some((gub, incumbent_solution.clone())),
    );

    let mut root = BoxBounds::root(b_dim);
    for i in m..b_dim {
        root.lo[i] = -p0.sqrt();
        root.hi[i] = p0.sqrt();
    }
    let prune_rel = 100.0 * opts.solver.tolerance;
    let mut nodes_created = 1u64;
    let mut next_id = 0u64;
    let mut iterations = 0u64;
    let mut trace = Vec::new();
    let mut violations = Vec::new();

    let bound_box = |bounds: &BoxBounds,
                     parent_lb: f64,
                     parent_a: &[f64],
                     parent_d: &[Complex64]|
     -> Result<Option<(f64, Vec<f64>, Vec<Complex64>)>, BnbError> {
        let joint_relax = build_joint_relaxation(&bounds.lo, &bounds.hi, channels, sinr_min)?;
        let report = solve_conic(&joint_relax.prog, &opts.solver)?;
        match report.status {
            SolveStatus::Infeasible => Ok(None),
            SolveStatus::NumericalFailure => {
                // conservative: inherit the parent bound, clamp its relaxation
                // into this box for projection purposes
                let mut a = parent_a.to_vec();
                for (i, v) in a.iter_mut().enumerate() {
                    *v = v.clamp(bounds.lo[i], bounds.hi[i]);
                }
                Ok(Some((parent_lb, a, parent_d.to_vec())))
            }
            SolveStatus::Optimal => {
                let sol = joint_relax.extract(&report);
                let lb = sol.objective_w.max(0.0).max(parent_lb);
                Ok(Some((lb, sol.activation, sol.d)))
            }
        }
    };

    let mut candidates: Vec<MuNode> = Vec::new();
    let root_mid_a = vec![0.5; m];
    let root_mid_d = vec![Complex64::new(0.0, 0.0); n_count * k_count];
    if let Some((lb, a, d)) = bound_box(&root, 0.0, &root_mid_a, &root_mid_d)? {
        let (pattern, solution, ub) = upper_bound_from_projection(
            &a,
            &d,
            &root,
            channels,
            sinr_min,
            &opts.solver,
            &mut fixed_cache,
        );
        if ub < gub {
            gub = ub;
            incumbent_pattern = pattern.expect("finite bound implies a pattern");
            incumbent_solution = solution.expect("finite bound implies a solution");
        }
        if !(ub - lb <= epsilon) && lb <= gub * (1.0 + prune_rel) {
            candidates.push(MuNode {
                bounds: root,
                power_lb: lb,
                relaxed_a: a,
                relaxed_d: d,
                id: next_id,
            });
            next_id += 1;
        }
    }

    let mut glb = candidates.iter().map(|n| n.power_lb).fold(gub, f64::min);
    while !candidates.is_empty() && gub - glb > epsilon && iterations < opts.max_iterations {
        iterations += 1;
        let pick = candidates
            .iter()
            .enumerate()
            .min_by(|(_, x), (_, y)| {
                x.power_lb
                    .partial_cmp(&y.power_lb)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(x.id.cmp(&y.id))
            })
            .map(|(i, _)| i)
            .expect("nonempty candidates");
        let node = candidates.swap_remove(pick);
        let phi_max = node.bounds.max_edge();
        let gap_now = (gub - glb).max(0.0);
        if phi_max <= cert.xi && gap_now > epsilon * (1.0 + cert_slack) {
            violations.push(format!(
                "iter {iterations}: phi_max {phi_max:e} <= xi {:e} but gap {gap_now:e} > eps {epsilon:e}",
                cert.xi
            ));
        }
        if gap_now > gap_cap * phi_max + cert_slack * gub.max(noise_floor) {
            violations.push(format!(
                "iter {iterations}: gap {gap_now:e} exceeds sqrt(2 M P0 B) phi_max = {:e}",
                gap_cap * phi_max
            ));
        }
        if opts.record_trace {
            trace.push(MuTraceRow { iteration: iterations, glb_w: glb, gub_w: gub, phi_max });
        }

        let (minus, plus, _) = branch_mixed(&node.bounds, m, Some(&node.relaxed_a));
        for child in [minus, plus] {
            nodes_created += 1;
            // A binary-fixed box bounds itself exactly: its pattern's
            // unrestricted optimum lower-bounds every d-sub-box and doubles
            // as the projection upper bound, so the box fathoms with zero
            // gap regardless of solver noise.
            if let Some(pattern) =
                forced_binary(&child, m, channels.antennas_per_waveguide, n_count)
            {
                let key = pattern.flags().to_vec();
                let entry = fixed_cache.entry(key).or_insert_with(|| {
                    match solve_fixed_activation(&pattern, channels, sinr_min, &opts.solver) {
                        Ok(sol) => Some((sol.total_power_w, sol)),
                        Err(_) => None,
                    }
                });
                if let Some((p, sol)) = entry {
                    if *p < gub {
                        gub = *p;
                        incumbent_pattern = pattern;
                        incumbent_solution = sol.clone();
                    }
                }
                continue;
            }
            if let Some((lb, a, d)) =
                bound_box(&child, node.power_lb, &node.relaxed_a, &node.relaxed_d)?
            {
                let (pattern, solution, ub) = upper_bound_from_projection(
                    &a,
                    &d,
                    &child,
                    channels,
                    sinr_min,
                    &opts.solver,
                    &mut fixed_cache,
                );
                if ub < gub {
                    gub = ub;
                    incumbent_pattern = pattern.expect("finite bound implies a pattern");
                    incumbent_solution = solution.expect("finite bound implies a solution");
                }
                let fathomed = ub - lb <= epsilon;
                let non_optimal = lb > gub * (1.0 + prune_rel);
                if !fathomed && !non_optimal {
                    candidates.push(MuNode {
                        bounds: child,
                        power_lb: lb,
                        relaxed_a: a,
                        relaxed_d: d,
                        id: next_id,
                    });
                    next_id += 1;
                }
            }
        }
        candidates.retain(|n| n.power_lb <= gub * (1.0 + prune_rel));
        glb = candidates.iter().map(|n| n.power_lb).fold(gub, f64::min);
    }
    let final_gap = (gub - glb).max(0.0);
    if opts.record_trace {
        trace.push(MuTraceRow {
            iteration: iterations + 1,
            glb_w: glb,
            gub_w: gub,
            phi_max: candidates.iter().map(|n| n.bounds.max_edge()).fold(0.0, f64::max),
        });
    }
    if cert.t_max.is_finite() && (iterations as f64) > cert.t_max {
        violations.push(format!("iterations {iterations} exceeded T_max {}", cert.t_max));
    }

    // recovery identity: rebuild W from D = W / sqrt(L_n) and compare norms
    let counts = incumbent_pattern.counts();
    let mut recovery_power = 0.0f64;
    for w in &incumbent_solution.per_user {
        for (n, c) in w.iter().enumerate() {
            if counts[n] > 0 {
                let d = c / (counts[n] as f64).sqrt();
                recovery_power += counts[n] as f64 * d.norm_sqr();
            }
        }
    }

    Ok(MuOutcome {
        power_w: gub,
        gap_w: final_gap,
        iterations,
        nodes_created,
        epsilon_w: epsilon,
        power_budget_w: p0,
        certificate: cert,
        certificate_violations: violations,
        trace,
        recovery_power_w: recovery_power,
        pattern: incumbent_pattern,
        solution: incumbent_solution,
    })
}

/// Exhaustive multi-user oracle: minimum fixed-activation power over every
/// pattern keeping all waveguides non-empty. Limited to `M <= 14`.
pub fn exhaustive_multi_user(
    channels: &ChannelSet,
    sinr_min: f64,
    solver: &SolverOptions,
) -> Result<(ActivationPattern, f64), BnbError> {
    let m = channels.num_antennas();
    if m > 14 {
        return Err(BnbError::Infeasible(format!(
            "exhaustive enumeration capped at M <= 14, got {m}"
        )));
    }
    let l_count = channels.antennas_per_waveguide;
    let n_count = channels.num_waveguides;
    let per_wg = 1u64 << l_count;
    let mut best: Option<(ActivationPattern, f64)> = None;
    let mut stack = vec![1u64; n_count];
    loop {
        let mut pattern = ActivationPattern::empty(l_count, n_count);
        for (n, &bits) in stack.iter().enumerate() {
            for l in 0..l_count {
                if bits >> l & 1 == 1 {
                    pattern.set(l, n, true);
                }
            }
        }
        let power = match solve_fixed_activation(&pattern, channels, sinr_min, solver) {
            Ok(sol) => sol.total_power_w,
            Err(SocpError::Infeasible) => f64::INFINITY,
            Err(e) => return Err(e.into()),
        };
        if best.as_ref().map_or(true, |(_, bp)| power < *bp) {
            best = Some((pattern, power));
        }
        // odometer over non-empty per-waveguide masks
        let mut i = n_count;
        let mut done = true;
        while i > 0 {
            i -= 1;
            if stack[i] + 1 < per_wg {
                stack[i] += 1;
                for s in stack.iter_mut().skip(i + 1) {
                    *s = 1;
                }
                done = false;
                break;
            }
        }
        if done {
            break;
        }
    }
    let (pattern, power) = best.expect("at least one pattern enumerated");
    if power.is_infinite() {
        return Err(BnbError::Infeasible("every pattern is SINR-infeasible".into()));
    }
    Ok((pattern, power))
}
