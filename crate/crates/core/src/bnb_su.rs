//! Globally optimal single-user design: MRT closed forms plus a
//! branch-and-bound search over binary activations with best-bound-first box
//! selection, maximum-length-first edge selection, and three-way pruning
//! (infeasible, fathomed, non-optimal).
//!
//! For a fixed per-waveguide activation count the minimum transmit power has
//! the closed form `P(A) = sigma^2 gamma / sum_n |h_n^H G~_n a_n|^2 / L_n^s`,
//! so bounding a box needs one LP relaxation solve and projection needs no
//! solver at all. Boxes whose pattern is fully forced by their bounds are
//! evaluated exactly and fathomed on the spot.

use num_complex::Complex64;
use thiserror::Error;

use crate::model::{ActivationPattern, ChannelSet};
use crate::socp::{build_gain_relaxation, solve_conic, SocpError, SolveStatus, SolverOptions};

#[derive(Debug, Error)]
pub enum BnbError {
    #[error("scenario infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Socp(#[from] SocpError),
}

/// Axis-aligned box over the branching variables.
#[derive(Debug, Clone)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxBounds {
    pub fn root(dim: usize) -> Self {
        Self { lo: vec![0.0; dim], hi: vec![1.0; dim] }
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    /// Longest edge, ties broken by lowest coordinate index.
    pub fn longest_edge(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for i in 0..self.lo.len() {
            let len = self.edge_length(i);
            if len > best.1 {
                best = (i, len);
            }
        }
        best
    }

    pub fn max_edge(&self) -> f64 {
        self.longest_edge().1
    }

    pub fn is_point(&self) -> bool {
        self.max_edge() <= 0.0
    }
}

/// Candidate node: a box with its cached power lower bound and relaxation.
#[derive(Debug, Clone)]
pub struct SuNode {
    pub bounds: BoxBounds,
    pub power_lb: f64,
    pub relaxed_a: Vec<f64>,
    pub id: u64,
}

/// How activation counts are enumerated in the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    /// Full grid `{1..L}^N` of per-waveguide counts.
    PerWaveguideSearch,
    /// Equal counts on every waveguide, `L^s in {1..L}`.
    EqualCounts,
}

#[derive(Debug, Clone)]
pub struct SuOptions {
    /// Termination gap (W); defaults to `1e-6 * sigma^2 * gamma`.
    pub epsilon: Option<f64>,
    pub mode: CountMode,
    /// Share the incumbent across the count loop (sound: the feasible set of
    /// the full problem is the union over counts). Off reproduces the
    /// per-count reset of the reference procedure.
    pub share_gub: bool,
    pub solver: SolverOptions,
    pub record_trace: bool,
}

impl Default for SuOptions {
    fn default() -> Self {
        Self {
            epsilon: None,
            mode: CountMode::PerWaveguideSearch,
            share_gub: true,
            solver: SolverOptions::default(),
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuTraceRow {
    pub counts: Vec<usize>,
    pub iteration: u64,
    pub glb_w: f64,
    pub gub_w: f64,
}

#[derive(Debug, Clone)]
pub struct SuOutcome {
    pub counts: Vec<usize>,
    pub pattern: ActivationPattern,
    /// Per-waveguide MRT weights at the optimal power.
    pub weights: Vec<Complex64>,
    pub power_w: f64,
    /// Branching iterations performed (all counts combined).
    pub iterations: u64,
    /// Boxes created (all counts combined).
    pub nodes_created: u64,
    pub final_gap_w: f64,
    pub trace: Vec<SuTraceRow>,
}

/// Maximum-ratio transmission against the equal-power effective channel:
/// `w = sqrt(P) (h^H G A)^H / ||h^H G A||`, so `||w||^2 = P` exactly.
pub fn mrt_beamformer(
    pattern: &ActivationPattern,
    coeffs: &[Complex64],
    power_w: f64,
) -> Result<Vec<Complex64>, BnbError> {
    let r = effective_row(pattern, coeffs);
    let norm = r.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(BnbError::Infeasible("all-zero effective channel".into()));
    }
    Ok(r.iter().map(|c| power_w.sqrt() * c.conj() / norm).collect())
}

/// Per-waveguide effective scalars `sum_l a beta g~ h^H` under equal power.
fn effective_row(pattern: &ActivationPattern, coeffs: &[Complex64]) -> Vec<Complex64> {
    let l_count = pattern.antennas_per_waveguide;
    let counts = pattern.counts();
    (0..pattern.num_waveguides)
        .map(|n| {
            if counts[n] == 0 {
                return Complex64::new(0.0, 0.0);
            }
            let sum: Complex64 = (0..l_count)
                .filter(|&l| pattern.is_active(l, n))
                .map(|l| coeffs[n * l_count + l])
                .sum();
            sum / (counts[n] as f64).sqrt()
        })
        .collect()
}

/// Closed-form minimum power for a fixed pattern:
/// `P = sigma^2 gamma / sum_n |sum_l a c|^2 / L_n^s` (infinite when the
/// effective channel vanishes).
pub fn closed_form_power(
    pattern: &ActivationPattern,
    coeffs: &[Complex64],
    sinr_min: f64,
    noise_power: f64,
) -> f64 {
    let denom: f64 = effective_row(pattern, coeffs).iter().map(|c| c.norm_sqr()).sum();
    if denom == 0.0 {
        return f64::INFINITY;
    }
    noise_power * sinr_min / denom
}

/// Round a relaxed activation into a feasible pattern: per waveguide, keep
/// box-fixed ones, then the largest relaxed entries among the free
/// coordinates until the cardinality is met (ties to the lowest index).
/// Returns `None` when the box fixes more ones than the cardinality allows or
/// leaves too few coordinates available.
pub fn project_activation(
    relaxed: &[f64],
    bounds: &BoxBounds,
    counts: &[usize],
    antennas_per_waveguide: usize,
) -> Option<ActivationPattern> {
    let l_count = antennas_per_waveguide;
    let n_count = counts.len();
    let mut pattern = ActivationPattern::empty(l_count, n_count);
    for n in 0..n_count {
        let mut fixed = 0usize;
        let mut free: Vec<usize> = Vec::new();
        for l in 0..l_count {
            let idx = n * l_count + l;
            if bounds.lo[idx] > 0.5 {
                pattern.set(l, n, true);
                fixed += 1;
            } else if bounds.hi[idx] > 0.5 {
                free.push(l);
            }
        }
        if fixed > counts[n] || fixed + free.len() < counts[n] {
            return None;
        }
        free.sort_by(|&a, &b| {
            relaxed[n * l_count + b]
                .partial_cmp(&relaxed[n * l_count + a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &l in free.iter().take(counts[n] - fixed) {
            pattern.set(l, n, true);
        }
    }
    Some(pattern)
}

/// Pattern forced by the box and cardinalities, if fully determined: on each
/// waveguide either all free coordinates must be zero (count already met by
/// fixed ones) or all must be one (count equals the available coordinates).
fn forced_pattern(
    bounds: &BoxBounds,
    counts: &[usize],
    antennas_per_waveguide: usize,
) -> Option<ActivationPattern> {
    let l_count = antennas_per_waveguide;
    let n_count = counts.len();
    let mut pattern = ActivationPattern::empty(l_count, n_count);
    for n in 0..n_count {
        let mut fixed = 0usize;
        let mut available = 0usize;
        for l in 0..l_count {
            let idx = n * l_count + l;
            if bounds.lo[idx] > 0.5 {
                fixed += 1;
            }
            if bounds.hi[idx] > 0.5 {
                available += 1;
            }
        }
        if counts[n] == fixed {
            for l in 0..l_count {
                pattern.set(l, n, bounds.lo[n * l_count + l] > 0.5);
            }
        } else if counts[n] == available {
            for l in 0..l_count {
                pattern.set(l, n, bounds.hi[n * l_count + l] > 0.5);
            }
        } else {
            return None;
        }
    }
    Some(pattern)
}

/// Best-bound-first box selection with creation-order tie-breaking: returns
/// the index of the candidate to branch.
pub fn select_box(nodes: &[SuNode]) -> Option<usize> {
    nodes
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.power_lb
                .partial_cmp(&b.power_lb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.id.cmp(&b.id))
        })
        .map(|(i, _)| i)
}

/// Split a box at its longest edge into the children fixing that coordinate
/// to 0 and to 1.
pub fn branch(bounds: &BoxBounds) -> (BoxBounds, BoxBounds, usize) {
    let (edge, _) = bounds.longest_edge();
    let mut minus = bounds.clone();
    minus.hi[edge] = 0.0;
    let mut plus = bounds.clone();
    plus.lo[edge] = 1.0;
    (minus, plus, edge)
}

struct Context<'a> {
    coeffs: &'a [Complex64],
    l_count: usize,
    n_count: usize,
    sinr_min: f64,
    noise_power: f64,
    solver: SolverOptions,
}

enum BoundResult {
    Pruned,
    Exact { pattern: ActivationPattern, power: f64 },
    Open { power_lb: f64, relaxed_a: Vec<f64> },
}

impl Context<'_> {
    fn bound_box(&self, bounds: &BoxBounds, counts: &[usize], parent_lb: f64) -> Result<BoundResult, BnbError> {
        if let Some(pattern) = forced_pattern(bounds, counts, self.l_count) {
            let power = closed_form_power(&pattern, self.coeffs, self.sinr_min, self.noise_power);
            return Ok(BoundResult::Exact { pattern, power });
        }
        let gain_relax = match build_gain_relaxation(
            &bounds.lo,
            &bounds.hi,
            counts,
            self.coeffs,
            self.l_count,
            self.noise_power,
            self.sinr_min,
        ) {
            Ok(p) => p,
            Err(SocpError::InfeasibleCardinality { .. }) => return Ok(BoundResult::Pruned),
            Err(e) => return Err(e.into()),
        };
        let report = solve_conic(&gain_relax.prog, &self.solver)?;
        match report.status {
            SolveStatus::Infeasible => Ok(BoundResult::Pruned),
            SolveStatus::NumericalFailure => {
                // conservative: keep the parent bound, branch from the box center
                let mid: Vec<f64> =
                    bounds.lo.iter().zip(&bounds.hi).map(|(a, b)| 0.5 * (a + b)).collect();
                Ok(BoundResult::Open { power_lb: parent_lb, relaxed_a: mid })
            }
            SolveStatus::Optimal => {
                let value = gain_relax.value(&report);
                let lb = if value > 0.0 { 1.0 / value } else { f64::INFINITY };
                Ok(BoundResult::Open {
                    power_lb: lb.max(parent_lb),
                    relaxed_a: gain_relax.relaxed_activation(&report).to_vec(),
                })
            }
        }
    }

    /// Triangle-inequality cap on the combo's achievable relaxation value;
    /// the returned power floor lets hopeless count combinations be skipped
    /// without an LP solve.
    fn combo_power_floor(&self, counts: &[usize]) -> f64 {
        let mut value = 0.0;
        for (n, &count) in counts.iter().enumerate() {
            let mut mags: Vec<f64> = (0..self.l_count)
                .map(|l| self.coeffs[n * self.l_count + l].norm())
                .collect();
            mags.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
            let top: f64 = mags.iter().take(count).sum();
            value += top * top / (count as f64 * self.noise_power * self.sinr_min);
        }
        if value > 0.0 {
            1.0 / value
        } else {
            f64::INFINITY
        }
    }
}

fn count_combinations(mode: CountMode, l_count: usize, n_count: usize) -> Vec<Vec<usize>> {
    match mode {
        CountMode::EqualCounts => (1..=l_count).rev().map(|c| vec![c; n_count]).collect(),
        CountMode::PerWaveguideSearch => {
            let mut out = Vec::new();
            let mut current = vec![l_count; n_count];
            loop {
                out.push(current.clone());
                // descending odometer over {1..L}^N
                let mut i = n_count;
                loop {
                    if i == 0 {
                        return out;
                    }
                    i -= 1;
                    if current[i] > 1 {
                        current[i] -= 1;
                        for c in current.iter_mut().skip(i + 1) {
                            *c = l_count;
                        }
                        break;
                    }
                }
            }
        }
    }
}

/// Branch-and-bound over binary activations for a single user, looping the
/// per-waveguide activation counts per the selected [`CountMode`].
pub fn bnb_single_user(
    channels: &ChannelSet,
    user: usize,
    sinr_min: f64,
    opts: &SuOptions,
) -> Result<SuOutcome, BnbError> {
    let coeffs = channels.user_coeffs(user);
    if coeffs.iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(BnbError::Infeasible("all channel coefficients are zero".into()));
    }
    let ctx = Context {
        coeffs: &coeffs,
        l_count: channels.antennas_per_waveguide,
        n_count: channels.num_waveguides,
        sinr_min,
        noise_power: channels.noise_power_w,
        solver: opts.solver,
    };
    let epsilon = opts.epsilon.unwrap_or(1e-6 * ctx.noise_power * sinr_min);
    let prune_rel = 100.0 * opts.solver.tolerance;
    let m = ctx.l_count * ctx.n_count;

    let mut best: Option<(Vec<usize>, ActivationPattern, f64)> = None;
    let mut shared_gub = f64::INFINITY;
    let mut iterations = 0u64;
    let mut nodes_created = 0u64;
    let mut next_id = 0u64;
    let mut trace = Vec::new();
    let mut final_gap = 0.0f64;

    for counts in count_combinations(opts.mode, ctx.l_count, ctx.n_count) {
        let mut gub = if opts.share_gub { shared_gub } else { f64::INFINITY };
        let mut incumbent: Option<ActivationPattern> = None;
        if ctx.combo_power_floor(&counts) > gub * (1.0 + 1e-12) {
            continue;
        }

        let mut candidates: Vec<SuNode> = Vec::new();
        let root = BoxBounds::root(m);
        nodes_created += 1;
        match ctx.bound_box(&root, &counts, 0.0)? {
            BoundResult::Pruned => {}
            BoundResult::Exact { pattern, power } => {
                if power < gub {
                    gub = power;
                    incumbent = Some(pattern);
                }
            }
            BoundResult::Open { power_lb, relaxed_a } => {
                if let Some(p) = project_activation(&relaxed_a, &root, &counts, ctx.l_count) {
                    let ub = closed_form_power(&p, ctx.coeffs, sinr_min, ctx.noise_power);
                    if ub < gub {
                        gub = ub;
                        incumbent = Some(p);
                    }
                }
                if power_lb <= gub * (1.0 + prune_rel)
                    && (gub - power_lb > epsilon || !gub.is_finite())
                {
                    candidates.push(SuNode {
                        bounds: root,
                        power_lb,
                        relaxed_a,
                        id: next_id,
                    });
                    next_id += 1;
                }
            }
        }

        let mut glb = candidates.iter().map(|n| n.power_lb).fold(gub, f64::min);
        while !candidates.is_empty() && gub - glb > epsilon {
            iterations += 1;
            let pick = select_box(&candidates).expect("nonempty candidate list");
            let node = candidates.swap_remove(pick);
            let (minus, plus, _) = branch(&node.bounds);
            for child in [minus, plus] {
                nodes_created += 1;
                match ctx.bound_box(&child, &counts, node.power_lb)? {
                    BoundResult::Pruned => {}
                    BoundResult::Exact { pattern, power } => {
                        if power < gub {
                            gub = power;
                            incumbent = Some(pattern);
                        }
                    }
                    BoundResult::Open { power_lb, relaxed_a } => {
                        let mut f_ub = f64::INFINITY;
                        if let Some(p) =
                            project_activation(&relaxed_a, &child, &counts, ctx.l_count)
                        {
                            f_ub = closed_form_power(&p, ctx.coeffs, sinr_min, ctx.noise_power);
                            if f_ub < gub {
                                gub = f_ub;
                                incumbent = Some(p);
                            }
                        }
                        let fathomed = f_ub - power_lb <= epsilon;
                        let non_optimal = power_lb > gub * (1.0 + prune_rel);
                        if !fathomed && !non_optimal {
                            candidates.push(SuNode {
                                bounds: child,
                                power_lb,
                                relaxed_a,
                                id: next_id,
                            });
                            next_id += 1;
                        }
                    }
                }
            }
            candidates.retain(|n| n.power_lb <= gub * (1.0 + prune_rel));
            glb = candidates.iter().map(|n| n.power_lb).fold(gub, f64::min);
            if opts.record_trace {
                trace.push(SuTraceRow {
                    counts: counts.clone(),
                    iteration: iterations,
                    glb_w: glb,
                    gub_w: gub,
                });
            }
        }
        final_gap = (gub - glb).max(0.0);

        if let Some(pattern) = incumbent {
            let improved = match &best {
                Some((_, _, p)) => gub < *p,
                None => true,
            };
            if improved {
                best = Some((counts.clone(), pattern, gub));
            }
        }
        shared_gub = shared_gub.min(gub);
    }

    let (counts, pattern, power) =
        best.ok_or_else(|| BnbError::Infeasible("no feasible activation found".into()))?;
    let weights = mrt_beamformer(&pattern, &coeffs, power)?;
    Ok(SuOutcome {
        counts,
        pattern,
        weights,
        power_w: power,
        iterations,
        nodes_created,
        final_gap_w: final_gap,
        trace,
    })
}

/// Exhaustive single-user oracle: minimum closed-form power over every
/// pattern that keeps each waveguide non-empty.
pub fn exhaustive_single_user(
    channels: &ChannelSet,
    user: usize,
    sinr_min: f64,
) -> Option<(ActivationPattern, f64)> {
    let coeffs = channels.user_coeffs(user);
    let l_count = channels.antennas_per_waveguide;
    let n_count = channels.num_waveguides;
    let per_wg: u64 = 1 << l_count;
    let mut best: Option<(ActivationPattern, f64)> = None;
    let mut stack = vec![0u64; n_count];
    fn rec(
        n: usize,
        stack: &mut Vec<u64>,
        per_wg: u64,
        l_count: usize,
        n_count: usize,
        coeffs: &[Complex64],
        sinr_min: f64,
        noise: f64,
        best: &mut Option<(ActivationPattern, f64)>,
    ) {
        if n == n_count {
            let mut pattern = ActivationPattern::empty(l_count, n_count);
            for (wg, &bits) in stack.iter().enumerate() {
                for l in 0..l_count {
                    if bits >> l & 1 == 1 {
                        pattern.set(l, wg, true);
                    }
                }
            }
            let p = closed_form_power(&pattern, coeffs, sinr_min, noise);
            if best.as_ref().map_or(true, |(_, bp)| p < *bp) {
                *best = Some((pattern, p));
            }
            return;
        }
        for bits in 1..per_wg {
            stack[n] = bits;
            rec(n + 1, stack, per_wg, l_count, n_count, coeffs, sinr_min, noise, best);
        }
    }
    rec(
        0,
        &mut stack,
        per_wg,
        l_count,
        n_count,
        &coeffs,
        sinr_min,
        channels.noise_power_w,
        &mut best,
    );
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn su_scenario(l: usize, n: usize, user: (f64, f64)) -> Scenario {
        Scenario {
            num_waveguides: n,
            num_users: 1,
            antennas_per_waveguide: l,
            span_x: 10.0,
            span_y: 10.0,
            height: 5.0,
            carrier_freq_hz: 15.0e9,
            effective_index: 1.4,
            noise_power_w: 1e-11,
            sinr_min: 100.0,
            user_positions: vec![user],
            waveguide_layout: Scenario::default_layout(n, 10.0, 10.0).unwrap(),
            power_budget_w: None,
        }
    }

    #[test]
    fn mrt_norm_and_dominance() {
        let sc = su_scenario(4, 2, (3.0, 6.0));
        let ch = ChannelSet::from_scenario(&sc).unwrap();
        let coeffs = ch.user_coeffs(0);
        let pattern = ActivationPattern::all_active(4, 2);
        let p = 2.5e-5;
        let w = mrt_beamformer(&pattern, &coeffs, p).unwrap();
        let norm2: f64 = w.iter().map(|c| c.norm_sqr()).sum();
        assert!((norm2 - p).abs() / p < 1e-12);
        let r = effective_row(&pattern, &coeffs);
        let h_norm2: f64 = r.iter().map(|c| c.norm_sqr()).sum();
        let received: Complex64 = r.iter().zip(&w).map(|(h, w)| h * w).sum();
        assert!((received.norm_sqr() - p * h_norm2).abs() / (p * h_norm2) < 1e-12);
        // dominance over random unit directions
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let mut v: Vec<Complex64> = (0..2)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let vn: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            for c in v.iter_mut() {
                *c = *c / vn * p.sqrt();
            }
            let got: Complex64 = r.iter().zip(&v).map(|(h, w)| h * w).sum();
            assert!(got.norm_sqr() <= received.norm_sqr() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn closed_form_matches_socp() {
        let sc = su_scenario(3, 2, (4.0, 7.0));
        let ch = ChannelSet::from_scenario(&sc).unwrap();
        let coeffs = ch.user_coeffs(0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let mut pattern = ActivationPattern::empty(3, 2);
            for n in 0..2 {
                let mut any = false;
                for l in 0..3 {
                    if rng.gen_bool(0.6) {
                        pattern.set(l, n, true);
                        any = true;
                    }
                }
                if !any {
                    pattern.set(rng.gen_range(0..3), n, true);
                }
            }
            let cf = closed_form_power(&pattern, &coeffs, sc.sinr_min, sc.noise_power_w);
            let socp = crate::socp::solve_fixed_activation(
                &pattern,
                &ch,
                sc.sinr_min,
                &SolverOptions::default(),
            )
            .unwrap();
            assert!(
                (cf - socp.total_power_w).abs() / cf < 1e-6,
                "closed form {cf} vs socp {}",
                socp.total_power_w
            );
        }
    }

    #[test]
    fn coherent_second_antenna_halves_power() {
        // Synthetic coefficients: two identical entries на one waveguide.
        let c0 = Complex64::new(3e-3, -1e-3);
        let coeffs = vec![c0, c0];
        let single = ActivationPattern::from_flags(vec![true, false], 2, 1);
        let both = ActivationPattern::all_active(2, 1);
        let p1 = closed_form_power(&single, &coeffs, 100.0, 1e-11);
        let p2 = closed_form_power(&both, &coeffs, 100.0, 1e-11);
        assert!((p1 / p2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn branch_children_partition_binary_points() {
        let bounds = BoxBounds::root(3);
        let (minus, plus, edge) = branch(&bounds);
        assert_eq!(edge, 0); // tie broken to the lowest index
        assert_eq!(minus.hi[0], 0.0);
        assert_eq!(plus.lo[0], 1.0);
        // every binary point of the parent lands in exactly one child
        for bits in 0..8u32 {
            let point: Vec<f64> = (0..3).map(|i| f64::from(bits >> i & 1)).collect();
            let in_minus = point[0] <= minus.hi[0];
            let in_plus = point[0] >= plus.lo[0];
            assert!(in_minus ^ in_plus);
        }
    }

    #[test]
    fn single_free_coordinate_gives_point_children() {
        let mut bounds = BoxBounds::root(2);
        bounds.lo[1] = 1.0; // coordinate 1 fixed to one
        let (minus, plus, edge) = branch(&bounds);
        assert_eq!(edge, 0);
        assert!(minus.is_point());
        assert!(plus.is_point());
    }

    #[test]
    fn projection_rules() {
        let bounds = BoxBounds::root(3);
        // already binary -> identity
        let p = project_activation(&[1.0, 0.0, 1.0], &bounds, &[2], 3).unwrap();
        assert_eq!(p.flags(), &[true, false, true]);
        // top-2 rule
        let p = project_activation(&[0.9, 0.6, 0.1], &bounds, &[2], 3).unwrap();
        assert_eq!(p.flags(), &[true, true, false]);
        // box fixing more ones than the cardinality -> infeasible
        let mut fixed = BoxBounds::root(3);
        fixed.lo[0] = 1.0;
        fixed.lo[1] = 1.0;
        assert!(project_activation(&[1.0, 1.0, 0.0], &fixed, &[1], 3).is_none());
    }

    #[test]
    fn l_equals_one_trivial() {
        let sc = su_scenario(1, 2, (5.0, 5.0));
        let ch = ChannelSet::from_scenario(&sc).unwrap();
        let out = bnb_single_user(&ch, 0, sc.sinr_min, &SuOptions::default()).unwrap();
        assert_eq!(out.pattern.total_active(), 2);
        let expect = closed_form_power(
            &ActivationPattern::all_active(1, 2),
            &ch.user_coeffs(0),
            sc.sinr_min,
            sc.noise_power_w,
        );
        assert!((out.power_w - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn matches_exhaustive_oracle_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..4 {
            let user = (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
            let sc = su_scenario(3, 2, user);
            let ch = ChannelSet::from_scenario(&sc).unwrap();
            let (_, oracle) = exhaustive_single_user(&ch, 0, sc.sinr_min).unwrap();
            let out = bnb_single_user(&ch, 0, sc.sinr_min, &SuOptions::default()).unwrap();
            let eps = 1e-6 * sc.noise_power_w * sc.sinr_min;
            assert!(
                out.power_w <= oracle + eps,
                "bnb {} vs oracle {oracle}",
                out.power_w
            );
            assert!(out.power_w >= oracle * (1.0 - 1e-9));
        }
    }

    #[test]
    fn equal_counts_never_beats_full_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let user = (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
            let sc = su_scenario(4, 2, user);
            let ch = ChannelSet::from_scenario(&sc).unwrap();
            let full = bnb_single_user(&ch, 0, sc.sinr_min, &SuOptions::default()).unwrap();
            let equal = bnb_single_user(
                &ch,
                0,
                sc.sinr_min,
                &SuOptions { mode: CountMode::EqualCounts, ..SuOptions::default() },
            )
            .unwrap();
            assert!(equal.power_w >= full.power_w * (1.0 - 1e-9));
        }
    }

    #[test]
    fn projected_pattern_never_beats_box_bound() {
        // Prop 2(iii)-style check: the projection upper bound dominates the
        // box lower bound on random boxes.
        let sc = su_scenario(4, 1, (2.0, 8.0));
        let ch = ChannelSet::from_scenario(&sc).unwrap();
        let coeffs = ch.user_coeffs(0);
        let ctx = Context {
            coeffs: &coeffs,
            l_count: 4,
            n_count: 1,
            sinr_min: sc.sinr_min,
            noise_power: sc.noise_power_w,
            solver: SolverOptions::default(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let mut bounds = BoxBounds::root(4);
            for i in 0..4 {
                match rng.gen_range(0..3) {
                    0 => bounds.hi[i] = 0.0,
                    1 => bounds.lo[i] = 1.0,
                    _ => {}
                }
            }
            let counts = [rng.gen_range(1..=4usize)];
            match ctx.bound_box(&bounds, &counts, 0.0) {
                Ok(BoundResult::Open { power_lb, relaxed_a }) => {
                    if let Some(p) = project_activation(&relaxed_a, &bounds, &counts, 4) {
                        let ub = closed_form_power(&p, &coeffs, sc.sinr_min, sc.noise_power_w);
                        assert!(ub >= power_lb * (1.0 - 1e-7), "ub {ub} lb {power_lb}");
                    }
                }
                Ok(_) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
}
