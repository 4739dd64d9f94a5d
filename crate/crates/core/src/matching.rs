//! Low-complexity activation design as a welfare-driven many-to-many matching
//! game between waveguides and antenna index slots.
//!
//! A matched pair `(l, n)` activates antenna `l` on waveguide `n`. Agents
//! evaluate a matching through the power-minimal transmit beamforming for its
//! activation pattern; the social welfare is the negative total transmit
//! power. Swap operations (add / replace / exchange) are accepted whenever
//! they strictly improve welfare, which rules out cycles and terminates in a
//! pairwise-stable matching.
//!
//! Beamforming is computed by the KKT closed form (uplink-power fixed point
//! plus a per-user power linear system); the conic solver is the fallback
//! when the fixed point fails to converge.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{
    equal_power_effective, sinr_of, ActivationPattern, BeamformingSolution, ChannelSet,
};
use crate::socp::{solve_fixed_activation, SocpError, SolverOptions};

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("scenario infeasible: {0}")]
    Infeasible(String),
    #[error("fixed-point beamformer failed: {0}")]
    FixedPoint(String),
    #[error(transparent)]
    Socp(#[from] SocpError),
}

/// KKT-optimal transmit beamforming for a fixed activation pattern.
#[derive(Debug, Clone)]
pub struct KktOutcome {
    pub weights: Vec<Vec<Complex64>>,
    pub per_user_power_w: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub per_user_sinr: Vec<f64>,
}

fn effective_columns(channels: &ChannelSet, pattern: &ActivationPattern) -> Vec<Vec<Complex64>> {
    // column form h~_k = conj(e_k): h~_k^H w_k = e_k . w_k
    equal_power_effective(channels, pattern)
        .into_iter()
        .map(|row| row.into_iter().map(|c| c.conj()).collect())
        .collect()
}

/// Closed-form power-minimal beamformer via the dual uplink fixed point.
///
/// Directions follow `w~_k ∝ (I + sum_i lambda_i / sigma^2 h~_i h~_i^H)^{-1} h~_k`
/// with multipliers solving `lambda_k (1 + 1/gamma) h~_k^H Sigma^{-1} h~_k = 1`,
/// iterated until successive relative change drops below 1e-10 (cap 500).
/// Downlink powers come from the SINR equality system; every user's SINR is
/// met with equality by construction.
pub fn kkt_beamformer(
    pattern: &ActivationPattern,
    channels: &ChannelSet,
    sinr_min: f64,
) -> Result<KktOutcome, MatchingError> {
    let n_count = channels.num_waveguides;
    let k_count = channels.num_users;
    let sigma2 = channels.noise_power_w;
    let columns = effective_columns(channels, pattern);
    for (k, h) in columns.iter().enumerate() {
        if h.iter().map(|c| c.norm_sqr()).sum::<f64>() == 0.0 {
            return Err(MatchingError::Infeasible(format!("user {k} has zero effective channel")));
        }
    }
    let hmat: Vec<DVector<Complex64>> =
        columns.iter().map(|h| DVector::from_column_slice(h)).collect();
    // Normalized formulation: with unit directions h_bar and nu_k =
    // lambda_k ||h~_k||^2 / sigma^2, the dual matrix becomes
    // A(nu) = I + sum nu_i h_bar_i h_bar_i^H whose condition number stays near
    // 1 + sum nu ~ K (1 + gamma) regardless of the absolute channel scale.
    let gains: Vec<f64> = hmat.iter().map(|h| h.norm_squared()).collect();
    let hbar: Vec<DVector<Complex64>> = hmat
        .iter()
        .zip(&gains)
        .map(|(h, &g)| h / Complex64::new(g.sqrt(), 0.0))
        .collect();
    let a_of = |nu: &[f64]| -> DMatrix<Complex64> {
        let mut a = DMatrix::<Complex64>::identity(n_count, n_count);
        for (k, h) in hbar.iter().enumerate() {
            if nu[k] != 0.0 {
                a += (h * h.adjoint()) * Complex64::new(nu[k], 0.0);
            }
        }
        a
    };
    let step = |nu: &[f64]| -> Result<Vec<f64>, MatchingError> {
        let inv = a_of(nu)
            .try_inverse()
            .ok_or_else(|| MatchingError::FixedPoint("singular dual matrix".into()))?;
        let mut next = vec![0.0f64; k_count];
        for k in 0..k_count {
            let quad = (hbar[k].adjoint() * &inv * &hbar[k])[(0, 0)].re;
            if !(quad > 0.0) {
                return Err(MatchingError::FixedPoint("non-positive quadratic form".into()));
            }
            next[k] = sinr_min / ((1.0 + sinr_min) * quad);
        }
        Ok(next)
    };
    // The plain update is a standard interference-function iteration: it
    // converges monotonically from zero but contracts only at rate
    // gamma/(1+gamma). Each round therefore runs a short plain sweep and then
    // completes the dominant geometric mode from the ratio of consecutive
    // difference vectors. Residuals map to fixed-point errors with
    // amplification up to gamma, hence the (1+gamma) factor in the test.
    // A diverging dual (nu exploding) certifies the SINR targets unreachable
    // for this activation, e.g. when two effective-channel columns coincide.
    let diverged = |nu: &[f64]| nu.iter().any(|&v| !(v < 1e12));
    let mut nu = step(&vec![0.0f64; k_count])?;
    let mut converged = false;
    for _ in 0..500 {
        let mut d1 = vec![0.0f64; k_count];
        let mut d2 = vec![0.0f64; k_count];
        for i in 0..6 {
            let next = step(&nu)?;
            if i == 4 {
                d1 = next.iter().zip(&nu).map(|(a, b)| a - b).collect();
            }
            if i == 5 {
                d2 = next.iter().zip(&nu).map(|(a, b)| a - b).collect();
            }
            nu = next;
        }
        if diverged(&nu) {
            return Err(MatchingError::Infeasible(
                "dual uplink power diverged: SINR targets unreachable for this activation".into(),
            ));
        }
        let n1: f64 = d1.iter().map(|x| x * x).sum::<f64>().sqrt();
        let n2: f64 = d2.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rho = if n1 > 0.0 { (n2 / n1).min(1.0 - 1e-7) } else { 0.0 };
        let factor = rho / (1.0 - rho);
        let extrapolated: Vec<f64> =
            nu.iter().zip(&d2).map(|(&v, &d)| (v + factor * d).max(0.0)).collect();
        if diverged(&extrapolated) {
            return Err(MatchingError::Infeasible(
                "dual uplink power diverged: SINR targets unreachable for this activation".into(),
            ));
        }
        let image = step(&extrapolated)?;
        let max_rel = extrapolated
            .iter()
            .zip(&image)
            .map(|(&v, &f)| (f - v).abs() / f.max(f64::MIN_POSITIVE))
            .fold(0.0f64, f64::max);
        nu = image;
        // A is positive definite with ||A^{-1}|| <= 1, so cond(A) <= 1 + sum nu;
        // residuals below cond * eps_machine are measurement noise and the
        // target adapts to that floor on nearly degenerate instances.
        let cond_bound = 1.0 + nu.iter().sum::<f64>();
        let target = (1e-10 / (1.0 + sinr_min)).max(1e-14 * cond_bound);
        if max_rel < target {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(MatchingError::FixedPoint("multiplier iteration hit the cap".into()));
    }
    let lambda: Vec<f64> = nu.iter().zip(&gains).map(|(&v, &g)| v * sigma2 / g).collect();
    let inv = a_of(&nu)
        .try_inverse()
        .ok_or_else(|| MatchingError::FixedPoint("singular dual matrix".into()))?;
    let directions: Vec<DVector<Complex64>> = hbar
        .iter()
        .map(|h| {
            let d = &inv * h;
            let norm = d.norm();
            d / Complex64::new(norm, 0.0)
        })
        .collect();
    // SINR-equality power system: M p = sigma^2 1
    let mut m = DMatrix::<f64>::zeros(k_count, k_count);
    for k in 0..k_count {
        for kk in 0..k_count {
            let gain = (hmat[k].adjoint() * &directions[kk])[(0, 0)].norm_sqr();
            m[(k, kk)] = if k == kk { gain / sinr_min } else { -gain };
        }
    }
    let rhs = DVector::from_element(k_count, sigma2);
    let powers = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| MatchingError::FixedPoint("singular power system".into()))?;
    if powers.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(MatchingError::FixedPoint("non-positive user power".into()));
    }
    let weights: Vec<Vec<Complex64>> = (0..k_count)
        .map(|k| {
            directions[k].iter().map(|c| c * Complex64::new(powers[k].sqrt(), 0.0)).collect()
        })
        .collect();
    let effective = equal_power_effective(channels, pattern);
    let per_user_sinr = sinr_of(&weights, &effective, sigma2);
    for &s in &per_user_sinr {
        if !((s / sinr_min - 1.0).abs() < 1e-6) {
            return Err(MatchingError::FixedPoint(format!("SINR off target: {s}")));
        }
    }
    Ok(KktOutcome {
        weights,
        per_user_power_w: powers.iter().copied().collect(),
        multipliers: lambda,
        per_user_sinr,
    })
}

/// KKT beamformer with conic-solver fallback; returns the weights and whether
/// the fallback fired. `Err` means the fixed-activation problem itself is
/// infeasible.
pub fn beamformer_with_fallback(
    pattern: &ActivationPattern,
    channels: &ChannelSet,
    sinr_min: f64,
    solver: &SolverOptions,
) -> Result<(BeamformingSolution, bool), MatchingError> {
    match kkt_beamformer(pattern, channels, sinr_min) {
        Ok(kkt) => {
            let effective = equal_power_effective(channels, pattern);
            Ok((
                BeamformingSolution::from_weights(kkt.weights, &effective, channels.noise_power_w),
                false,
            ))
        }
        Err(MatchingError::Infeasible(e)) if e.contains("zero effective channel") => {
            Err(MatchingError::Infeasible(e))
        }
        // divergence and numerical failures are re-checked by the conic
        // solver, which carries the authoritative infeasibility certificate
        Err(_) => match solve_fixed_activation(pattern, channels, sinr_min, solver) {
            Ok(sol) => Ok((sol, true)),
            Err(SocpError::Infeasible) => {
                Err(MatchingError::Infeasible("fixed-activation SOCP infeasible".into()))
            }
            Err(e) => Err(e.into()),
        },
    }
}

/// Matching state: the pair set with cached pattern, beamforming and welfare.
#[derive(Debug, Clone)]
pub struct MatchingState {
    pairs: BTreeSet<(usize, usize)>,
    pub pattern: ActivationPattern,
    pub weights: Vec<Vec<Complex64>>,
    pub power_w: f64,
    /// Social welfare `U = -||W||_F^2`.
    pub utility: f64,
}

impl MatchingState {
    fn from_pairs(
        pairs: BTreeSet<(usize, usize)>,
        channels: &ChannelSet,
        sinr_min: f64,
        solver: &SolverOptions,
    ) -> Result<Self, MatchingError> {
        let mut pattern =
            ActivationPattern::empty(channels.antennas_per_waveguide, channels.num_waveguides);
        for &(l, n) in &pairs {
            pattern.set(l, n, true);
        }
        let (solution, _) = beamformer_with_fallback(&pattern, channels, sinr_min, solver)?;
        let power = solution.total_power_w;
        Ok(Self { pairs, pattern, weights: solution.per_user, power_w: power, utility: -power })
    }

    pub fn pairs(&self) -> &BTreeSet<(usize, usize)> {
        &self.pairs
    }

    pub fn is_matched(&self, l: usize, n: usize) -> bool {
        self.pairs.contains(&(l, n))
    }

    /// Matched antennas per waveguide.
    pub fn waveguide_degree(&self, n: usize) -> usize {
        self.pairs.iter().filter(|&&(_, nn)| nn == n).count()
    }
}

/// Per-agent utilities `(U_n, U_l, U)`: waveguides carry their column power,
/// antenna slots the equally split per-antenna share.
pub fn utilities(state: &MatchingState) -> (Vec<f64>, Vec<f64>, f64) {
    let n_count = state.pattern.num_waveguides;
    let l_count = state.pattern.antennas_per_waveguide;
    let counts = state.pattern.counts();
    let mut u_n = vec![0.0f64; n_count];
    for w in &state.weights {
        for (n, c) in w.iter().enumerate() {
            u_n[n] -= c.norm_sqr();
        }
    }
    let mut u_l = vec![0.0f64; l_count];
    for l in 0..l_count {
        for n in 0..n_count {
            if state.pattern.is_active(l, n) {
                // |d_{n,k}|^2 = |w_{n,k}|^2 / L_n^s
                u_l[l] += u_n[n] / counts[n] as f64;
            }
        }
    }
    (u_n, u_l, -state.power_w)
}

/// One candidate swap operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapOp {
    /// Activate the unmatched pair `(l, n)`.
    Add { l: usize, n: usize },
    /// Replace `(l_out, n)` by the currently unmatched `(l_in, n)`.
    Replace { l_out: usize, l_in: usize, n: usize },
    /// Exchange matches `(l, n)` and `(l2, n2)` into `(l, n2)`, `(l2, n)`.
    Exchange { l: usize, n: usize, l2: usize, n2: usize },
}

/// Enumerate candidate swaps in deterministic order: adds over unmatched
/// pairs, then replaces (same waveguide, different slot), then exchanges over
/// distinct matched pairs, all ascending by index.
pub fn propose_swaps(state: &MatchingState) -> Vec<SwapOp> {
    let l_count = state.pattern.antennas_per_waveguide;
    let n_count = state.pattern.num_waveguides;
    let mut out = Vec::new();
    for l in 0..l_count {
        for n in 0..n_count {
            if !state.is_matched(l, n) {
                out.push(SwapOp::Add { l, n });
            }
        }
    }
    for &(l, n) in state.pairs() {
        for l_in in 0..l_count {
            if l_in != l && !state.is_matched(l_in, n) {
                out.push(SwapOp::Replace { l_out: l, l_in, n });
            }
        }
    }
    let matched: Vec<(usize, usize)> = state.pairs().iter().copied().collect();
    for (i, &(l, n)) in matched.iter().enumerate() {
        for &(l2, n2) in matched.iter().skip(i + 1) {
            if l2 == l || n2 == n {
                continue; // same slot or same waveguide exchanges are identities
            }
            if !state.is_matched(l, n2) && !state.is_matched(l2, n) {
                out.push(SwapOp::Exchange { l, n, l2, n2 });
            }
        }
    }
    out
}

fn swapped_pairs(state: &MatchingState, swap: SwapOp) -> BTreeSet<(usize, usize)> {
    let mut pairs = state.pairs().clone();
    match swap {
        SwapOp::Add { l, n } => {
            pairs.insert((l, n));
        }
        SwapOp::Replace { l_out, l_in, n } => {
            pairs.remove(&(l_out, n));
            pairs.insert((l_in, n));
        }
        SwapOp::Exchange { l, n, l2, n2 } => {
            pairs.remove(&(l, n));
            pairs.remove(&(l2, n2));
            pairs.insert((l, n2));
            pairs.insert((l2, n));
        }
    }
    pairs
}

/// Matching search options.
#[derive(Debug, Clone)]
pub struct MatchOptions {
    /// Accept swaps only when welfare improves by more than this margin,
    /// which prevents cycling on solver noise.
    pub acceptance_margin: f64,
    /// Outer-round cap; convergence is expected well below it.
    pub max_rounds: usize,
    /// Accept by individual utilities (vanilla swap matching) instead of
    /// total welfare.
    pub vanilla: bool,
    pub solver: SolverOptions,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            acceptance_margin: 1e-9,
            max_rounds: 50,
            vanilla: false,
            solver: SolverOptions::default(),
        }
    }
}

/// Evaluate one swap; returns the new state when accepted.
///
/// Welfare acceptance: `U(mu') > U(mu) + margin`. Vanilla acceptance instead
/// requires every involved agent's utility not to drop and at least one to
/// strictly improve. An infeasible post-swap beamforming problem rejects the
/// swap without error.
pub fn apply_if_welfare_improving(
    state: &MatchingState,
    swap: SwapOp,
    channels: &ChannelSet,
    sinr_min: f64,
    opts: &MatchOptions,
) -> Result<(Option<MatchingState>, bool), MatchingError> {
    let pairs = swapped_pairs(state, swap);
    // condition (ii): every waveguide keeps at least one activation
    for n in 0..channels.num_waveguides {
        if !pairs.iter().any(|&(_, nn)| nn == n) {
            return Ok((None, false));
        }
    }
    let candidate = match MatchingState::from_pairs(pairs, channels, sinr_min, &opts.solver) {
        Ok(s) => s,
        Err(MatchingError::Infeasible(_)) => return Ok((None, false)),
        Err(e) => return Err(e),
    };
    let accepted = if opts.vanilla {
        let (u_n_old, u_l_old, _) = utilities(state);
        let (u_n_new, u_l_new, _) = utilities(&candidate);
        let agents: Vec<(bool, usize)> = match swap {
            SwapOp::Add { l, n } => vec![(true, l), (false, n)],
            SwapOp::Replace { l_out, l_in, n } => {
                vec![(true, l_out), (true, l_in), (false, n)]
            }
            SwapOp::Exchange { l, n, l2, n2 } => {
                vec![(true, l), (true, l2), (false, n), (false, n2)]
            }
        };
        let mut all_ok = true;
        let mut any_strict = false;
        for (is_slot, idx) in agents {
            let (old, new) = if is_slot {
                (u_l_old[idx], u_l_new[idx])
            } else {
                (u_n_old[idx], u_n_new[idx])
            };
            if new < old - opts.acceptance_margin {
                all_ok = false;
            }
            if new > old + opts.acceptance_margin {
                any_strict = true;
            }
        }
        all_ok && any_strict
    } else {
        candidate.utility > state.utility + opts.acceptance_margin
    };
    Ok(if accepted { (Some(candidate), true) } else { (None, false) })
}

#[derive(Debug, Clone)]
pub struct MatchTraceRow {
    pub round: usize,
    pub swaps_evaluated: u64,
    pub swaps_accepted: u64,
    pub power_dbm: f64,
}

#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub state: MatchingState,
    pub power_w: f64,
    pub rounds: usize,
    pub swaps_accepted: u64,
    pub swaps_evaluated: u64,
    /// Power after every accepted swap, strictly decreasing.
    pub accepted_powers_w: Vec<f64>,
    pub trace: Vec<MatchTraceRow>,
    pub per_user_sinr: Vec<f64>,
}

/// Run the welfare-driven matching game to pairwise stability.
///
/// Initialization matches each waveguide with its strongest slot (largest
/// `|g~| max_k |h|`). Rounds scan adds, replaces, then exchanges in
/// deterministic order with first-improvement acceptance, repeating until a
/// full round accepts nothing.
pub fn welfare_matching(
    channels: &ChannelSet,
    sinr_min: f64,
    opts: &MatchOptions,
) -> Result<MatchOutcome, MatchingError> {
    let l_count = channels.antennas_per_waveguide;
    let n_count = channels.num_waveguides;
    let mut pairs = BTreeSet::new();
    for n in 0..n_count {
        let mut best = (0usize, f64::NEG_INFINITY);
        for l in 0..l_count {
            let gain = channels.inwg(l, n).norm()
                * (0..channels.num_users)
                    .map(|k| channels.response(l, n, k).norm())
                    .fold(f64::NEG_INFINITY, f64::max);
            if gain > best.1 {
                best = (l, gain);
            }
        }
        pairs.insert((best.0, n));
    }
    let mut state = MatchingState::from_pairs(pairs, channels, sinr_min, &opts.solver)
        .map_err(|e| match e {
            MatchingError::Infeasible(m) => {
                MatchingError::Infeasible(format!("initial matching infeasible: {m}"))
            }
            other => other,
        })?;

    let mut trace = Vec::new();
    let mut accepted_powers = Vec::new();
    let mut total_accepted = 0u64;
    let mut total_evaluated = 0u64;
    let mut rounds = 0usize;
    loop {
        rounds += 1;
        let mut round_accepted = 0u64;
        let mut round_evaluated = 0u64;
        // adds
        for l in 0..l_count {
            for n in 0..n_count {
                if state.is_matched(l, n) {
                    continue;
                }
                round_evaluated += 1;
                if let (Some(next), true) = apply_if_welfare_improving(
                    &state,
                    SwapOp::Add { l, n },
                    channels,
                    sinr_min,
                    opts,
                )? {
                    accepted_powers.push(next.power_w);
                    state = next;
                    round_accepted += 1;
                }
            }
        }
        // replaces
        for l in 0..l_count {
            for n in 0..n_count {
                if !state.is_matched(l, n) {
                    continue;
                }
                for l_in in 0..l_count {
                    if l_in == l || state.is_matched(l_in, n) {
                        continue;
                    }
                    round_evaluated += 1;
                    if let (Some(next), true) = apply_if_welfare_improving(
                        &state,
                        SwapOp::Replace { l_out: l, l_in, n },
                        channels,
                        sinr_min,
                        opts,
                    )? {
                        accepted_powers.push(next.power_w);
                        state = next;
                        round_accepted += 1;
                        break; // (l, n) is gone; move to the next matched pair
                    }
                }
            }
        }
        // exchanges
        let snapshot: Vec<(usize, usize)> = state.pairs().iter().copied().collect();
        for (i, &(l, n)) in snapshot.iter().enumerate() {
            if !state.is_matched(l, n) {
                continue;
            }
            for &(l2, n2) in snapshot.iter().skip(i + 1) {
                if l2 == l || n2 == n || !state.is_matched(l2, n2) || !state.is_matched(l, n) {
                    continue;
                }
                if state.is_matched(l, n2) || state.is_matched(l2, n) {
                    continue;
                }
                round_evaluated += 1;
                if let (Some(next), true) = apply_if_welfare_improving(
                    &state,
                    SwapOp::Exchange { l, n, l2, n2 },
                    channels,
                    sinr_min,
                    opts,
                )? {
                    accepted_powers.push(next.power_w);
                    state = next;
                    round_accepted += 1;
                }
            }
        }
        total_accepted += round_accepted;
        total_evaluated += round_evaluated;
        trace.push(MatchTraceRow {
            round: rounds,
            swaps_evaluated: round_evaluated,
            swaps_accepted: round_accepted,
            power_dbm: crate::watts_to_dbm(state.power_w),
        });
        if round_accepted == 0 || rounds >= opts.max_rounds {
            break;
        }
    }
    let effective = equal_power_effective(channels, &state.pattern);
    let per_user_sinr = sinr_of(&state.weights, &effective, channels.noise_power_w);
    Ok(MatchOutcome {
        power_w: state.power_w,
        rounds,
        swaps_accepted: total_accepted,
        swaps_evaluated: total_evaluated,
        accepted_powers_w: accepted_powers,
        trace,
        per_user_sinr,
        state,
    })
}

/// Exhaustively re-enumerate every feasible swap on a converged state; true
/// iff none improves welfare beyond the acceptance margin.
pub fn verify_pairwise_stable(
    state: &MatchingState,
    channels: &ChannelSet,
    sinr_min: f64,
    opts: &MatchOptions,
) -> Result<bool, MatchingError> {
    for swap in propose_swaps(state) {
        let (_, accepted) = apply_if_welfare_improving(state, swap, channels, sinr_min, opts)?;
        if accepted {
            return Ok(false);
        }
    }
    Ok(true)
}
