//! Convex subproblem layer: a conic power-minimization contract, McCormick
//! envelope construction, and the relaxed programs used as branch-and-bound
//! bounding functions.
//!
//! Programs are assembled in a small structural form (linear rows plus
//! second-order-cone blocks) and handed to the Clarabel interior-point solver.
//! Beamforming-scale variables are expressed internally in units of the noise
//! standard deviation, which keeps all solver data within a few orders of
//! magnitude of one even though physical powers sit near 1e-11 W.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{
    equal_power_effective, ActivationPattern, BeamformingSolution, ChannelSet,
};

#[derive(Debug, Error)]
pub enum SocpError {
    #[error("inverted bounds: [{0}, {1}]")]
    InvertedBounds(f64, f64),
    #[error("cardinality {count} on waveguide {waveguide} incompatible with box (fixed ones {fixed_ones}, available {available})")]
    InfeasibleCardinality { waveguide: usize, count: usize, fixed_ones: usize, available: usize },
    #[error("program infeasible")]
    Infeasible,
    #[error("solver failed: {0}")]
    NumericalFailure(String),
    #[error("malformed program: {0}")]
    BadProgram(String),
}

/// `sum coeff_i x_i + constant`.
#[derive(Debug, Clone, Default)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

/// One second-order-cone block: `bound >= || vector ||`.
#[derive(Debug, Clone)]
pub struct SocCone {
    pub bound: AffineExpr,
    pub vector: Vec<AffineExpr>,
}

/// Conic program over a real variable vector with a diagonal-quadratic or
/// linear objective.
///
/// Objective: `min sum_i quadratic_diag[i] x_i^2 + linear_cost . x`.
/// Rows: `equalities[r] == 0`, `inequalities[r] <= 0`, plus SOC blocks.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub quadratic_diag: Vec<f64>,
    pub linear_cost: Vec<f64>,
    pub equalities: Vec<AffineExpr>,
    pub inequalities: Vec<AffineExpr>,
    pub cones: Vec<SocCone>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            quadratic_diag: vec![0.0; num_vars],
            linear_cost: vec![0.0; num_vars],
            equalities: Vec::new(),
            inequalities: Vec::new(),
            cones: Vec::new(),
        }
    }

    /// `lo <= x_i <= hi` as two inequality rows.
    pub fn bound_var(&mut self, i: usize, lo: f64, hi: f64) {
        self.inequalities.push(AffineExpr::new(vec![(i, -1.0)], lo));
        self.inequalities.push(AffineExpr::new(vec![(i, 1.0)], -hi));
    }

    /// Plain-text interchange dump for external verification.
    pub fn write_interchange<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "vars {}", self.num_vars)?;
        write!(out, "quadratic")?;
        for (i, q) in self.quadratic_diag.iter().enumerate() {
            if *q != 0.0 {
                write!(out, " {}:{:e}", i, q)?;
            }
        }
        writeln!(out)?;
        write!(out, "linear")?;
        for (i, c) in self.linear_cost.iter().enumerate() {
            if *c != 0.0 {
                write!(out, " {}:{:e}", i, c)?;
            }
        }
        writeln!(out)?;
        let dump = |out: &mut W, e: &AffineExpr| -> std::io::Result<()> {
            for &(i, c) in &e.terms {
                write!(out, " {}:{:e}", i, c)?;
            }
            writeln!(out, " const:{:e}", e.constant)
        };
        for e in &self.equalities {
            write!(out, "eq")?;
            dump(out, e)?;
        }
        for e in &self.inequalities {
            write!(out, "le")?;
            dump(out, e)?;
        }
        for c in &self.cones {
            write!(out, "soc bound")?;
            dump(out, &c.bound)?;
            for v in &c.vector {
                write!(out, "  soc elem")?;
                dump(out, v)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Outcome of a conic solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub solution: Vec<f64>,
    /// Tolerance the accepted solve ran at (widened if the retry fired).
    pub achieved_tol: f64,
    pub iterations: u32,
    /// Dual improving ray when primal infeasibility was certified.
    pub infeasibility_certificate: Option<Vec<f64>>,
}

/// Interior-point solve parameters.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 200 }
    }
}

struct Assembled {
    p: CscMatrix<f64>,
    q: Vec<f64>,
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

fn assemble(prog: &ConicProgram) -> Result<Assembled, SocpError> {
    let n = prog.num_vars;
    if prog.quadratic_diag.len() != n || prog.linear_cost.len() != n {
        return Err(SocpError::BadProgram("objective length mismatch".into()));
    }
    // columns of A as (row, value) triplets
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let push_expr = |cols: &mut Vec<Vec<(usize, f64)>>,
                         b: &mut Vec<f64>,
                         expr: &AffineExpr,
                         sign: f64| {
        let row = b.len();
        for &(i, c) in &expr.terms {
            cols[i].push((row, sign * c));
        }
        b.push(-sign * expr.constant);
    };
    for e in &prog.equalities {
        push_expr(&mut cols, &mut b, e, 1.0);
        match cones.last_mut() {
            Some(SupportedConeT::ZeroConeT(c)) => *c += 1,
            _ => cones.push(SupportedConeT::ZeroConeT(1)),
        }
    }
    for e in &prog.inequalities {
        push_expr(&mut cols, &mut b, e, 1.0);
        match cones.last_mut() {
            Some(SupportedConeT::NonnegativeConeT(c)) => *c += 1,
            _ => cones.push(SupportedConeT::NonnegativeConeT(1)),
        }
    }
    for cone in &prog.cones {
        // s0 = bound(x), s_i = vector_i(x): rows carry negated coefficients
        push_expr(&mut cols, &mut b, &cone.bound, -1.0);
        for v in &cone.vector {
            push_expr(&mut cols, &mut b, v, -1.0);
        }
        cones.push(SupportedConeT::SecondOrderConeT(1 + cone.vector.len()));
    }
    let rows_total = b.len();
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    for col in cols.iter_mut() {
        colptr.push(rowval.len());
        col.sort_by_key(|&(r, _)| r);
        // coalesce duplicate rows (e.g. diagonal bilinear terms)
        let mut it = col.iter().peekable();
        while let Some(&(r, v)) = it.next() {
            let mut acc = v;
            while let Some(&&(r2, v2)) = it.peek() {
                if r2 == r {
                    acc += v2;
                    it.next();
                } else {
                    break;
                }
            }
            rowval.push(r);
            nzval.push(acc);
        }
    }
    colptr.push(rowval.len());
    let a = CscMatrix::new(rows_total, n, colptr, rowval, nzval);
    let mut p_colptr = Vec::with_capacity(n + 1);
    let mut p_rows = Vec::new();
    let mut p_vals = Vec::new();
    for (i, &qd) in prog.quadratic_diag.iter().enumerate() {
        p_colptr.push(p_rows.len());
        if qd != 0.0 {
            p_rows.push(i);
            p_vals.push(2.0 * qd);
        }
    }
    p_colptr.push(p_rows.len());
    let p = CscMatrix::new(n, n, p_colptr, p_rows, p_vals);
    Ok(Assembled { p, q: prog.linear_cost.clone(), a, b, cones })
}

fn run_clarabel(asm: &Assembled, tol: f64, max_iter: u32) -> Result<(SolverStatus, f64, Vec<f64>, Vec<f64>, u32), SocpError> {
    // Infeasibility certificates are deliberately strict: near-parallel user
    // channels produce thin-but-nonempty feasible cones that default
    // tolerances misdiagnose as infeasible, and a false certificate would be
    // an unsound prune.
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(max_iter)
        .tol_gap_rel(tol)
        .tol_gap_abs(tol * 1e-8)
        .tol_feas(tol)
        .tol_infeas_abs(1e-13)
        .tol_infeas_rel(1e-13)
        .build()
        .map_err(|e| SocpError::BadProgram(format!("settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&asm.p, &asm.q, &asm.a, &asm.b, &asm.cones, settings)
        .map_err(|e| SocpError::BadProgram(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    Ok((sol.status, sol.obj_val, sol.x.clone(), sol.z.clone(), sol.iterations))
}

/// Solve a conic program to the requested tolerance.
///
/// A run that ends in a reduced-accuracy state is retried once at 10x looser
/// tolerance; if that still fails the report carries `NumericalFailure` and
/// callers must treat the box as undecided rather than pruning it.
pub fn solve_conic(prog: &ConicProgram, opts: &SolverOptions) -> Result<SolveReport, SocpError> {
    let asm = assemble(prog)?;
    let mut tol = opts.tolerance;
    for attempt in 0..2 {
        let (status, obj, x, z, iters) = run_clarabel(&asm, tol, opts.max_iterations)?;
        match status {
            SolverStatus::Solved => {
                return Ok(SolveReport {
                    status: SolveStatus::Optimal,
                    objective: obj,
                    solution: x,
                    achieved_tol: tol,
                    iterations: iters,
                    infeasibility_certificate: None,
                })
            }
            SolverStatus::PrimalInfeasible => {
                return Ok(SolveReport {
                    status: SolveStatus::Infeasible,
                    objective: f64::INFINITY,
                    solution: Vec::new(),
                    achieved_tol: tol,
                    iterations: iters,
                    infeasibility_certificate: Some(z),
                })
            }
            SolverStatus::AlmostSolved if attempt == 1 => {
                return Ok(SolveReport {
                    status: SolveStatus::Optimal,
                    objective: obj,
                    solution: x,
                    achieved_tol: tol * 10.0,
                    iterations: iters,
                    infeasibility_certificate: None,
                })
            }
            _ => {
                tol *= 10.0;
            }
        }
    }
    Ok(SolveReport {
        status: SolveStatus::NumericalFailure,
        objective: f64::NAN,
        solution: Vec::new(),
        achieved_tol: tol,
        iterations: 0,
        infeasibility_certificate: None,
    })
}

/// One face of a McCormick envelope: `z (>=|<=) x_coef x + y_coef y + offset`.
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeRow {
    pub x_coef: f64,
    pub y_coef: f64,
    pub offset: f64,
    pub is_lower: bool,
}

/// The four linear faces of the convex hull of `z = x y` over a bound box.
#[derive(Debug, Clone)]
pub struct EnvelopeRows {
    pub rows: [EnvelopeRow; 4],
    pub x_bounds: (f64, f64),
    pub y_bounds: (f64, f64),
}

impl EnvelopeRows {
    /// Feasible range of `z` at a fixed `(x, y)` inside the box.
    pub fn z_interval(&self, x: f64, y: f64) -> (f64, f64) {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for r in &self.rows {
            let v = r.x_coef * x + r.y_coef * y + r.offset;
            if r.is_lower {
                lo = lo.max(v);
            } else {
                hi = hi.min(v);
            }
        }
        (lo, hi)
    }

    pub fn contains(&self, x: f64, y: f64, z: f64, tol: f64) -> bool {
        let (lo, hi) = self.z_interval(x, y);
        z >= lo - tol && z <= hi + tol
    }
}

/// McCormick envelope of `z = x y` over `x in [xl, xu]`, `y in [yl, yu]`:
///
/// ```text
/// z >= xl y + yl x - xl yl        z <= xu y + yl x - xu yl
/// z >= xu y + yu x - xu yu        z <= xl y + yu x - xl yu
/// ```
pub fn mccormick(x_bounds: (f64, f64), y_bounds: (f64, f64)) -> Result<EnvelopeRows, SocpError> {
    let (xl, xu) = x_bounds;
    let (yl, yu) = y_bounds;
    if xl > xu {
        return Err(SocpError::InvertedBounds(xl, xu));
    }
    if yl > yu {
        return Err(SocpError::InvertedBounds(yl, yu));
    }
    Ok(EnvelopeRows {
        rows: [
            EnvelopeRow { x_coef: yl, y_coef: xl, offset: -xl * yl, is_lower: true },
            EnvelopeRow { x_coef: yu, y_coef: xu, offset: -xu * yu, is_lower: true },
            EnvelopeRow { x_coef: yl, y_coef: xu, offset: -xu * yl, is_lower: false },
            EnvelopeRow { x_coef: yu, y_coef: xl, offset: -xl * yu, is_lower: false },
        ],
        x_bounds,
        y_bounds,
    })
}

/// Append the four envelope rows linking program variables `z = x * y`.
fn add_bilinear_rows(
    prog: &mut ConicProgram,
    z: usize,
    x: usize,
    y: usize,
    x_bounds: (f64, f64),
    y_bounds: (f64, f64),
) -> Result<(), SocpError> {
    let env = mccormick(x_bounds, y_bounds)?;
    for r in env.rows {
        // lower: x_coef x + y_coef y + offset - z <= 0
        // upper: z - x_coef x - y_coef y - offset <= 0
        let sign = if r.is_lower { 1.0 } else { -1.0 };
        prog.inequalities.push(AffineExpr::new(
            vec![(x, sign * r.x_coef), (y, sign * r.y_coef), (z, -sign)],
            sign * r.offset,
        ));
    }
    Ok(())
}

/// Relaxation of the single-user activation program over one box.
///
/// Maximizes `sum_n (1 / (L_n^s sigma^2 gamma)) <R_n, Q_n>` with the envelope
/// rows linking `Q_n` to `a_n a_n^T`, per-waveguide cardinality rows, and box
/// bounds. The reported `value` is `1 / P` for the box, so the induced power
/// lower bound is `1 / value`.
pub struct GainRelaxation {
    pub prog: ConicProgram,
    num_antennas: usize,
}

impl GainRelaxation {
    pub fn relaxed_activation<'a>(&self, report: &'a SolveReport) -> &'a [f64] {
        &report.solution[..self.num_antennas]
    }

    /// Relaxation value `f_c` (units 1/W); the box power bound is `1/f_c`.
    pub fn value(&self, report: &SolveReport) -> f64 {
        -report.objective
    }
}

pub fn build_gain_relaxation(
    lo: &[f64],
    hi: &[f64],
    counts: &[usize],
    coeffs: &[Complex64],
    antennas_per_waveguide: usize,
    noise_power: f64,
    sinr_min: f64,
) -> Result<GainRelaxation, SocpError> {
    let l_count = antennas_per_waveguide;
    let n_count = counts.len();
    let m = l_count * n_count;
    if lo.len() != m || hi.len() != m || coeffs.len() != m {
        return Err(SocpError::BadProgram("box/coefficient sizes disagree".into()));
    }
    // feasibility precheck: fixed ones <= L_n^s <= available entries
    for n in 0..n_count {
        let fixed_ones =
            (0..l_count).filter(|&l| lo[n * l_count + l] > 0.5).count();
        let available =
            (0..l_count).filter(|&l| hi[n * l_count + l] > 0.5).count();
        if counts[n] < fixed_ones || counts[n] > available {
            return Err(SocpError::InfeasibleCardinality {
                waveguide: n,
                count: counts[n],
                fixed_ones,
                available,
            });
        }
    }
    // variables: a_0..a_{M-1}, then one q per waveguide-local (i <= j) pair
    let pairs_per_wg = l_count * (l_count + 1) / 2;
    let mut prog = ConicProgram::new(m + n_count * pairs_per_wg);
    let q_index = |n: usize, i: usize, j: usize| -> usize {
        debug_assert!(i <= j);
        m + n * pairs_per_wg + i * l_count - i * (i + 1) / 2 + j
    };
    for v in 0..m {
        prog.bound_var(v, lo[v], hi[v]);
    }
    for (n, &count) in counts.iter().enumerate() {
        let row: Vec<(usize, f64)> = (0..l_count).map(|l| (n * l_count + l, 1.0)).collect();
        prog.equalities.push(AffineExpr::new(row, -(count as f64)));
        for i in 0..l_count {
            for j in i..l_count {
                let (ai, aj) = (n * l_count + i, n * l_count + j);
                add_bilinear_rows(
                    &mut prog,
                    q_index(n, i, j),
                    ai,
                    aj,
                    (lo[ai], hi[ai]),
                    (lo[aj], hi[aj]),
                )?;
                let r = (coeffs[ai] * coeffs[aj].conj()).re;
                let weight = if i == j { 1.0 } else { 2.0 };
                // maximize -> negate into the minimization cost
                prog.linear_cost[q_index(n, i, j)] =
                    -weight * r / (count as f64 * noise_power * sinr_min);
            }
        }
    }
    Ok(GainRelaxation { prog, num_antennas: m })
}

/// Mixed box over `(a, Re D, Im D)` plus the relaxed multi-user program.
pub struct JointRelaxation {
    pub prog: ConicProgram,
    num_antennas: usize,
    num_waveguides: usize,
    num_users: usize,
    antennas_per_waveguide: usize,
    sigma: f64,
}

/// Relaxed solution in physical units.
#[derive(Debug, Clone)]
pub struct JointRelaxationSolution {
    pub activation: Vec<f64>,
    /// Normalized beamforming `d_{n,k}`, flat `n * K + k` (W^1/2).
    pub d: Vec<Complex64>,
    /// Slack matrix entries `z_{m,k}`, flat `m * K + k` (W^1/2).
    pub z: Vec<Complex64>,
    /// Relaxation value `||Z||_F^2` (W).
    pub objective_w: f64,
}

impl JointRelaxation {
    pub fn extract(&self, report: &SolveReport) -> JointRelaxationSolution {
        let (m, n, k) = (self.num_antennas, self.num_waveguides, self.num_users);
        let x = &report.solution;
        let u0 = m;
        let v0 = m + n * k;
        let zr0 = m + 2 * n * k;
        let zi0 = zr0 + m * k;
        JointRelaxationSolution {
            activation: x[..m].to_vec(),
            d: (0..n * k)
                .map(|i| Complex64::new(x[u0 + i], x[v0 + i]) * self.sigma)
                .collect(),
            z: (0..m * k)
                .map(|i| Complex64::new(x[zr0 + i], x[zi0 + i]) * self.sigma)
                .collect(),
            objective_w: report.objective * self.sigma * self.sigma,
        }
    }

    pub fn antennas_per_waveguide(&self) -> usize {
        self.antennas_per_waveguide
    }
}

/// Build the McCormick-relaxed multi-user program over one mixed box.
///
/// `lo`/`hi` cover `M` activation coordinates followed by `N*K` real and `N*K`
/// imaginary normalized-beamforming coordinates (physical units). SOC rows
/// enforce each user's SINR with the imaginary part pinned by a two-sided
/// 1e-9 slack, and envelope rows tie every `z_{m,k}` to `a_m d_{n(m),k}`.
pub fn build_joint_relaxation(
    lo: &[f64],
    hi: &[f64],
    channels: &ChannelSet,
    sinr_min: f64,
) -> Result<JointRelaxation, SocpError> {
    let m = channels.num_antennas();
    let n_count = channels.num_waveguides;
    let k_count = channels.num_users;
    let l_count = channels.antennas_per_waveguide;
    let b_dim = m + 2 * n_count * k_count;
    if lo.len() != b_dim || hi.len() != b_dim {
        return Err(SocpError::BadProgram(format!(
            "box must have {b_dim} coordinates, got {}",
            lo.len()
        )));
    }
    let sigma = channels.noise_power_w.sqrt();
    let num_vars = m + 2 * n_count * k_count + 2 * m * k_count;
    let mut prog = ConicProgram::new(num_vars);
    let u_at = |n: usize, k: usize| m + n * k_count + k;
    let v_at = |n: usize, k: usize| m + n_count * k_count + n * k_count + k;
    let zr_at = |mm: usize, k: usize| m + 2 * n_count * k_count + mm * k_count + k;
    let zi_at = |mm: usize, k: usize| m + 2 * n_count * k_count + m * k_count + mm * k_count + k;

    for a in 0..m {
        prog.bound_var(a, lo[a], hi[a]);
    }
    for n in 0..n_count {
        for k in 0..k_count {
            // beamforming coordinates are scaled into sigma units
            prog.bound_var(u_at(n, k), lo[m + n * k_count + k] / sigma, hi[m + n * k_count + k] / sigma);
            prog.bound_var(
                v_at(n, k),
                lo[m + n_count * k_count + n * k_count + k] / sigma,
                hi[m + n_count * k_count + n * k_count + k] / sigma,
            );
        }
    }
    for mm in 0..m {
        let n = mm / l_count;
        let a_bounds = (lo[mm], hi[mm]);
        for k in 0..k_count {
            let u_bounds =
                (lo[m + n * k_count + k] / sigma, hi[m + n * k_count + k] / sigma);
            let v_bounds = (
                lo[m + n_count * k_count + n * k_count + k] / sigma,
                hi[m + n_count * k_count + n * k_count + k] / sigma,
            );
            add_bilinear_rows(&mut prog, zr_at(mm, k), mm, u_at(n, k), a_bounds, u_bounds)?;
            add_bilinear_rows(&mut prog, zi_at(mm, k), mm, v_at(n, k), a_bounds, v_bounds)?;
            prog.quadratic_diag[zr_at(mm, k)] = 1.0;
            prog.quadratic_diag[zi_at(mm, k)] = 1.0;
        }
    }
    // e_k = h_k^H G~ z_k expanded over re/im parts
    let e_expr = |channel_user: usize, col_user: usize| -> (AffineExpr, AffineExpr) {
        let mut re = AffineExpr::default();
        let mut im = AffineExpr::default();
        for mm in 0..m {
            let c = channels.coeff(mm % l_count, mm / l_count, channel_user);
            re.terms.push((zr_at(mm, col_user), c.re));
            re.terms.push((zi_at(mm, col_user), -c.im));
            im.terms.push((zi_at(mm, col_user), c.re));
            im.terms.push((zr_at(mm, col_user), c.im));
        }
        (re, im)
    };
    let root_gamma = sinr_min.sqrt();
    for k in 0..k_count {
        let (re_own, im_own) = e_expr(k, k);
        let mut vector = Vec::new();
        for kk in 0..k_count {
            if kk == k {
                continue;
            }
            let (mut re_x, mut im_x) = e_expr(k, kk);
            for t in re_x.terms.iter_mut().chain(im_x.terms.iter_mut()) {
                t.1 *= root_gamma;
            }
            vector.push(re_x);
            vector.push(im_x);
        }
        vector.push(AffineExpr::new(Vec::new(), root_gamma));
        prog.cones.push(SocCone { bound: re_own, vector });
        // two-sided slack on the imaginary part
        let slack = 1e-9;
        let mut upper = im_own.clone();
        upper.constant -= slack;
        prog.inequalities.push(upper);
        let mut lower = im_own;
        for t in lower.terms.iter_mut() {
            t.1 = -t.1;
        }
        lower.constant = -slack;
        prog.inequalities.push(lower);
    }
    Ok(JointRelaxation {
        prog,
        num_antennas: m,
        num_waveguides: n_count,
        num_users: k_count,
        antennas_per_waveguide: l_count,
        sigma,
    })
}

/// Power-minimal transmit beamforming over explicit channel rows.
///
/// `rows[k]` holds user `k`'s coefficients over the weight columns (any
/// column count); the row multiplies the weight vector directly. Minimizes
/// total power under `SINR_k >= sinr_min` with the phase pinned real, and
/// returns the per-user weight columns. `Infeasible` fires when a user's row
/// vanishes or the solver certifies infeasibility.
pub fn power_min_socp(
    rows: &[Vec<Complex64>],
    noise_power: f64,
    sinr_min: f64,
    opts: &SolverOptions,
) -> Result<Vec<Vec<Complex64>>, SocpError> {
    let k_count = rows.len();
    let cols = rows.first().map_or(0, |r| r.len());
    if cols == 0 {
        return Err(SocpError::BadProgram("no weight columns".into()));
    }
    for row in rows {
        if row.len() != cols {
            return Err(SocpError::BadProgram("ragged channel rows".into()));
        }
        if row.iter().map(|h| h.norm_sqr()).sum::<f64>() == 0.0 {
            return Err(SocpError::Infeasible);
        }
    }
    // weights solved in noise-standard-deviation units
    let sigma = noise_power.sqrt();
    let mut prog = ConicProgram::new(2 * cols * k_count);
    let wr_at = |c: usize, k: usize| c * k_count + k;
    let wi_at = |c: usize, k: usize| cols * k_count + c * k_count + k;
    for i in 0..2 * cols * k_count {
        prog.quadratic_diag[i] = 1.0;
    }
    let e_expr = |chan_user: usize, col_user: usize| -> (AffineExpr, AffineExpr) {
        let mut re = AffineExpr::default();
        let mut im = AffineExpr::default();
        for c in 0..cols {
            let h = rows[chan_user][c];
            re.terms.push((wr_at(c, col_user), h.re));
            re.terms.push((wi_at(c, col_user), -h.im));
            im.terms.push((wi_at(c, col_user), h.re));
            im.terms.push((wr_at(c, col_user), h.im));
        }
        (re, im)
    };
    let root_gamma = sinr_min.sqrt();
    for k in 0..k_count {
        let (re_own, im_own) = e_expr(k, k);
        let mut vector = Vec::new();
        for kk in 0..k_count {
            if kk == k {
                continue;
            }
            let (mut re_x, mut im_x) = e_expr(k, kk);
            for t in re_x.terms.iter_mut().chain(im_x.terms.iter_mut()) {
                t.1 *= root_gamma;
            }
            vector.push(re_x);
            vector.push(im_x);
        }
        vector.push(AffineExpr::new(Vec::new(), root_gamma));
        prog.cones.push(SocCone { bound: re_own, vector });
        prog.equalities.push(im_own);
    }
    let report = solve_conic(&prog, opts)?;
    match report.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(SocpError::Infeasible),
        SolveStatus::NumericalFailure => {
            return Err(SocpError::NumericalFailure("power minimization solve".into()))
        }
    }
    Ok((0..k_count)
        .map(|k| {
            (0..cols)
                .map(|c| {
                    Complex64::new(report.solution[wr_at(c, k)], report.solution[wi_at(c, k)])
                        * sigma
                })
                .collect()
        })
        .collect())
}

/// Power-minimal transmit beamforming for a fixed activation pattern.
///
/// Builds the per-user SOC rows over the equal-power effective channels and
/// returns the recovered `N x K` solution (rows of inactive waveguides stay
/// zero). Returns `Infeasible` when a user's effective channel vanishes or
/// the solver certifies infeasibility.
pub fn solve_fixed_activation(
    pattern: &ActivationPattern,
    channels: &ChannelSet,
    sinr_min: f64,
    opts: &SolverOptions,
) -> Result<BeamformingSolution, SocpError> {
    let effective = equal_power_effective(channels, pattern);
    let n_count = channels.num_waveguides;
    let k_count = channels.num_users;
    let counts = pattern.counts();
    let active_wg: Vec<usize> = (0..n_count).filter(|&n| counts[n] > 0).collect();
    let rows: Vec<Vec<Complex64>> = (0..k_count)
        .map(|k| active_wg.iter().map(|&n| effective[k][n]).collect())
        .collect();
    let compact = power_min_socp(&rows, channels.noise_power_w, sinr_min, opts)?;
    let mut per_user = vec![vec![Complex64::new(0.0, 0.0); n_count]; k_count];
    for (ni, &n) in active_wg.iter().enumerate() {
        for (k, col) in per_user.iter_mut().enumerate() {
            col[n] = compact[k][ni];
        }
    }
    Ok(BeamformingSolution::from_weights(per_user, &effective, channels.noise_power_w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn one_dimensional_quadratic() {
        // min x^2 s.t. x >= 3
        let mut prog = ConicProgram::new(1);
        prog.quadratic_diag[0] = 1.0;
        prog.inequalities.push(AffineExpr::new(vec![(0, -1.0)], 3.0));
        let rep = solve_conic(&prog, &opts()).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!((rep.objective - 9.0).abs() < 1e-6);
        assert!((rep.solution[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn mrt_closed_form() {
        // min ||w||^2 s.t. Re{h^H w} >= c, Im{h^H w} = 0  ->  c^2/||h||^2
        let h = [Complex64::new(0.6, -0.3), Complex64::new(-0.2, 0.9)];
        let c = 2.5;
        let mut prog = ConicProgram::new(4); // wr0 wr1 wi0 wi1
        for i in 0..4 {
            prog.quadratic_diag[i] = 1.0;
        }
        // h^H w = sum conj(h_i) w_i
        let re = AffineExpr::new(
            vec![(0, h[0].re), (1, h[1].re), (2, h[0].im), (3, h[1].im)],
            0.0,
        );
        let im = AffineExpr::new(
            vec![(2, h[0].re), (3, h[1].re), (0, -h[0].im), (1, -h[1].im)],
            0.0,
        );
        let mut ge = re.clone();
        for t in ge.terms.iter_mut() {
            t.1 = -t.1;
        }
        ge.constant = c;
        prog.inequalities.push(ge);
        prog.equalities.push(im);
        let rep = solve_conic(&prog, &opts()).unwrap();
        let h_norm2: f64 = h.iter().map(|x| x.norm_sqr()).sum();
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!((rep.objective - c * c / h_norm2).abs() / rep.objective < 1e-7);
    }

    #[test]
    fn contradictory_bounds_infeasible() {
        let mut prog = ConicProgram::new(1);
        prog.quadratic_diag[0] = 1.0;
        prog.inequalities.push(AffineExpr::new(vec![(0, -1.0)], 1.0)); // x >= 1
        prog.inequalities.push(AffineExpr::new(vec![(0, 1.0)], 0.0)); // x <= 0
        let rep = solve_conic(&prog, &opts()).unwrap();
        assert_eq!(rep.status, SolveStatus::Infeasible);
        assert!(rep.infeasibility_certificate.is_some());
    }

    #[test]
    fn resolve_consistency() {
        let mut prog = ConicProgram::new(2);
        prog.quadratic_diag = vec![1.0, 1.0];
        prog.inequalities.push(AffineExpr::new(vec![(0, -1.0), (1, -2.0)], 1.5));
        let a = solve_conic(&prog, &opts()).unwrap();
        let b = solve_conic(&prog, &opts()).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-8 * a.objective.abs().max(1.0));
    }

    #[test]
    fn mccormick_point_box_forces_product() {
        let env = mccormick((0.7, 0.7), (-1.3, -1.3)).unwrap();
        let (lo, hi) = env.z_interval(0.7, -1.3);
        let z = 0.7 * -1.3;
        assert!((lo - z).abs() < 1e-12);
        assert!((hi - z).abs() < 1e-12);
    }

    #[test]
    fn mccormick_unit_box_midpoint_range() {
        let env = mccormick((0.0, 1.0), (0.0, 1.0)).unwrap();
        let (lo, hi) = env.z_interval(0.5, 0.5);
        assert!((lo - 0.0).abs() < 1e-12);
        assert!((hi - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mccormick_inverted_bounds_rejected() {
        assert!(matches!(mccormick((1.0, 0.0), (0.0, 1.0)), Err(SocpError::InvertedBounds(..))));
    }

    #[test]
    fn mccormick_monte_carlo_containment() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let xl = rng.gen_range(-3.0..3.0);
            let xu = xl + rng.gen_range(0.0..4.0);
            let yl = rng.gen_range(-3.0..3.0);
            let yu = yl + rng.gen_range(0.0..4.0);
            let env = mccormick((xl, xu), (yl, yu)).unwrap();
            let x = rng.gen_range(xl..=xu);
            let y = rng.gen_range(yl..=yu);
            assert!(env.contains(x, y, x * y, 1e-9));
        }
    }

    fn su_scenario() -> (ChannelSet, Scenario) {
        let sc = Scenario {
            num_waveguides: 1,
            num_users: 1,
            antennas_per_waveguide: 3,
            span_x: 9.0,
            span_y: 9.0,
            height: 5.0,
            carrier_freq_hz: 15.0e9,
            effective_index: 1.4,
            noise_power_w: 1e-11,
            sinr_min: 100.0,
            user_positions: vec![(3.3, 6.1)],
            waveguide_layout: Scenario::default_layout(1, 9.0, 9.0).unwrap(),
            power_budget_w: None,
        };
        (ChannelSet::from_scenario(&sc).unwrap(), sc)
    }

    fn eq19_power(bits: &[bool], coeffs: &[Complex64], sigma2: f64, gamma: f64) -> f64 {
        // independent closed-form oracle for one waveguide
        let ls = bits.iter().filter(|&&b| b).count();
        let s: Complex64 =
            bits.iter().zip(coeffs).filter(|(b, _)| **b).map(|(_, c)| *c).sum();
        sigma2 * gamma / (s.norm_sqr() / ls as f64)
    }

    #[test]
    fn gain_relax_point_box_equals_closed_form() {
        let (ch, sc) = su_scenario();
        let coeffs = ch.user_coeffs(0);
        let bits = [true, false, true];
        let point: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let gain_relax = build_gain_relaxation(&point, &point, &[2], &coeffs, 3, sc.noise_power_w, sc.sinr_min)
            .unwrap();
        let rep = solve_conic(&gain_relax.prog, &opts()).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        let value = gain_relax.value(&rep);
        let expect = 1.0 / eq19_power(&bits, &coeffs, sc.noise_power_w, sc.sinr_min);
        assert!((value - expect).abs() / expect < 1e-6, "{value} vs {expect}");
    }

    #[test]
    fn gain_relax_forced_full_cardinality() {
        let (ch, sc) = su_scenario();
        let coeffs = ch.user_coeffs(0);
        let lo = vec![0.0; 3];
        let hi = vec![1.0; 3];
        let gain_relax =
            build_gain_relaxation(&lo, &hi, &[3], &coeffs, 3, sc.noise_power_w, sc.sinr_min).unwrap();
        let rep = solve_conic(&gain_relax.prog, &opts()).unwrap();
        let expect = 1.0 / eq19_power(&[true; 3], &coeffs, sc.noise_power_w, sc.sinr_min);
        let value = gain_relax.value(&rep);
        assert!((value - expect).abs() / expect < 1e-6);
    }

    #[test]
    fn gain_relax_relaxation_dominates_binary_points() {
        let (ch, sc) = su_scenario();
        let coeffs = ch.user_coeffs(0);
        let lo = vec![0.0; 3];
        let hi = vec![1.0; 3];
        let gain_relax =
            build_gain_relaxation(&lo, &hi, &[2], &coeffs, 3, sc.noise_power_w, sc.sinr_min).unwrap();
        let rep = solve_conic(&gain_relax.prog, &opts()).unwrap();
        let value = gain_relax.value(&rep);
        let mut best = 0.0f64;
        for bits in [[true, true, false], [true, false, true], [false, true, true]] {
            best = best.max(1.0 / eq19_power(&bits, &coeffs, sc.noise_power_w, sc.sinr_min));
        }
        assert!(value >= best * (1.0 - 1e-7), "relaxation {value} below binary best {best}");
    }

    #[test]
    fn gain_relax_infeasible_cardinality_detected() {
        let (ch, sc) = su_scenario();
        let coeffs = ch.user_coeffs(0);
        let lo = vec![0.0, 0.0, 0.0];
        let hi = vec![1.0, 0.0, 0.0];
        assert!(matches!(
            build_gain_relaxation(&lo, &hi, &[2], &coeffs, 3, sc.noise_power_w, sc.sinr_min),
            Err(SocpError::InfeasibleCardinality { .. })
        ));
    }

    fn mu_scenario() -> (ChannelSet, Scenario) {
        let sc = Scenario {
            num_waveguides: 2,
            num_users: 2,
            antennas_per_waveguide: 2,
            span_x: 10.0,
            span_y: 10.0,
            height: 5.0,
            carrier_freq_hz: 15.0e9,
            effective_index: 1.4,
            noise_power_w: 1e-11,
            sinr_min: 100.0,
            user_positions: vec![(2.5, 6.5), (7.5, 4.0)],
            waveguide_layout: Scenario::default_layout(2, 10.0, 10.0).unwrap(),
            power_budget_w: None,
        };
        (ChannelSet::from_scenario(&sc).unwrap(), sc)
    }

    #[test]
    fn joint_relax_collapses_at_binary_fixed_boxes() {
        let (ch, sc) = mu_scenario();
        let pattern = ActivationPattern::from_flags(vec![true, true, true, false], 2, 2);
        let fixed = solve_fixed_activation(&pattern, &ch, sc.sinr_min, &opts()).unwrap();
        let m = 4;
        let nk = 4;
        let mut lo = vec![0.0; m + 2 * nk];
        let mut hi = vec![0.0; m + 2 * nk];
        for (i, &f) in pattern.flags().iter().enumerate() {
            lo[i] = if f { 1.0 } else { 0.0 };
            hi[i] = lo[i];
        }
        let p0 = fixed.total_power_w * 100.0;
        for i in m..m + 2 * nk {
            lo[i] = -p0.sqrt();
            hi[i] = p0.sqrt();
        }
        let joint_relax = build_joint_relaxation(&lo, &hi, &ch, sc.sinr_min).unwrap();
        let rep = solve_conic(&joint_relax.prog, &opts()).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        let sol = joint_relax.extract(&rep);
        let rel = (sol.objective_w - fixed.total_power_w).abs() / fixed.total_power_w;
        assert!(rel < 1e-6, "collapse mismatch {rel}");
    }

    #[test]
    fn joint_relax_fully_fixed_point_reproduces_z_identity() {
        // box fixed to a binary A and the D recovered from the fixed-A solve:
        // objective equals sum_n L_n |d_{n,k}|^2 = ||W||_F^2
        let (ch, sc) = mu_scenario();
        let pattern = ActivationPattern::from_flags(vec![true, true, false, true], 2, 2);
        let fixed = solve_fixed_activation(&pattern, &ch, sc.sinr_min, &opts()).unwrap();
        let counts = pattern.counts();
        let m = 4;
        let nk = 4;
        let mut lo = vec![0.0; m + 2 * nk];
        let mut hi = vec![0.0; m + 2 * nk];
        for (i, &f) in pattern.flags().iter().enumerate() {
            lo[i] = if f { 1.0 } else { 0.0 };
            hi[i] = lo[i];
        }
        for n in 0..2 {
            for k in 0..2 {
                let d = fixed.per_user[k][n] / (counts[n].max(1) as f64).sqrt();
                lo[m + n * 2 + k] = d.re;
                hi[m + n * 2 + k] = d.re;
                lo[m + nk + n * 2 + k] = d.im;
                hi[m + nk + n * 2 + k] = d.im;
            }
        }
        let joint_relax = build_joint_relaxation(&lo, &hi, &ch, sc.sinr_min).unwrap();
        let rep = solve_conic(&joint_relax.prog, &opts()).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        let sol = joint_relax.extract(&rep);
        let rel = (sol.objective_w - fixed.total_power_w).abs() / fixed.total_power_w;
        assert!(rel < 1e-5, "identity mismatch {rel}");
    }

    #[test]
    fn joint_relax_value_vanishes_with_sinr_floor() {
        let (ch, _) = mu_scenario();
        let m = 4;
        let nk = 4;
        let mut lo = vec![0.0; m + 2 * nk];
        let mut hi = vec![1.0; m + 2 * nk];
        for i in m..m + 2 * nk {
            lo[i] = -1e-2;
            hi[i] = 1e-2;
        }
        let joint_relax = build_joint_relaxation(&lo, &hi, &ch, 1e-9).unwrap();
        let rep = solve_conic(&joint_relax.prog, &opts()).unwrap();
        let sol = joint_relax.extract(&rep);
        assert!(sol.objective_w < 1e-15);
    }

    #[test]
    fn fixed_activation_sinr_tight() {
        let (ch, sc) = mu_scenario();
        let pattern = ActivationPattern::all_active(2, 2);
        let sol = solve_fixed_activation(&pattern, &ch, sc.sinr_min, &opts()).unwrap();
        for &s in &sol.per_user_sinr {
            assert!((s / sc.sinr_min - 1.0).abs() < 1e-5, "sinr {s}");
        }
    }

    #[test]
    fn interchange_dump_is_parseable_text() {
        let mut prog = ConicProgram::new(2);
        prog.quadratic_diag[0] = 1.0;
        prog.linear_cost[1] = -2.0;
        prog.inequalities.push(AffineExpr::new(vec![(0, 1.0), (1, 1.0)], -1.0));
        prog.cones.push(SocCone {
            bound: AffineExpr::new(vec![(0, 1.0)], 0.0),
            vector: vec![AffineExpr::new(vec![(1, 1.0)], 0.5)],
        });
        let mut buf = Vec::new();
        prog.write_interchange(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("vars 2"));
        assert!(text.contains("soc bound"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn mccormick_always_contains_product(
            xl in -2.0f64..2.0, dx in 0.0f64..3.0,
            yl in -2.0f64..2.0, dy in 0.0f64..3.0,
            tx in 0.0f64..1.0, ty in 0.0f64..1.0,
        ) {
            let env = mccormick((xl, xl + dx), (yl, yl + dy)).unwrap();
            let x = xl + tx * dx;
            let y = yl + ty * dy;
            prop_assert!(env.contains(x, y, x * y, 1e-9));
        }
    }
}
