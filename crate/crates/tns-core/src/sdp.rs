//! A small-block semidefinite-programming solver: maximize a linear
//! objective over real variables subject to affine positive-semidefiniteness
//! constraints `F_0 + sum_k y_k F_k >= 0` on dense Hermitian blocks plus
//! linear equalities `A y = b`, with independent feasibility verification.
//!
//! The solver is an infeasible-start primal-dual interior-point method with
//! Nesterov-Todd scaling and a Mehrotra-style adaptive centering parameter.
//! Blocks are small and dense, so every step runs per-block
//! eigendecompositions; the downstream contract is the reported duality gap
//! plus [`verify_feasibility`], which routes through a different eigensolver
//! than the iteration itself.

use crate::linalg::{
    self, cholesky, eigh, hermiticity_deviation, inner_herm, min_eig_bracket, CMat, LinalgError,
    RMat, RVec, C64,
};
use thiserror::Error;

/// Largest accepted block dimension.
pub const DEFAULT_BLOCK_DIM_CAP: usize = 256;
// Hermiticity accepted on input matrices.
const INPUT_HERMITICITY_TOL: f64 = 1e-12;
// Fraction of the distance to the cone boundary taken per step.
const STEP_FRACTION: f64 = 0.98;
// Divergence thresholds for pragmatic infeasibility detection.
const DIVERGENCE_Y: f64 = 1e12;
const DIVERGENCE_MU: f64 = 1e16;

/// Errors from problem construction and solver misuse.
#[derive(Debug, Error)]
pub enum SdpError {
    #[error("objective must have at least one variable")]
    NoVariables,
    #[error("problem must have at least one block")]
    NoBlocks,
    #[error("block {block} matrix {matrix} is not Hermitian (deviation {deviation:.3e})")]
    BlockNotHermitian {
        block: usize,
        matrix: usize,
        deviation: f64,
    },
    #[error("block {block} matrix {matrix} is {got}x{got2}, expected {dim}x{dim}")]
    BlockShape {
        block: usize,
        matrix: usize,
        got: usize,
        got2: usize,
        dim: usize,
    },
    #[error("block {block} carries {got} coefficient matrices, expected {expected}")]
    CoefficientCount {
        block: usize,
        got: usize,
        expected: usize,
    },
    #[error("block {block} has dimension {dim}, above the cap {cap}")]
    BlockTooLarge { block: usize, dim: usize, cap: usize },
    #[error("equality system is {rows}x{cols} with {b_len} right-hand sides for {vars} variables")]
    EqualityShape {
        rows: usize,
        cols: usize,
        b_len: usize,
        vars: usize,
    },
    #[error("candidate has {got} variables, problem has {expected}")]
    VariableCount { got: usize, expected: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One positive-semidefiniteness constraint `F_0 + sum_k y_k F_k >= 0`.
#[derive(Debug, Clone)]
pub struct SdpBlock {
    f0: CMat,
    coeffs: Vec<CMat>,
}

impl SdpBlock {
    /// Bundles a constant term with one coefficient matrix per variable.
    pub fn new(f0: CMat, coeffs: Vec<CMat>) -> Self {
        Self { f0, coeffs }
    }

    /// The constant term.
    pub fn f0(&self) -> &CMat {
        &self.f0
    }

    /// Coefficient matrices, indexed by variable.
    pub fn coeffs(&self) -> &[CMat] {
        &self.coeffs
    }

    /// Block dimension.
    pub fn dim(&self) -> usize {
        self.f0.nrows()
    }

    /// Evaluates `F_0 + sum_k y_k F_k`.
    pub fn constraint_matrix(&self, y: &[f64]) -> CMat {
        let mut s = self.f0.clone();
        for (coeff, &yk) in self.coeffs.iter().zip(y.iter()) {
            s += coeff.scale(yk);
        }
        s
    }
}

/// A linear-objective problem over Hermitian-block LMIs and equalities.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    objective: Vec<f64>,
    blocks: Vec<SdpBlock>,
    eq_a: RMat,
    eq_b: RVec,
}

impl SdpProblem {
    /// Validates and wraps a problem without equality constraints.
    pub fn new(objective: Vec<f64>, blocks: Vec<SdpBlock>) -> Result<Self, SdpError> {
        let v = objective.len();
        Self::with_equalities(objective, blocks, RMat::zeros(0, v), RVec::zeros(0))
    }

    /// Validates and wraps a problem with equalities `A y = b`.
    pub fn with_equalities(
        objective: Vec<f64>,
        blocks: Vec<SdpBlock>,
        eq_a: RMat,
        eq_b: RVec,
    ) -> Result<Self, SdpError> {
        let v = objective.len();
        if v == 0 {
            return Err(SdpError::NoVariables);
        }
        if blocks.is_empty() {
            return Err(SdpError::NoBlocks);
        }
        for (bi, block) in blocks.iter().enumerate() {
            let dim = block.f0.nrows();
            if dim > DEFAULT_BLOCK_DIM_CAP {
                return Err(SdpError::BlockTooLarge {
                    block: bi,
                    dim,
                    cap: DEFAULT_BLOCK_DIM_CAP,
                });
            }
            if block.coeffs.len() != v {
                return Err(SdpError::CoefficientCount {
                    block: bi,
                    got: block.coeffs.len(),
                    expected: v,
                });
            }
            for (mi, mat) in std::iter::once(&block.f0).chain(block.coeffs.iter()).enumerate() {
                if mat.nrows() != dim || mat.ncols() != dim {
                    return Err(SdpError::BlockShape {
                        block: bi,
                        matrix: mi,
                        got: mat.nrows(),
                        got2: mat.ncols(),
                        dim,
                    });
                }
                let deviation = hermiticity_deviation(mat);
                if deviation > INPUT_HERMITICITY_TOL {
                    return Err(SdpError::BlockNotHermitian {
                        block: bi,
                        matrix: mi,
                        deviation,
                    });
                }
            }
        }
        if eq_a.ncols() != v || eq_a.nrows() != eq_b.len() {
            return Err(SdpError::EqualityShape {
                rows: eq_a.nrows(),
                cols: eq_a.ncols(),
                b_len: eq_b.len(),
                vars: v,
            });
        }
        Ok(Self {
            objective,
            blocks,
            eq_a,
            eq_b,
        })
    }

    /// Number of variables.
    pub fn var_count(&self) -> usize {
        self.objective.len()
    }

    /// The linear objective, maximized.
    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// The blocks.
    pub fn blocks(&self) -> &[SdpBlock] {
        &self.blocks
    }

    /// Equality matrix `A`.
    pub fn eq_a(&self) -> &RMat {
        &self.eq_a
    }

    /// Equality right-hand side `b`.
    pub fn eq_b(&self) -> &RVec {
        &self.eq_b
    }

    fn equality_residual(&self, y: &[f64]) -> f64 {
        let yv = RVec::from_column_slice(y);
        if self.eq_a.nrows() == 0 {
            return 0.0;
        }
        (&self.eq_a * yv - &self.eq_b).amax()
    }
}

/// Solver tolerances and the iteration cap.
#[derive(Debug, Clone, Copy)]
pub struct SdpConfig {
    /// Largest duality gap accepted as optimal.
    pub gap_tol: f64,
    /// Largest feasibility residual accepted as optimal.
    pub feas_tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
}

impl Default for SdpConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-7,
            feas_tol: 1e-9,
            max_iter: 200,
        }
    }
}

/// Exit status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    /// Duality gap and residuals met the configured tolerances.
    Optimal,
    /// Equalities inconsistent or iterates diverged.
    InfeasibleDetected,
    /// Iteration cap or numerical breakdown; carries the best iterate.
    MaxIter,
}

/// Result of a solve: candidate point, certified metrics, and status.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// The candidate variable vector.
    pub y: Vec<f64>,
    /// `c . y`.
    pub objective_value: f64,
    /// Dual objective of the final dual iterate; an upper bound on the
    /// optimum up to the residuals.
    pub dual_objective: f64,
    /// Reported optimality gap (dual minus primal, floored by the
    /// complementarity gap).
    pub duality_gap: f64,
    /// Minimum eigenvalue of each constraint block at `y`.
    pub per_block_min_eig: Vec<f64>,
    /// `max |A y - b|`.
    pub equality_residual: f64,
    /// Exit status.
    pub status: SdpStatus,
    /// Iterations consumed.
    pub iterations: usize,
}

/// Independent feasibility check of a candidate `y`: per-block minimum
/// eigenvalues (bracketing eigensolver, not the solver's Jacobi route) and
/// the equality residual. This report is authoritative for certificates.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// Certified enclosure-midpoint minimum eigenvalue per block.
    pub per_block_min_eig: Vec<f64>,
    /// `max |A y - b|`.
    pub equality_residual: f64,
}

/// Evaluates [`FeasibilityReport`] for `y` with bisection tolerance `tol`.
pub fn verify_feasibility(
    problem: &SdpProblem,
    y: &[f64],
    tol: f64,
) -> Result<FeasibilityReport, SdpError> {
    if y.len() != problem.var_count() {
        return Err(SdpError::VariableCount {
            got: y.len(),
            expected: problem.var_count(),
        });
    }
    let mut per_block_min_eig = Vec::with_capacity(problem.blocks.len());
    for block in &problem.blocks {
        let s = block.constraint_matrix(y);
        let sym = (&s + s.adjoint()).scale(0.5);
        let (lo, hi) = min_eig_bracket(&sym, tol)?;
        per_block_min_eig.push(0.5 * (lo + hi));
    }
    Ok(FeasibilityReport {
        per_block_min_eig,
        equality_residual: problem.equality_residual(y),
    })
}

// Gaussian elimination consistency test for A y = b: inconsistent iff a row
// eliminates to zero with a nonzero right-hand side.
fn equalities_consistent(a: &RMat, b: &RVec) -> bool {
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 {
        return true;
    }
    let mut aug = RMat::zeros(m, n + 1);
    aug.view_mut((0, 0), (m, n)).copy_from(a);
    aug.view_mut((0, n), (m, 1)).copy_from(&RMat::from_iterator(m, 1, b.iter().copied()));
    let scale = aug.amax().max(1.0);
    let tol = 1e-10 * scale;
    let mut row = 0;
    for col in 0..n {
        let pivot = (row..m).max_by(|&i, &j| aug[(i, col)].abs().total_cmp(&aug[(j, col)].abs()));
        let Some(p) = pivot else { break };
        if aug[(p, col)].abs() <= tol {
            continue;
        }
        aug.swap_rows(row, p);
        for i in (row + 1)..m {
            let f = aug[(i, col)] / aug[(row, col)];
            for j in col..=n {
                let sub = f * aug[(row, j)];
                aug[(i, j)] -= sub;
            }
        }
        row += 1;
        if row == m {
            break;
        }
    }
    for i in row..m {
        let lhs = (0..n).fold(0.0f64, |acc, j| acc.max(aug[(i, j)].abs()));
        if lhs <= tol && aug[(i, n)].abs() > tol {
            return false;
        }
    }
    true
}

fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

// Largest alpha >= 0 keeping `current + alpha * delta` in the cone, via the
// minimum eigenvalue of L^{-1} delta L^{-H} with current = L L^H.
fn max_cone_step(current: &CMat, delta: &CMat) -> Option<f64> {
    let l = cholesky(current)?;
    let a = l.solve_lower_triangular(delta)?;
    let b = l.solve_lower_triangular(&a.adjoint())?;
    let t = hermitize(&b.adjoint());
    let min = eigh(&t).ok()?.values[0];
    if min >= -1e-14 {
        Some(f64::INFINITY)
    } else {
        Some(-1.0 / min)
    }
}

struct Iterate {
    y: Vec<f64>,
    lam: RVec,
    xs: Vec<CMat>,
    ss: Vec<CMat>,
}

// A Newton direction: (dy, dlam, dX per block, dS per block).
type Direction = (Vec<f64>, RVec, Vec<CMat>, Vec<CMat>);

// Assembles the reported solution from an iterate.
fn finalize(
    problem: &SdpProblem,
    it: &Iterate,
    status: SdpStatus,
    iterations: usize,
) -> Result<SdpSolution, SdpError> {
    let objective_value: f64 = problem
        .objective
        .iter()
        .zip(it.y.iter())
        .map(|(c, y)| c * y)
        .sum();
    let mut dual_objective: f64 = problem
        .blocks
        .iter()
        .zip(it.xs.iter())
        .map(|(block, x)| inner_herm(&block.f0, x))
        .sum();
    dual_objective += problem.eq_b.dot(&it.lam);
    let mut complementarity = 0.0;
    let mut per_block_min_eig = Vec::with_capacity(problem.blocks.len());
    for (block, x) in problem.blocks.iter().zip(it.xs.iter()) {
        let s = hermitize(&block.constraint_matrix(&it.y));
        complementarity += inner_herm(x, &s);
        per_block_min_eig.push(eigh(&s)?.values[0]);
    }
    // |dual - primal| keeps the reported gap meaningful from both sides when
    // the dual residual is nonzero; complementarity covers the interior case.
    let duality_gap = (dual_objective - objective_value)
        .abs()
        .max(complementarity);
    Ok(SdpSolution {
        y: it.y.clone(),
        objective_value,
        dual_objective,
        duality_gap,
        per_block_min_eig,
        equality_residual: problem.equality_residual(&it.y),
        status,
        iterations,
    })
}

// A finalized solution qualifies as optimal: gap, equalities, and per-block
// eigenvalues all within tolerance.
fn accepts(sol: &SdpSolution, config: &SdpConfig, eq_tol: f64) -> bool {
    sol.duality_gap <= config.gap_tol
        && sol.equality_residual <= eq_tol
        && sol
            .per_block_min_eig
            .iter()
            .all(|&e| e >= -config.feas_tol)
}

// Reports the best iterate seen, upgrading the status to `Optimal` when it
// qualifies despite the iteration budget running out.
fn finish(
    problem: &SdpProblem,
    it: &Iterate,
    status: SdpStatus,
    iterations: usize,
    config: &SdpConfig,
    eq_tol: f64,
) -> Result<SdpSolution, SdpError> {
    let trial = finalize(problem, it, SdpStatus::Optimal, iterations)?;
    if accepts(&trial, config, eq_tol) {
        return Ok(trial);
    }
    finalize(problem, it, status, iterations)
}

/// Maximizes the objective subject to the block LMIs and equalities.
///
/// Deterministic: identical problem and config give identical results. The
/// returned status is `Optimal` only when the duality gap and all residuals
/// meet the configured tolerances at the returned `y`.
pub fn solve(problem: &SdpProblem, config: &SdpConfig) -> Result<SdpSolution, SdpError> {
    let v = problem.var_count();
    let m = problem.eq_a.nrows();
    let n_total: f64 = problem.blocks.iter().map(|b| b.dim() as f64).sum();

    let zero_start = Iterate {
        y: vec![0.0; v],
        lam: RVec::zeros(m),
        xs: problem.blocks.iter().map(|b| linalg::eye(b.dim())).collect(),
        ss: problem.blocks.iter().map(|b| linalg::eye(b.dim())).collect(),
    };
    if !equalities_consistent(&problem.eq_a, &problem.eq_b) {
        return finalize(problem, &zero_start, SdpStatus::InfeasibleDetected, 0);
    }

    // Identity start scaled to the problem magnitude keeps early steps sane.
    let scale = problem
        .blocks
        .iter()
        .map(|b| linalg::max_abs(&b.f0))
        .fold(1.0f64, f64::max)
        .max(problem.objective.iter().fold(0.0f64, |a, &c| a.max(c.abs())));
    let mut it = Iterate {
        y: vec![0.0; v],
        lam: RVec::zeros(m),
        xs: problem
            .blocks
            .iter()
            .map(|b| linalg::eye(b.dim()).scale(scale))
            .collect(),
        ss: problem
            .blocks
            .iter()
            .map(|b| linalg::eye(b.dim()).scale(scale))
            .collect(),
    };

    let mut best: Option<(f64, Iterate)> = None;
    let eq_tol = config.feas_tol.min(1e-9);

    for iter in 0..config.max_iter {
        // Residuals of the current iterate.
        let s_of_y: Vec<CMat> = problem
            .blocks
            .iter()
            .map(|b| hermitize(&b.constraint_matrix(&it.y)))
            .collect();
        let r3: Vec<CMat> = s_of_y
            .iter()
            .zip(it.ss.iter())
            .map(|(target, s)| target - s)
            .collect();
        let g: Vec<f64> = (0..v)
            .map(|k| {
                problem
                    .blocks
                    .iter()
                    .zip(it.xs.iter())
                    .map(|(b, x)| inner_herm(&b.coeffs[k], x))
                    .sum()
            })
            .collect();
        let at_lam = if m > 0 {
            problem.eq_a.transpose() * &it.lam
        } else {
            RVec::zeros(v)
        };
        let r1: Vec<f64> = (0..v)
            .map(|k| problem.objective[k] + g[k] - at_lam[k])
            .collect();
        let yv = RVec::from_column_slice(&it.y);
        let re = if m > 0 {
            &problem.eq_b - &problem.eq_a * yv
        } else {
            RVec::zeros(0)
        };

        let gap: f64 = it
            .xs
            .iter()
            .zip(it.ss.iter())
            .map(|(x, s)| inner_herm(x, s))
            .sum();
        let mu = gap / n_total;
        let r1_inf = r1.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let r3_norm = r3.iter().map(linalg::max_abs).fold(0.0f64, f64::max);
        let re_inf = if m > 0 { re.amax() } else { 0.0 };

        let score = gap.max(r1_inf).max(r3_norm).max(re_inf);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((
                score,
                Iterate {
                    y: it.y.clone(),
                    lam: it.lam.clone(),
                    xs: it.xs.clone(),
                    ss: it.ss.clone(),
                },
            ));
        }

        // Optimality means the returned y is the certificate: equalities and
        // block eigenvalues within feasibility tolerance and the reported
        // duality gap within gap_tol. Dual-side residuals enter through the
        // |dual - primal| term of the reported gap rather than as a gate.
        if re_inf <= eq_tol && gap.abs() <= 50.0 * config.gap_tol {
            let trial = finalize(problem, &it, SdpStatus::Optimal, iter)?;
            if accepts(&trial, config, eq_tol) {
                return Ok(trial);
            }
        }
        if it.y.iter().any(|y| y.abs() > DIVERGENCE_Y) || mu > DIVERGENCE_MU {
            let (_, b) = best.unwrap();
            return finalize(problem, &b, SdpStatus::InfeasibleDetected, iter);
        }

        // Nesterov-Todd scaling per block: W with W S W = X, plus S^{-1}.
        let mut ws: Vec<CMat> = Vec::with_capacity(problem.blocks.len());
        let mut s_invs: Vec<CMat> = Vec::with_capacity(problem.blocks.len());
        let mut broke = false;
        for (x, s) in it.xs.iter().zip(it.ss.iter()) {
            let Ok(ex) = eigh(x) else { broke = true; break };
            let x_half = ex.apply_spectral(|lam| C64::new(lam.max(0.0).sqrt(), 0.0));
            let mid = hermitize(&(&x_half * s * &x_half));
            let Ok(emid) = eigh(&mid) else { broke = true; break };
            let mid_inv_sqrt =
                emid.apply_spectral(|lam| C64::new(1.0 / lam.max(1e-300).sqrt(), 0.0));
            ws.push(hermitize(&(&x_half * mid_inv_sqrt * &x_half)));
            let Ok(es) = eigh(s) else { broke = true; break };
            s_invs.push(es.apply_spectral(|lam| C64::new(1.0 / lam.max(1e-300), 0.0)));
        }
        if broke {
            let (_, b) = best.unwrap();
            return finish(problem, &b, SdpStatus::MaxIter, iter, config, eq_tol);
        }

        // Schur complement M_kl = sum_b <F_k, W F_l W> and saddle system.
        let mut wfw: Vec<Vec<CMat>> = Vec::with_capacity(problem.blocks.len());
        for (b, w) in problem.blocks.iter().zip(ws.iter()) {
            wfw.push(b.coeffs.iter().map(|f| hermitize(&(w * f * w))).collect());
        }
        let mut saddle = RMat::zeros(v + m, v + m);
        for k in 0..v {
            for l in k..v {
                let mkl: f64 = problem
                    .blocks
                    .iter()
                    .zip(wfw.iter())
                    .map(|(b, wfw_b)| inner_herm(&b.coeffs[k], &wfw_b[l]))
                    .sum();
                saddle[(k, l)] = mkl;
                saddle[(l, k)] = mkl;
            }
        }
        for r in 0..m {
            for k in 0..v {
                saddle[(v + r, k)] = problem.eq_a[(r, k)];
                saddle[(k, v + r)] = problem.eq_a[(r, k)];
            }
        }
        // Factor a quasi-definite regularization of the saddle matrix, then
        // refine against the unregularized system so the regularization does
        // not bias the step; the bias would otherwise stall the stationarity
        // and equality residuals near the optimum.
        let reg = 1e-12 * (1.0 + (0..v).fold(0.0f64, |a, k| a.max(saddle[(k, k)].abs())));
        let mut regularized = saddle.clone();
        for k in 0..v {
            regularized[(k, k)] += reg;
        }
        for r in 0..m {
            regularized[(v + r, v + r)] = -reg;
        }
        let lu = regularized.lu();
        let solve_refined = |rhs: &RVec| -> Option<RVec> {
            let mut sol = lu.solve(rhs)?;
            for _ in 0..3 {
                let resid = rhs - &saddle * &sol;
                let correction = lu.solve(&resid)?;
                if correction.amax() <= 1e-16 * sol.amax().max(1.0) {
                    break;
                }
                sol += correction;
            }
            Some(sol)
        };

        // Shared right-hand side pieces.
        let w3: Vec<f64> = (0..v)
            .map(|k| {
                problem
                    .blocks
                    .iter()
                    .zip(ws.iter())
                    .zip(r3.iter())
                    .map(|((b, w), r)| inner_herm(&b.coeffs[k], &hermitize(&(w * r * w))))
                    .sum()
            })
            .collect();
        let sinv_ip: Vec<f64> = (0..v)
            .map(|k| {
                problem
                    .blocks
                    .iter()
                    .zip(s_invs.iter())
                    .map(|(b, si)| inner_herm(&b.coeffs[k], si))
                    .sum()
            })
            .collect();

        let solve_direction = |sigma_mu: f64| -> Option<Direction> {
            let mut rhs = RVec::zeros(v + m);
            for k in 0..v {
                rhs[k] = r1[k] + sigma_mu * sinv_ip[k] - g[k] - w3[k];
            }
            for r in 0..m {
                rhs[v + r] = re[r];
            }
            let sol = solve_refined(&rhs)?;
            let dy: Vec<f64> = (0..v).map(|k| sol[k]).collect();
            let dlam = RVec::from_iterator(m, (0..m).map(|r| sol[v + r]));
            let mut dss = Vec::with_capacity(problem.blocks.len());
            let mut dxs = Vec::with_capacity(problem.blocks.len());
            for (bi, block) in problem.blocks.iter().enumerate() {
                let mut ds = r3[bi].clone();
                for (f, &d) in block.coeffs.iter().zip(dy.iter()) {
                    ds += f.scale(d);
                }
                let ds = hermitize(&ds);
                let rc = s_invs[bi].scale(sigma_mu) - &it.xs[bi];
                let dx = hermitize(&(rc - &ws[bi] * &ds * &ws[bi]));
                dss.push(ds);
                dxs.push(dx);
            }
            Some((dy, dlam, dxs, dss))
        };

        // Predictor (sigma = 0) fixes the centering weight for the corrector.
        let Some((_, _, dxs_aff, dss_aff)) = solve_direction(0.0) else {
            let (_, b) = best.unwrap();
            return finish(problem, &b, SdpStatus::MaxIter, iter, config, eq_tol);
        };
        let mut ax: f64 = 1.0;
        let mut as_: f64 = 1.0;
        for bi in 0..problem.blocks.len() {
            match (
                max_cone_step(&it.xs[bi], &dxs_aff[bi]),
                max_cone_step(&it.ss[bi], &dss_aff[bi]),
            ) {
                (Some(sx), Some(ss)) => {
                    ax = ax.min(STEP_FRACTION * sx);
                    as_ = as_.min(STEP_FRACTION * ss);
                }
                _ => {
                    broke = true;
                }
            }
        }
        if broke {
            let (_, b) = best.unwrap();
            return finish(problem, &b, SdpStatus::MaxIter, iter, config, eq_tol);
        }
        let mu_aff: f64 = it
            .xs
            .iter()
            .zip(it.ss.iter())
            .enumerate()
            .map(|(bi, (x, s))| {
                inner_herm(
                    &(x + dxs_aff[bi].scale(ax)),
                    &(s + dss_aff[bi].scale(as_)),
                )
            })
            .sum::<f64>()
            .max(0.0)
            / n_total;
        let sigma = (mu_aff / mu).powi(3).clamp(1e-12, 1.0);

        let Some((dy, dlam, dxs, dss)) = solve_direction(sigma * mu) else {
            let (_, b) = best.unwrap();
            return finish(problem, &b, SdpStatus::MaxIter, iter, config, eq_tol);
        };
        let mut alpha: f64 = 1.0;
        for bi in 0..problem.blocks.len() {
            match (
                max_cone_step(&it.xs[bi], &dxs[bi]),
                max_cone_step(&it.ss[bi], &dss[bi]),
            ) {
                (Some(sx), Some(ss)) => {
                    alpha = alpha.min(STEP_FRACTION * sx).min(STEP_FRACTION * ss);
                }
                _ => {
                    broke = true;
                }
            }
        }
        if broke || alpha < 1e-12 {
            let (_, b) = best.unwrap();
            return finish(problem, &b, SdpStatus::MaxIter, iter, config, eq_tol);
        }

        for (yk, dk) in it.y.iter_mut().zip(dy.iter()) {
            *yk += alpha * dk;
        }
        it.lam += dlam.scale(alpha);
        for bi in 0..problem.blocks.len() {
            it.xs[bi] = hermitize(&(&it.xs[bi] + dxs[bi].scale(alpha)));
            it.ss[bi] = hermitize(&(&it.ss[bi] + dss[bi].scale(alpha)));
        }
    }

    let (_, b) = best.unwrap();
    finish(problem, &b, SdpStatus::MaxIter, config.max_iter, config, eq_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eye;

    fn scalar(v: f64) -> CMat {
        CMat::from_element(1, 1, C64::new(v, 0.0))
    }

    fn diag(values: &[f64]) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            values.len(),
            values.iter().map(|&v| C64::new(v, 0.0)),
        ))
    }

    // maximize x subject to 2 - x >= 0.
    fn bound_problem() -> SdpProblem {
        SdpProblem::new(
            vec![1.0],
            vec![SdpBlock::new(scalar(2.0), vec![scalar(-1.0)])],
        )
        .unwrap()
    }

    // maximize y1 + y2 subject to diag(1 - y1, 1 - y2) >= 0.
    fn box_problem() -> SdpProblem {
        SdpProblem::new(
            vec![1.0, 1.0],
            vec![SdpBlock::new(
                eye(2),
                vec![diag(&[-1.0, 0.0]), diag(&[0.0, -1.0])],
            )],
        )
        .unwrap()
    }

    #[test]
    fn scalar_bound_is_tight() {
        let sol = solve(&bound_problem(), &SdpConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.y[0] - 2.0).abs() < 1e-6, "y = {}", sol.y[0]);
        assert!(sol.duality_gap <= 1e-7);
        assert!(sol.per_block_min_eig[0] >= -1e-9);
    }

    #[test]
    fn box_corner_is_reached() {
        let sol = solve(&box_problem(), &SdpConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.y[0] - 1.0).abs() < 1e-6);
        assert!((sol.y[1] - 1.0).abs() < 1e-6);
        assert!((sol.objective_value - 2.0).abs() < 1e-6);
    }

    #[test]
    fn equalities_restrict_the_optimum() {
        // maximize y1 with y1 = y2 and 1 - y2 >= 0: optimum (1, 1).
        let p = SdpProblem::with_equalities(
            vec![1.0, 0.0],
            vec![SdpBlock::new(
                eye(2),
                vec![diag(&[-1.0, 0.0]), diag(&[0.0, -1.0])],
            )],
            RMat::from_row_slice(1, 2, &[1.0, -1.0]),
            RVec::from_column_slice(&[0.0]),
        )
        .unwrap();
        let sol = solve(&p, &SdpConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.y[0] - 1.0).abs() < 1e-6);
        assert!((sol.y[1] - 1.0).abs() < 1e-6);
        assert!(sol.equality_residual <= 1e-9);
    }

    #[test]
    fn inconsistent_equalities_are_detected() {
        let p = SdpProblem::with_equalities(
            vec![1.0],
            vec![SdpBlock::new(scalar(2.0), vec![scalar(-1.0)])],
            RMat::from_row_slice(2, 1, &[1.0, 1.0]),
            RVec::from_column_slice(&[0.0, 1.0]),
        )
        .unwrap();
        let sol = solve(&p, &SdpConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::InfeasibleDetected);
    }

    #[test]
    fn unbounded_objective_diverges() {
        // Constraint 1 >= 0 never binds y, so the objective is unbounded.
        let p = SdpProblem::new(
            vec![1.0],
            vec![SdpBlock::new(scalar(1.0), vec![scalar(0.0)])],
        )
        .unwrap();
        let sol = solve(&p, &SdpConfig::default()).unwrap();
        assert_ne!(sol.status, SdpStatus::Optimal);
    }

    #[test]
    fn weak_duality_holds_at_optimal_exits() {
        for p in [bound_problem(), box_problem()] {
            let sol = solve(&p, &SdpConfig::default()).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal);
            assert!(sol.objective_value <= sol.dual_objective + 1e-7);
        }
    }

    #[test]
    fn feasibility_verification_is_independent_and_sharp() {
        let p = bound_problem();
        let sol = solve(&p, &SdpConfig::default()).unwrap();
        let report = verify_feasibility(&p, &sol.y, 1e-10).unwrap();
        assert!(report.per_block_min_eig[0] >= -1e-9);
        // A deliberate violation: x = 3 leaves 2 - x = -1.
        let bad = verify_feasibility(&p, &[3.0], 1e-10).unwrap();
        assert!((bad.per_block_min_eig[0] + 1.0).abs() < 1e-8);
        // The zero vector is feasible whenever F0 >= 0.
        let zero = verify_feasibility(&p, &[0.0], 1e-10).unwrap();
        assert!(zero.per_block_min_eig[0] >= -1e-12);
    }

    #[test]
    fn solves_are_reproducible() {
        let p = box_problem();
        let a = solve(&p, &SdpConfig::default()).unwrap();
        let b = solve(&p, &SdpConfig::default()).unwrap();
        assert_eq!(a.status, b.status);
        for (ya, yb) in a.y.iter().zip(b.y.iter()) {
            assert!((ya - yb).abs() <= 1e-12);
        }
    }

    #[test]
    fn block_scaling_leaves_the_optimizer_unchanged() {
        let base = solve(&box_problem(), &SdpConfig::default()).unwrap();
        let scaled_problem = SdpProblem::new(
            vec![1.0, 1.0],
            vec![SdpBlock::new(
                eye(2).scale(37.0),
                vec![diag(&[-37.0, 0.0]), diag(&[0.0, -37.0])],
            )],
        )
        .unwrap();
        let scaled = solve(&scaled_problem, &SdpConfig::default()).unwrap();
        for (a, b) in base.y.iter().zip(scaled.y.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn hermitian_complex_blocks_are_supported() {
        // maximize y subject to [[2, i], [-i, 2]] - y I >= 0; the constraint
        // matrix has eigenvalues {1, 3}, so the optimum is y = 1.
        let mut f0 = eye(2).scale(2.0);
        f0[(0, 1)] = C64::new(0.0, 1.0);
        f0[(1, 0)] = C64::new(0.0, -1.0);
        let p = SdpProblem::new(
            vec![1.0],
            vec![SdpBlock::new(f0, vec![eye(2).scale(-1.0)])],
        )
        .unwrap();
        let sol = solve(&p, &SdpConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.y[0] - 1.0).abs() < 1e-6, "y = {}", sol.y[0]);
    }

    #[test]
    fn invalid_problems_are_rejected() {
        assert!(matches!(
            SdpProblem::new(vec![], vec![SdpBlock::new(scalar(1.0), vec![])]),
            Err(SdpError::NoVariables)
        ));
        assert!(matches!(
            SdpProblem::new(vec![1.0], vec![]),
            Err(SdpError::NoBlocks)
        ));
        let mut skew = eye(2);
        skew[(0, 1)] = C64::new(0.0, 1.0);
        skew[(1, 0)] = C64::new(0.0, 1.0);
        assert!(matches!(
            SdpProblem::new(vec![1.0], vec![SdpBlock::new(skew, vec![eye(2)])]),
            Err(SdpError::BlockNotHermitian { .. })
        ));
        assert!(matches!(
            SdpProblem::new(vec![1.0, 2.0], vec![SdpBlock::new(eye(2), vec![eye(2)])]),
            Err(SdpError::CoefficientCount { .. })
        ));
        assert!(matches!(
            verify_feasibility(&bound_problem(), &[1.0, 2.0], 1e-10),
            Err(SdpError::VariableCount { .. })
        ));
    }
}
