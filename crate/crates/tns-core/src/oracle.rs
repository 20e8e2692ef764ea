//! Dense exact-diagonalization ground truth: spectra and gaps of assembled
//! parent Hamiltonians, independently evaluated expectation values, and
//! density-matrix energies under single-qubit depolarizing noise.
//!
//! This module deliberately routes through `nalgebra`'s Hermitian
//! eigensolver and its own bit-level operator application, so audits of the
//! certifier and the state engine do not reuse the code paths they check.

use crate::linalg::{CMat, CVec, C64};
use crate::models::Model;
use crate::operators::{LocalOperator, OperatorError};
use crate::state::{
    build_parent_hamiltonian, build_state_budgeted, Budget, ParentHamiltonian, StateError,
    StateVector,
};
use thiserror::Error;

/// Residual bound `|Hv - Ev|` accepted for every reported eigenpair.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Degeneracy threshold, relative to the spectral norm.
pub const DEGENERACY_REL_TOL: f64 = 1e-8;
/// Density matrices square the memory cost, so they get a tighter cap.
pub const DENSITY_QUBIT_CAP: usize = 8;

/// Errors from oracle evaluations.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{n} qubits exceed the dense budget of {cap}")]
    DenseTooLarge { n: usize, cap: usize },
    #[error("{n} qubits exceed the density-matrix cap of {cap}")]
    DensityTooLarge { n: usize, cap: usize },
    #[error("operator site {site} out of range for {n} qubits")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("eigenpair {index} has residual {residual:.3e}, above {tol:.3e}")]
    ResidualTooLarge {
        index: usize,
        residual: f64,
        tol: f64,
    },
    #[error("depolarizing probability must lie in [0, 1], got {0}")]
    ProbabilityOutOfRange(f64),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Sorted low-lying spectrum of an assembled Hamiltonian.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// The lowest `k` eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Number of eigenvalues within the relative degeneracy threshold of the
    /// minimum.
    pub ground_degeneracy: usize,
    /// `E_1 - E_0` of the full spectrum.
    pub gap: f64,
    /// Normalized eigenvector of the lowest eigenvalue.
    pub ground_vector: StateVector,
}

/// Dense eigendecomposition of `H = sum_j embed(h_j)`, reporting the lowest
/// `k` eigenvalues (clamped to the dimension), the ground degeneracy, the
/// gap, and the ground vector. Every reported pair is residual-checked.
pub fn spectrum(
    ph: &ParentHamiltonian,
    k: usize,
    budget: &Budget,
) -> Result<SpectrumReport, OracleError> {
    let n = ph.n();
    if n > budget.max_dense_qubits {
        return Err(OracleError::DenseTooLarge {
            n,
            cap: budget.max_dense_qubits,
        });
    }
    let h = ph.dense(budget)?;
    let eig = h.clone().symmetric_eigen();
    let dim = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let k = k.clamp(1, dim);
    for (rank, &col) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(col);
        let residual = (&h * v - v.scale(sorted[rank])).norm();
        if residual > RESIDUAL_TOL {
            return Err(OracleError::ResidualTooLarge {
                index: rank,
                residual,
                tol: RESIDUAL_TOL,
            });
        }
    }

    let spectral_norm = sorted
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let threshold = DEGENERACY_REL_TOL * spectral_norm.max(1.0);
    let ground_degeneracy = sorted.iter().filter(|&&v| v - sorted[0] <= threshold).count();
    let gap = if dim > 1 { sorted[1] - sorted[0] } else { 0.0 };

    let ground_col = eig.eigenvectors.column(order[0]);
    let ground_vector =
        StateVector::from_amplitudes(CVec::from_iterator(dim, ground_col.iter().copied()), n)?;
    Ok(SpectrumReport {
        eigenvalues: sorted.into_iter().take(k).collect(),
        ground_degeneracy,
        gap,
        ground_vector,
    })
}

// Applies embed(op) to a full-register vector by explicit bit gather and
// scatter, independent of the state engine's application routine.
fn apply_embedded(op: &LocalOperator, psi: &CVec, n: usize) -> Result<CVec, OracleError> {
    if let Some(&site) = op.support().last() {
        if site >= n {
            return Err(OracleError::SiteOutOfRange { site, n });
        }
    }
    let k = op.arity();
    let mat = op.matrix();
    let dim = 1usize << n;
    // Slot a (most significant local bit first) sits at global bit n-1-s_a.
    let positions: Vec<usize> = op.support().iter().map(|&s| n - 1 - s).collect();
    let scatter = |local: usize| -> usize {
        let mut g = 0usize;
        for (a, &p) in positions.iter().enumerate() {
            g |= ((local >> (k - 1 - a)) & 1) << p;
        }
        g
    };
    let clear_mask: usize = positions.iter().fold(!0usize, |m, &p| m & !(1usize << p));
    let mut out = CVec::from_element(dim, C64::new(0.0, 0.0));
    for g in 0..dim {
        let mut row = 0usize;
        for (a, &p) in positions.iter().enumerate() {
            row |= ((g >> p) & 1) << (k - 1 - a);
        }
        let base = g & clear_mask;
        let mut acc = C64::new(0.0, 0.0);
        for col in 0..(1usize << k) {
            acc += mat[(row, col)] * psi[base | scatter(col)];
        }
        out[g] = acc;
    }
    Ok(out)
}

/// Real part of `<psi|embed(op)|psi>`, evaluated by an independent dense
/// application; real up to rounding for a Hermitian operator.
pub fn exact_expectation(state: &StateVector, op: &LocalOperator) -> Result<f64, OracleError> {
    let applied = apply_embedded(op, state.amplitudes(), state.n())?;
    let val: C64 = state
        .amplitudes()
        .iter()
        .zip(applied.iter())
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(val.re)
}

// rho <- (1 - p) rho + p (1/2 (x) tr_j rho) on qubit j.
fn depolarize_site(rho: &CMat, j: usize, p: f64, n: usize) -> CMat {
    let dim = 1usize << n;
    let mask = 1usize << (n - 1 - j);
    let mut out = rho.scale(1.0 - p);
    for x in 0..dim {
        for y in 0..dim {
            if (x ^ y) & mask == 0 {
                let x0 = x & !mask;
                let y0 = y & !mask;
                let traced = rho[(x0, y0)] + rho[(x0 | mask, y0 | mask)];
                out[(x, y)] += C64::new(0.5 * p, 0.0) * traced;
            }
        }
    }
    out
}

/// Exact `tr(H rho)` with `rho` the model state run through i.i.d.
/// single-qubit depolarizing noise of strength `p`; nonnegative since
/// `H >= 0`.
pub fn noisy_energy(model: &Model, p: f64, budget: &Budget) -> Result<f64, OracleError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(OracleError::ProbabilityOutOfRange(p));
    }
    let n = model.n();
    if n > DENSITY_QUBIT_CAP {
        return Err(OracleError::DensityTooLarge {
            n,
            cap: DENSITY_QUBIT_CAP,
        });
    }
    let state = build_state_budgeted(model, budget)?;
    let dim = 1usize << n;
    let psi = state.amplitudes();
    let mut rho = CMat::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            rho[(r, c)] = psi[r] * psi[c].conj();
        }
    }
    for j in 0..n {
        rho = depolarize_site(&rho, j, p, n);
    }
    let parent = build_parent_hamiltonian(model)?;
    let h = parent.dense(budget)?;
    let energy = (&h * &rho).diagonal().iter().map(|z| z.re).sum();
    Ok(energy)
}
