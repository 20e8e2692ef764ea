//! Dense linear algebra kernels used throughout the crate.
//!
//! Two spectral routines are implemented here by hand and kept algorithmically
//! disjoint on purpose: [`eigh`] is a cyclic Jacobi eigensolver used by the
//! operator exponentials, the state engine, and the SDP solver internals;
//! [`min_eig_bracket`] brackets the smallest eigenvalue by bisection on
//! Cholesky positive-definiteness tests and is the only spectral routine used
//! by feasibility and certificate audits. A third route (nalgebra's symmetric
//! eigensolver) is reserved for the exact-diagonalization oracle.

use num_complex::Complex;
use thiserror::Error;

/// Double-precision complex scalar.
pub type C64 = Complex<f64>;
/// Dense complex matrix, column-major, dynamically sized.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;
/// Dense real matrix.
pub type RMat = nalgebra::DMatrix<f64>;
/// Dense real vector.
pub type RVec = nalgebra::DVector<f64>;

/// Errors from the dense kernels.
#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian: max |A - A^H| entry {deviation:.3e} exceeds {tol:.3e}")]
    NotHermitian { deviation: f64, tol: f64 },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("Jacobi eigensolver did not converge in {sweeps} sweeps (off-norm {off:.3e})")]
    NoConvergence { sweeps: usize, off: f64 },
}

/// Largest absolute deviation from Hermiticity, `max_ij |A_ij - conj(A_ji)|`.
pub fn hermiticity_deviation(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Checks squareness and Hermiticity within `tol`.
pub fn require_hermitian(a: &CMat, tol: f64) -> Result<(), LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let dev = hermiticity_deviation(a);
    if dev > tol {
        return Err(LinalgError::NotHermitian {
            deviation: dev,
            tol,
        });
    }
    Ok(())
}

/// Conjugate transpose.
pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

/// Largest absolute entry.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Identity matrix of dimension `n`.
pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Real part of the trace.
pub fn trace_re(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// Hilbert-Schmidt inner product restricted to Hermitian arguments,
/// `Re tr(A^H B)`. For Hermitian `a`, `b` the trace is already real.
pub fn inner_herm(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and a
/// unitary matrix whose `k`-th column is the eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl Eigh {
    /// Reassembles `V f(Lambda) V^H` for an entrywise spectral function.
    pub fn apply_spectral<F: Fn(f64) -> C64>(&self, f: F) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            let flam = f(lam);
            for i in 0..n {
                scaled[(i, k)] *= flam;
            }
        }
        &scaled * self.vectors.adjoint()
    }
}

const JACOBI_MAX_SWEEPS: usize = 60;

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
///
/// Each rotation exactly annihilates one off-diagonal pair; sweeps repeat in a
/// fixed (p, q) order until the off-diagonal Frobenius norm falls below
/// `1e-14` times the matrix scale, so results are deterministic. Eigenvectors
/// carry a fixed phase convention: the entry of largest magnitude (lowest
/// index on ties) is made real positive.
pub fn eigh(a: &CMat) -> Result<Eigh, LinalgError> {
    require_hermitian(a, 1e-12)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Eigh {
            values: Vec::new(),
            vectors: CMat::zeros(0, 0),
        });
    }
    // Work on the exactly Hermitian average of A and A^H.
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)].conj());
        }
    }
    let scale = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    let mut v = eye(n);

    let off_norm = |m: &CMat| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += 2.0 * m[(p, q)].norm_sqr();
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&m) <= 1e-14 * scale;
    let mut sweeps = 0;
    while !converged {
        if sweeps >= JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                sweeps,
                off: off_norm(&m),
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let b = apq.norm();
                if b <= 1e-300 {
                    continue;
                }
                // Phase factor folding A_pq to the positive real axis, then a
                // real rotation annihilating it: G = [[c, s], [-s w, c w]]
                // with w = conj(A_pq)/|A_pq| zeroes (G^H A G)_pq exactly.
                let w = apq.conj() / b;
                let alpha = m[(p, p)].re;
                let gamma = m[(q, q)].re;
                let tau = (gamma - alpha) / (2.0 * b);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let g_pp = C64::new(c, 0.0);
                let g_pq = C64::new(s, 0.0);
                let g_qp = -s * w;
                let g_qq = c * w;
                // A <- G^H A G: update columns p, q then rows p, q.
                for i in 0..n {
                    let aip = m[(i, p)];
                    let aiq = m[(i, q)];
                    m[(i, p)] = aip * g_pp + aiq * g_qp;
                    m[(i, q)] = aip * g_pq + aiq * g_qq;
                }
                for j in 0..n {
                    let apj = m[(p, j)];
                    let aqj = m[(q, j)];
                    m[(p, j)] = g_pp.conj() * apj + g_qp.conj() * aqj;
                    m[(q, j)] = g_pq.conj() * apj + g_qq.conj() * aqj;
                }
                m[(p, q)] = C64::new(0.0, 0.0);
                m[(q, p)] = C64::new(0.0, 0.0);
                m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = C64::new(m[(q, q)].re, 0.0);
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * g_pp + viq * g_qp;
                    v[(i, q)] = vip * g_pq + viq * g_qq;
                }
            }
        }
        sweeps += 1;
        converged = off_norm(&m) <= 1e-14 * scale;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.partial_cmp(&m[(j, j)].re).unwrap());
    let mut values = Vec::with_capacity(n);
    let mut vectors = CMat::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        values.push(m[(src, src)].re);
        // Phase convention: largest-magnitude entry real positive.
        let mut best = 0;
        let mut best_mag = 0.0;
        for i in 0..n {
            let mag = v[(i, src)].norm();
            if mag > best_mag + 1e-30 {
                best_mag = mag;
                best = i;
            }
        }
        let phase = if best_mag > 0.0 {
            v[(best, src)].conj() / best_mag
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..n {
            vectors[(i, k)] = v[(i, src)] * phase;
        }
    }
    Ok(Eigh { values, vectors })
}

/// Attempts a Cholesky factorization `A = L L^H` with strictly positive
/// pivots. Returns `None` when a pivot is not strictly positive, i.e. when
/// the Hermitian input is not positive definite.
pub fn cholesky(a: &CMat) -> Option<CMat> {
    let n = a.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !d.is_finite() || d <= 0.0 {
            return None;
        }
        let dj = d.sqrt();
        l[(j, j)] = C64::new(dj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / dj;
        }
    }
    Some(l)
}

/// Brackets the smallest eigenvalue of a Hermitian matrix to width `tol` by
/// bisection on Cholesky positive-definiteness of `A - m I`.
///
/// Returns `(lo, hi)` with `lo <= lambda_min <= hi`. The initial bracket is
/// the Gershgorin disc bound, so no iterative eigensolver is involved; this
/// is the audit-side routine, independent of [`eigh`].
pub fn min_eig_bracket(a: &CMat, tol: f64) -> Result<(f64, f64), LinalgError> {
    require_hermitian(a, 1e-10)?;
    let n = a.nrows();
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut radius = 0.0;
        for j in 0..n {
            if j != i {
                radius += a[(i, j)].norm();
            }
        }
        lo = lo.min(a[(i, i)].re - radius);
        hi = hi.max(a[(i, i)].re + radius);
    }
    // A - lo*I has a strictly dominant positive diagonal only off the
    // boundary; widen slightly so the invariant "lo side is PD" holds.
    let span = (hi - lo).max(1.0);
    lo -= 1e-12 * span;
    hi += 1e-12 * span;
    // Invariant: chol(A - lo I) succeeds (lambda_min > lo), chol(A - hi I)
    // fails (lambda_min <= hi). The Gershgorin lower end guarantees the
    // first; the upper end exceeds every eigenvalue so the second holds.
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] -= C64::new(mid, 0.0);
        }
        if cholesky(&shifted).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// Midpoint of [`min_eig_bracket`] with width `tol`; convenience for audits.
pub fn min_eig(a: &CMat, tol: f64) -> Result<f64, LinalgError> {
    let (lo, hi) = min_eig_bracket(a, tol)?;
    Ok(0.5 * (lo + hi))
}

/// Frobenius norm.
pub fn frob(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_core::RngCore;

    fn random_hermitian(n: usize, seed: u64) -> CMat {
        let mut rng = crate::rng::stream(seed, 0);
        let mut u = move || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        let mut a = CMat::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = C64::new(2.0 * u(), 0.0);
            for j in (i + 1)..n {
                let z = C64::new(u(), u());
                a[(i, j)] = z;
                a[(j, i)] = z.conj();
            }
        }
        a
    }

    #[test]
    fn eigh_reconstructs_matrix() {
        for seed in 0..5 {
            let a = random_hermitian(7, seed);
            let e = eigh(&a).unwrap();
            let rebuilt = e.apply_spectral(|x| C64::new(x, 0.0));
            assert!(max_abs(&(&rebuilt - &a)) < 1e-12);
            // Unitarity of the eigenvector matrix.
            let vtv = e.vectors.adjoint() * &e.vectors;
            assert!(max_abs(&(&vtv - &eye(7))) < 1e-12);
            // Ascending order.
            for k in 1..7 {
                assert!(e.values[k] >= e.values[k - 1]);
            }
        }
    }

    #[test]
    fn eigh_matches_known_pauli_spectrum() {
        // sigma_y has eigenvalues -1, +1.
        let mut a = CMat::zeros(2, 2);
        a[(0, 1)] = C64::new(0.0, -1.0);
        a[(1, 0)] = C64::new(0.0, 1.0);
        let e = eigh(&a).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigh_handles_degenerate_spectra() {
        // Projector onto a 2-dim subspace of C^4: eigenvalues {0, 0, 1, 1}.
        let mut p = CMat::zeros(4, 4);
        p[(0, 0)] = C64::new(0.5, 0.0);
        p[(1, 1)] = C64::new(0.5, 0.0);
        p[(0, 1)] = C64::new(0.0, 0.5);
        p[(1, 0)] = C64::new(0.0, -0.5);
        p[(2, 2)] = C64::new(1.0, 0.0);
        let e = eigh(&p).unwrap();
        let expected = [0.0, 0.0, 1.0, 1.0];
        for (got, want) in e.values.iter().zip(expected) {
            assert!((got - want).abs() < 1e-13);
        }
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let mut a = CMat::zeros(2, 2);
        a[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(
            eigh(&a),
            Err(LinalgError::NotHermitian { .. })
        ));
    }

    #[test]
    fn eigh_is_deterministic() {
        let a = random_hermitian(6, 42);
        let e1 = eigh(&a).unwrap();
        let e2 = eigh(&a).unwrap();
        assert_eq!(e1.values, e2.values);
        assert_eq!(e1.vectors, e2.vectors);
    }

    #[test]
    fn cholesky_round_trip() {
        let a = random_hermitian(6, 3);
        let spd = &a * a.adjoint() + eye(6) * C64::new(0.1, 0.0);
        let l = cholesky(&spd).expect("SPD matrix must factor");
        let rebuilt = &l * l.adjoint();
        assert!(max_abs(&(&rebuilt - &spd)) < 1e-10);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = eye(3);
        a[(2, 2)] = C64::new(-0.5, 0.0);
        assert!(cholesky(&a).is_none());
    }

    #[test]
    fn min_eig_bracket_agrees_with_eigh() {
        for seed in 0..5 {
            let a = random_hermitian(8, 100 + seed);
            let e = eigh(&a).unwrap();
            let (lo, hi) = min_eig_bracket(&a, 1e-11).unwrap();
            assert!(lo <= e.values[0] + 1e-10, "lo={lo} vs {}", e.values[0]);
            assert!(hi >= e.values[0] - 1e-10, "hi={hi} vs {}", e.values[0]);
            assert!(hi - lo <= 1e-11);
        }
    }

    #[test]
    fn spectral_function_exponential() {
        let a = random_hermitian(5, 7);
        let e = eigh(&a).unwrap();
        let expm = e.apply_spectral(|x| C64::new(x.exp(), 0.0));
        // Compare against a Taylor series with scaling and squaring.
        let mut series = eye(5);
        let scaled = &a * C64::new(1.0 / 16.0, 0.0);
        let mut term = eye(5);
        for k in 1..30 {
            term = &term * &scaled / C64::new(k as f64, 0.0);
            series += &term;
        }
        let mut total = series.clone();
        for _ in 0..4 {
            total = &total * &total;
        }
        assert!(max_abs(&(&expm - &total)) < 1e-9 * max_abs(&total).max(1.0));
    }
}
