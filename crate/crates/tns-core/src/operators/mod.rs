//! Local operators on subsets of qubits, validated commuting families, and
//! the operator-building utilities on top of them.
//!
//! Conventions: a [`LocalOperator`] stores a strictly increasing support
//! `[s_0 < s_1 < ...]` and a dense matrix on `2^k`; tensor slot 0 (site
//! `s_0`) is the most significant bit of the local basis index. Globally,
//! site `j` of an `n`-qubit register occupies bit `n-1-j`, so site 0 is the
//! most significant bit of a basis index.

pub mod pauli;

use crate::lattice::{Graph, LatticeError};
use crate::linalg::{self, eigh, CMat, LinalgError, C64};
use thiserror::Error;

pub use pauli::{pauli_decompose, pauli_recompose, Pauli, PauliWord};

/// Errors from operator construction and family validation.
#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("support must be strictly increasing, got {0:?}")]
    SupportNotSorted(Vec<usize>),
    #[error("matrix dimension {dim} does not match 2^{k} for support size {k}")]
    DimensionMismatch { dim: usize, k: usize },
    #[error("support site {site} out of range for {n} qubits")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("family term {index} is not Hermitian (deviation {deviation:.3e})")]
    TermNotHermitian { index: usize, deviation: f64 },
    #[error("family term {index} is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    TermNotPsd { index: usize, min_eig: f64 },
    #[error("family term {index} exceeds unit norm: {norm:.12} > 1 + 1e-10")]
    TermNotSubnormalized { index: usize, norm: f64 },
    #[error("family terms {first} and {second} do not commute (deviation {deviation:.3e})")]
    TermsDoNotCommute {
        first: usize,
        second: usize,
        deviation: f64,
    },
    #[error("family term {index} has radius {radius}, exceeding the declared radius {max}")]
    RadiusExceeded { index: usize, radius: u32, max: u32 },
    #[error("operators must anticommute (deviation {deviation:.3e})")]
    NotAnticommuting { deviation: f64 },
    #[error("plaquette construction needs a grid of at least 2x2 vertices, got {rows}x{cols}")]
    GridTooSmall { rows: usize, cols: usize },
    #[error("unitaries {first} and {second} do not commute (deviation {deviation:.3e})")]
    UnitariesDoNotCommute {
        first: usize,
        second: usize,
        deviation: f64,
    },
    #[error("operator {index} is not unitary (deviation {deviation:.3e})")]
    NotUnitary { index: usize, deviation: f64 },
    #[error("seeds {first} and {second} have overlapping supports")]
    OverlappingSeeds { first: usize, second: usize },
    #[error("expected {expected} plaquette times for the {class} class, got {got}")]
    PlaquetteTimesMismatch {
        class: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// An operator acting on an explicit subset of qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    support: Vec<usize>,
    matrix: CMat,
}

impl LocalOperator {
    /// Wraps a dense matrix acting on the given (strictly increasing) sites.
    pub fn new(support: Vec<usize>, matrix: CMat) -> Result<Self, OperatorError> {
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OperatorError::SupportNotSorted(support));
        }
        let k = support.len();
        if matrix.nrows() != (1 << k) || matrix.ncols() != (1 << k) {
            return Err(OperatorError::DimensionMismatch {
                dim: matrix.nrows(),
                k,
            });
        }
        Ok(Self { support, matrix })
    }

    /// The identity with empty support.
    pub fn scalar_identity() -> Self {
        Self {
            support: Vec::new(),
            matrix: CMat::identity(1, 1),
        }
    }

    /// Sites the operator acts on.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Dense matrix on `2^k`.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Number of support sites.
    pub fn arity(&self) -> usize {
        self.support.len()
    }

    /// Operator norm deviation from Hermiticity.
    pub fn hermiticity_deviation(&self) -> f64 {
        linalg::hermiticity_deviation(&self.matrix)
    }

    /// Conjugate transpose on the same support.
    pub fn dagger(&self) -> Self {
        Self {
            support: self.support.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    /// Re-expresses the operator on a larger support (`target` must contain
    /// the current support and be strictly increasing): tensors identities
    /// into the added slots.
    pub fn promote(&self, target: &[usize]) -> Result<Self, OperatorError> {
        if target.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OperatorError::SupportNotSorted(target.to_vec()));
        }
        let m = target.len();
        let mut slot_of: Vec<usize> = Vec::with_capacity(self.support.len());
        for &s in &self.support {
            match target.binary_search(&s) {
                Ok(pos) => slot_of.push(pos),
                Err(_) => {
                    return Err(OperatorError::SiteOutOfRange {
                        site: s,
                        n: usize::MAX,
                    })
                }
            }
        }
        let k = self.support.len();
        let dim_t = 1usize << m;
        // Local index of a target index: bits gathered from the embedded slots.
        let local_of = |t: usize| -> usize {
            let mut l = 0usize;
            for (i, &slot) in slot_of.iter().enumerate() {
                let bit = (t >> (m - 1 - slot)) & 1;
                l |= bit << (k - 1 - i);
            }
            l
        };
        let rest_mask_of = |t: usize| -> usize {
            let mut r = t;
            for &slot in &slot_of {
                r &= !(1usize << (m - 1 - slot));
            }
            r
        };
        let mut out = CMat::zeros(dim_t, dim_t);
        for row in 0..dim_t {
            let rest = rest_mask_of(row);
            let lr = local_of(row);
            for lc in 0..(1 << k) {
                let mut col = rest;
                for (i, &slot) in slot_of.iter().enumerate() {
                    let bit = (lc >> (k - 1 - i)) & 1;
                    col |= bit << (m - 1 - slot);
                }
                out[(row, col)] = self.matrix[(lr, lc)];
            }
        }
        Ok(Self {
            support: target.to_vec(),
            matrix: out,
        })
    }

    /// Dense matrix on the full `n`-qubit space.
    pub fn embed(&self, n: usize) -> Result<CMat, OperatorError> {
        if let Some(&max) = self.support.last() {
            if max >= n {
                return Err(OperatorError::SiteOutOfRange { site: max, n });
            }
        }
        let full: Vec<usize> = (0..n).collect();
        Ok(self.promote(&full)?.matrix)
    }

    /// Applies the operator in place to an `n`-qubit state vector.
    pub fn apply(&self, psi: &mut [C64], n: usize) -> Result<(), OperatorError> {
        if let Some(&max) = self.support.last() {
            if max >= n {
                return Err(OperatorError::SiteOutOfRange { site: max, n });
            }
        }
        debug_assert_eq!(psi.len(), 1 << n);
        let k = self.support.len();
        if k == 0 {
            let z = self.matrix[(0, 0)];
            for a in psi.iter_mut() {
                *a *= z;
            }
            return Ok(());
        }
        let dim_l = 1usize << k;
        // offsets[l] spreads local index bits into their global positions.
        let mut offsets = vec![0usize; dim_l];
        for (l, off) in offsets.iter_mut().enumerate() {
            for (i, &s) in self.support.iter().enumerate() {
                let bit = (l >> (k - 1 - i)) & 1;
                *off |= bit << (n - 1 - s);
            }
        }
        let mask: usize = offsets[dim_l - 1];
        let mut gathered = vec![C64::new(0.0, 0.0); dim_l];
        for base in 0..psi.len() {
            if base & mask != 0 {
                continue;
            }
            for l in 0..dim_l {
                gathered[l] = psi[base | offsets[l]];
            }
            for (r, off) in offsets.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (c, g) in gathered.iter().enumerate() {
                    acc += self.matrix[(r, c)] * g;
                }
                psi[base | off] = acc;
            }
        }
        Ok(())
    }

    /// Drops support sites the operator acts on as the identity, detected by
    /// comparing against `partial_trace/2 (x) I` within `tol` (absolute, on
    /// the largest entry). Repeats until no site is removable.
    pub fn minimize_support(&self, tol: f64) -> Self {
        let mut current = self.clone();
        'outer: loop {
            let k = current.support.len();
            for drop_slot in 0..k {
                if let Some(reduced) = current.try_drop_slot(drop_slot, tol) {
                    current = reduced;
                    continue 'outer;
                }
            }
            return current;
        }
    }

    fn try_drop_slot(&self, slot: usize, tol: f64) -> Option<Self> {
        let k = self.support.len();
        let dim_r = 1usize << (k - 1);
        let slot_bit = |idx: usize| (idx >> (k - 1 - slot)) & 1;
        let strip = |idx: usize| -> usize {
            let high = idx >> (k - slot);
            let low = idx & ((1 << (k - 1 - slot)) - 1);
            (high << (k - 1 - slot)) | low
        };
        // Partial trace over the slot, halved: candidate reduced operator.
        let mut reduced = CMat::zeros(dim_r, dim_r);
        for r in 0..(1 << k) {
            for c in 0..(1 << k) {
                if slot_bit(r) == slot_bit(c) {
                    reduced[(strip(r), strip(c))] += 0.5 * self.matrix[(r, c)];
                }
            }
        }
        // Accept only if matrix == reduced (x) I on the slot.
        for r in 0..(1 << k) {
            for c in 0..(1 << k) {
                let expect = if slot_bit(r) == slot_bit(c) {
                    reduced[(strip(r), strip(c))]
                } else {
                    C64::new(0.0, 0.0)
                };
                if (self.matrix[(r, c)] - expect).norm() > tol {
                    return None;
                }
            }
        }
        let mut support = self.support.clone();
        support.remove(slot);
        Some(Self {
            support,
            matrix: reduced,
        })
    }

    /// Operator product on the union support: `self * other`.
    pub fn compose(&self, other: &Self) -> Result<Self, OperatorError> {
        let union = union_support(&self.support, &other.support);
        let a = self.promote(&union)?;
        let b = other.promote(&union)?;
        Ok(Self {
            support: union,
            matrix: &a.matrix * &b.matrix,
        })
    }

    /// Largest absolute entry of the commutator with `other`.
    pub fn commutator_norm(&self, other: &Self) -> Result<f64, OperatorError> {
        if intersect_supports(&self.support, &other.support).is_empty() {
            return Ok(0.0);
        }
        let union = union_support(&self.support, &other.support);
        let a = self.promote(&union)?.matrix;
        let b = other.promote(&union)?.matrix;
        Ok(linalg::max_abs(&(&a * &b - &b * &a)))
    }

    /// Largest absolute entry of the anticommutator with `other`.
    pub fn anticommutator_norm(&self, other: &Self) -> Result<f64, OperatorError> {
        let union = union_support(&self.support, &other.support);
        let a = self.promote(&union)?.matrix;
        let b = other.promote(&union)?.matrix;
        Ok(linalg::max_abs(&(&a * &b + &b * &a)))
    }

    /// Pauli word on the given sites (letters aligned with `sites`).
    pub fn from_pauli(sites: &[usize], letters: &[Pauli]) -> Result<Self, OperatorError> {
        assert_eq!(sites.len(), letters.len());
        let mut pairs: Vec<(usize, Pauli)> =
            sites.iter().copied().zip(letters.iter().copied()).collect();
        pairs.sort_by_key(|&(s, _)| s);
        let support: Vec<usize> = pairs.iter().map(|&(s, _)| s).collect();
        let word = PauliWord(pairs.iter().map(|&(_, p)| p).collect());
        Self::new(support, word.matrix())
    }
}

/// Merges two sorted supports.
pub fn union_support(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

/// Intersection of two sorted supports.
pub fn intersect_supports(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|s| b.contains(s)).collect()
}

/// Hermitian operator exponential `e^{z H}` on the same support, through the
/// eigendecomposition of `H`.
pub fn herm_exp(op: &LocalOperator, z: C64) -> Result<LocalOperator, OperatorError> {
    let e = eigh(op.matrix())?;
    let m = e.apply_spectral(|lam| (z * lam).exp());
    Ok(LocalOperator {
        support: op.support().to_vec(),
        matrix: m,
    })
}

/// A family of pairwise-commuting, positive-semidefinite, subnormalized local
/// operators with locality radius at most `radius` on its graph.
#[derive(Debug, Clone)]
pub struct CommutingFamily {
    terms: Vec<LocalOperator>,
    radius: u32,
}

/// Hermiticity tolerance for family terms.
pub const FAMILY_HERMITICITY_TOL: f64 = 1e-12;
/// Positive-semidefiniteness slack for family terms.
pub const FAMILY_PSD_TOL: f64 = 1e-10;
/// Subnormalization slack: operator norm at most `1 + this`.
pub const FAMILY_NORM_SLACK: f64 = 1e-10;
/// Commutation tolerance between family terms and between layer unitaries.
pub const FAMILY_COMMUTE_TOL: f64 = 1e-10;

impl CommutingFamily {
    /// Validates and wraps a term list. Checks, per term: Hermiticity,
    /// positive semidefiniteness, operator norm at most `1 + 1e-10`, and
    /// locality radius at most `radius` on `graph`; pairwise: commutation.
    /// An empty term list is a valid (trivial) family.
    pub fn new(
        graph: &Graph,
        terms: Vec<LocalOperator>,
        radius: u32,
    ) -> Result<Self, OperatorError> {
        for (idx, term) in terms.iter().enumerate() {
            let dev = term.hermiticity_deviation();
            if dev > FAMILY_HERMITICITY_TOL {
                return Err(OperatorError::TermNotHermitian {
                    index: idx,
                    deviation: dev,
                });
            }
            if let Some(&max) = term.support().last() {
                if max >= graph.len() {
                    return Err(OperatorError::SiteOutOfRange {
                        site: max,
                        n: graph.len(),
                    });
                }
            }
            let spec = eigh(term.matrix())?;
            let min_eig = spec.values.first().copied().unwrap_or(0.0);
            let max_abs_eig = spec
                .values
                .iter()
                .fold(0.0f64, |m, &v| m.max(v.abs()));
            if min_eig < -FAMILY_PSD_TOL {
                return Err(OperatorError::TermNotPsd {
                    index: idx,
                    min_eig,
                });
            }
            if max_abs_eig > 1.0 + FAMILY_NORM_SLACK {
                return Err(OperatorError::TermNotSubnormalized {
                    index: idx,
                    norm: max_abs_eig,
                });
            }
            if !term.support().is_empty() {
                let r = graph.radius(&[term.support().to_vec()])?;
                if r > radius {
                    return Err(OperatorError::RadiusExceeded {
                        index: idx,
                        radius: r,
                        max: radius,
                    });
                }
            }
        }
        for i in 0..terms.len() {
            for j in (i + 1)..terms.len() {
                let dev = terms[i].commutator_norm(&terms[j])?;
                if dev > FAMILY_COMMUTE_TOL {
                    return Err(OperatorError::TermsDoNotCommute {
                        first: i,
                        second: j,
                        deviation: dev,
                    });
                }
            }
        }
        Ok(Self { terms, radius })
    }

    /// Empty family (used when one of the two generator families is absent).
    pub fn empty(radius: u32) -> Self {
        Self {
            terms: Vec::new(),
            radius,
        }
    }

    /// The validated terms.
    pub fn terms(&self) -> &[LocalOperator] {
        &self.terms
    }

    /// Number of terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    /// True when the family has no terms.
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Declared locality radius.
    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// Indices of terms whose support contains site `j`.
    pub fn terms_touching(&self, j: usize) -> Vec<usize> {
        (0..self.terms.len())
            .filter(|&m| self.terms[m].support().contains(&j))
            .collect()
    }
}

/// Builds a commuting family by conjugating disjoint-support seed operators
/// with an ordered product of pairwise-commuting unitaries:
/// `kappa_n = (prod over unitaries overlapping the seed) O_n (same)^dag`.
///
/// Seeds must be positive semidefinite with operator norm at most 1 and have
/// pairwise disjoint supports; the unitaries must pairwise commute. Each
/// returned term is isospectral to its seed. Supports are minimized and the
/// result is fully re-validated (commutation of the conjugated terms is not
/// automatic for arbitrary inputs).
pub fn conjugated_family(
    graph: &Graph,
    unitaries: &[LocalOperator],
    seeds: &[LocalOperator],
    radius: u32,
) -> Result<CommutingFamily, OperatorError> {
    for (idx, u) in unitaries.iter().enumerate() {
        let gram = &u.matrix().adjoint() * u.matrix();
        let dev = linalg::max_abs(&(&gram - CMat::identity(gram.nrows(), gram.ncols())));
        if dev > 1e-10 {
            return Err(OperatorError::NotUnitary {
                index: idx,
                deviation: dev,
            });
        }
    }
    for i in 0..unitaries.len() {
        for j in (i + 1)..unitaries.len() {
            let dev = unitaries[i].commutator_norm(&unitaries[j])?;
            if dev > FAMILY_COMMUTE_TOL {
                return Err(OperatorError::UnitariesDoNotCommute {
                    first: i,
                    second: j,
                    deviation: dev,
                });
            }
        }
    }
    for i in 0..seeds.len() {
        for j in (i + 1)..seeds.len() {
            if !intersect_supports(seeds[i].support(), seeds[j].support()).is_empty() {
                return Err(OperatorError::OverlappingSeeds { first: i, second: j });
            }
        }
    }
    let mut terms = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let mut conj = seed.clone();
        for u in unitaries {
            if intersect_supports(u.support(), seed.support()).is_empty() {
                continue;
            }
            conj = u.compose(&conj)?.compose(&u.dagger())?;
        }
        terms.push(conj.minimize_support(1e-10));
    }
    CommutingFamily::new(graph, terms, radius)
}

/// Corner sites `[top-left, top-right, bottom-left, bottom-right]` of each
/// unit square of an open `rows x cols` grid, with a checkerboard class flag
/// (`true` for even `r+c`).
pub fn plaquettes(rows: usize, cols: usize) -> Vec<(bool, [usize; 4])> {
    let idx = |r: usize, c: usize| r * cols + c;
    let mut out = Vec::new();
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols.saturating_sub(1) {
            out.push((
                (r + c) % 2 == 0,
                [idx(r, c), idx(r, c + 1), idx(r + 1, c), idx(r + 1, c + 1)],
            ));
        }
    }
    out
}

/// Toric-code-style plaquette unitaries on an open grid: for each unit square
/// the unitary `exp(i t  O (x) O (x) O (x) O)` where `O` alternates between
/// two anticommuting Hermitian single-qubit operators on a checkerboard, with
/// an individual time per plaquette (`times_even[i]` for the `i`-th
/// even-class square in row-major order, likewise `times_odd`). Any two such
/// generators commute because adjacent squares share an even number of
/// sites, so the unitaries commute as well.
pub fn plaquette_unitaries(
    rows: usize,
    cols: usize,
    op_even: &CMat,
    op_odd: &CMat,
    times_even: &[f64],
    times_odd: &[f64],
) -> Result<Vec<LocalOperator>, OperatorError> {
    if rows < 2 || cols < 2 {
        return Err(OperatorError::GridTooSmall { rows, cols });
    }
    for (idx, m) in [op_even, op_odd].iter().enumerate() {
        let dev = linalg::hermiticity_deviation(m);
        if dev > FAMILY_HERMITICITY_TOL {
            return Err(OperatorError::TermNotHermitian {
                index: idx,
                deviation: dev,
            });
        }
        let spec = eigh(m)?;
        let norm = spec.values.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        if norm > 1.0 + FAMILY_NORM_SLACK {
            return Err(OperatorError::TermNotSubnormalized { index: idx, norm });
        }
    }
    let anti = linalg::max_abs(&(op_even * op_odd + op_odd * op_even));
    if anti > 1e-10 {
        return Err(OperatorError::NotAnticommuting { deviation: anti });
    }
    let squares = plaquettes(rows, cols);
    let n_even = squares.iter().filter(|&&(even, _)| even).count();
    let n_odd = squares.len() - n_even;
    if times_even.len() != n_even {
        return Err(OperatorError::PlaquetteTimesMismatch {
            class: "even",
            expected: n_even,
            got: times_even.len(),
        });
    }
    if times_odd.len() != n_odd {
        return Err(OperatorError::PlaquetteTimesMismatch {
            class: "odd",
            expected: n_odd,
            got: times_odd.len(),
        });
    }
    let mut out = Vec::new();
    let (mut next_even, mut next_odd) = (0, 0);
    for (even, corners) in squares {
        let (op, t) = if even {
            next_even += 1;
            (op_even, times_even[next_even - 1])
        } else {
            next_odd += 1;
            (op_odd, times_odd[next_odd - 1])
        };
        let mut generator = CMat::identity(1, 1);
        for _ in 0..4 {
            generator = linalg::kron(&generator, op);
        }
        let mut support = corners.to_vec();
        support.sort_unstable();
        let local = LocalOperator::new(support, generator)?;
        out.push(herm_exp(&local, C64::new(0.0, t))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eye, max_abs};

    fn ket(bits: &[u8]) -> Vec<C64> {
        let n = bits.len();
        let mut idx = 0usize;
        for (j, &b) in bits.iter().enumerate() {
            idx |= (b as usize) << (n - 1 - j);
        }
        let mut v = vec![C64::new(0.0, 0.0); 1 << n];
        v[idx] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn embed_places_site_zero_most_significant() {
        let z0 = LocalOperator::from_pauli(&[0], &[Pauli::Z]).unwrap();
        let m = z0.embed(2).unwrap();
        let expect = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
            C64::new(-1.0, 0.0),
        ]));
        assert!(max_abs(&(&m - &expect)) < 1e-15);
    }

    #[test]
    fn apply_matches_embedding() {
        let op = LocalOperator::from_pauli(&[1, 3], &[Pauli::X, Pauli::Y]).unwrap();
        let n = 4;
        let full = op.embed(n).unwrap();
        let mut psi: Vec<C64> = (0..16)
            .map(|i| C64::new(0.1 * i as f64, 0.05 * (16 - i) as f64))
            .collect();
        let psi0 = nalgebra::DVector::from_vec(psi.clone());
        op.apply(&mut psi, n).unwrap();
        let expect = &full * psi0;
        for i in 0..16 {
            assert!((psi[i] - expect[i]).norm() < 1e-13);
        }
    }

    #[test]
    fn apply_on_basis_state_flips_expected_bit() {
        let x2 = LocalOperator::from_pauli(&[2], &[Pauli::X]).unwrap();
        let mut psi = ket(&[0, 0, 0]);
        x2.apply(&mut psi, 3).unwrap();
        let expect = ket(&[0, 0, 1]);
        for i in 0..8 {
            assert!((psi[i] - expect[i]).norm() < 1e-15);
        }
    }

    #[test]
    fn minimize_support_strips_identity_factors() {
        let zz = LocalOperator::from_pauli(&[0, 2], &[Pauli::Z, Pauli::I]).unwrap();
        let min = zz.minimize_support(1e-10);
        assert_eq!(min.support(), &[0]);
        assert!(max_abs(&(min.matrix() - &Pauli::Z.matrix())) < 1e-14);
        // An entangling projector must keep both sites.
        let p11 = {
            let mut m = CMat::zeros(4, 4);
            m[(3, 3)] = C64::new(1.0, 0.0);
            LocalOperator::new(vec![1, 2], m).unwrap()
        };
        assert_eq!(p11.minimize_support(1e-10).support(), &[1, 2]);
    }

    #[test]
    fn promote_then_minimize_round_trips() {
        let op = LocalOperator::from_pauli(&[1], &[Pauli::Y]).unwrap();
        let promoted = op.promote(&[0, 1, 3]).unwrap();
        assert_eq!(promoted.support(), &[0, 1, 3]);
        let back = promoted.minimize_support(1e-12);
        assert_eq!(back.support(), &[1]);
        assert!(max_abs(&(back.matrix() - op.matrix())) < 1e-14);
    }

    #[test]
    fn herm_exp_matches_series() {
        let mut m = CMat::zeros(4, 4);
        m[(0, 3)] = C64::new(0.3, 0.4);
        m[(3, 0)] = C64::new(0.3, -0.4);
        m[(1, 1)] = C64::new(0.7, 0.0);
        let op = LocalOperator::new(vec![0, 1], m.clone()).unwrap();
        let z = C64::new(-0.25, 0.6);
        let fast = herm_exp(&op, z).unwrap();
        // Series with scaling and squaring.
        let scaled = &m * (z / C64::new(16.0, 0.0));
        let mut series = eye(4);
        let mut term = eye(4);
        for k in 1..25 {
            term = &term * &scaled / C64::new(k as f64, 0.0);
            series += &term;
        }
        for _ in 0..4 {
            series = &series * &series;
        }
        assert!(max_abs(&(fast.matrix() - &series)) < 1e-12);
    }

    #[test]
    fn family_accepts_ising_projectors_and_reports_radius() {
        let g = Graph::path(4);
        let terms: Vec<LocalOperator> = g
            .edges()
            .iter()
            .map(|&(a, b)| {
                let zz = PauliWord(vec![Pauli::Z, Pauli::Z]).matrix();
                let m = (eye(4) - zz) * C64::new(0.5, 0.0);
                LocalOperator::new(vec![a, b], m).unwrap()
            })
            .collect();
        let fam = CommutingFamily::new(&g, terms, 1).unwrap();
        assert_eq!(fam.len(), 3);
        assert_eq!(fam.terms_touching(1), vec![0, 1]);
    }

    #[test]
    fn family_rejects_non_commuting_terms() {
        let g = Graph::path(2);
        let px = {
            let m = (eye(2) + Pauli::X.matrix()) * C64::new(0.5, 0.0);
            LocalOperator::new(vec![0], m).unwrap()
        };
        let pz = {
            let m = (eye(2) + Pauli::Z.matrix()) * C64::new(0.5, 0.0);
            LocalOperator::new(vec![0], m).unwrap()
        };
        let err = CommutingFamily::new(&g, vec![px, pz], 1).unwrap_err();
        assert!(matches!(err, OperatorError::TermsDoNotCommute { .. }));
    }

    #[test]
    fn family_rejects_oversized_norm_and_negative_terms() {
        let g = Graph::path(2);
        let big = LocalOperator::new(vec![0], eye(2) * C64::new(1.5, 0.0)).unwrap();
        assert!(matches!(
            CommutingFamily::new(&g, vec![big], 1),
            Err(OperatorError::TermNotSubnormalized { .. })
        ));
        let neg = LocalOperator::new(vec![0], Pauli::Z.matrix()).unwrap();
        assert!(matches!(
            CommutingFamily::new(&g, vec![neg], 1),
            Err(OperatorError::TermNotPsd { .. })
        ));
    }

    #[test]
    fn family_radius_enforced() {
        let g = Graph::path(5);
        let far = {
            let zz = PauliWord(vec![Pauli::Z, Pauli::Z]).matrix();
            let m = (eye(4) - zz) * C64::new(0.5, 0.0);
            LocalOperator::new(vec![0, 4], m).unwrap()
        };
        assert!(matches!(
            CommutingFamily::new(&g, vec![far], 1),
            Err(OperatorError::RadiusExceeded { .. })
        ));
    }

    #[test]
    fn conjugated_family_with_no_unitaries_returns_seeds() {
        let g = Graph::path(3);
        let seeds: Vec<LocalOperator> = (0..3)
            .map(|j| {
                let m = (eye(2) + Pauli::X.matrix()) * C64::new(0.5, 0.0);
                LocalOperator::new(vec![j], m).unwrap()
            })
            .collect();
        let fam = conjugated_family(&g, &[], &seeds, 1).unwrap();
        assert_eq!(fam.len(), 3);
        for (seed, term) in seeds.iter().zip(fam.terms()) {
            assert_eq!(seed.support(), term.support());
            assert!(max_abs(&(seed.matrix() - term.matrix())) < 1e-14);
        }
    }

    #[test]
    fn conjugated_family_from_cz_layer_preserves_spectra() {
        // Diagonal CZ on each path edge, seeds |+><+| per site: the
        // graph-state stabilizer-projector family.
        let g = Graph::path(3);
        let cz = {
            let mut m = eye(4);
            m[(3, 3)] = C64::new(-1.0, 0.0);
            m
        };
        let unitaries: Vec<LocalOperator> = g
            .edges()
            .iter()
            .map(|&(a, b)| LocalOperator::new(vec![a, b], cz.clone()).unwrap())
            .collect();
        let seeds: Vec<LocalOperator> = (0..3)
            .map(|j| {
                let m = (eye(2) + Pauli::X.matrix()) * C64::new(0.5, 0.0);
                LocalOperator::new(vec![j], m).unwrap()
            })
            .collect();
        let fam = conjugated_family(&g, &unitaries, &seeds, 1).unwrap();
        assert_eq!(fam.len(), 3);
        for (seed, term) in seeds.iter().zip(fam.terms()) {
            let ss = eigh(seed.matrix()).unwrap().values;
            let st = eigh(term.matrix()).unwrap().values;
            // Isospectral after promoting the seed spectrum with padding
            // (support may have grown; extra dims repeat the spectrum).
            let reps = st.len() / ss.len();
            let mut expect: Vec<f64> = ss.iter().flat_map(|&v| vec![v; reps]).collect();
            expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in expect.iter().zip(&st) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        // The middle term must be genuinely 3-local (CZ on both edges).
        assert_eq!(fam.terms()[1].support(), &[0, 1, 2]);
    }

    #[test]
    fn conjugated_family_rejects_bad_inputs() {
        let g = Graph::path(2);
        let seed = {
            let m = (eye(2) + Pauli::X.matrix()) * C64::new(0.5, 0.0);
            LocalOperator::new(vec![0], m).unwrap()
        };
        let not_unitary =
            LocalOperator::new(vec![0], Pauli::Z.matrix() * C64::new(0.5, 0.0)).unwrap();
        assert!(matches!(
            conjugated_family(&g, &[not_unitary], std::slice::from_ref(&seed), 1),
            Err(OperatorError::NotUnitary { .. })
        ));
        let ux = LocalOperator::new(vec![0], Pauli::X.matrix()).unwrap();
        let uz = LocalOperator::new(vec![0], Pauli::Z.matrix()).unwrap();
        assert!(matches!(
            conjugated_family(&g, &[ux, uz], std::slice::from_ref(&seed), 1),
            Err(OperatorError::UnitariesDoNotCommute { .. })
        ));
        assert!(matches!(
            conjugated_family(&g, &[], &[seed.clone(), seed], 1),
            Err(OperatorError::OverlappingSeeds { .. })
        ));
    }

    #[test]
    fn plaquette_unitaries_commute_and_match_known_value() {
        let us = plaquette_unitaries(
            2,
            2,
            &Pauli::Z.matrix(),
            &Pauli::X.matrix(),
            &[std::f64::consts::PI],
            &[],
        )
        .unwrap();
        assert_eq!(us.len(), 1);
        // exp(i pi Z^(x4)) = -identity: all eigenvalues of Z^(x4) are +-1.
        let m = us[0].matrix();
        assert!(max_abs(&(m + &eye(16))) < 1e-12);

        let us = plaquette_unitaries(
            3,
            3,
            &Pauli::Z.matrix(),
            &Pauli::X.matrix(),
            &[0.3, 0.4],
            &[0.7, 0.2],
        )
        .unwrap();
        assert_eq!(us.len(), 4);
        for i in 0..us.len() {
            for j in (i + 1)..us.len() {
                assert!(us[i].commutator_norm(&us[j]).unwrap() < 1e-10);
            }
        }
        // Zero times give identities.
        let us = plaquette_unitaries(2, 3, &Pauli::Z.matrix(), &Pauli::X.matrix(), &[0.0], &[0.0])
            .unwrap();
        for u in &us {
            assert!(max_abs(&(u.matrix() - &eye(16))) < 1e-13);
        }
    }

    #[test]
    fn plaquette_unitaries_reject_commuting_pair_and_bad_lengths() {
        let err =
            plaquette_unitaries(2, 2, &Pauli::Z.matrix(), &Pauli::Z.matrix(), &[0.1], &[])
                .unwrap_err();
        assert!(matches!(err, OperatorError::NotAnticommuting { .. }));
        let err =
            plaquette_unitaries(2, 2, &Pauli::Z.matrix(), &Pauli::X.matrix(), &[0.1, 0.2], &[])
                .unwrap_err();
        assert!(matches!(err, OperatorError::PlaquetteTimesMismatch { .. }));
    }
}
