//! Frustration-free parent Hamiltonians: per-vertex terms
//! `h_j = O_j' Pi_j O_j` with `Pi_j = 1 - |phi_j><phi_j|`, their sum
//! `H = sum_j h_j`, and a beta-parametrized cache for fast re-evaluation of
//! `H(beta)` at fixed `t` along a ramp.

use super::{build_o_j, expectation, mu_nu_sets, Budget, StateError, StateVector};
use crate::linalg::{self, eigh, CMat, Eigh, C64};
use crate::models::Model;
use crate::operators::{herm_exp, union_support, LocalOperator, OperatorError};

// Minimum-eigenvalue slack accepted when validating term positivity, and the
// tolerance for trimming numerically-identity tensor slots.
const TERM_PSD_TOL: f64 = 1e-10;
const SUPPORT_TRIM_TOL: f64 = 1e-10;

/// One parent term `h_j` with the index sets that produced it.
#[derive(Debug, Clone)]
pub struct ParentTerm {
    h: LocalOperator,
    mu: Vec<usize>,
    nu: Vec<usize>,
}

impl ParentTerm {
    /// The Hermitian positive-semidefinite term `h_j`.
    pub fn operator(&self) -> &LocalOperator {
        &self.h
    }

    /// Indices of the entangler-family terms acting on the vertex.
    pub fn mu(&self) -> &[usize] {
        &self.mu
    }

    /// Indices of the positive-family terms folded into `O_j`.
    pub fn nu(&self) -> &[usize] {
        &self.nu
    }
}

/// The parent Hamiltonian `H = sum_j h_j` of a model.
#[derive(Debug, Clone)]
pub struct ParentHamiltonian {
    terms: Vec<ParentTerm>,
    n: usize,
    beta: f64,
    t: f64,
}

impl ParentHamiltonian {
    /// Per-vertex terms, indexed by vertex.
    pub fn terms(&self) -> &[ParentTerm] {
        &self.terms
    }

    /// Number of qubits.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    /// Whether the Hamiltonian has no terms.
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// The `beta` the terms were built at.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The `t` the terms were built at.
    pub fn t(&self) -> f64 {
        self.t
    }

    /// Applies `H` to a full-register vector without forming a dense matrix.
    pub fn apply(&self, psi: &[C64]) -> Result<Vec<C64>, StateError> {
        let dim = 1usize << self.n;
        if psi.len() != dim {
            return Err(StateError::DimensionMismatch {
                got: psi.len(),
                n: self.n,
            });
        }
        let mut out = vec![C64::new(0.0, 0.0); dim];
        for term in &self.terms {
            let mut tmp = psi.to_vec();
            term.h.apply(&mut tmp, self.n)?;
            for (o, t) in out.iter_mut().zip(tmp.iter()) {
                *o += t;
            }
        }
        Ok(out)
    }

    /// Dense `2^N x 2^N` matrix of `H`, guarded by the dense budget.
    pub fn dense(&self, budget: &Budget) -> Result<CMat, StateError> {
        if self.n > budget.max_dense_qubits {
            return Err(StateError::DenseTooLarge {
                n: self.n,
                cap: budget.max_dense_qubits,
            });
        }
        let dim = 1usize << self.n;
        let mut h = CMat::zeros(dim, dim);
        for term in &self.terms {
            h += term.h.embed(self.n)?;
        }
        Ok(h)
    }

    /// Energy `<psi|H|psi>` of a normalized state.
    pub fn energy(&self, state: &StateVector) -> Result<f64, StateError> {
        let mut e = 0.0;
        for term in &self.terms {
            e += expectation(&term.h, state)?.re;
        }
        Ok(e)
    }

    /// Largest per-term expectation `max_j |<psi|h_j|psi>|`; zero for the
    /// model state up to rounding.
    pub fn max_term_residual(&self, state: &StateVector) -> Result<f64, StateError> {
        let mut worst: f64 = 0.0;
        for term in &self.terms {
            worst = worst.max(expectation(&term.h, state)?.norm());
        }
        Ok(worst)
    }
}

// The rank-1 hole projector `1 - |phi_j><phi_j|` on vertex j.
fn vertex_hole_projector(model: &Model, j: usize) -> Result<LocalOperator, StateError> {
    let phi = &model.product_state[j];
    let mut pi = linalg::eye(2);
    for r in 0..2 {
        for c in 0..2 {
            pi[(r, c)] -= phi[r] * phi[c].conj();
        }
    }
    Ok(LocalOperator::new(vec![j], pi)?)
}

/// Builds the parent Hamiltonian `H(beta, t) = sum_j O_j' Pi_j O_j`.
///
/// Each term is symmetrized exactly, trimmed to its numerically minimal
/// support, and validated positive semidefinite (min eigenvalue >= -1e-10).
pub fn build_parent_hamiltonian(model: &Model) -> Result<ParentHamiltonian, StateError> {
    let n = model.n();
    let mut terms = Vec::with_capacity(n);
    for j in 0..n {
        let (mu, nu) = mu_nu_sets(model, j)?;
        let o = build_o_j(model, j)?;
        let pi = vertex_hole_projector(model, j)?;
        let raw = o.dagger().compose(&pi)?.compose(&o)?;
        let herm = (raw.matrix() + raw.matrix().adjoint()).scale(0.5);
        let h = LocalOperator::new(raw.support().to_vec(), herm)?
            .minimize_support(SUPPORT_TRIM_TOL);
        let min_eig = eigh(h.matrix())?.values[0];
        if min_eig < -TERM_PSD_TOL {
            return Err(StateError::Operator(OperatorError::TermNotPsd {
                index: j,
                min_eig,
            }));
        }
        terms.push(ParentTerm { h, mu, nu });
    }
    Ok(ParentHamiltonian {
        terms,
        n,
        beta: model.beta,
        t: model.t,
    })
}

// Per-vertex data for re-evaluating h_j(beta) on a fixed support:
// h_j(beta) = P(beta) M P(beta) with M = U' Pi_j U independent of beta and
// P(beta) = e^{-beta A}, A = sum of the nu_j positive terms.
#[derive(Debug, Clone)]
struct BetaTermCache {
    support: Vec<usize>,
    conjugated_hole: CMat,
    k1_sum: Eigh,
    mu: Vec<usize>,
    nu: Vec<usize>,
}

/// The one-parameter family `beta -> H(beta, t)` at fixed `t`, cached so each
/// evaluation costs only small spectral reassemblies instead of fresh
/// operator exponentials.
#[derive(Debug, Clone)]
pub struct BetaParentFamily {
    terms: Vec<BetaTermCache>,
    n: usize,
    t: f64,
}

impl BetaParentFamily {
    /// Prepares the cache from a model; the model's own `beta` is ignored.
    pub fn new(model: &Model) -> Result<Self, StateError> {
        let n = model.n();
        let mut terms = Vec::with_capacity(n);
        for j in 0..n {
            let (mu, nu) = mu_nu_sets(model, j)?;
            let mut support = vec![j];
            for &m in &mu {
                support = union_support(&support, model.k2.terms()[m].support());
            }
            for &m in &nu {
                support = union_support(&support, model.k1.terms()[m].support());
            }
            let dim = 1usize << support.len();
            let mut u = linalg::eye(dim);
            for &m in &mu {
                let f = herm_exp(&model.k2.terms()[m], C64::new(0.0, -model.t))?
                    .promote(&support)?;
                u *= f.matrix();
            }
            let pi = vertex_hole_projector(model, j)?.promote(&support)?;
            let conj = u.adjoint() * pi.matrix() * &u;
            let conjugated_hole = (&conj + conj.adjoint()).scale(0.5);
            let mut a = CMat::zeros(dim, dim);
            for &m in &nu {
                a += model.k1.terms()[m].promote(&support)?.matrix();
            }
            let k1_sum = eigh(&a)?;
            terms.push(BetaTermCache {
                support,
                conjugated_hole,
                k1_sum,
                mu,
                nu,
            });
        }
        Ok(Self { terms, n, t: model.t })
    }

    /// Number of terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    /// Whether the family has no terms.
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Number of qubits.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Evaluates `H(beta)` on the cached (untrimmed) supports. For
    /// `beta >= 0` every term satisfies `|h_j| <= 1` since the positive
    /// factors are contractions.
    pub fn hamiltonian_at(&self, beta: f64) -> Result<ParentHamiltonian, StateError> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for cache in &self.terms {
            let p = cache
                .k1_sum
                .apply_spectral(|lam| C64::new((-beta * lam).exp(), 0.0));
            let m = &p * &cache.conjugated_hole * &p;
            let herm = (&m + m.adjoint()).scale(0.5);
            terms.push(ParentTerm {
                h: LocalOperator::new(cache.support.clone(), herm)?,
                mu: cache.mu.clone(),
                nu: cache.nu.clone(),
            });
        }
        Ok(ParentHamiltonian {
            terms,
            n: self.n,
            beta,
            t: self.t,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::models::Fixture;
    use crate::state::build_state;

    #[test]
    fn product_fixture_terms_are_hole_projectors() {
        let m = Fixture::Prod(4).model(0.0).unwrap();
        let parent = build_parent_hamiltonian(&m).unwrap();
        for (j, term) in parent.terms().iter().enumerate() {
            assert_eq!(term.operator().support(), &[j]);
            let want = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
            ]));
            assert!(max_abs(&(term.operator().matrix() - want)) < 1e-15);
        }
        // Eigenvalues of H count excited vertices: spectrum {0, 1, ..., 4}
        // with a unit gap above a unique kernel vector.
        let dense = parent.dense(&Budget::default()).unwrap();
        let eig = eigh(&dense).unwrap();
        assert!(eig.values[0].abs() < 1e-12);
        assert!((eig.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn terms_annihilate_the_built_state() {
        let cases: Vec<(Fixture, Vec<f64>)> = vec![
            (Fixture::Chain4, vec![0.0, 0.1, 0.3]),
            (Fixture::Gibbs4, vec![0.0, 0.2, 0.4]),
            (Fixture::Chain4Hc, vec![0.0, 0.3]),
            (Fixture::Gram3, vec![0.0, 0.3]),
            (Fixture::Prod(4), vec![0.0]),
        ];
        for (fx, betas) in cases {
            for beta in betas {
                let m = fx.model(beta).unwrap();
                let s = build_state(&m).unwrap();
                let parent = build_parent_hamiltonian(&m).unwrap();
                assert!(
                    parent.max_term_residual(&s).unwrap() <= 1e-9,
                    "{} beta={beta}",
                    fx.name()
                );
                // Stronger vector-norm annihilation per term.
                for term in parent.terms() {
                    let mut v: Vec<C64> = s.amplitudes().iter().copied().collect();
                    term.h.apply(&mut v, m.n()).unwrap();
                    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                    assert!(norm <= 1e-9, "{} beta={beta}: |h psi| = {norm}", fx.name());
                }
            }
        }
    }

    #[test]
    fn term_support_stays_inside_entangler_support() {
        let m = Fixture::Chain4.model(0.3).unwrap();
        let parent = build_parent_hamiltonian(&m).unwrap();
        for (j, term) in parent.terms().iter().enumerate() {
            let o = crate::state::build_o_j(&m, j).unwrap();
            let allowed = union_support(o.support(), &[j]);
            for s in term.operator().support() {
                assert!(allowed.contains(s), "term {j} leaks to site {s}");
            }
        }
    }

    #[test]
    fn chain_terms_at_beta_zero_are_commuting_projectors() {
        let m = Fixture::Chain4.model(0.0).unwrap();
        let s = build_state(&m).unwrap();
        let parent = build_parent_hamiltonian(&m).unwrap();
        for term in parent.terms() {
            let sq = term.operator().compose(term.operator()).unwrap();
            let promoted = term.operator().promote(sq.support()).unwrap();
            assert!(max_abs(&(sq.matrix() - promoted.matrix())) < 1e-10);
            assert!(expectation(term.operator(), &s).unwrap().norm() <= 1e-10);
        }
        for a in parent.terms() {
            for b in parent.terms() {
                assert!(a.operator().commutator_norm(b.operator()).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn gibbs_kernel_is_unique_and_matches_state() {
        let m = Fixture::Gibbs4.model(0.4).unwrap();
        let s = build_state(&m).unwrap();
        let parent = build_parent_hamiltonian(&m).unwrap();
        let dense = parent.dense(&Budget::default()).unwrap();
        let eig = eigh(&dense).unwrap();
        assert!(eig.values[0].abs() <= 1e-9);
        assert!(eig.values[1] > 1e-8, "kernel not unique: {}", eig.values[1]);
        let dim = 1usize << m.n();
        let overlap: C64 = (0..dim)
            .map(|i| eig.vectors[(i, 0)].conj() * s.amplitudes()[i])
            .sum();
        assert!(overlap.norm_sqr() >= 1.0 - 1e-9);
    }

    #[test]
    fn beta_shift_is_a_positive_conjugation() {
        // h_j(beta + tau) = D h_j(beta) D with D = e^{-tau * sum_nu kappa_1}.
        let (beta, tau) = (0.1, 0.15);
        let base = Fixture::Chain4.model(beta).unwrap();
        let shifted = base.with_beta(beta + tau).unwrap();
        let family = BetaParentFamily::new(&base).unwrap();
        let at_base = build_parent_hamiltonian(&base).unwrap();
        let at_shift = build_parent_hamiltonian(&shifted).unwrap();
        for j in 0..base.n() {
            let support = &family.terms[j].support;
            let d = family.terms[j]
                .k1_sum
                .apply_spectral(|lam| C64::new((-tau * lam).exp(), 0.0));
            let hb = at_base.terms()[j].operator().promote(support).unwrap();
            let hs = at_shift.terms()[j].operator().promote(support).unwrap();
            let conj = &d * hb.matrix() * &d;
            assert!(max_abs(&(hs.matrix() - conj)) < 1e-10, "term {j}");
        }
    }

    #[test]
    fn cached_family_matches_fresh_builds() {
        let m = Fixture::Chain4.model(0.0).unwrap();
        let family = BetaParentFamily::new(&m).unwrap();
        for beta in [0.0, 0.2, 0.45] {
            let cached = family.hamiltonian_at(beta).unwrap();
            let fresh = build_parent_hamiltonian(&m.with_beta(beta).unwrap()).unwrap();
            for j in 0..m.n() {
                let support = &family.terms[j].support;
                let a = cached.terms()[j].operator().promote(support).unwrap();
                let b = fresh.terms()[j].operator().promote(support).unwrap();
                assert!(
                    max_abs(&(a.matrix() - b.matrix())) < 1e-10,
                    "beta={beta} term {j}"
                );
            }
        }
    }

    #[test]
    fn dense_budget_guard() {
        let m = Fixture::Chain4.model(0.1).unwrap();
        let parent = build_parent_hamiltonian(&m).unwrap();
        let tight = Budget {
            max_state_qubits: 14,
            max_dense_qubits: 3,
        };
        assert!(matches!(
            parent.dense(&tight),
            Err(StateError::DenseTooLarge { .. })
        ));
    }

    #[test]
    fn entangler_map_is_invertible() {
        let m = Fixture::Chain4.model(0.3).unwrap();
        for j in 0..m.n() {
            let o = crate::state::build_o_j(&m, j).unwrap();
            let gram = o.dagger().compose(&o).unwrap();
            let sigma_min = eigh(gram.matrix()).unwrap().values[0].max(0.0).sqrt();
            assert!(sigma_min > 0.0, "O_{j} lost invertibility");
        }
    }
}
