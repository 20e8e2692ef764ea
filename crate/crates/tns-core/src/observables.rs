//! Observables with construction-fixed expectation values on the built state:
//! region entangler maps `O_L`, the eigen-operator pair `Z+/Z-`, conjugated
//! null observables `Q` from vanishing-block operators, reduced-support
//! single-site variants, the Pauli-word completion map, and the Gram-matrix
//! completeness check.
//!
//! For a region `L` of `|0>`-prepared sites,
//! `O_L = prod_{n in mu(L)} e^{-i t kappa_2,n}  prod_{m in nu(L)} e^{-beta kappa_1,m}`
//! maps the built state into the image of `(x)_{j in L} |0><0|` (the
//! projection identity): every factor of the state preparation touching `L`
//! is cancelled, leaving those sites in their bare product state. Each
//! observable here is conjugated through `O_L` so the projection identity
//! pins its expectation to exactly 0 or 1.

use crate::linalg::{dagger, eye, max_abs, CMat, LinalgError, RMat, C64};
use crate::models::Model;
use crate::operators::{
    herm_exp, pauli_decompose, pauli_recompose, union_support, LocalOperator, OperatorError,
    Pauli, PauliWord,
};
use crate::state::{expectation, mu_nu_sets, StateError, StateVector};
use thiserror::Error;

/// Largest admissible weight on `|1>` for a site that must be prepared in
/// `|0>`.
const ZERO_STATE_TOL: f64 = 1e-12;
/// Threshold below which a `|0>`-block of the sandwiched operator counts as
/// vanishing.
const VANISHING_TOL: f64 = 1e-12;
/// Hermiticity required of the sandwiched operators `P` and `P'`.
const HERM_TOL: f64 = 1e-12;
/// Pauli coefficients at or below this magnitude are dropped from stored
/// expansions; the dropped mass is recorded on the expansion.
const EXPANSION_DROP: f64 = 1e-13;
/// Largest support (in sites) ever materialized as a dense matrix here.
const DENSE_SUPPORT_CAP: usize = 10;
/// Largest qubit count admitted to the completeness Gram (`4^N` operators).
pub const GRAM_QUBIT_CAP: usize = 4;
/// Smallest singular value of the Gram matrix counted as nonsingular.
pub const GRAM_SINGULAR_TOL: f64 = 1e-8;

/// Errors from observable construction.
#[derive(Debug, Error)]
pub enum ObservableError {
    #[error("region must be nonempty")]
    EmptyRegion,
    #[error("region site {site} out of range for {n} qubits")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("product state at site {site} is not |0> (weight {weight:.3e} on |1>)")]
    ProductStateNotZero { site: usize, weight: f64 },
    #[error("operator would span {sites} sites, exceeding the dense cap of {cap}")]
    SupportTooLarge { sites: usize, cap: usize },
    #[error("sandwiched operator acts on site {site} outside the region")]
    SupportOutsideRegion { site: usize },
    #[error("sandwiched operator must be Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error(
        "no region site has a vanishing |0>-block: min over sites of \
         max|<0|P|0>_j| is {min_element:.3e}"
    )]
    NoVanishingElement { min_element: f64 },
    #[error("the detached operator acts on the designated site {site}")]
    PrimeOverlapsSite { site: usize },
    #[error("word has {got} letters, model has {expected} qubits")]
    WordLength { expected: usize, got: usize },
    #[error("{n} qubits exceed the completeness-Gram budget of {cap}")]
    GramTooLarge { n: usize, cap: usize },
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which construction produced an [`ObservableSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableKind {
    /// Hermitian part of the conjugated all-z word; expectation 1.
    Zplus,
    /// Anti-Hermitian part (over `2i`) of the same; expectation 0.
    Zminus,
    /// Adjoint-conjugated vanishing-block operator on a region; expectation 0.
    Qlambda,
    /// Single-site variant inserting `sigma_x` at the designated site.
    Qj1,
    /// Single-site variant inserting `sigma_y` at the designated site.
    Qj2,
    /// Single-site variant inserting `1 - sigma_z` at the designated site.
    Qj3,
    /// The identity; expectation 1. Completion image of the empty word.
    Identity,
}

impl ObservableKind {
    /// Lowercase label used in reports and by the CLI.
    pub fn label(self) -> &'static str {
        match self {
            ObservableKind::Zplus => "zplus",
            ObservableKind::Zminus => "zminus",
            ObservableKind::Qlambda => "qlambda",
            ObservableKind::Qj1 => "qj1",
            ObservableKind::Qj2 => "qj2",
            ObservableKind::Qj3 => "qj3",
            ObservableKind::Identity => "identity",
        }
    }
}

impl std::fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// The single-site factor inserted at the designated site of a reduced-support
/// null observable: `sigma_x`, `sigma_y`, or `1 - sigma_z` (twice the `|1>`
/// population). All three have a vanishing `<0|.|0>` element, which is what
/// fixes the expectation at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QjVariant {
    X,
    Y,
    OneMinusZ,
}

impl QjVariant {
    /// All variants in canonical order.
    pub const ALL: [QjVariant; 3] = [QjVariant::X, QjVariant::Y, QjVariant::OneMinusZ];

    /// Canonical 1-based index used in reports and the CLI.
    pub fn index(self) -> u8 {
        match self {
            QjVariant::X => 1,
            QjVariant::Y => 2,
            QjVariant::OneMinusZ => 3,
        }
    }

    /// Inverse of [`QjVariant::index`].
    pub fn from_index(i: u8) -> Option<QjVariant> {
        QjVariant::ALL.get(i as usize - 1).copied()
    }

    fn kind(self) -> ObservableKind {
        match self {
            QjVariant::X => ObservableKind::Qj1,
            QjVariant::Y => ObservableKind::Qj2,
            QjVariant::OneMinusZ => ObservableKind::Qj3,
        }
    }

    fn factor(self, j: usize) -> LocalOperator {
        let m = match self {
            QjVariant::X => Pauli::X.matrix(),
            QjVariant::Y => Pauli::Y.matrix(),
            QjVariant::OneMinusZ => eye(2) - Pauli::Z.matrix(),
        };
        LocalOperator::new(vec![j], m).expect("valid 1-site operator")
    }
}

/// Pauli-basis expansion of an observable over its support slots, in
/// lexicographic word order with near-zero coefficients dropped.
#[derive(Debug, Clone)]
pub struct PauliExpansion {
    /// Sites the word slots act on, in increasing order.
    pub support: Vec<usize>,
    /// Retained `(word, coefficient)` pairs, lexicographic in the word.
    pub coeffs: Vec<(PauliWord, f64)>,
    /// Total absolute mass of the dropped coefficients; bounds the
    /// reconstruction error in the largest-entry norm.
    pub truncation: f64,
}

impl PauliExpansion {
    /// Expands a local operator; coefficients at or below `1e-13` are dropped
    /// and their summed magnitude recorded as [`PauliExpansion::truncation`].
    pub fn of(op: &LocalOperator) -> Self {
        let mut coeffs = Vec::new();
        let mut truncation = 0.0;
        for (word, c) in pauli_decompose(op.matrix()) {
            if c.abs() > EXPANSION_DROP {
                coeffs.push((word, c));
            } else {
                truncation += c.abs();
            }
        }
        Self {
            support: op.support().to_vec(),
            coeffs,
            truncation,
        }
    }

    /// Rebuilds the operator from the retained coefficients.
    pub fn reconstruct(&self) -> Result<LocalOperator, ObservableError> {
        let m = pauli_recompose(&self.coeffs, self.support.len());
        Ok(LocalOperator::new(self.support.clone(), m)?)
    }

    /// Number of retained words.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    /// True when no word was retained.
    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// An observable whose expectation on the built state is fixed by
/// construction.
#[derive(Debug, Clone)]
pub struct ObservableSpec {
    /// Which construction produced it.
    pub kind: ObservableKind,
    /// The defining region: the conjugating map's region for `Z`/`Q` kinds,
    /// the designated site for the single-site variants, empty for the
    /// identity.
    pub lambda: Vec<usize>,
    /// The sandwiched operator for the `Q` kinds.
    pub p: Option<LocalOperator>,
    /// The materialized Hermitian observable.
    pub operator: LocalOperator,
    /// Its exact expectation on the built state (0 or 1).
    pub expected: f64,
    /// Pauli expansion of [`ObservableSpec::operator`].
    pub expansion: PauliExpansion,
}

impl ObservableSpec {
    fn new(
        kind: ObservableKind,
        lambda: Vec<usize>,
        p: Option<LocalOperator>,
        operator: LocalOperator,
        expected: f64,
    ) -> Self {
        let expansion = PauliExpansion::of(&operator);
        Self {
            kind,
            lambda,
            p,
            operator,
            expected,
            expansion,
        }
    }

    /// `|<state|operator|state> - expected|` on a normalized state.
    pub fn expectation_deviation(&self, state: &StateVector) -> Result<f64, ObservableError> {
        let val = expectation(&self.operator, state)?;
        Ok((val - C64::new(self.expected, 0.0)).norm())
    }
}

/// Factor arrangement of a region entangler map `O = U P` with `U` the
/// unitary (`kappa_2`) product and `P` the positive (`kappa_1`) product.
#[derive(Clone, Copy)]
enum EntanglerForm {
    /// `O = U P`: `e^{-i t kappa_2}` factors left of `e^{-beta kappa_1}`.
    Direct,
    /// `O^dag = P U^dag`: `e^{-beta kappa_1}` factors left of
    /// `e^{+i t kappa_2}`.
    Adjoint,
    /// `O^{-1} = P^{-1} U^dag`: `e^{+beta kappa_1}` factors left of
    /// `e^{+i t kappa_2}`.
    Inverse,
}

/// Validated region data: sorted deduplicated sites plus the union index
/// sets of the per-site entangler maps.
struct RegionSets {
    lambda: Vec<usize>,
    mu: Vec<usize>,
    nu: Vec<usize>,
}

/// Validates the region (nonempty, in range, `|0>`-prepared) and collects the
/// union `mu`/`nu` index sets.
fn prepare_region(model: &Model, lambda: &[usize]) -> Result<RegionSets, ObservableError> {
    let n = model.n();
    let mut sites = lambda.to_vec();
    sites.sort_unstable();
    sites.dedup();
    if sites.is_empty() {
        return Err(ObservableError::EmptyRegion);
    }
    let mut mu = Vec::new();
    let mut nu = Vec::new();
    for &j in &sites {
        if j >= n {
            return Err(ObservableError::SiteOutOfRange { site: j, n });
        }
        require_zero_site(model, j)?;
        let (mu_j, nu_j) = mu_nu_sets(model, j)?;
        mu.extend(mu_j);
        nu.extend(nu_j);
    }
    mu.sort_unstable();
    mu.dedup();
    nu.sort_unstable();
    nu.dedup();
    Ok(RegionSets {
        lambda: sites,
        mu,
        nu,
    })
}

fn require_zero_site(model: &Model, j: usize) -> Result<(), ObservableError> {
    let weight = model.product_state[j][1].norm();
    if weight > ZERO_STATE_TOL {
        return Err(ObservableError::ProductStateNotZero { site: j, weight });
    }
    Ok(())
}

/// Composes the requested form of the entangler map onto the union of the
/// factor supports and `ensure`.
fn build_entangler(
    model: &Model,
    sets: &RegionSets,
    form: EntanglerForm,
    ensure: &[usize],
) -> Result<LocalOperator, ObservableError> {
    let mut target = ensure.to_vec();
    for &m in &sets.mu {
        target.extend(model.k2.terms()[m].support());
    }
    for &m in &sets.nu {
        target.extend(model.k1.terms()[m].support());
    }
    target.sort_unstable();
    target.dedup();
    if target.len() > DENSE_SUPPORT_CAP {
        return Err(ObservableError::SupportTooLarge {
            sites: target.len(),
            cap: DENSE_SUPPORT_CAP,
        });
    }
    // Factor signs and cross-family order per form; within one family the
    // factors commute, so ascending index order is canonical.
    let (unitary_z, positive_z, unitary_first) = match form {
        EntanglerForm::Direct => (C64::new(0.0, -model.t), C64::new(-model.beta, 0.0), true),
        EntanglerForm::Adjoint => (C64::new(0.0, model.t), C64::new(-model.beta, 0.0), false),
        EntanglerForm::Inverse => (C64::new(0.0, model.t), C64::new(model.beta, 0.0), false),
    };
    let mut factors: Vec<LocalOperator> = Vec::with_capacity(sets.mu.len() + sets.nu.len());
    let push_unitaries = |factors: &mut Vec<LocalOperator>| -> Result<(), ObservableError> {
        for &m in &sets.mu {
            factors.push(herm_exp(&model.k2.terms()[m], unitary_z)?);
        }
        Ok(())
    };
    let push_positives = |factors: &mut Vec<LocalOperator>| -> Result<(), ObservableError> {
        for &m in &sets.nu {
            factors.push(herm_exp(&model.k1.terms()[m], positive_z)?);
        }
        Ok(())
    };
    if unitary_first {
        push_unitaries(&mut factors)?;
        push_positives(&mut factors)?;
    } else {
        push_positives(&mut factors)?;
        push_unitaries(&mut factors)?;
    }
    let mut acc = LocalOperator::scalar_identity();
    for f in &factors {
        acc = acc.compose(f)?;
    }
    Ok(acc.promote(&target)?)
}

/// The invertible region entangler map
/// `O_L = prod_{n in mu(L)} e^{-i t kappa_2,n} prod_{m in nu(L)} e^{-beta kappa_1,m}`
/// with `mu(L)`/`nu(L)` the unions of the per-site index sets. Its support
/// always contains the region.
pub fn build_o_lambda(model: &Model, lambda: &[usize]) -> Result<LocalOperator, ObservableError> {
    let sets = prepare_region(model, lambda)?;
    build_entangler(model, &sets, EntanglerForm::Direct, &sets.lambda)
}

/// 2-norm of the part of `O_L |state>` outside the image of
/// `(x)_{j in L} |0><0|`. Zero in exact arithmetic whenever `state` is the
/// model's built state (the projection identity).
pub fn projection_residual(
    model: &Model,
    lambda: &[usize],
    state: &StateVector,
) -> Result<f64, ObservableError> {
    let n = model.n();
    if state.n() != n {
        return Err(ObservableError::State(StateError::DimensionMismatch {
            got: state.amplitudes().len(),
            n,
        }));
    }
    let o = build_o_lambda(model, lambda)?;
    let mut v: Vec<C64> = state.amplitudes().iter().copied().collect();
    o.apply(&mut v, n)?;
    let mask: usize = lambda
        .iter()
        .map(|&j| 1usize << (n - 1 - j))
        .fold(0, |acc, bit| acc | bit);
    let defect: f64 = v
        .iter()
        .enumerate()
        .filter(|&(idx, _)| idx & mask != 0)
        .map(|(_, z)| z.norm_sqr())
        .sum();
    Ok(defect.sqrt())
}

/// The eigen-observable pair of a region: with
/// `Z = O_L^{-1} ((x)_{j in L} sigma_z^j) O_L`, returns
/// `(Z + Z^dag)/2` (expectation 1) and `(Z - Z^dag)/2i` (expectation 0).
/// The built state is a right eigenvector of `Z` and a left eigenvector of
/// `Z^dag`, both with eigenvalue 1, which fixes both expectations.
pub fn build_z_pm(
    model: &Model,
    lambda: &[usize],
) -> Result<(ObservableSpec, ObservableSpec), ObservableError> {
    let sets = prepare_region(model, lambda)?;
    let o = build_entangler(model, &sets, EntanglerForm::Direct, &sets.lambda)?;
    let o_inv = build_entangler(model, &sets, EntanglerForm::Inverse, &sets.lambda)?;
    let z_word = LocalOperator::from_pauli(&sets.lambda, &vec![Pauli::Z; sets.lambda.len()])?;
    let z = o_inv.compose(&z_word)?.compose(&o)?;
    let z_dag = z.dagger();
    // (a_ij + conj(a_ji))/2 is exactly Hermitian entrywise, so both parts
    // meet the Hermiticity contract with zero deviation.
    let plus = (z.matrix() + z_dag.matrix()) * C64::new(0.5, 0.0);
    let minus = (z.matrix() - z_dag.matrix()) * C64::new(0.0, -0.5);
    let support = z.support().to_vec();
    Ok((
        ObservableSpec::new(
            ObservableKind::Zplus,
            sets.lambda.clone(),
            None,
            LocalOperator::new(support.clone(), plus)?,
            1.0,
        ),
        ObservableSpec::new(
            ObservableKind::Zminus,
            sets.lambda,
            None,
            LocalOperator::new(support, minus)?,
            0.0,
        ),
    ))
}

/// Largest entry magnitude of the `|0>`-block `<0|P|0>_j`, the partial
/// expectation of `P` on qubit `j`. For `j` outside the support the block is
/// `P` itself.
fn zero_block_magnitude(p: &LocalOperator, j: usize) -> f64 {
    let Some(slot) = p.support().iter().position(|&s| s == j) else {
        return max_abs(p.matrix());
    };
    let k = p.arity();
    let low_bits = k - 1 - slot;
    // Re-inserts a zero bit at the slot's position.
    let insert = |idx: usize| -> usize {
        let high = idx >> low_bits;
        let low = idx & ((1usize << low_bits) - 1);
        (high << (low_bits + 1)) | low
    };
    let dim_r = 1usize << (k - 1);
    let mut best = 0.0f64;
    for r in 0..dim_r {
        for c in 0..dim_r {
            best = best.max(p.matrix()[(insert(r), insert(c))].norm());
        }
    }
    best
}

/// The conjugated null observable `Q = O_L^dag P O_L` for a Hermitian `P`
/// supported in the region with a vanishing `|0>`-block on at least one
/// region site; its expectation on the built state is exactly 0.
pub fn build_q_lambda(
    model: &Model,
    lambda: &[usize],
    p: &LocalOperator,
) -> Result<ObservableSpec, ObservableError> {
    let sets = prepare_region(model, lambda)?;
    if let Some(&site) = p
        .support()
        .iter()
        .find(|s| sets.lambda.binary_search(s).is_err())
    {
        return Err(ObservableError::SupportOutsideRegion { site });
    }
    let deviation = p.hermiticity_deviation();
    if deviation > HERM_TOL {
        return Err(ObservableError::NotHermitian { deviation });
    }
    let min_element = sets
        .lambda
        .iter()
        .map(|&j| zero_block_magnitude(p, j))
        .fold(f64::INFINITY, f64::min);
    if min_element > VANISHING_TOL {
        return Err(ObservableError::NoVanishingElement { min_element });
    }
    let o = build_entangler(model, &sets, EntanglerForm::Direct, &sets.lambda)?;
    let o_dag = build_entangler(model, &sets, EntanglerForm::Adjoint, &sets.lambda)?;
    let q = o_dag.compose(p)?.compose(&o)?;
    let operator = LocalOperator::new(q.support().to_vec(), hermitian_part(q.matrix()))?;
    Ok(ObservableSpec::new(
        ObservableKind::Qlambda,
        sets.lambda,
        Some(p.clone()),
        operator,
        0.0,
    ))
}

/// Reduced-support null observable
/// `Q = O_j^dag (V_j P') O_j` with `V_j` the variant factor at the designated
/// site and `P'` a Hermitian operator away from it; expectation exactly 0,
/// support the joint support of `O_j` and `P'`.
pub fn build_q_j(
    model: &Model,
    j: usize,
    p_prime: &LocalOperator,
    variant: QjVariant,
) -> Result<ObservableSpec, ObservableError> {
    let n = model.n();
    if j >= n {
        return Err(ObservableError::SiteOutOfRange { site: j, n });
    }
    if p_prime.support().contains(&j) {
        return Err(ObservableError::PrimeOverlapsSite { site: j });
    }
    let deviation = p_prime.hermiticity_deviation();
    if deviation > HERM_TOL {
        return Err(ObservableError::NotHermitian { deviation });
    }
    require_zero_site(model, j)?;
    let (mu, nu) = mu_nu_sets(model, j)?;
    let sets = RegionSets {
        lambda: vec![j],
        mu,
        nu,
    };
    let ensure = union_support(&[j], p_prime.support());
    let o = build_entangler(model, &sets, EntanglerForm::Direct, &ensure)?;
    let o_dag = build_entangler(model, &sets, EntanglerForm::Adjoint, &ensure)?;
    let middle = variant.factor(j).compose(p_prime)?;
    let q = o_dag.compose(&middle)?.compose(&o)?;
    let operator = LocalOperator::new(q.support().to_vec(), hermitian_part(q.matrix()))?;
    Ok(ObservableSpec::new(
        variant.kind(),
        vec![j],
        Some(p_prime.clone()),
        operator,
        0.0,
    ))
}

/// Deterministic completion map from Pauli words (length = qubit count) to
/// observables with known expectations: the empty word maps to the identity,
/// all-z words to the region's `Z+`, and any word with an `x` or `y` letter
/// to the region's `Q` (the vanishing-block condition then holds
/// automatically at that letter's site).
pub fn complete_map(model: &Model, word: &PauliWord) -> Result<ObservableSpec, ObservableError> {
    let n = model.n();
    if word.len() != n {
        return Err(ObservableError::WordLength {
            expected: n,
            got: word.len(),
        });
    }
    let active = word.active_slots();
    if active.is_empty() {
        return Ok(ObservableSpec::new(
            ObservableKind::Identity,
            Vec::new(),
            None,
            LocalOperator::scalar_identity(),
            1.0,
        ));
    }
    let letters: Vec<Pauli> = active.iter().map(|&s| word.0[s]).collect();
    if letters.iter().all(|&p| p == Pauli::Z) {
        Ok(build_z_pm(model, &active)?.0)
    } else {
        let p = LocalOperator::from_pauli(&active, &letters)?;
        build_q_lambda(model, &active, &p)
    }
}

/// Conditioning report of the completeness Gram matrix.
#[derive(Debug, Clone)]
pub struct GramReport {
    /// Number of mapped operators, `4^N`.
    pub dim: usize,
    /// Smallest singular value of `B`.
    pub sigma_min: f64,
    /// `sigma_max / sigma_min`; infinite when `sigma_min` is zero.
    pub cond: f64,
    /// True iff `sigma_min` exceeds [`GRAM_SINGULAR_TOL`].
    pub nonsingular: bool,
}

/// Builds the Gram matrix `B[n, m] = tr(Q_n^dag Q_m) / 2^N` of the completion
/// map's images over all `4^N` Pauli words in lexicographic order and reports
/// its extreme singular values. `B` is the identity at `beta = 0`; its
/// determinant is analytic in `beta`, so singular points are isolated and a
/// near-singular report signals a measure-zero parameter choice rather than a
/// structural failure.
pub fn completeness_gram(model: &Model) -> Result<GramReport, ObservableError> {
    let n = model.n();
    if n > GRAM_QUBIT_CAP {
        return Err(ObservableError::GramTooLarge {
            n,
            cap: GRAM_QUBIT_CAP,
        });
    }
    let count = 1usize << (2 * n);
    let scale = 1.0 / (1u64 << n) as f64;
    let mut embedded: Vec<CMat> = Vec::with_capacity(count);
    for idx in 0..count {
        let word = PauliWord::from_lex_index(idx, n);
        let spec = complete_map(model, &word)?;
        embedded.push(spec.operator.embed(n)?);
    }
    let mut b = RMat::zeros(count, count);
    for row in 0..count {
        for col in row..count {
            // Hermitian entries: the real inner product is the full trace.
            let entry = crate::linalg::inner_herm(&embedded[row], &embedded[col]) * scale;
            b[(row, col)] = entry;
            b[(col, row)] = entry;
        }
    }
    let eigen = b.symmetric_eigen();
    let sigma_min = eigen.eigenvalues.iter().fold(f64::INFINITY, |a, &l| a.min(l.abs()));
    let sigma_max = eigen.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let cond = if sigma_min > 0.0 {
        sigma_max / sigma_min
    } else {
        f64::INFINITY
    };
    Ok(GramReport {
        dim: count,
        sigma_min,
        cond,
        nonsingular: sigma_min > GRAM_SINGULAR_TOL,
    })
}

/// Exactly Hermitian part `(M + M^dag)/2`; removes the rounding skew of
/// operator products that are Hermitian in exact arithmetic.
fn hermitian_part(m: &CMat) -> CMat {
    (m + dagger(m)) * C64::new(0.5, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Graph;
    use crate::models::{ising_edge, projector11, zero_state, Fixture, Model};
    use crate::operators::CommutingFamily;
    use crate::state::build_state;

    /// Path chain with the standard edge families, `|0>` product state, and
    /// adjustable parameters.
    fn chain_z0(n: usize, beta: f64, t: f64) -> Model {
        let g = Graph::path(n);
        let k2 = CommutingFamily::new(
            &g,
            g.edges().iter().map(|&(a, b)| projector11(a, b)).collect(),
            1,
        )
        .unwrap();
        let k1 = CommutingFamily::new(
            &g,
            g.edges()
                .iter()
                .map(|&(a, b)| ising_edge(a, b, false))
                .collect(),
            1,
        )
        .unwrap();
        Model::new(g, k1, k2, beta, t, vec![zero_state(); n]).unwrap()
    }

    fn gibbs_z0(beta: f64) -> Model {
        let mut m = Fixture::Gibbs4.model(beta).unwrap();
        m.product_state = vec![zero_state(); 4];
        m
    }

    fn pauli_on(sites: &[usize], letters: &[Pauli]) -> LocalOperator {
        LocalOperator::from_pauli(sites, letters).unwrap()
    }

    #[test]
    fn zero_parameters_make_identity_maps() {
        let m = chain_z0(4, 0.0, 0.0);
        let o = build_o_lambda(&m, &[1]).unwrap();
        assert!(max_abs(&(o.matrix() - eye(o.matrix().nrows()))) < 1e-12);
        let s = build_state(&m).unwrap();
        assert!(projection_residual(&m, &[1], &s).unwrap() < 1e-12);
        // The eigen-pair collapses to the bare z word.
        let (plus, minus) = build_z_pm(&m, &[1]).unwrap();
        let z1 = pauli_on(&[1], &[Pauli::Z]).promote(plus.operator.support()).unwrap();
        assert!(max_abs(&(plus.operator.matrix() - z1.matrix())) < 1e-12);
        assert!(max_abs(minus.operator.matrix()) < 1e-12);
        assert!(plus.expectation_deviation(&s).unwrap() < 1e-12);
        // The null observable collapses to the sandwiched operator itself.
        let q = build_q_lambda(&m, &[1], &pauli_on(&[1], &[Pauli::X])).unwrap();
        let x1 = pauli_on(&[1], &[Pauli::X]).promote(q.operator.support()).unwrap();
        assert!(max_abs(&(q.operator.matrix() - x1.matrix())) < 1e-12);
        assert!(q.expectation_deviation(&s).unwrap() < 1e-12);
        // Variant 3 with a detached identity collapses to 1 - sigma_z.
        let qj = build_q_j(&m, 1, &LocalOperator::scalar_identity(), QjVariant::OneMinusZ)
            .unwrap();
        let want = LocalOperator::new(vec![1], eye(2) - Pauli::Z.matrix())
            .unwrap()
            .promote(qj.operator.support())
            .unwrap();
        assert!(max_abs(&(qj.operator.matrix() - want.matrix())) < 1e-12);
        assert!(qj.expectation_deviation(&s).unwrap() < 1e-12);
    }

    #[test]
    fn projection_identity_holds_on_positive_filter_models() {
        let m = gibbs_z0(0.4);
        let s = build_state(&m).unwrap();
        assert!(projection_residual(&m, &[0], &s).unwrap() <= 1e-10);
        for lambda in [vec![1], vec![3], vec![0, 1], vec![0, 3], vec![1, 2]] {
            assert!(
                projection_residual(&m, &lambda, &s).unwrap() <= 1e-9,
                "{lambda:?}"
            );
        }
    }

    #[test]
    fn projection_identity_holds_on_entangled_models() {
        let m = Fixture::Chain4Hc.model(0.3).unwrap();
        let s = build_state(&m).unwrap();
        for lambda in [vec![0], vec![2], vec![1, 2], vec![0, 3], vec![0, 1, 2]] {
            assert!(
                projection_residual(&m, &lambda, &s).unwrap() <= 1e-9,
                "{lambda:?}"
            );
        }
    }

    #[test]
    fn full_region_map_collapses_to_all_zeros() {
        let m = Fixture::Chain4Hc.model(0.3).unwrap();
        let s = build_state(&m).unwrap();
        let o = build_o_lambda(&m, &[0, 1, 2, 3]).unwrap();
        let mut v: Vec<C64> = s.amplitudes().iter().copied().collect();
        o.apply(&mut v, 4).unwrap();
        let tail: f64 = v[1..].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(v[0].norm() > 0.1);
        assert!(tail <= 1e-10 * v[0].norm());
    }

    #[test]
    fn eigen_pair_expectations_are_pinned() {
        for (model, lambda) in [
            (gibbs_z0(0.4), vec![0, 1]),
            (Fixture::Chain4Hc.model(0.3).unwrap(), vec![1]),
            (Fixture::Chain4Hc.model(0.3).unwrap(), vec![0, 2]),
            (Fixture::Gram3.model(0.25).unwrap(), vec![0, 1, 2]),
        ] {
            let s = build_state(&model).unwrap();
            let (plus, minus) = build_z_pm(&model, &lambda).unwrap();
            assert!(
                plus.expectation_deviation(&s).unwrap() <= 1e-9,
                "plus {lambda:?}"
            );
            assert!(
                minus.expectation_deviation(&s).unwrap() <= 1e-9,
                "minus {lambda:?}"
            );
            assert!(plus.operator.hermiticity_deviation() <= 1e-12);
            assert!(minus.operator.hermiticity_deviation() <= 1e-12);
            assert_eq!(plus.kind, ObservableKind::Zplus);
            assert_eq!(minus.kind, ObservableKind::Zminus);
            assert_eq!(plus.expected, 1.0);
            assert_eq!(minus.expected, 0.0);
        }
    }

    #[test]
    fn zero_site_enforcement_rejects_other_product_states() {
        let m = Fixture::Chain4.model(0.2).unwrap(); // |+> product state
        assert!(matches!(
            build_z_pm(&m, &[0]),
            Err(ObservableError::ProductStateNotZero { site: 0, .. })
        ));
        assert!(matches!(
            build_q_j(&m, 1, &LocalOperator::scalar_identity(), QjVariant::X),
            Err(ObservableError::ProductStateNotZero { site: 1, .. })
        ));
    }

    #[test]
    fn vanishing_block_condition_gates_the_null_observables() {
        let m = chain_z0(4, 0.0, 0.0);
        // sigma_z has <0|P|0> = 1: rejected, and the measured magnitude rides
        // along in the error.
        match build_q_lambda(&m, &[1], &pauli_on(&[1], &[Pauli::Z])) {
            Err(ObservableError::NoVanishingElement { min_element }) => {
                assert!((min_element - 1.0).abs() < 1e-12)
            }
            other => panic!("expected rejection, got {other:?}"),
        }
        // A z (x) x word passes through the x site.
        let zx = pauli_on(&[0, 1], &[Pauli::Z, Pauli::X]);
        assert!(build_q_lambda(&m, &[0, 1], &zx).is_ok());
        // Support outside the region is structural.
        assert!(matches!(
            build_q_lambda(&m, &[0], &zx),
            Err(ObservableError::SupportOutsideRegion { site: 1 })
        ));
    }

    #[test]
    fn null_observables_annihilate_in_expectation() {
        let gibbs = gibbs_z0(0.4);
        let s = build_state(&gibbs).unwrap();
        let q = build_q_lambda(
            &gibbs,
            &[0, 1],
            &pauli_on(&[0, 1], &[Pauli::Y, Pauli::X]),
        )
        .unwrap();
        assert!(q.expectation_deviation(&s).unwrap() <= 1e-9);
        assert!(q.operator.hermiticity_deviation() <= 1e-12);

        let chain = Fixture::Chain4Hc.model(0.3).unwrap();
        let sc = build_state(&chain).unwrap();
        let qc = build_q_lambda(
            &chain,
            &[1, 2],
            &pauli_on(&[1, 2], &[Pauli::X, Pauli::Z]),
        )
        .unwrap();
        assert!(qc.expectation_deviation(&sc).unwrap() <= 1e-9);
    }

    #[test]
    fn single_site_variants_annihilate_in_expectation() {
        let plain = chain_z0(4, 0.2, std::f64::consts::PI);
        let hc = Fixture::Chain4Hc.model(0.3).unwrap();
        for model in [plain, hc] {
            let s = build_state(&model).unwrap();
            let p3 = pauli_on(&[3], &[Pauli::X]);
            for variant in QjVariant::ALL {
                let q = build_q_j(&model, 1, &p3, variant).unwrap();
                assert!(
                    q.expectation_deviation(&s).unwrap() <= 1e-9,
                    "variant {}",
                    variant.index()
                );
                assert_eq!(q.kind.label(), format!("qj{}", variant.index()));
            }
            // The detached operator may freely carry z letters; only the
            // designated site supplies the vanishing block.
            let qz = build_q_j(&model, 1, &pauli_on(&[3], &[Pauli::Z]), QjVariant::Y).unwrap();
            assert!(qz.expectation_deviation(&s).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn single_site_variant_rejects_overlap() {
        let m = chain_z0(4, 0.2, std::f64::consts::PI);
        assert!(matches!(
            build_q_j(&m, 1, &pauli_on(&[1], &[Pauli::X]), QjVariant::X),
            Err(ObservableError::PrimeOverlapsSite { site: 1 })
        ));
    }

    #[test]
    fn variant_support_is_contained_in_region_counterpart() {
        // At four sites the nu-regions of site 1 and of {1, 3} coincide, so
        // both supports saturate the whole chain and only the inclusion is
        // informative.
        let m4 = chain_z0(4, 0.2, std::f64::consts::PI);
        let qj4 = build_q_j(&m4, 1, &pauli_on(&[3], &[Pauli::X]), QjVariant::X).unwrap();
        let ql4 = build_q_lambda(
            &m4,
            &[1, 3],
            &pauli_on(&[1, 3], &[Pauli::X, Pauli::X]),
        )
        .unwrap();
        assert_eq!(qj4.operator.support(), &[0, 1, 2, 3]);
        assert_eq!(ql4.operator.support(), &[0, 1, 2, 3]);
        // Six sites separate the nu-regions and the inclusion turns strict.
        let m6 = chain_z0(6, 0.2, std::f64::consts::PI);
        let qj6 = build_q_j(&m6, 1, &pauli_on(&[3], &[Pauli::X]), QjVariant::X).unwrap();
        let ql6 = build_q_lambda(
            &m6,
            &[1, 3],
            &pauli_on(&[1, 3], &[Pauli::X, Pauli::X]),
        )
        .unwrap();
        assert_eq!(qj6.operator.support(), &[0, 1, 2, 3]);
        assert_eq!(ql6.operator.support(), &[0, 1, 2, 3, 4, 5]);
        let strict = qj6
            .operator
            .support()
            .iter()
            .all(|s| ql6.operator.support().contains(s))
            && qj6.operator.arity() < ql6.operator.arity();
        assert!(strict);
    }

    #[test]
    fn completion_map_assigns_kinds_by_letter_content() {
        let m = Fixture::Gram3.model(0.2).unwrap();
        let s = build_state(&m).unwrap();
        let id = complete_map(&m, &PauliWord::identity(3)).unwrap();
        assert_eq!(id.kind, ObservableKind::Identity);
        assert_eq!(id.expected, 1.0);
        assert!(id.expectation_deviation(&s).unwrap() <= 1e-12);
        let zz = complete_map(&m, &PauliWord(vec![Pauli::Z, Pauli::Z, Pauli::I])).unwrap();
        assert_eq!(zz.kind, ObservableKind::Zplus);
        assert_eq!(zz.lambda, vec![0, 1]);
        let xz = complete_map(&m, &PauliWord(vec![Pauli::X, Pauli::I, Pauli::Z])).unwrap();
        assert_eq!(xz.kind, ObservableKind::Qlambda);
        assert_eq!(xz.lambda, vec![0, 2]);
        assert!(xz.expectation_deviation(&s).unwrap() <= 1e-9);
        // Deterministic: a second pass reproduces the matrices exactly.
        let xz2 = complete_map(&m, &PauliWord(vec![Pauli::X, Pauli::I, Pauli::Z])).unwrap();
        assert_eq!(xz.operator.matrix(), xz2.operator.matrix());
        // Length mismatches are rejected.
        assert!(matches!(
            complete_map(&m, &PauliWord::identity(2)),
            Err(ObservableError::WordLength {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn gram_is_identity_without_positive_filters() {
        let m = Fixture::Gram3.model(0.0).unwrap();
        let report = completeness_gram(&m).unwrap();
        assert_eq!(report.dim, 64);
        assert!((report.sigma_min - 1.0).abs() <= 1e-10, "{}", report.sigma_min);
        assert!((report.cond - 1.0).abs() <= 1e-9);
        assert!(report.nonsingular);
    }

    #[test]
    fn gram_stays_nonsingular_at_positive_beta() {
        let report = completeness_gram(&Fixture::Gram3.model(0.3).unwrap()).unwrap();
        assert!(report.sigma_min > 1e-8, "{}", report.sigma_min);
        assert!(report.cond.is_finite());
        assert!(report.nonsingular);
        // Budget guard.
        assert!(matches!(
            completeness_gram(&Fixture::Prod(5).model(0.0).unwrap()),
            Err(ObservableError::GramTooLarge { n: 5, cap: 4 })
        ));
    }

    #[test]
    fn gram_conditioning_scan_reports_no_singular_points() {
        // The determinant is analytic in beta with isolated zeros; probe a
        // grid and report the worst conditioning rather than asserting any
        // particular recovery profile.
        let mut worst = (0.0f64, f64::INFINITY);
        for step in 0..=10 {
            let beta = 0.05 * step as f64;
            let report =
                completeness_gram(&Fixture::Gram3.model(beta).unwrap()).unwrap();
            if report.sigma_min < worst.1 {
                worst = (beta, report.sigma_min);
            }
            assert!(report.sigma_min > 1e-12, "beta {beta}");
        }
        println!("worst gram conditioning: sigma_min {} at beta {}", worst.1, worst.0);
    }

    #[test]
    fn expansions_reconstruct_their_operators() {
        let m = Fixture::Chain4Hc.model(0.3).unwrap();
        let (plus, minus) = build_z_pm(&m, &[1, 2]).unwrap();
        let q = build_q_lambda(&m, &[1], &pauli_on(&[1], &[Pauli::Y])).unwrap();
        let qj = build_q_j(&m, 2, &pauli_on(&[0], &[Pauli::X]), QjVariant::OneMinusZ).unwrap();
        for spec in [&plus, &minus, &q, &qj] {
            let rebuilt = spec.expansion.reconstruct().unwrap();
            assert_eq!(rebuilt.support(), spec.operator.support());
            assert!(
                max_abs(&(rebuilt.matrix() - spec.operator.matrix())) <= 1e-10,
                "{}",
                spec.kind
            );
            assert!(spec.expansion.truncation <= 1e-10);
            assert!(!spec.expansion.is_empty());
            // Lexicographic word order is preserved by construction.
            let sorted = spec
                .expansion
                .coeffs
                .windows(2)
                .all(|w| w[0].0.lex_index() < w[1].0.lex_index());
            assert!(sorted);
        }
        // The identity expansion is the single empty word.
        let id = complete_map(&m, &PauliWord::identity(4)).unwrap();
        assert_eq!(id.expansion.len(), 1);
        assert_eq!(id.expansion.coeffs[0].1, 1.0);
    }

    #[test]
    fn region_validation_errors() {
        let m = chain_z0(4, 0.1, 0.5);
        assert!(matches!(
            build_o_lambda(&m, &[]),
            Err(ObservableError::EmptyRegion)
        ));
        assert!(matches!(
            build_o_lambda(&m, &[7]),
            Err(ObservableError::SiteOutOfRange { site: 7, n: 4 })
        ));
        // Duplicates collapse silently.
        let o = build_o_lambda(&m, &[1, 1, 0]).unwrap();
        let o2 = build_o_lambda(&m, &[0, 1]).unwrap();
        assert_eq!(o.support(), o2.support());
        assert!(max_abs(&(o.matrix() - o2.matrix())) < 1e-14);
    }
}
