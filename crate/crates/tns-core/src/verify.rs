//! Measurement-based verification: honest and adversarial provers sampled in
//! per-qubit Pauli bases, estimators for observables and parent-Hamiltonian
//! energies with standard errors, fidelity lower bounds from certified gaps,
//! sample-size planning, and non-signalling consistency checks.
//!
//! The honest outcome distribution is
//! `P0(s|alpha) = <Psi| (x)_j (1 + s_j sigma_{alpha_j})/2 |Psi>`, sampled
//! exactly by rotating each qubit into the z basis and drawing bits
//! sequentially from conditional amplitudes. Adversarial provers perturb this
//! distribution in controlled ways for negative tests. Every round draws from
//! its own counter-derived random stream, so transcripts are reproducible bit
//! for bit and rounds may be generated in any order.

use std::collections::HashMap;

use crate::linalg::{CMat, C64};
use crate::models::Model;
use crate::observables::{ObservableError, ObservableSpec, PauliExpansion};
use crate::operators::{LocalOperator, OperatorError, Pauli};
use crate::rng;
use crate::state::{
    build_parent_hamiltonian, build_state_budgeted, Budget, ParentHamiltonian, StateError,
    StateVector,
};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Family-wise significance of the consistency checks inside a verification
/// run, split across qubit pairs by Bonferroni correction.
pub const VERIFY_SIGNIFICANCE: f64 = 0.01;
/// Accepted deviation of an observable check, in standard errors.
pub const Q_CHECK_SE_FACTOR: f64 = 5.0;
/// Absolute deviation floor for observable checks whose standard error is
/// exactly zero (deterministic estimates).
const Q_CHECK_FLOOR: f64 = 1e-9;
/// Minimum rounds per basis group before a proportion comparison is made.
const MIN_CELL: usize = 10;
/// Probability of outcome +1 that the signalling cheat forces on qubit 0
/// whenever qubit 1 is measured in the x basis.
const SIGNALLING_PLUS_PROB: f64 = 0.9;

/// Errors from sampling, estimation, and protocol orchestration.
#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("round count must be positive")]
    NoRounds,
    #[error("depolarizing probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("signalling prover needs at least two qubits, model has {n}")]
    SignallingTooSmall { n: usize },
    #[error("fixed basis list is empty")]
    EmptyBasisList,
    #[error("fixed basis entry {index} has {got} letters, model has {expected} qubits")]
    BasisLength {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("no rounds match expansion term {word} under conditioning \"{conditioning}\"")]
    InsufficientCoverage { word: String, conditioning: String },
    #[error("estimator needs {terms} disjoint batches but only {rounds} rounds are available")]
    NotEnoughRounds { rounds: usize, terms: usize },
    #[error("estimator requires uniform-iid basis sampling, sample set used {got}")]
    WrongBasisDistribution { got: String },
    #[error("plan parameter {name} = {value} outside its valid range")]
    InvalidPlanParameter { name: &'static str, value: f64 },
    #[error("certified gap delta = {0} must be positive")]
    DeltaNotPositive(f64),
    #[error(
        "too few rounds per basis at qubit {qubit_i} to compare outcome \
         distributions at qubit {qubit_j}"
    )]
    InsufficientCounts { qubit_i: usize, qubit_j: usize },
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// A single-qubit measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    /// All bases in canonical order.
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    /// Lowercase letter used in transcripts.
    pub fn label(self) -> char {
        match self {
            Basis::X => 'x',
            Basis::Y => 'y',
            Basis::Z => 'z',
        }
    }

    /// Inverse of [`Basis::label`].
    pub fn parse(c: char) -> Option<Basis> {
        match c {
            'x' => Some(Basis::X),
            'y' => Some(Basis::Y),
            'z' => Some(Basis::Z),
            _ => None,
        }
    }

    /// The measured Pauli letter.
    pub fn pauli(self) -> Pauli {
        match self {
            Basis::X => Pauli::X,
            Basis::Y => Pauli::Y,
            Basis::Z => Pauli::Z,
        }
    }

    /// Axis index 0/1/2 in the canonical order.
    pub fn axis(self) -> usize {
        match self {
            Basis::X => 0,
            Basis::Y => 1,
            Basis::Z => 2,
        }
    }

    fn from_pauli(p: Pauli) -> Option<Basis> {
        match p {
            Pauli::I => None,
            Pauli::X => Some(Basis::X),
            Pauli::Y => Some(Basis::Y),
            Pauli::Z => Some(Basis::Z),
        }
    }

    // Unitary mapping the basis eigenvectors onto the z eigenvectors:
    // measuring sigma_alpha on |psi> equals measuring sigma_z on U|psi>.
    fn rotation(self) -> Option<CMat> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Basis::Z => None,
            // Hadamard.
            Basis::X => Some(CMat::from_row_slice(
                2,
                2,
                &[
                    C64::new(s, 0.0),
                    C64::new(s, 0.0),
                    C64::new(s, 0.0),
                    C64::new(-s, 0.0),
                ],
            )),
            // Hadamard times S-dagger.
            Basis::Y => Some(CMat::from_row_slice(
                2,
                2,
                &[
                    C64::new(s, 0.0),
                    C64::new(0.0, -s),
                    C64::new(s, 0.0),
                    C64::new(0.0, s),
                ],
            )),
        }
    }
}

/// One protocol round: the basis string and the observed outcome string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementRound {
    /// Per-qubit measurement basis, site order.
    pub basis: Vec<Basis>,
    /// Per-qubit outcomes, each +1 or -1, site order.
    pub outcome: Vec<i8>,
}

impl MeasurementRound {
    /// Bases as a lowercase string, e.g. `"xzyz"`.
    pub fn basis_string(&self) -> String {
        self.basis.iter().map(|b| b.label()).collect()
    }

    /// Outcomes as a sign string, e.g. `"+--+"`.
    pub fn outcome_string(&self) -> String {
        self.outcome
            .iter()
            .map(|&s| if s > 0 { '+' } else { '-' })
            .collect()
    }
}

impl std::fmt::Display for MeasurementRound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}", self.basis_string(), self.outcome_string())
    }
}

/// How per-round basis strings are produced.
#[derive(Debug, Clone)]
pub enum BasisDistribution {
    /// Each qubit's basis drawn independently and uniformly from {x, y, z}.
    UniformIid,
    /// Rounds cycle through the given list of basis strings.
    FixedList(Vec<Vec<Basis>>),
}

impl BasisDistribution {
    fn kind(&self) -> BasisDistributionKind {
        match self {
            BasisDistribution::UniformIid => BasisDistributionKind::UniformIid,
            BasisDistribution::FixedList(_) => BasisDistributionKind::FixedList,
        }
    }
}

/// Distribution tag recorded on a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisDistributionKind {
    UniformIid,
    FixedList,
}

impl BasisDistributionKind {
    /// Tag used in transcripts and error messages.
    pub fn tag(self) -> &'static str {
        match self {
            BasisDistributionKind::UniformIid => "uniform-iid",
            BasisDistributionKind::FixedList => "fixed-list",
        }
    }
}

/// The sampled party. All kinds share the honest statevector as ground
/// truth; the cheating kinds distort the outcome distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prover {
    /// Samples exactly from the honest outcome distribution.
    Honest,
    /// Honest sampling followed by an independent flip of each outcome with
    /// probability `p/2`, the exact classical equivalent of single-qubit
    /// depolarizing noise of strength `p` applied before measurement.
    Depolarized(f64),
    /// Samples every qubit independently from its exact single-qubit
    /// marginal, destroying all correlations.
    MarginalCheat,
    /// Honest sampling, except qubit 0's outcome is redrawn with a fixed
    /// bias whenever qubit 1 is measured in the x basis; violates
    /// non-signalling by construction.
    SignallingCheat,
}

impl Prover {
    /// Tag recorded on sample sets and reports.
    pub fn tag(&self) -> String {
        match self {
            Prover::Honest => "honest".into(),
            Prover::Depolarized(p) => format!("depolarized:{p}"),
            Prover::MarginalCheat => "marginal-cheat".into(),
            Prover::SignallingCheat => "signalling-cheat".into(),
        }
    }
}

/// A reproducible batch of measurement rounds.
#[derive(Debug, Clone)]
pub struct SampleSet {
    /// The rounds, in round-index order.
    pub rounds: Vec<MeasurementRound>,
    /// Master seed; round `r` draws from counter stream `r`.
    pub seed: u64,
    /// Tag of the prover that produced the outcomes.
    pub prover_tag: String,
    /// How the basis strings were drawn.
    pub basis_distribution: BasisDistributionKind,
}

impl SampleSet {
    /// Number of rounds.
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    /// True when no rounds were recorded.
    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Line-delimited transcript: one `"<bases> <outcomes>"` line per round.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for round in &self.rounds {
            out.push_str(&round.to_string());
            out.push('\n');
        }
        out
    }
}

/// Draws `count` measurement rounds from the prover. Round `r` consumes only
/// random stream `r` of `seed` (bases first in site order, then the prover's
/// outcome draws), so transcripts are independent of generation order and
/// reproducible bit for bit.
pub fn sample(
    model: &Model,
    prover: &Prover,
    distribution: &BasisDistribution,
    count: usize,
    seed: u64,
    budget: &Budget,
) -> Result<SampleSet, VerifyError> {
    let n = model.n();
    if count == 0 {
        return Err(VerifyError::NoRounds);
    }
    match prover {
        Prover::Depolarized(p) if !(0.0..=1.0).contains(p) => {
            return Err(VerifyError::ProbabilityOutOfRange(*p));
        }
        Prover::SignallingCheat if n < 2 => {
            return Err(VerifyError::SignallingTooSmall { n });
        }
        _ => {}
    }
    if let BasisDistribution::FixedList(list) = distribution {
        if list.is_empty() {
            return Err(VerifyError::EmptyBasisList);
        }
        for (index, entry) in list.iter().enumerate() {
            if entry.len() != n {
                return Err(VerifyError::BasisLength {
                    index,
                    expected: n,
                    got: entry.len(),
                });
            }
        }
    }
    let state = build_state_budgeted(model, budget)?;
    let bloch = bloch_vectors(&state);
    let mut rounds = Vec::with_capacity(count);
    for r in 0..count {
        let mut stream = rng::stream(seed, r as u64);
        let basis: Vec<Basis> = match distribution {
            BasisDistribution::UniformIid => (0..n)
                .map(|_| Basis::ALL[rng::uniform_usize(&mut stream, 3)])
                .collect(),
            BasisDistribution::FixedList(list) => list[r % list.len()].clone(),
        };
        let outcome = match prover {
            Prover::Honest => honest_outcome(&state, &basis, &mut stream)?,
            Prover::Depolarized(p) => {
                let mut s = honest_outcome(&state, &basis, &mut stream)?;
                for bit in s.iter_mut() {
                    if rng::uniform(&mut stream) < 0.5 * p {
                        *bit = -*bit;
                    }
                }
                s
            }
            Prover::MarginalCheat => basis
                .iter()
                .enumerate()
                .map(|(j, b)| {
                    let p_plus = 0.5 * (1.0 + bloch[j][b.axis()]);
                    if rng::uniform(&mut stream) < p_plus {
                        1
                    } else {
                        -1
                    }
                })
                .collect(),
            Prover::SignallingCheat => {
                let mut s = honest_outcome(&state, &basis, &mut stream)?;
                if basis[1] == Basis::X {
                    s[0] = if rng::uniform(&mut stream) < SIGNALLING_PLUS_PROB {
                        1
                    } else {
                        -1
                    };
                }
                s
            }
        };
        rounds.push(MeasurementRound { basis, outcome });
    }
    Ok(SampleSet {
        rounds,
        seed,
        prover_tag: prover.tag(),
        basis_distribution: distribution.kind(),
    })
}

// Rotates each qubit into the z basis, then samples bits by the chain rule:
// site j occupies bit n-1-j, so halving the vector front/back walks the
// sites in index order, conditioning each draw on the bits already fixed.
fn honest_outcome(
    state: &StateVector,
    basis: &[Basis],
    stream: &mut ChaCha8Rng,
) -> Result<Vec<i8>, VerifyError> {
    let n = state.n();
    let mut v: Vec<C64> = state.amplitudes().iter().copied().collect();
    for (j, b) in basis.iter().enumerate() {
        if let Some(u) = b.rotation() {
            LocalOperator::new(vec![j], u)?.apply(&mut v, n)?;
        }
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let half = v.len() / 2;
        let w0: f64 = v[..half].iter().map(|z| z.norm_sqr()).sum();
        let w1: f64 = v[half..].iter().map(|z| z.norm_sqr()).sum();
        let p0 = w0 / (w0 + w1);
        let bit1 = rng::uniform(stream) >= p0;
        v = if bit1 {
            v[half..].to_vec()
        } else {
            v[..half].to_vec()
        };
        out.push(if bit1 { -1 } else { 1 });
    }
    Ok(out)
}

// Per-site Bloch components [x, y, z] of the reduced one-qubit states.
fn bloch_vectors(state: &StateVector) -> Vec<[f64; 3]> {
    let n = state.n();
    let psi = state.amplitudes();
    let dim = 1usize << n;
    (0..n)
        .map(|j| {
            let mask = 1usize << (n - 1 - j);
            let mut rho01 = C64::new(0.0, 0.0);
            let mut mz = 0.0;
            for idx in 0..dim {
                if idx & mask == 0 {
                    rho01 += psi[idx] * psi[idx | mask].conj();
                    mz += psi[idx].norm_sqr();
                } else {
                    mz -= psi[idx].norm_sqr();
                }
            }
            [2.0 * rho01.re, -2.0 * rho01.im, mz]
        })
        .collect()
}

/// Round-selection rule applied before matching expansion terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// Every round is eligible for every term it matches.
    Any,
    /// A round counts toward a term only if every site outside the
    /// observable's region that the term leaves unmeasured was measured in
    /// the given basis; sites the term activates are governed by the term.
    OffRegionBasis(Basis),
}

impl Conditioning {
    fn describe(self) -> String {
        match self {
            Conditioning::Any => "any".into(),
            Conditioning::OffRegionBasis(b) => format!("off-region basis {}", b.label()),
        }
    }
}

/// Estimate of a single target with its uncertainty and provenance.
#[derive(Debug, Clone)]
pub struct EstimatorReport {
    /// Human-readable target description.
    pub target: String,
    /// The point estimate.
    pub estimate: f64,
    /// One standard error of the estimate; see the estimator docs for the
    /// exact formula.
    pub std_error: f64,
    /// Rounds that contributed to the estimate.
    pub rounds_used: usize,
    /// Description of the round-selection rule.
    pub conditioning: String,
}

// One expansion term prepared for round matching: absolute sites, their
// required bases, the coefficient, and the off-region sites it leaves
// unmeasured (for conditioning).
struct MatchTerm {
    sites: Vec<usize>,
    bases: Vec<Basis>,
    coeff: f64,
    off_region_free: Vec<usize>,
    label: String,
}

fn match_terms(spec: &ObservableSpec, n: usize) -> Vec<MatchTerm> {
    spec.expansion
        .coeffs
        .iter()
        .map(|(word, c)| {
            let mut sites = Vec::new();
            let mut bases = Vec::new();
            for slot in word.active_slots() {
                sites.push(spec.expansion.support[slot]);
                bases.push(Basis::from_pauli(word.0[slot]).expect("active letter"));
            }
            let off_region_free: Vec<usize> = (0..n)
                .filter(|q| spec.lambda.binary_search(q).is_err() && !sites.contains(q))
                .collect();
            MatchTerm {
                label: word.to_string(),
                sites,
                bases,
                coeff: *c,
                off_region_free,
            }
        })
        .collect()
}

fn term_matches(term: &MatchTerm, round: &MeasurementRound, conditioning: Conditioning) -> bool {
    for (site, basis) in term.sites.iter().zip(&term.bases) {
        if round.basis[*site] != *basis {
            return false;
        }
    }
    if let Conditioning::OffRegionBasis(b) = conditioning {
        for &q in &term.off_region_free {
            if round.basis[q] != b {
                return false;
            }
        }
    }
    true
}

fn term_product(term: &MatchTerm, round: &MeasurementRound) -> f64 {
    term.sites
        .iter()
        .map(|&site| round.outcome[site] as f64)
        .product()
}

/// Estimates the observable's expectation as `sum_w o(w) sbar(w)` over its
/// Pauli expansion: `sbar(w)` averages the outcome product at `w`'s active
/// sites over the rounds whose bases match `w` there (and satisfy the
/// conditioning rule).
///
/// The standard error is the influence (linearization) estimate
/// `sqrt(sum_r [sum_{w matched by r} o(w)(prod_w(r) - sbar(w)) / |R(w)|]^2)`,
/// which accounts for covariance between terms sharing rounds and reduces to
/// the usual sample deviation over `sqrt(rounds)` for a single term.
pub fn estimate_observable(
    samples: &SampleSet,
    spec: &ObservableSpec,
    conditioning: Conditioning,
) -> Result<EstimatorReport, VerifyError> {
    if samples.is_empty() {
        return Err(VerifyError::NoRounds);
    }
    let n = samples.rounds[0].basis.len();
    let terms = match_terms(spec, n);
    let mut counts = vec![0usize; terms.len()];
    let mut sums = vec![0f64; terms.len()];
    for round in &samples.rounds {
        for (k, term) in terms.iter().enumerate() {
            if term_matches(term, round, conditioning) {
                counts[k] += 1;
                sums[k] += term_product(term, round);
            }
        }
    }
    for (k, term) in terms.iter().enumerate() {
        if counts[k] == 0 {
            return Err(VerifyError::InsufficientCoverage {
                word: term.label.clone(),
                conditioning: conditioning.describe(),
            });
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    let estimate: f64 = terms
        .iter()
        .zip(&means)
        .map(|(term, mean)| term.coeff * mean)
        .sum();
    let mut variance = 0.0;
    let mut rounds_used = 0usize;
    for round in &samples.rounds {
        let mut influence = 0.0;
        let mut touched = false;
        for (k, term) in terms.iter().enumerate() {
            if term_matches(term, round, conditioning) {
                touched = true;
                influence +=
                    term.coeff * (term_product(term, round) - means[k]) / counts[k] as f64;
            }
        }
        if touched {
            rounds_used += 1;
        }
        variance += influence * influence;
    }
    Ok(EstimatorReport {
        target: format!("{} at sites {:?}", spec.kind, spec.lambda),
        estimate,
        std_error: variance.sqrt(),
        rounds_used,
        conditioning: conditioning.describe(),
    })
}

/// Per-term energy estimate with its variance diagnostics.
#[derive(Debug, Clone)]
pub struct TermEnergyReport {
    /// Index of the parent-Hamiltonian term.
    pub term_index: usize,
    /// Sites the term acts on (its locality).
    pub locality: usize,
    /// Batch mean of the single-round estimator.
    pub estimate: f64,
    /// Sample standard deviation over the square root of the batch size.
    pub std_error: f64,
    /// Rounds in this term's disjoint batch.
    pub rounds_used: usize,
    /// Sample variance of the single-round values.
    pub empirical_variance: f64,
    /// The analytic bound `2^(5 locality)` the variance must respect.
    pub variance_bound: f64,
    /// True iff the empirical variance is within the bound.
    pub within_bound: bool,
}

/// Energy estimate of the full parent Hamiltonian from random-basis rounds.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    /// Per-term reports, term order.
    pub terms: Vec<TermEnergyReport>,
    /// Sum of the per-term estimates.
    pub total: f64,
    /// Root-sum-square of the per-term standard errors; exact because the
    /// batches are disjoint.
    pub total_std_error: f64,
}

// Value of the single-round energy estimator for one term: with the round's
// bases B and outcomes s, sum over subsets J of the term's sites of
// 3^|J| o(J, B_J) prod_{j in J} s_j, where o is the term's Pauli coefficient
// at the word with letters B_j on J and identity elsewhere. Each basis
// letter is drawn uniformly from three choices, so the 3^|J| weight makes
// the round value an unbiased estimate of the term's expectation.
fn single_round_energy(
    round: &MeasurementRound,
    support: &[usize],
    coeffs: &HashMap<usize, f64>,
) -> f64 {
    let k = support.len();
    let digits: Vec<usize> = support
        .iter()
        .map(|&s| round.basis[s].pauli().index())
        .collect();
    let signs: Vec<f64> = support.iter().map(|&s| round.outcome[s] as f64).collect();
    let weights: Vec<usize> = (0..k).map(|slot| 4usize.pow((k - 1 - slot) as u32)).collect();
    let size = 1usize << k;
    let mut idx = vec![0usize; size];
    let mut sgn = vec![1f64; size];
    let mut pow3 = vec![1f64; size];
    let mut value = coeffs.get(&0).copied().unwrap_or(0.0);
    for mask in 1..size {
        let slot = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        idx[mask] = idx[rest] + digits[slot] * weights[slot];
        sgn[mask] = sgn[rest] * signs[slot];
        pow3[mask] = pow3[rest] * 3.0;
        if let Some(&c) = coeffs.get(&idx[mask]) {
            value += pow3[mask] * c * sgn[mask];
        }
    }
    value
}

/// Estimates every parent-Hamiltonian term from uniform-iid random-basis
/// rounds via the importance-weighted single-round estimator, then totals
/// them. Rounds are split into disjoint equal batches, one per term, so no
/// sample is reused and the per-term estimates are independent.
pub fn estimate_energy_random_basis(
    samples: &SampleSet,
    ph: &ParentHamiltonian,
) -> Result<EnergyReport, VerifyError> {
    if samples.basis_distribution != BasisDistributionKind::UniformIid {
        return Err(VerifyError::WrongBasisDistribution {
            got: samples.basis_distribution.tag().into(),
        });
    }
    let terms = ph.len();
    let rounds = samples.len();
    let batch = rounds / terms;
    if batch == 0 {
        return Err(VerifyError::NotEnoughRounds { rounds, terms });
    }
    let mut reports = Vec::with_capacity(terms);
    let mut total = 0.0;
    let mut total_var = 0.0;
    for (term_index, term) in ph.terms().iter().enumerate() {
        let op = term.operator();
        let support = op.support();
        let expansion = PauliExpansion::of(op);
        let coeffs: HashMap<usize, f64> = expansion
            .coeffs
            .iter()
            .map(|(word, c)| (word.lex_index(), *c))
            .collect();
        let slice = &samples.rounds[term_index * batch..(term_index + 1) * batch];
        let values: Vec<f64> = slice
            .iter()
            .map(|round| single_round_energy(round, support, &coeffs))
            .collect();
        let mean = values.iter().sum::<f64>() / batch as f64;
        let empirical_variance = if batch > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (batch - 1) as f64
        } else {
            0.0
        };
        let std_error = (empirical_variance / batch as f64).sqrt();
        let variance_bound = 2f64.powi(5 * support.len() as i32);
        total += mean;
        total_var += std_error * std_error;
        reports.push(TermEnergyReport {
            term_index,
            locality: support.len(),
            estimate: mean,
            std_error,
            rounds_used: batch,
            empirical_variance,
            variance_bound,
            within_bound: empirical_variance <= variance_bound,
        });
    }
    Ok(EnergyReport {
        terms: reports,
        total,
        total_std_error: total_var.sqrt(),
    })
}

/// Fidelity lower bounds from an energy estimate and a certified gap bound:
/// `F >= 1 - tr(H rho)/delta`. Returns the point bound `1 - estimate/delta`
/// and the conservative bound `1 - (estimate + error)/delta`, both clipped
/// to at most 1.
pub fn fidelity_lower_bound(
    energy_estimate: f64,
    energy_error: f64,
    delta: f64,
) -> Result<(f64, f64), VerifyError> {
    if delta <= 0.0 {
        return Err(VerifyError::DeltaNotPositive(delta));
    }
    let point = (1.0 - energy_estimate / delta).min(1.0);
    let conservative = (1.0 - (energy_estimate + energy_error) / delta).min(1.0);
    Ok((point, conservative))
}

/// Sample-size plan for the verification game.
#[derive(Debug, Clone)]
pub struct SamplePlan {
    /// Fidelity slack: the verifier accepts at `F >= 1 - epsilon`.
    pub epsilon: f64,
    /// Confidence parameter of the planning bound.
    pub alpha_conf: f64,
    /// Term locality the per-term bound was planned for.
    pub locality: usize,
    /// Certified gap lower bound entering both formulas.
    pub delta: f64,
    /// Per-term round budget from the tail bound.
    pub per_term: u64,
    /// Total round estimate from the variance heuristic.
    pub total: u64,
    /// Per-term estimator standard deviation assumed by the total.
    pub sigma_assumed: f64,
}

impl SamplePlan {
    /// Closed form behind [`SamplePlan::per_term`].
    pub fn per_term_rule() -> &'static str {
        "ceil(2^(5k+1) ln(1/alpha) / (N delta^2 epsilon^2))"
    }

    /// Closed form behind [`SamplePlan::total`].
    pub fn total_rule() -> &'static str {
        "ceil(sigma^2 N^2 / delta^2)"
    }

    /// The per-term bound divides `ln(1/alpha)` by the qubit count and so
    /// shrinks as the system grows; it is implemented exactly as printed,
    /// and the calibration suite is the empirical arbiter.
    pub fn scaling_note() -> &'static str {
        "per-term bound scales as ln(1/alpha)/N, decreasing with system size"
    }
}

/// Builds a [`SamplePlan`]. `sigma_assumed` defaults to the worst-case
/// per-term standard deviation `sqrt(2^(5 locality))`.
pub fn plan_samples(
    locality: usize,
    delta: f64,
    epsilon: f64,
    alpha_conf: f64,
    n: usize,
    sigma_assumed: Option<f64>,
) -> Result<SamplePlan, VerifyError> {
    let check = |name: &'static str, value: f64, ok: bool| {
        if ok {
            Ok(())
        } else {
            Err(VerifyError::InvalidPlanParameter { name, value })
        }
    };
    check("locality", locality as f64, locality >= 1)?;
    check("delta", delta, delta > 0.0)?;
    check("epsilon", epsilon, epsilon > 0.0)?;
    check("alpha_conf", alpha_conf, 0.0 < alpha_conf && alpha_conf < 1.0)?;
    check("n", n as f64, n >= 1)?;
    let sigma = sigma_assumed.unwrap_or_else(|| 2f64.powi(5 * locality as i32).sqrt());
    check("sigma_assumed", sigma, sigma > 0.0)?;
    let per_term = 2f64.powi(5 * locality as i32 + 1) / (delta * delta * epsilon * epsilon)
        * ((1.0 / alpha_conf).ln() / n as f64);
    let total = sigma * sigma * (n * n) as f64 / (delta * delta);
    Ok(SamplePlan {
        epsilon,
        alpha_conf,
        locality,
        delta,
        per_term: per_term.ceil() as u64,
        total: total.ceil() as u64,
        sigma_assumed: sigma,
    })
}

/// One two-proportion comparison inside a consistency check.
#[derive(Debug, Clone)]
pub struct ConsistencyComparison {
    /// Basis at the outcome qubit shared by both groups.
    pub stratum: Basis,
    /// Basis at the probed qubit in the first group.
    pub basis_a: Basis,
    /// Basis at the probed qubit in the second group.
    pub basis_b: Basis,
    /// Rounds in each group.
    pub count_a: usize,
    pub count_b: usize,
    /// Empirical `P(outcome = +1)` in each group.
    pub p_plus_a: f64,
    pub p_plus_b: f64,
    /// Pooled two-proportion z statistic.
    pub z: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Result of a non-signalling consistency check between two qubits.
#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    /// Qubit whose basis choice is probed.
    pub qubit_i: usize,
    /// Qubit whose outcome distribution is compared.
    pub qubit_j: usize,
    /// All comparisons with adequate counts.
    pub comparisons: Vec<ConsistencyComparison>,
    /// Smallest p-value among the comparisons.
    pub min_p_value: f64,
    /// Requested significance before correction.
    pub significance: f64,
    /// Per-comparison threshold after Bonferroni correction.
    pub corrected_significance: f64,
    /// True iff no comparison fell below the corrected threshold.
    pub pass: bool,
}

/// Tests that the outcome distribution at `qubit_j` does not depend on the
/// basis chosen at `qubit_i`: rounds are stratified by the basis at
/// `qubit_j`, and within each stratum the frequencies of outcome +1 are
/// compared across the basis values at `qubit_i` with pooled two-proportion
/// z tests, Bonferroni-corrected at the given significance.
pub fn consistency_check(
    samples: &SampleSet,
    qubit_i: usize,
    qubit_j: usize,
    significance: f64,
) -> Result<ConsistencyReport, VerifyError> {
    let mut counts = [[0usize; 3]; 3];
    let mut plus = [[0usize; 3]; 3];
    for round in &samples.rounds {
        let bi = round.basis[qubit_i].axis();
        let bj = round.basis[qubit_j].axis();
        counts[bi][bj] += 1;
        if round.outcome[qubit_j] > 0 {
            plus[bi][bj] += 1;
        }
    }
    let mut comparisons = Vec::new();
    for stratum in Basis::ALL {
        let bj = stratum.axis();
        for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let (na, nb) = (counts[a][bj], counts[b][bj]);
            if na < MIN_CELL || nb < MIN_CELL {
                continue;
            }
            let pa = plus[a][bj] as f64 / na as f64;
            let pb = plus[b][bj] as f64 / nb as f64;
            let pooled = (plus[a][bj] + plus[b][bj]) as f64 / (na + nb) as f64;
            let denom = (pooled * (1.0 - pooled) * (1.0 / na as f64 + 1.0 / nb as f64)).sqrt();
            let z = if denom > 0.0 { (pa - pb) / denom } else { 0.0 };
            let p_value = libm::erfc(z.abs() / std::f64::consts::SQRT_2);
            comparisons.push(ConsistencyComparison {
                stratum,
                basis_a: Basis::ALL[a],
                basis_b: Basis::ALL[b],
                count_a: na,
                count_b: nb,
                p_plus_a: pa,
                p_plus_b: pb,
                z,
                p_value,
            });
        }
    }
    if comparisons.is_empty() {
        return Err(VerifyError::InsufficientCounts { qubit_i, qubit_j });
    }
    let min_p_value = comparisons
        .iter()
        .map(|c| c.p_value)
        .fold(f64::INFINITY, f64::min);
    let corrected = significance / comparisons.len() as f64;
    Ok(ConsistencyReport {
        qubit_i,
        qubit_j,
        comparisons,
        min_p_value,
        significance,
        corrected_significance: corrected,
        pass: min_p_value >= corrected,
    })
}

/// Outcome of a verification run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    /// True for [`Verdict::Accept`].
    pub fn is_accept(self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "ACCEPT",
            Verdict::Reject => "REJECT",
        })
    }
}

/// One observable check inside a verification run.
#[derive(Debug, Clone)]
pub struct QCheckReport {
    /// Description of the checked observable.
    pub label: String,
    /// Its construction-fixed expectation.
    pub expected: f64,
    /// The sampled estimate.
    pub estimate: f64,
    /// Standard error of the estimate.
    pub std_error: f64,
    /// True iff the estimate sits within the acceptance band.
    pub pass: bool,
}

/// Full record of one verification run.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    /// ACCEPT or REJECT.
    pub verdict: Verdict,
    /// Tag of the sampled prover.
    pub prover_tag: String,
    /// Master seed of the run.
    pub seed: u64,
    /// Rounds actually sampled.
    pub rounds: usize,
    /// The plan the thresholds came from.
    pub plan: SamplePlan,
    /// Point fidelity lower bound.
    pub fidelity_lower: f64,
    /// Conservative fidelity lower bound (estimate plus error).
    pub fidelity_conservative: f64,
    /// Energy estimation detail.
    pub energy: EnergyReport,
    /// Observable checks, menu order.
    pub q_checks: Vec<QCheckReport>,
    /// Consistency checks over all ordered qubit pairs.
    pub consistency: Vec<ConsistencyReport>,
    /// Human-readable reasons for rejection; empty on accept.
    pub reasons: Vec<String>,
    /// The full transcript the verdict was computed from.
    pub samples: SampleSet,
}

/// Runs the verification game: samples `rounds` uniform-iid rounds from the
/// prover, estimates the parent-Hamiltonian energy and the fidelity bounds
/// against the plan's certified gap, checks every menu observable against
/// its construction-fixed expectation, and runs non-signalling consistency
/// checks over all ordered qubit pairs.
///
/// ACCEPT requires the conservative fidelity bound to reach
/// `1 - plan.epsilon`, every observable estimate to sit within five standard
/// errors of its expectation (with a small absolute floor for deterministic
/// estimates), and every consistency check to pass at the Bonferroni-split
/// family significance [`VERIFY_SIGNIFICANCE`].
///
/// `rounds` is the simulation budget; the plan's `per_term`/`total` record
/// the conservative analytic requirements.
pub fn run_verification(
    model: &Model,
    prover: &Prover,
    plan: &SamplePlan,
    menu: &[ObservableSpec],
    rounds: usize,
    seed: u64,
    budget: &Budget,
) -> Result<VerificationReport, VerifyError> {
    let samples = sample(
        model,
        prover,
        &BasisDistribution::UniformIid,
        rounds,
        seed,
        budget,
    )?;
    let ph = build_parent_hamiltonian(model)?;
    let energy = estimate_energy_random_basis(&samples, &ph)?;
    let (fidelity_lower, fidelity_conservative) =
        fidelity_lower_bound(energy.total, energy.total_std_error, plan.delta)?;
    let mut reasons = Vec::new();
    if fidelity_conservative < 1.0 - plan.epsilon {
        reasons.push(format!(
            "conservative fidelity bound {fidelity_conservative:.4} below 1 - epsilon = {:.4}",
            1.0 - plan.epsilon
        ));
    }
    let mut q_checks = Vec::with_capacity(menu.len());
    for spec in menu {
        let report = estimate_observable(&samples, spec, Conditioning::Any)?;
        let band = Q_CHECK_SE_FACTOR * report.std_error + Q_CHECK_FLOOR;
        let pass = (report.estimate - spec.expected).abs() <= band;
        if !pass {
            reasons.push(format!(
                "observable check {} estimate {:.4} outside {:.4} +- {:.4}",
                report.target, report.estimate, spec.expected, band
            ));
        }
        q_checks.push(QCheckReport {
            label: report.target,
            expected: spec.expected,
            estimate: report.estimate,
            std_error: report.std_error,
            pass,
        });
    }
    let n = model.n();
    let pair_count = n * n - n;
    let mut consistency = Vec::with_capacity(pair_count);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let report =
                consistency_check(&samples, i, j, VERIFY_SIGNIFICANCE / pair_count as f64)?;
            if !report.pass {
                reasons.push(format!(
                    "outcome distribution at qubit {j} shifts with the basis at qubit {i} \
                     (min p-value {:.3e})",
                    report.min_p_value
                ));
            }
            consistency.push(report);
        }
    }
    let verdict = if reasons.is_empty() {
        Verdict::Accept
    } else {
        Verdict::Reject
    };
    Ok(VerificationReport {
        verdict,
        prover_tag: prover.tag(),
        seed,
        rounds,
        plan: plan.clone(),
        fidelity_lower,
        fidelity_conservative,
        energy,
        q_checks,
        consistency,
        reasons,
        samples,
    })
}
