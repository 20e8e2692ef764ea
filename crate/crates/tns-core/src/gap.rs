//! Spectral-gap certificates for the frustration-free parent Hamiltonians.
//!
//! For H = Σ_i h_i with h_i ⪰ 0 and a common zero-energy ground space, a
//! feasible point of the pair program
//!
//! ```text
//!   maximize x   subject to, for all i ≠ j,
//!   h_i h_j + h_j h_i + a_ij h_i² + a_ji h_j² − c_ij h_i − c_ji h_j ⪰ 0,
//!   Σ_{j≠i} a_ij = 1  and  Σ_{j≠i} c_ij = x  for every row i,
//! ```
//!
//! sums (over ordered pairs) to 2(H² − xH) ⪰ 0, so H has no spectrum in
//! (0, x) and x certifies a gap of at least x above the ground space. The
//! certifier formulates this program over dense pair blocks on joint term
//! supports, solves it with the interior-point solver, and accepts a value
//! only after the independent bracketing eigensolver re-verifies every
//! block. Sub-roundoff infeasibilities are repaired by shrinking every c_ij
//! by a common s ≥ 0 (which adds s·(h_i + h_j) ⪰ 0 to each block), and the
//! certified value is min_i Σ_j c_ij minus a fixed reporting slack.
//!
//! Certificates at one β extend to β + τ in closed form: conjugating each
//! term by its slice of e^{−τK₁} keeps the a weights feasible and lowers
//! each c_ij to a computable c′_ij(τ) built from the per-pair deformation
//! exponents (see [`continuity_cprime`]). Scanning δ(τ) = min_i Σ_j c′_ij(τ)
//! for its first crossing below a floor yields a step size τ₀, and chaining
//! such steps from β = 0 certifies a whole interval ([`certify_interval`]).

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::lattice::{Graph, LatticeError};
use crate::linalg::{eigh, C64, CMat, LinalgError, RMat, RVec};
use crate::models::{Model, ModelError};
use crate::operators::{intersect_supports, union_support, LocalOperator, OperatorError};
use crate::sdp::{self, SdpBlock, SdpConfig, SdpError, SdpProblem, SdpStatus, DEFAULT_BLOCK_DIM_CAP};
use crate::state::{build_parent_hamiltonian, ParentHamiltonian, StateError};

/// Fixed amount subtracted from every reported bound; keeps certificates on
/// the safe side of eigensolver and solver tolerances.
pub const REPORT_SLACK: f64 = 1e-8;

/// Block infeasibilities deeper than this indicate a failed solve rather
/// than roundoff and are not repaired by shrinking.
pub const FEAS_MARGIN: f64 = 1e-6;

/// Eigenvalues of h_i + h_j at or below this cut are treated as the joint
/// kernel of the pair and projected out of the solver's blocks.
const KERNEL_CUT: f64 = 1e-10;

/// Smallest retained eigenvalue of h_i + h_j a faithful reduction needs;
/// pairs whose spectrum straddles the cut are refused as degenerate.
const KERNEL_SEPARATION: f64 = 1e-8;

/// Singular values above this cut define the retained range in
/// projectorized mode.
const RANGE_CUT: f64 = 1e-10;

/// Bisection tolerance for the independent per-block eigenvalue audit.
const AUDIT_EIG_TOL: f64 = 1e-11;

/// Lowest audited block eigenvalue a certificate may carry.
const BLOCK_EIG_FLOOR: f64 = -1e-9;

/// Bisection tolerance on the shrink amount s.
const SHRINK_TOL: f64 = 1e-10;

/// Largest shrink amount attempted before giving up.
const SHRINK_CAP: f64 = 1e-3;

/// Interval steps below this stall the β loop.
pub const TAU_STALL: f64 = 1e-8;

/// Errors from formulation, certification, and the interval loop.
#[derive(Debug, Error)]
pub enum GapError {
    /// The pair program needs at least two terms.
    #[error("gap program needs at least two terms, got {0}")]
    NotEnoughTerms(usize),
    /// A term retained no partner, so its row constraint is unsatisfiable.
    #[error("term {term} has no retained partner under mode {mode}; its row sum over a cannot reach 1")]
    NoRetainedPairs {
        /// Effective term index.
        term: usize,
        /// Mode that dropped every partner.
        mode: String,
    },
    /// A pair block would exceed the dense dimension cap.
    #[error("pair block on {sites} sites has dimension {dim} over the cap {cap}")]
    PairBlockTooLarge {
        /// Joint support size.
        sites: usize,
        /// Dense dimension 2^sites.
        dim: usize,
        /// Configured cap.
        cap: usize,
    },
    /// No site's distance-k ball covers the term's support.
    #[error("no block center covers term {term} within distance {k}")]
    BlockingFailed {
        /// Original term index.
        term: usize,
        /// Blocking distance.
        k: u32,
    },
    /// Both terms of a pair vanish; the block carries no constraint.
    #[error("pair ({i}, {j}) reduces to an empty block; both terms vanish")]
    DegeneratePairBlock {
        /// First term index.
        i: usize,
        /// Second term index.
        j: usize,
    },
    /// The solver did not reach its optimality tolerances.
    #[error("solver finished {status} with duality gap {gap:.3e}; no certificate issued")]
    SolverNotOptimal {
        /// Final solver status.
        status: String,
        /// Reported duality gap.
        gap: f64,
    },
    /// A block violation too deep for the shrink repair.
    #[error("audited block eigenvalue {min_eig:.3e} is below the shrink margin -{margin:.1e}")]
    CertificateInfeasible {
        /// Worst audited block eigenvalue.
        min_eig: f64,
        /// Shrink margin.
        margin: f64,
    },
    /// Shrinking every c by up to the cap never restored feasibility.
    #[error("shrink bracket grew past {cap:.1e} without restoring block feasibility")]
    ShrinkFailed {
        /// Growth cap on s.
        cap: f64,
    },
    /// The certified value was not positive after repairs.
    #[error("no certificate at beta = {beta}: certified delta {delta:.3e} is not positive")]
    NoCertificate {
        /// Inverse temperature of the attempted certificate.
        beta: f64,
        /// Non-positive value that was rejected.
        delta: f64,
    },
    /// Continuity extensions need per-term deformation index sets.
    #[error("continuity extension is not derived for mode {0}; certify per point instead")]
    ContinuityUnsupported(String),
    /// Index-set count does not match the certificate's term count.
    #[error("expected {expected} deformation index sets, got {got}")]
    SetSizeCount {
        /// Certificate term count.
        expected: usize,
        /// Provided set count.
        got: usize,
    },
    /// The requested floor exceeds the bound at τ = 0.
    #[error("floor {floor} exceeds the base bound delta(0) = {delta0}")]
    FloorAboveBase {
        /// Bound at τ = 0.
        delta0: f64,
        /// Requested floor.
        floor: f64,
    },
    /// Malformed interval request.
    #[error("invalid interval request: {0}")]
    InvalidInterval(String),
    /// Model construction failure.
    #[error(transparent)]
    Model(#[from] ModelError),
    /// State-engine failure.
    #[error(transparent)]
    State(#[from] StateError),
    /// Solver failure.
    #[error(transparent)]
    Sdp(#[from] SdpError),
    /// Graph failure.
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    /// Operator algebra failure.
    #[error(transparent)]
    Operator(#[from] OperatorError),
    /// Dense linear algebra failure.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which ordered pairs carry variables, and over which effective terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparsityMode {
    /// Every pair of terms carries variables and a block.
    AllPairs,
    /// Pairs with disjoint supports are dropped; their blocks are products
    /// of commuting positive-semidefinite terms and hold with a = c = 0.
    OverlappingOnly,
    /// Terms are first summed into distance-k blocks, then all pairs of
    /// blocks carry variables.
    Blocked(u32),
}

impl fmt::Display for SparsityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SparsityMode::AllPairs => write!(f, "all-pairs"),
            SparsityMode::OverlappingOnly => write!(f, "overlapping-only"),
            SparsityMode::Blocked(k) => write!(f, "blocked:{k}"),
        }
    }
}

impl SparsityMode {
    /// Parses `all-pairs`, `overlapping-only`, or `blocked:k`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all-pairs" => Some(SparsityMode::AllPairs),
            "overlapping-only" => Some(SparsityMode::OverlappingOnly),
            _ => s
                .strip_prefix("blocked:")
                .and_then(|k| k.parse::<u32>().ok())
                .map(SparsityMode::Blocked),
        }
    }
}

/// Certifier configuration: solver tolerances, block cap, projectorization,
/// and the τ scan resolution.
#[derive(Debug, Clone, Copy)]
pub struct GapConfig {
    /// Interior-point tolerances.
    pub sdp: SdpConfig,
    /// Dense dimension cap per pair block.
    pub block_dim_cap: usize,
    /// Replace each effective term by the projector onto its range; the
    /// certificate then bounds the gap of the projectorized Hamiltonian and
    /// is labeled as such.
    pub projectorized: bool,
    /// Grid points for the τ scans.
    pub tau_grid_points: usize,
    /// Upper end of the τ scan range.
    pub tau_max: f64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            sdp: SdpConfig::default(),
            block_dim_cap: DEFAULT_BLOCK_DIM_CAP,
            projectorized: false,
            tau_grid_points: 10_000,
            tau_max: 1.0,
        }
    }
}

/// Index layout of the program variables: `x` plus four variables per
/// retained unordered pair.
#[derive(Debug, Clone)]
pub struct VariableIndex {
    x: usize,
    a: BTreeMap<(usize, usize), usize>,
    c: BTreeMap<(usize, usize), usize>,
}

impl VariableIndex {
    /// Index of the objective variable x.
    pub fn x(&self) -> usize {
        self.x
    }

    /// Index of a_ij for the ordered pair (i, j), if retained.
    pub fn a_index(&self, i: usize, j: usize) -> Option<usize> {
        self.a.get(&(i, j)).copied()
    }

    /// Index of c_ij for the ordered pair (i, j), if retained.
    pub fn c_index(&self, i: usize, j: usize) -> Option<usize> {
        self.c.get(&(i, j)).copied()
    }

    /// All retained ordered pairs, lexicographically.
    pub fn ordered_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.a.keys().copied()
    }

    /// Total variable count.
    pub fn len(&self) -> usize {
        1 + self.a.len() + self.c.len()
    }

    /// Whether no pair variables exist (never true for a valid program).
    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Copies `y` with every c variable lowered by `s` (the shrink repair).
    pub fn with_shrunk_c(&self, y: &[f64], s: f64) -> Vec<f64> {
        let mut out = y.to_vec();
        for &idx in self.c.values() {
            out[idx] -= s;
        }
        out
    }
}

/// A formulated gap program: the solver problem, the variable layout, and
/// the effective terms it was built from.
#[derive(Debug, Clone)]
pub struct GapProgram {
    problem: SdpProblem,
    variables: VariableIndex,
    pairs: Vec<(usize, usize)>,
    terms: Vec<LocalOperator>,
    nus: Vec<Vec<usize>>,
    members: Vec<Vec<usize>>,
    mode: SparsityMode,
    projectorized: bool,
    n: usize,
    beta: f64,
    t: f64,
}

impl GapProgram {
    /// The solver-ready problem (pair blocks reduced by their joint kernel).
    pub fn problem(&self) -> &SdpProblem {
        &self.problem
    }

    /// Variable layout.
    pub fn variables(&self) -> &VariableIndex {
        &self.variables
    }

    /// Retained unordered pairs (i < j), lexicographically.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Effective terms the program certifies (blocked or projectorized
    /// terms when those options are active).
    pub fn terms(&self) -> &[LocalOperator] {
        &self.terms
    }

    /// Per effective term, the union of member deformation index sets.
    pub fn nus(&self) -> &[Vec<usize>] {
        &self.nus
    }

    /// Per effective term, the original term indices it sums.
    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// Pair retention mode.
    pub fn mode(&self) -> SparsityMode {
        self.mode
    }

    /// Whether terms were replaced by their range projectors.
    pub fn projectorized(&self) -> bool {
        self.projectorized
    }

    /// Qubit count.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Inverse temperature of the certified Hamiltonian.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Entangler angle of the certified Hamiltonian.
    pub fn t(&self) -> f64 {
        self.t
    }
}

/// A verified lower bound on the spectral gap at one (β, t) point.
///
/// The stored `c` values are post-shrink; the audited block eigenvalue and
/// the row-sum residual of `a` refer to exactly these stored values.
#[derive(Debug, Clone)]
pub struct GapCertificate {
    beta: f64,
    t: f64,
    delta: f64,
    a: BTreeMap<(usize, usize), f64>,
    c: BTreeMap<(usize, usize), f64>,
    sparsity_mode: SparsityMode,
    projectorized: bool,
    min_block_eig: f64,
    equality_residual: f64,
    shrink_applied: f64,
    term_count: usize,
}

impl GapCertificate {
    /// Inverse temperature.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Entangler angle.
    pub fn t(&self) -> f64 {
        self.t
    }

    /// Certified gap lower bound (min row sum of c minus the reporting
    /// slack).
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Retained a weights by ordered pair.
    pub fn a(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.a
    }

    /// Retained (post-shrink) c values by ordered pair.
    pub fn c(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.c
    }

    /// Pair retention mode of the underlying program.
    pub fn sparsity_mode(&self) -> SparsityMode {
        self.sparsity_mode
    }

    /// Whether the bound certifies the projectorized Hamiltonian.
    pub fn projectorized(&self) -> bool {
        self.projectorized
    }

    /// Worst audited block eigenvalue at the stored (a, c).
    pub fn min_block_eig(&self) -> f64 {
        self.min_block_eig
    }

    /// Largest row-sum violation max_i |Σ_j a_ij − 1|.
    pub fn equality_residual(&self) -> f64 {
        self.equality_residual
    }

    /// Common shrink s applied to every c entry.
    pub fn shrink_applied(&self) -> f64 {
        self.shrink_applied
    }

    /// Number of effective terms the program ran over.
    pub fn term_count(&self) -> usize {
        self.term_count
    }

    /// Row sums Σ_{j≠i} c_ij of the stored c values.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut rows = vec![0.0; self.term_count];
        for (&(i, _), &v) in &self.c {
            rows[i] += v;
        }
        rows
    }
}

fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

// Promotes both operators to their joint support and returns the dense sum.
fn add_local(a: &LocalOperator, b: &LocalOperator) -> Result<LocalOperator, GapError> {
    let u = union_support(a.support(), b.support());
    let pa = a.promote(&u)?;
    let pb = b.promote(&u)?;
    Ok(LocalOperator::new(u, pa.matrix() + pb.matrix())?)
}

// Projector onto the range of a positive-semidefinite term.
fn range_projector(term: &LocalOperator) -> Result<LocalOperator, GapError> {
    let es = eigh(term.matrix())?;
    let dim = term.matrix().nrows();
    let mut p = CMat::zeros(dim, dim);
    for (k, &lam) in es.values.iter().enumerate() {
        if lam > RANGE_CUT {
            let v = es.vectors.column(k);
            p += v * v.adjoint();
        }
    }
    Ok(LocalOperator::new(term.support().to_vec(), hermitize(&p))?)
}

/// Groups terms by the lowest-id site whose distance-k ball contains their
/// support; returns `(center, member term indices)` sorted by center.
pub fn block_assignments(
    supports: &[Vec<usize>],
    graph: &Graph,
    k: u32,
) -> Result<Vec<(usize, Vec<usize>)>, GapError> {
    let mut balls: Vec<Option<Vec<usize>>> = vec![None; graph.len()];
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    'terms: for (t, support) in supports.iter().enumerate() {
        for (center, ball_slot) in balls.iter_mut().enumerate() {
            if ball_slot.is_none() {
                *ball_slot = Some(graph.ball(center, k)?);
            }
            let ball = ball_slot.as_ref().unwrap();
            // Both lists are ascending, so subset testing is a merge walk.
            let mut it = ball.iter();
            if support.iter().all(|s| it.any(|b| b == s)) {
                groups.entry(center).or_default().push(t);
                continue 'terms;
            }
        }
        return Err(GapError::BlockingFailed { term: t, k });
    }
    Ok(groups.into_iter().collect())
}

// Effective terms under a mode: (operator, nu union, member ids) per term.
type EffectiveTerms = (Vec<LocalOperator>, Vec<Vec<usize>>, Vec<Vec<usize>>);

fn effective_terms(ph: &ParentHamiltonian, graph: &Graph, mode: SparsityMode) -> Result<EffectiveTerms, GapError> {
    match mode {
        SparsityMode::AllPairs | SparsityMode::OverlappingOnly => Ok((
            ph.terms().iter().map(|t| t.operator().clone()).collect(),
            ph.terms().iter().map(|t| t.nu().to_vec()).collect(),
            (0..ph.len()).map(|j| vec![j]).collect(),
        )),
        SparsityMode::Blocked(k) => {
            let supports: Vec<Vec<usize>> = ph
                .terms()
                .iter()
                .map(|t| t.operator().support().to_vec())
                .collect();
            let groups = block_assignments(&supports, graph, k)?;
            let mut ops = Vec::with_capacity(groups.len());
            let mut nus = Vec::with_capacity(groups.len());
            let mut members = Vec::with_capacity(groups.len());
            for (_, ids) in groups {
                let mut op = ph.terms()[ids[0]].operator().clone();
                let mut nu = ph.terms()[ids[0]].nu().to_vec();
                for &id in &ids[1..] {
                    op = add_local(&op, ph.terms()[id].operator())?;
                    nu = union_support(&nu, ph.terms()[id].nu());
                }
                ops.push(op);
                nus.push(nu);
                members.push(ids);
            }
            Ok((ops, nus, members))
        }
    }
}

/// Formulates the pair program for a parent Hamiltonian under a retention
/// mode. The solver blocks are the pair matrices compressed onto the
/// orthogonal complement of ker(h_i) ∩ ker(h_j): every constituent matrix
/// vanishes on that kernel for any variable value, so the compression is
/// exact and restores strict feasibility for the interior-point method.
pub fn formulate_sdp(
    ph: &ParentHamiltonian,
    graph: &Graph,
    mode: SparsityMode,
    config: &GapConfig,
) -> Result<GapProgram, GapError> {
    let (mut terms, nus, members) = effective_terms(ph, graph, mode)?;
    if terms.len() < 2 {
        return Err(GapError::NotEnoughTerms(terms.len()));
    }
    if config.projectorized {
        for term in &mut terms {
            *term = range_projector(term)?;
        }
    }
    let m = terms.len();

    let mut pairs = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let overlap =
                !intersect_supports(terms[i].support(), terms[j].support()).is_empty();
            if matches!(mode, SparsityMode::OverlappingOnly) && !overlap {
                continue;
            }
            pairs.push((i, j));
        }
    }
    let mut row_counts = vec![0usize; m];
    for &(i, j) in &pairs {
        row_counts[i] += 1;
        row_counts[j] += 1;
    }
    if let Some(term) = row_counts.iter().position(|&c| c == 0) {
        return Err(GapError::NoRetainedPairs {
            term,
            mode: mode.to_string(),
        });
    }

    // Variable layout: x first, then a_ij, a_ji, c_ij, c_ji per pair.
    let mut a_idx = BTreeMap::new();
    let mut c_idx = BTreeMap::new();
    for (p, &(i, j)) in pairs.iter().enumerate() {
        a_idx.insert((i, j), 1 + 4 * p);
        a_idx.insert((j, i), 2 + 4 * p);
        c_idx.insert((i, j), 3 + 4 * p);
        c_idx.insert((j, i), 4 + 4 * p);
    }
    let variables = VariableIndex {
        x: 0,
        a: a_idx,
        c: c_idx,
    };
    let var_count = variables.len();

    let mut blocks = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let u = union_support(terms[i].support(), terms[j].support());
        let dim = 1usize << u.len();
        if dim > config.block_dim_cap {
            return Err(GapError::PairBlockTooLarge {
                sites: u.len(),
                dim,
                cap: config.block_dim_cap,
            });
        }
        let hi = terms[i].promote(&u)?.matrix().clone();
        let hj = terms[j].promote(&u)?.matrix().clone();
        let hi2 = hermitize(&(&hi * &hi));
        let hj2 = hermitize(&(&hj * &hj));
        let f0 = hermitize(&(&hi * &hj + &hj * &hi));

        let es = eigh(&hermitize(&(&hi + &hj)))?;
        let kept: Vec<usize> = (0..es.values.len())
            .filter(|&k| es.values[k] > KERNEL_CUT)
            .collect();
        // The cut must land in a genuine spectral gap of h_i + h_j: a
        // retained eigenvalue near the cut is indistinguishable from kernel
        // at working precision and the reduction would not be faithful.
        let kept_min = kept
            .iter()
            .map(|&k| es.values[k])
            .fold(f64::INFINITY, f64::min);
        if kept.is_empty() || kept_min < KERNEL_SEPARATION {
            return Err(GapError::DegeneratePairBlock { i, j });
        }
        let mut basis = CMat::zeros(dim, kept.len());
        for (col, &k) in kept.iter().enumerate() {
            basis.set_column(col, &es.vectors.column(k));
        }
        let compress = |mat: &CMat| hermitize(&(basis.adjoint() * mat * &basis));

        let r = kept.len();
        let mut coeffs = vec![CMat::zeros(r, r); var_count];
        coeffs[variables.a_index(i, j).unwrap()] = compress(&hi2);
        coeffs[variables.a_index(j, i).unwrap()] = compress(&hj2);
        coeffs[variables.c_index(i, j).unwrap()] = -compress(&hi);
        coeffs[variables.c_index(j, i).unwrap()] = -compress(&hj);
        blocks.push(SdpBlock::new(compress(&f0), coeffs));
    }

    // Row equalities: Σ_j a_ij = 1 and Σ_j c_ij − x = 0 per term i.
    let mut eq_a = RMat::zeros(2 * m, var_count);
    let mut eq_b = RVec::zeros(2 * m);
    for i in 0..m {
        eq_b[i] = 1.0;
        eq_a[(m + i, variables.x())] = -1.0;
    }
    for (&(i, _), &idx) in &variables.a {
        eq_a[(i, idx)] = 1.0;
    }
    for (&(i, _), &idx) in &variables.c {
        eq_a[(m + i, idx)] = 1.0;
    }

    let mut objective = vec![0.0; var_count];
    objective[variables.x()] = 1.0;

    let problem = SdpProblem::with_equalities(objective, blocks, eq_a, eq_b)?;
    Ok(GapProgram {
        problem,
        variables,
        pairs,
        terms,
        nus,
        members,
        mode,
        projectorized: config.projectorized,
        n: ph.n(),
        beta: ph.beta(),
        t: ph.t(),
    })
}

// Worst verified block eigenvalue of the formulated problem at weights `y`
// with every c entry lowered by `s`: the solver-independent bracketing path.
fn audit_min_eig(program: &GapProgram, y: &[f64], s: f64) -> Result<f64, GapError> {
    let ys = program.variables.with_shrunk_c(y, s);
    let report = sdp::verify_feasibility(&program.problem, &ys, AUDIT_EIG_TOL)?;
    Ok(report
        .per_block_min_eig
        .iter()
        .fold(f64::INFINITY, |acc, &e| acc.min(e)))
}

// Minimal common shrink s > 0 restoring block feasibility, by geometric
// bracket growth and bisection. Lowering c by s adds s·(h_i + h_j), which is
// positive definite on the reduced blocks, so feasibility is monotone in s.
fn find_shrink(program: &GapProgram, y: &[f64]) -> Result<f64, GapError> {
    let mut hi = 1e-9;
    while audit_min_eig(program, y, hi)? < 0.0 {
        hi *= 2.0;
        if hi > SHRINK_CAP {
            return Err(GapError::ShrinkFailed { cap: SHRINK_CAP });
        }
    }
    let mut lo = 0.0;
    while hi - lo > SHRINK_TOL {
        let mid = 0.5 * (lo + hi);
        if audit_min_eig(program, y, mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Solves a formulated program and issues a certificate: solver optimality
/// is required, every pair block is re-verified by the independent
/// bracketing eigensolver, sub-margin violations are repaired by the common
/// shrink, and the certified value is the minimum row sum of the stored c
/// minus [`REPORT_SLACK`].
pub fn certify_program(program: &GapProgram, config: &GapConfig) -> Result<GapCertificate, GapError> {
    let sol = sdp::solve(&program.problem, &config.sdp)?;
    if sol.status != SdpStatus::Optimal {
        return Err(GapError::SolverNotOptimal {
            status: format!("{:?}", sol.status),
            gap: sol.duality_gap,
        });
    }

    let base_min = audit_min_eig(program, &sol.y, 0.0)?;
    let shrink = if base_min >= 0.0 {
        0.0
    } else if base_min > -FEAS_MARGIN {
        find_shrink(program, &sol.y)?
    } else {
        return Err(GapError::CertificateInfeasible {
            min_eig: base_min,
            margin: FEAS_MARGIN,
        });
    };
    let min_block_eig = if shrink == 0.0 {
        base_min
    } else {
        audit_min_eig(program, &sol.y, shrink)?
    };
    if min_block_eig < BLOCK_EIG_FLOOR {
        return Err(GapError::CertificateInfeasible {
            min_eig: min_block_eig,
            margin: FEAS_MARGIN,
        });
    }

    let mut a = BTreeMap::new();
    let mut c = BTreeMap::new();
    for (i, j) in program.variables.ordered_pairs() {
        a.insert((i, j), sol.y[program.variables.a_index(i, j).unwrap()]);
        c.insert(
            (i, j),
            sol.y[program.variables.c_index(i, j).unwrap()] - shrink,
        );
    }

    let m = program.terms.len();
    let mut a_rows = vec![0.0; m];
    let mut c_rows = vec![0.0; m];
    for (&(i, _), &v) in &a {
        a_rows[i] += v;
    }
    for (&(i, _), &v) in &c {
        c_rows[i] += v;
    }
    let equality_residual = a_rows
        .iter()
        .fold(0.0f64, |acc, &r| acc.max((r - 1.0).abs()));
    let delta = c_rows.iter().fold(f64::INFINITY, |acc, &r| acc.min(r)) - REPORT_SLACK;
    if delta <= 0.0 {
        return Err(GapError::NoCertificate {
            beta: program.beta,
            delta,
        });
    }

    Ok(GapCertificate {
        beta: program.beta,
        t: program.t,
        delta,
        a,
        c,
        sparsity_mode: program.mode,
        projectorized: program.projectorized,
        min_block_eig,
        equality_residual,
        shrink_applied: shrink,
        term_count: m,
    })
}

/// Builds the parent Hamiltonian of a model, formulates the pair program,
/// and certifies it. See [`certify_program`].
pub fn certify_point(
    model: &Model,
    mode: SparsityMode,
    config: &GapConfig,
) -> Result<GapCertificate, GapError> {
    let ph = build_parent_hamiltonian(model)?;
    let program = formulate_sdp(&ph, &model.graph, mode, config)?;
    certify_program(&program, config)
}

/// Per-pair minimal weights from the prescan, the row sums they induce, and
/// the (heuristic) verdict that every row stays below 1.
#[derive(Debug, Clone)]
pub struct PrescanReport {
    /// For each overlapping unordered pair (i < j), the minimizing
    /// (a_ij, a_ji).
    pub pair_weights: BTreeMap<(usize, usize), (f64, f64)>,
    /// Row sums Σ_{j≠i} a_ij; dropped (disjoint) pairs contribute zero.
    pub row_sums: Vec<f64>,
    /// True when every row sum is below 1. A heuristic screen: weights below
    /// the row budget leave room to lower c while keeping the blocks
    /// feasible, so a full solve is worth running.
    pub gap_plausible: bool,
}

/// Minimizes a_ij + a_ji subject to
/// h_i h_j + h_j h_i + a_ij h_i² + a_ji h_j² ⪰ 0 and a_ij, a_ji ≥ 0.
///
/// The nonnegativity bounds keep the screen meaningful: negative weights
/// only arise by spending the other term's positivity, which the row-sum
/// budget of the full program does not reward.
pub fn prescan_pair(
    hi: &LocalOperator,
    hj: &LocalOperator,
    config: &GapConfig,
) -> Result<(f64, f64), GapError> {
    let u = union_support(hi.support(), hj.support());
    let dim = 1usize << u.len();
    if dim > config.block_dim_cap {
        return Err(GapError::PairBlockTooLarge {
            sites: u.len(),
            dim,
            cap: config.block_dim_cap,
        });
    }
    let him = hi.promote(&u)?.matrix().clone();
    let hjm = hj.promote(&u)?.matrix().clone();
    let es = eigh(&hermitize(&(&him + &hjm)))?;
    let kept: Vec<usize> = (0..es.values.len())
        .filter(|&k| es.values[k] > KERNEL_CUT)
        .collect();
    let kept_min = kept
        .iter()
        .map(|&k| es.values[k])
        .fold(f64::INFINITY, f64::min);
    if kept.is_empty() || kept_min < KERNEL_SEPARATION {
        return Err(GapError::DegeneratePairBlock { i: 0, j: 1 });
    }
    let mut basis = CMat::zeros(dim, kept.len());
    for (col, &k) in kept.iter().enumerate() {
        basis.set_column(col, &es.vectors.column(k));
    }
    let compress = |mat: &CMat| hermitize(&(basis.adjoint() * mat * &basis));

    let one = |v: f64| CMat::from_element(1, 1, C64::new(v, 0.0));
    let blocks = vec![
        SdpBlock::new(
            compress(&hermitize(&(&him * &hjm + &hjm * &him))),
            vec![
                compress(&hermitize(&(&him * &him))),
                compress(&hermitize(&(&hjm * &hjm))),
            ],
        ),
        SdpBlock::new(one(0.0), vec![one(1.0), one(0.0)]),
        SdpBlock::new(one(0.0), vec![one(0.0), one(1.0)]),
    ];
    let problem = SdpProblem::new(vec![-1.0, -1.0], blocks)?;
    let sol = sdp::solve(&problem, &config.sdp)?;
    if sol.status != SdpStatus::Optimal {
        return Err(GapError::SolverNotOptimal {
            status: format!("{:?}", sol.status),
            gap: sol.duality_gap,
        });
    }
    Ok((sol.y[0], sol.y[1]))
}

/// Runs [`prescan_pair`] over every overlapping pair of parent terms and
/// assembles row sums and the screen verdict.
pub fn pairwise_prescan(
    ph: &ParentHamiltonian,
    config: &GapConfig,
) -> Result<PrescanReport, GapError> {
    let m = ph.len();
    if m < 2 {
        return Err(GapError::NotEnoughTerms(m));
    }
    let mut pair_weights = BTreeMap::new();
    let mut row_sums = vec![0.0; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let hi = ph.terms()[i].operator();
            let hj = ph.terms()[j].operator();
            if intersect_supports(hi.support(), hj.support()).is_empty() {
                continue;
            }
            let (aij, aji) = prescan_pair(hi, hj, config)?;
            row_sums[i] += aij;
            row_sums[j] += aji;
            pair_weights.insert((i, j), (aij, aji));
        }
    }
    let gap_plausible = row_sums.iter().all(|&r| r < 1.0);
    Ok(PrescanReport {
        pair_weights,
        row_sums,
        gap_plausible,
    })
}

/// The deformed pair value c′_ij(τ) after conjugating each term by its
/// slice of e^{−τK₁}.
///
/// `only_i`, `only_j`, `shared` are |ν_i∖ν_j|, |ν_j∖ν_i|, |ν_i∩ν_j|: counts
/// of deformation generators acting on h_i only, h_j only, and both. With
/// α = e^{−2·only_i·τ}, γ = e^{−2·only_j·τ}, β̃ = e^{−2·shared·τ}, the bound
/// splits into four regimes of the weight a = a_ij (the quadratic-term
/// surplus (1 − aα) − γβ̃(1 − a) must be bounded against either the linear
/// term or the identity, depending on the signs available):
///
/// ```text
///   a < 0:            γβ̃c − (1 − γβ̃) − a(γβ̃ − 1)
///   0 ≤ a ≤ 1:        γβ̃c − (1 − γβ̃) − a(γβ̃ − α)
///   a > 1, 1−aα ≥ 0:  γβ̃c − (1 − β̃) − a(β̃ − α)
///   a > 1, 1−aα < 0:  γβ̃c − (1 − β̃) − aβ̃(1 − α)
/// ```
///
/// The reversed orientation uses the same formula with `only_i` and
/// `only_j` exchanged, which this signature expresses directly.
pub fn continuity_cprime(
    a: f64,
    c: f64,
    only_i: usize,
    only_j: usize,
    shared: usize,
    tau: f64,
) -> f64 {
    let alpha = (-2.0 * only_i as f64 * tau).exp();
    let gamma = (-2.0 * only_j as f64 * tau).exp();
    let beta_tilde = (-2.0 * shared as f64 * tau).exp();
    let gb = gamma * beta_tilde;
    if a < 0.0 {
        gb * c - (1.0 - gb) - a * (gb - 1.0)
    } else if a <= 1.0 {
        gb * c - (1.0 - gb) - a * (gb - alpha)
    } else if 1.0 - a * alpha >= 0.0 {
        gb * c - (1.0 - beta_tilde) - a * (beta_tilde - alpha)
    } else {
        gb * c - (1.0 - beta_tilde) - a * beta_tilde * (1.0 - alpha)
    }
}

/// A certificate bundled with per-ordered-pair deformation set sizes,
/// evaluable as a gap lower bound δ(τ) at the shifted point β + τ.
#[derive(Debug, Clone)]
pub struct ContinuityExtension {
    base: GapCertificate,
    sizes: BTreeMap<(usize, usize), (usize, usize, usize)>,
}

impl ContinuityExtension {
    /// The certificate being extended.
    pub fn base(&self) -> &GapCertificate {
        &self.base
    }

    /// Set sizes (|ν_i∖ν_j|, |ν_j∖ν_i|, |ν_i∩ν_j|) per ordered pair.
    pub fn sizes(&self) -> &BTreeMap<(usize, usize), (usize, usize, usize)> {
        &self.sizes
    }

    /// Lower bound min_i Σ_j c′_ij(τ) − slack on the gap at β + τ;
    /// `delta_of_tau(0)` equals the base delta exactly.
    pub fn delta_of_tau(&self, tau: f64) -> f64 {
        let mut rows = vec![0.0; self.base.term_count];
        for (&(i, j), &c) in &self.base.c {
            let a = self.base.a[&(i, j)];
            let (only_i, only_j, shared) = self.sizes[&(i, j)];
            rows[i] += continuity_cprime(a, c, only_i, only_j, shared, tau);
        }
        rows.iter().fold(f64::INFINITY, |acc, &r| acc.min(r)) - REPORT_SLACK
    }
}

// Sizes (|ni∖nj|, |nj∖ni|, |ni∩nj|) for two ascending index lists.
fn set_split(ni: &[usize], nj: &[usize]) -> (usize, usize, usize) {
    let shared = intersect_supports(ni, nj).len();
    (ni.len() - shared, nj.len() - shared, shared)
}

/// Attaches deformation set sizes to a certificate. `nus[i]` is the index
/// set of e^{−βκ} factors conjugating term i; blocked and projectorized
/// certificates are refused because their β dependence is not a single
/// per-term conjugation.
pub fn continuity_extend(
    cert: &GapCertificate,
    nus: &[Vec<usize>],
) -> Result<ContinuityExtension, GapError> {
    if matches!(cert.sparsity_mode, SparsityMode::Blocked(_)) {
        return Err(GapError::ContinuityUnsupported(
            cert.sparsity_mode.to_string(),
        ));
    }
    if cert.projectorized {
        return Err(GapError::ContinuityUnsupported("projectorized".into()));
    }
    if nus.len() != cert.term_count {
        return Err(GapError::SetSizeCount {
            expected: cert.term_count,
            got: nus.len(),
        });
    }
    let mut sorted = nus.to_vec();
    for nu in &mut sorted {
        nu.sort_unstable();
    }
    let mut sizes = BTreeMap::new();
    for &(i, j) in cert.a.keys() {
        sizes.insert((i, j), set_split(&sorted[i], &sorted[j]));
    }
    Ok(ContinuityExtension {
        base: cert.clone(),
        sizes,
    })
}

/// Largest τ₀ with δ(τ) ≥ floor on [0, τ₀], by grid scan over
/// [0, tau_max] refined by bisection to 1e−10. δ(τ) is not assumed
/// monotone (c entries may be negative), so the guarantee is up to the
/// grid resolution. Returns `tau_max` if the grid never crosses, and +∞
/// when no pair carries any deformation generator (δ is then constant).
/// A floor strictly above δ(0) is an error; a floor exactly at δ(0)
/// returns τ₀ = 0 up to the bisection tolerance.
pub fn find_tau0(
    ext: &ContinuityExtension,
    floor: f64,
    config: &GapConfig,
) -> Result<f64, GapError> {
    let delta0 = ext.delta_of_tau(0.0);
    if delta0 < floor {
        return Err(GapError::FloorAboveBase { delta0, floor });
    }
    if ext.sizes.values().all(|&(a, b, s)| a == 0 && b == 0 && s == 0) {
        return Ok(f64::INFINITY);
    }
    let pts = config.tau_grid_points.max(2);
    let h = config.tau_max / pts as f64;
    let mut prev = 0.0;
    for k in 1..=pts {
        let tau = k as f64 * h;
        if ext.delta_of_tau(tau) < floor {
            let (mut lo, mut hi) = (prev, tau);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if ext.delta_of_tau(mid) >= floor {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(lo);
        }
        prev = tau;
    }
    Ok(config.tau_max)
}

/// A chained gap bound on the β interval [0, beta0] at fixed t.
#[derive(Debug, Clone)]
pub struct IntervalCertificate {
    /// Entangler angle.
    pub t: f64,
    /// Certified β points, increasing from 0.
    pub beta_points: Vec<f64>,
    /// Point certificate at each β point.
    pub certificates: Vec<GapCertificate>,
    /// Step taken from each point (one shorter than `beta_points` when the
    /// loop ends on a point certificate).
    pub tau_steps: Vec<f64>,
    /// Minimum of the continuity lower bounds over the covered interval.
    pub delta_min: f64,
    /// Right end of the certified interval.
    pub beta0: f64,
    /// Whether beta0 reached the requested target.
    pub covered: bool,
    /// Whether the loop stopped because a step underflowed [`TAU_STALL`].
    pub stalled: bool,
    /// Coarsest τ grid spacing used by the scans; the continuity guarantee
    /// between grid points is up to this resolution.
    pub scan_spacing: f64,
}

// Point-certification failures that end the interval loop gracefully
// (coverage up to the last continuity step still stands); structural errors
// keep propagating.
fn is_soft_failure(err: &GapError) -> bool {
    matches!(
        err,
        GapError::SolverNotOptimal { .. }
            | GapError::CertificateInfeasible { .. }
            | GapError::ShrinkFailed { .. }
            | GapError::NoCertificate { .. }
            | GapError::DegeneratePairBlock { .. }
    )
}

/// Certifies a gap over β ∈ [0, beta_target] at the model's t by chaining
/// point certificates with continuity steps: certify at β_k, extend, step
/// by τ₀ = [`find_tau0`] (capped by the remaining distance), re-certify at
/// β_{k+1}. Stops early with `covered = false` when a step stalls below
/// [`TAU_STALL`] or a later point refuses to certify; the interval up to the
/// last completed step remains certified. For Gibbs-type models (empty K₂)
/// `beta0` also lower-bounds the inverse critical temperature, since a
/// positive gap at every certified β rules out a transition there.
pub fn certify_interval(
    model: &Model,
    beta_target: f64,
    floor: f64,
    mode: SparsityMode,
    config: &GapConfig,
) -> Result<IntervalCertificate, GapError> {
    if !beta_target.is_finite() || beta_target < 0.0 {
        return Err(GapError::InvalidInterval(format!(
            "beta_target = {beta_target} must be finite and nonnegative"
        )));
    }
    if !floor.is_finite() || floor < 0.0 {
        return Err(GapError::InvalidInterval(format!(
            "floor = {floor} must be finite and nonnegative"
        )));
    }

    let ph0 = build_parent_hamiltonian(&model.with_beta(0.0)?)?;
    let nus: Vec<Vec<usize>> = ph0.terms().iter().map(|t| t.nu().to_vec()).collect();

    let pts = config.tau_grid_points.max(2);
    let mut beta_points = Vec::new();
    let mut certificates = Vec::new();
    let mut tau_steps = Vec::new();
    let mut delta_min = f64::INFINITY;
    let mut beta_k = 0.0;
    let mut covered = false;
    let mut stalled = false;

    loop {
        let cert = match certify_point(&model.with_beta(beta_k)?, mode, config) {
            Ok(cert) => cert,
            // The first point must certify; later failures end the loop with
            // the interval certified up to the current beta_k by continuity.
            Err(err) if is_soft_failure(&err) && !beta_points.is_empty() => break,
            Err(err) => return Err(err),
        };
        beta_points.push(beta_k);
        let remaining = beta_target - beta_k;
        if remaining <= 0.0 {
            delta_min = delta_min.min(cert.delta);
            certificates.push(cert);
            covered = true;
            break;
        }
        let ext = continuity_extend(&cert, &nus)?;
        certificates.push(cert);
        let tau0 = find_tau0(&ext, floor, config)?;
        let step = tau0.min(remaining);
        if step < TAU_STALL {
            stalled = true;
            break;
        }
        for k in 0..=pts {
            delta_min = delta_min.min(ext.delta_of_tau(step * k as f64 / pts as f64));
        }
        tau_steps.push(step);
        beta_k += step;
    }

    // A soft failure after at least one step leaves beta_k covered by the
    // last continuity stretch even though no certificate exists there.
    let beta0 = beta_k.min(beta_target);
    Ok(IntervalCertificate {
        t: model.t,
        beta_points,
        certificates,
        tau_steps,
        delta_min,
        beta0,
        covered,
        stalled,
        scan_spacing: config.tau_max / pts as f64,
    })
}
