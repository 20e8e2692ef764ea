//! Model definitions: an interaction graph, two commuting generator
//! families, the parameters `(beta, t)`, and a product state. Includes the
//! named example builders, the shipped test fixtures, and the bond-dimension
//! reporting bound.
//!
//! The represented state family is `(1/Z) e^{beta K_1} e^{i t K_2} (x)|phi_j>`
//! with `K_a` the sum of family `a`'s terms.

use crate::lattice::{Graph, LatticeError};
use crate::linalg::{eigh, CMat, CVec, LinalgError, C64};
use crate::operators::{CommutingFamily, LocalOperator, OperatorError, Pauli, PauliWord};
use thiserror::Error;

/// Errors from model construction.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("product state needs {expected} site vectors, got {got}")]
    ProductStateLength { expected: usize, got: usize },
    #[error("product state at site {site} is not normalized (norm {norm:.12})")]
    ProductStateNotNormalized { site: usize, norm: f64 },
    #[error("beta must be non-negative, got {0}")]
    NegativeBeta(f64),
    #[error("t must be non-negative, got {0}")]
    NegativeT(f64),
    #[error("injective MPS model needs at least one site matrix")]
    EmptyMps,
    #[error("site matrix {index} must be 4x4, got {rows}x{cols}")]
    MpsMatrixShape {
        index: usize,
        rows: usize,
        cols: usize,
    },
    #[error("site matrix {index} is not positive definite (min eigenvalue {min_eig:.3e})")]
    MpsMatrixNotPositive { index: usize, min_eig: f64 },
    #[error("site matrix {index} is not contractive (max eigenvalue {max_eig:.12} > 1)")]
    MpsMatrixNotContractive { index: usize, max_eig: f64 },
    #[error("unknown fixture name: {0}")]
    UnknownFixture(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A complete model: graph, generator families, parameters, product state.
#[derive(Debug, Clone)]
pub struct Model {
    pub graph: Graph,
    pub k1: CommutingFamily,
    pub k2: CommutingFamily,
    pub beta: f64,
    pub t: f64,
    /// Per-site normalized 2-vectors `|phi_j>`.
    pub product_state: Vec<CVec>,
}

impl Model {
    /// Validates parameter signs and the product state; families are already
    /// validated by construction of [`CommutingFamily`].
    pub fn new(
        graph: Graph,
        k1: CommutingFamily,
        k2: CommutingFamily,
        beta: f64,
        t: f64,
        product_state: Vec<CVec>,
    ) -> Result<Self, ModelError> {
        if beta < 0.0 || !beta.is_finite() {
            return Err(ModelError::NegativeBeta(beta));
        }
        if t < 0.0 || !t.is_finite() {
            return Err(ModelError::NegativeT(t));
        }
        if product_state.len() != graph.len() {
            return Err(ModelError::ProductStateLength {
                expected: graph.len(),
                got: product_state.len(),
            });
        }
        for (site, phi) in product_state.iter().enumerate() {
            let norm = phi.norm();
            if phi.len() != 2 || (norm - 1.0).abs() > 1e-12 {
                return Err(ModelError::ProductStateNotNormalized { site, norm });
            }
        }
        Ok(Self {
            graph,
            k1,
            k2,
            beta,
            t,
            product_state,
        })
    }

    /// Number of qubits.
    pub fn n(&self) -> usize {
        self.graph.len()
    }

    /// Same model at a different inverse temperature.
    pub fn with_beta(&self, beta: f64) -> Result<Self, ModelError> {
        if beta < 0.0 || !beta.is_finite() {
            return Err(ModelError::NegativeBeta(beta));
        }
        let mut m = self.clone();
        m.beta = beta;
        Ok(m)
    }
}

/// Single-site state `|0>`.
pub fn zero_state() -> CVec {
    CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
}

/// Single-site state `|+> = (|0> + |1>)/sqrt(2)`.
pub fn plus_state() -> CVec {
    let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    CVec::from_vec(vec![a, a])
}

/// Edge term `|11><11|`: rank-1 projector, the graph-state entangler
/// generator (`e^{i pi |11><11|}` is controlled-Z).
pub fn projector11(a: usize, b: usize) -> LocalOperator {
    let mut m = CMat::zeros(4, 4);
    m[(3, 3)] = C64::new(1.0, 0.0);
    LocalOperator::new(vec![a.min(b), a.max(b)], m).expect("valid 2-site operator")
}

/// Ising edge term `(1 -+ sigma_z sigma_z)/2`. With the state factor
/// `e^{+beta kappa}`, `ferromagnetic = true` picks `(1 + zz)/2` (rewards
/// aligned spins); `false` picks `(1 - zz)/2`.
pub fn ising_edge(a: usize, b: usize, ferromagnetic: bool) -> LocalOperator {
    let zz = PauliWord(vec![Pauli::Z, Pauli::Z]).matrix();
    let sign = if ferromagnetic { 1.0 } else { -1.0 };
    let m = (CMat::identity(4, 4) + zz * C64::new(sign, 0.0)) * C64::new(0.5, 0.0);
    LocalOperator::new(vec![a.min(b), a.max(b)], m).expect("valid 2-site operator")
}

/// Single-site projector `|+><+|`.
pub fn plus_projector(j: usize) -> LocalOperator {
    let m = (CMat::identity(2, 2) + Pauli::X.matrix()) * C64::new(0.5, 0.0);
    LocalOperator::new(vec![j], m).expect("valid 1-site operator")
}

/// Edge term `|--><--|` (the `|11><11|` entangler conjugated into the X
/// basis).
pub fn minus_minus_projector(a: usize, b: usize) -> LocalOperator {
    let minus = CVec::from_vec(vec![
        C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        C64::new(-std::f64::consts::FRAC_1_SQRT_2, 0.0),
    ]);
    let pair = minus.kronecker(&minus);
    let m = &pair * pair.adjoint();
    LocalOperator::new(vec![a.min(b), a.max(b)], m).expect("valid 2-site operator")
}

/// X-basis Ising edge term `(1 - sigma_x sigma_x)/2`.
pub fn x_ising_edge(a: usize, b: usize) -> LocalOperator {
    let xx = PauliWord(vec![Pauli::X, Pauli::X]).matrix();
    let m = (CMat::identity(4, 4) - xx) * C64::new(0.5, 0.0);
    LocalOperator::new(vec![a.min(b), a.max(b)], m).expect("valid 2-site operator")
}

/// Graph-state model: `|+>` everywhere, `kappa_2 = |11><11|` on each edge at
/// `t = pi` (each factor is a controlled-Z), `K_1` empty, `beta = 0`.
pub fn build_cluster_model(g: &Graph) -> Result<Model, ModelError> {
    let terms: Vec<LocalOperator> = g.edges().iter().map(|&(a, b)| projector11(a, b)).collect();
    let k2 = CommutingFamily::new(g, terms, 1)?;
    let phis = vec![plus_state(); g.len()];
    Model::new(g.clone(), CommutingFamily::empty(1), k2, 0.0, std::f64::consts::PI, phis)
}

/// Thermal-Ising model: `kappa_1 = (1 -+ zz)/2` per edge, `K_2` empty, `|+>`
/// product state. The built state's amplitudes are proportional to
/// `e^{-beta H_cl / 2}` for the classical Ising energy with the chosen sign.
pub fn build_gibbs_ising_model(
    g: &Graph,
    ferromagnetic: bool,
    beta: f64,
) -> Result<Model, ModelError> {
    let terms: Vec<LocalOperator> = g
        .edges()
        .iter()
        .map(|&(a, b)| ising_edge(a, b, ferromagnetic))
        .collect();
    let k1 = CommutingFamily::new(g, terms, 1)?;
    let phis = vec![plus_state(); g.len()];
    Model::new(g.clone(), k1, CommutingFamily::empty(1), beta, 0.0, phis)
}

/// Injective matrix-product-state model on `2N` qubits: site `n` occupies
/// the qubit pair `(2n, 2n+1)`, bonds carry maximally entangled pairs
/// created by `e^{i t kappa_2}` with `kappa_2` the Bell-pair projector on
/// `(2n+1, 2n+2)` and `t = pi/2`, and the positive site matrices enter
/// through `kappa_1` on each pair so that `e^{beta kappa_1}` acts as a
/// positive multiple of `Q_n`.
///
/// `kappa_1 = (log Q - log lambda_min(Q) I)/beta` with
/// `beta = max_n ln(lambda_max_n / lambda_min_n)` (1.0 when every `Q` is a
/// multiple of the identity): positive semidefinite with norm at most 1, and
/// the minimal admissible `beta` is exactly the model's `beta`.
pub fn build_injective_mps_model(qs: &[CMat]) -> Result<Model, ModelError> {
    if qs.is_empty() {
        return Err(ModelError::EmptyMps);
    }
    let n_sites = qs.len();
    let n_qubits = 2 * n_sites;
    let g = Graph::path(n_qubits);
    let mut spectra = Vec::with_capacity(n_sites);
    for (index, q) in qs.iter().enumerate() {
        if q.nrows() != 4 || q.ncols() != 4 {
            return Err(ModelError::MpsMatrixShape {
                index,
                rows: q.nrows(),
                cols: q.ncols(),
            });
        }
        let e = eigh(q)?;
        let min_eig = e.values[0];
        let max_eig = e.values[3];
        if min_eig <= 1e-14 {
            return Err(ModelError::MpsMatrixNotPositive { index, min_eig });
        }
        if max_eig > 1.0 + 1e-12 {
            return Err(ModelError::MpsMatrixNotContractive { index, max_eig });
        }
        spectra.push(e);
    }
    let beta = spectra
        .iter()
        .map(|e| (e.values[3] / e.values[0]).ln())
        .fold(0.0f64, f64::max);
    let (beta, k1_terms) = if beta <= 1e-14 {
        (1.0, Vec::new())
    } else {
        let terms = spectra
            .iter()
            .enumerate()
            .map(|(n, e)| {
                let lam_min = e.values[0];
                let m = e.apply_spectral(|lam| C64::new((lam.ln() - lam_min.ln()) / beta, 0.0));
                LocalOperator::new(vec![2 * n, 2 * n + 1], m).expect("4x4 on a qubit pair")
            })
            .collect();
        (beta, terms)
    };
    let k1 = CommutingFamily::new(&g, k1_terms, 1)?;
    let bell = {
        // Projector onto (|00> + |11>)/sqrt(2).
        let mut v = CVec::zeros(4);
        v[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        v[3] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        &v * v.adjoint()
    };
    let k2_terms: Vec<LocalOperator> = (0..n_sites.saturating_sub(1))
        .map(|n| {
            LocalOperator::new(vec![2 * n + 1, 2 * n + 2], bell.clone())
                .expect("4x4 on a qubit pair")
        })
        .collect();
    let k2 = CommutingFamily::new(&g, k2_terms, 1)?;
    let phis = vec![zero_state(); n_qubits];
    Model::new(g, k1, k2, beta, std::f64::consts::FRAC_PI_2, phis)
}

/// Reporting bound on the tensor-network bond dimension of the state family:
/// returns `(x, bound)` where `x` bounds the number of qudits within
/// distance `2 r_1` of a vertex on a degree-`z` graph (closed form for
/// `z != 2`, direct geometric-series sum for `z = 2`) and `bound` is the
/// order-of-magnitude estimate `d^(z^(2(r1+r2)))`.
pub fn bond_dimension_bound(z: u32, r1: u32, r2: u32, d: u32) -> (f64, f64) {
    assert!(z >= 1 && d >= 2);
    let x = if r1 == 0 {
        0.0
    } else if z == 2 {
        // 2 * sum_{i=1}^{2 r1 - 1} 1^i
        2.0 * (2 * r1 - 1) as f64
    } else {
        let zf = z as f64;
        zf * (1.0 - (zf - 1.0).powi(2 * r1 as i32)) / (2.0 - zf)
    };
    let exponent = (z as f64).powi(2 * (r1 + r2) as i32);
    (x, (d as f64).powf(exponent))
}

/// The shipped, named fixtures used by examples, acceptance runs, and the
/// CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// Path of 4; `kappa_2 = |11><11|` per edge at `t = pi`;
    /// `kappa_1 = (1 - zz)/2` per edge; `|+>` product state.
    Chain4,
    /// 2x2 open grid; ferromagnetic Ising `kappa_1` per edge; `K_2` empty;
    /// `|+>` product state.
    Gibbs4,
    /// `N` isolated qubits in `|0>` with both families empty; every parent
    /// term is the bare projector and the gap is exactly 1.
    Prod(usize),
    /// [`Fixture::Chain4`] with the product state replaced by `|0>`; the
    /// diagonal families make the built state exactly `|0000>`.
    Chain4Z0,
    /// [`Fixture::Chain4`] conjugated by Hadamards on every site:
    /// `kappa_2 = |--><--|`, `kappa_1 = (1 - xx)/2`, product state `|0>`.
    /// Same spectra as Chain4 but the `|0>`-site state is entangled.
    Chain4Hc,
    /// 3-qubit path with the Hadamard-conjugated chain families and `|0>`
    /// product state; the designated completeness-Gram fixture.
    Gram3,
}

impl Fixture {
    /// Canonical fixture name as used by the CLI.
    pub fn name(&self) -> String {
        match self {
            Fixture::Chain4 => "FX-CHAIN4".into(),
            Fixture::Gibbs4 => "FX-GIBBS4".into(),
            Fixture::Prod(n) => format!("FX-PROD{n}"),
            Fixture::Chain4Z0 => "FX-CHAIN4-Z0".into(),
            Fixture::Chain4Hc => "FX-CHAIN4-HC".into(),
            Fixture::Gram3 => "FX-GRAM3".into(),
        }
    }

    /// Parses a fixture name, case-insensitive; `FX-PROD<k>` carries its
    /// size inline (e.g. `FX-PROD4`).
    pub fn parse(name: &str) -> Result<Fixture, ModelError> {
        let up = name.to_ascii_uppercase();
        match up.as_str() {
            "FX-CHAIN4" => Ok(Fixture::Chain4),
            "FX-GIBBS4" => Ok(Fixture::Gibbs4),
            "FX-CHAIN4-Z0" => Ok(Fixture::Chain4Z0),
            "FX-CHAIN4-HC" => Ok(Fixture::Chain4Hc),
            "FX-GRAM3" => Ok(Fixture::Gram3),
            _ => {
                if let Some(num) = up.strip_prefix("FX-PROD") {
                    if let Ok(n) = num.parse::<usize>() {
                        if n >= 1 {
                            return Ok(Fixture::Prod(n));
                        }
                    }
                }
                Err(ModelError::UnknownFixture(name.to_string()))
            }
        }
    }

    /// Instantiates the fixture at inverse temperature `beta`
    /// ([`Fixture::Prod`] ignores it: that family is pinned at
    /// `beta = t = 0`).
    pub fn model(&self, beta: f64) -> Result<Model, ModelError> {
        match self {
            Fixture::Chain4 => {
                let g = Graph::path(4);
                let k2 = CommutingFamily::new(
                    &g,
                    g.edges().iter().map(|&(a, b)| projector11(a, b)).collect(),
                    1,
                )?;
                let k1 = CommutingFamily::new(
                    &g,
                    g.edges()
                        .iter()
                        .map(|&(a, b)| ising_edge(a, b, false))
                        .collect(),
                    1,
                )?;
                let phis = vec![plus_state(); 4];
                Model::new(g, k1, k2, beta, std::f64::consts::PI, phis)
            }
            Fixture::Gibbs4 => {
                let g = Graph::grid(2, 2, false);
                let mut m = build_gibbs_ising_model(&g, true, beta)?;
                m.beta = beta;
                Ok(m)
            }
            Fixture::Prod(n) => {
                let g = Graph::path(*n);
                let phis = vec![zero_state(); *n];
                Model::new(
                    g,
                    CommutingFamily::empty(1),
                    CommutingFamily::empty(1),
                    0.0,
                    0.0,
                    phis,
                )
            }
            Fixture::Chain4Z0 => {
                let mut m = Fixture::Chain4.model(beta)?;
                m.product_state = vec![zero_state(); 4];
                Ok(m)
            }
            Fixture::Chain4Hc => {
                let g = Graph::path(4);
                let k2 = CommutingFamily::new(
                    &g,
                    g.edges()
                        .iter()
                        .map(|&(a, b)| minus_minus_projector(a, b))
                        .collect(),
                    1,
                )?;
                let k1 = CommutingFamily::new(
                    &g,
                    g.edges().iter().map(|&(a, b)| x_ising_edge(a, b)).collect(),
                    1,
                )?;
                let phis = vec![zero_state(); 4];
                Model::new(g, k1, k2, beta, std::f64::consts::PI, phis)
            }
            Fixture::Gram3 => {
                let g = Graph::path(3);
                let k2 = CommutingFamily::new(
                    &g,
                    g.edges()
                        .iter()
                        .map(|&(a, b)| minus_minus_projector(a, b))
                        .collect(),
                    1,
                )?;
                let k1 = CommutingFamily::new(
                    &g,
                    g.edges().iter().map(|&(a, b)| x_ising_edge(a, b)).collect(),
                    1,
                )?;
                let phis = vec![zero_state(); 3];
                Model::new(g, k1, k2, beta, std::f64::consts::PI, phis)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn fixture_names_round_trip() {
        for fx in [
            Fixture::Chain4,
            Fixture::Gibbs4,
            Fixture::Prod(5),
            Fixture::Chain4Z0,
            Fixture::Chain4Hc,
            Fixture::Gram3,
        ] {
            assert_eq!(Fixture::parse(&fx.name()).unwrap(), fx);
        }
        assert_eq!(Fixture::parse("fx-chain4").unwrap(), Fixture::Chain4);
        assert!(Fixture::parse("FX-NOPE").is_err());
        assert!(Fixture::parse("FX-PROD0").is_err());
    }

    #[test]
    fn fixtures_build_valid_models() {
        for beta in [0.0, 0.3] {
            for fx in [
                Fixture::Chain4,
                Fixture::Gibbs4,
                Fixture::Prod(4),
                Fixture::Chain4Z0,
                Fixture::Chain4Hc,
                Fixture::Gram3,
            ] {
                let m = fx.model(beta).unwrap();
                assert_eq!(m.product_state.len(), m.n());
            }
        }
        let chain = Fixture::Chain4.model(0.2).unwrap();
        assert_eq!(chain.k1.len(), 3);
        assert_eq!(chain.k2.len(), 3);
        assert_eq!(chain.beta, 0.2);
        let prod = Fixture::Prod(6).model(0.9).unwrap();
        assert_eq!(prod.beta, 0.0);
        assert!(prod.k1.is_empty() && prod.k2.is_empty());
    }

    #[test]
    fn model_rejects_bad_product_state() {
        let g = Graph::path(2);
        let bad = vec![zero_state(), CVec::from_vec(vec![C64::new(2.0, 0.0), C64::new(0.0, 0.0)])];
        let err = Model::new(
            g,
            CommutingFamily::empty(1),
            CommutingFamily::empty(1),
            0.0,
            0.0,
            bad,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::ProductStateNotNormalized { site: 1, .. }));
    }

    #[test]
    fn cluster_model_shape() {
        let g = Graph::path(4);
        let m = build_cluster_model(&g).unwrap();
        assert_eq!(m.k2.len(), 3);
        assert!(m.k1.is_empty());
        assert_eq!(m.beta, 0.0);
        assert!((m.t - std::f64::consts::PI).abs() < 1e-15);
        // Single vertex: no entanglers at all.
        let one = build_cluster_model(&Graph::path(1)).unwrap();
        assert!(one.k2.is_empty());
    }

    #[test]
    fn gibbs_model_shape() {
        let g = Graph::grid(2, 2, false);
        let m = build_gibbs_ising_model(&g, true, 0.4).unwrap();
        assert_eq!(m.k1.len(), 4);
        assert!(m.k2.is_empty());
        assert_eq!(m.beta, 0.4);
        assert_eq!(m.t, 0.0);
    }

    #[test]
    fn mps_model_identity_matrices_give_empty_k1() {
        let qs = vec![CMat::identity(4, 4); 3];
        let m = build_injective_mps_model(&qs).unwrap();
        assert_eq!(m.n(), 6);
        assert!(m.k1.is_empty());
        assert_eq!(m.k2.len(), 2);
        assert_eq!(m.beta, 1.0);
        assert!((m.t - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn mps_model_kappa1_realizes_site_matrix() {
        let q = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.25, 0.0),
        ]));
        let m = build_injective_mps_model(&[q.clone(), q.clone()]).unwrap();
        assert_eq!(m.k1.len(), 2);
        // beta = ln(cond) = ln 4; e^{beta kappa_1} = Q / lambda_min = 4 Q.
        assert!((m.beta - 4.0f64.ln()).abs() < 1e-12);
        let kappa = &m.k1.terms()[0];
        let e = eigh(kappa.matrix()).unwrap();
        let exp_beta_kappa = e.apply_spectral(|lam| C64::new((m.beta * lam).exp(), 0.0));
        let target = &q * C64::new(4.0, 0.0);
        assert!(max_abs(&(&exp_beta_kappa - &target)) < 1e-10);
        // Norm of kappa_1 is exactly 1 at the worst site.
        assert!((e.values[3] - 1.0).abs() < 1e-12);
        assert!(e.values[0].abs() < 1e-12);
    }

    #[test]
    fn mps_model_rejects_bad_site_matrices() {
        let too_big = CMat::identity(4, 4) * C64::new(1.5, 0.0);
        assert!(matches!(
            build_injective_mps_model(&[too_big]),
            Err(ModelError::MpsMatrixNotContractive { .. })
        ));
        let singular = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.0, 0.0),
        ]));
        assert!(matches!(
            build_injective_mps_model(&[singular]),
            Err(ModelError::MpsMatrixNotPositive { .. })
        ));
        assert!(matches!(
            build_injective_mps_model(&[]),
            Err(ModelError::EmptyMps)
        ));
    }

    #[test]
    fn bond_dimension_bound_values() {
        assert_eq!(bond_dimension_bound(3, 0, 0, 2).0, 0.0);
        // Degree 2, r1 = 1: direct series, 2 * 1 = 2.
        assert_eq!(bond_dimension_bound(2, 1, 0, 2).0, 2.0);
        // Degree 4, r1 = 1: z((z-1)^2 - 1)/(z-2) = 4 * 8 / 2 = 16 = z^2.
        assert_eq!(bond_dimension_bound(4, 1, 0, 2).0, 16.0);
        // Bond bound d^(z^(2(r1+r2))): 2^(4^2) = 65536.
        assert_eq!(bond_dimension_bound(4, 1, 0, 2).1, 65536.0);
    }
}
