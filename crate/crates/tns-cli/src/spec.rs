//! Model-spec file format: a JSON document with sections {version, graph,
//! K1, K2, beta, t, product_state}. Complex numbers are [re, im] pairs,
//! matrices are row-major, and common two-site terms may be written with a
//! named-constructor shorthand instead of a dense matrix. Files produced by
//! `model build` always carry dense matrices; the shorthand exists for
//! hand-written fixtures.

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use tns_core::lattice::Graph;
use tns_core::linalg::{CMat, CVec};
use tns_core::models::{
    ising_edge, minus_minus_projector, plus_state, projector11, x_ising_edge, zero_state, Model,
};
use tns_core::operators::{CommutingFamily, LocalOperator};

/// Current file format version.
pub const SPEC_VERSION: u32 = 1;

/// Top-level document.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub version: u32,
    pub graph: GraphSpec,
    #[serde(rename = "K1")]
    pub k1: FamilySpec,
    #[serde(rename = "K2")]
    pub k2: FamilySpec,
    pub beta: f64,
    pub t: f64,
    pub product_state: Vec<SiteSpec>,
}

/// Vertex count plus undirected edge list.
#[derive(Debug, Serialize, Deserialize)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

/// One commuting family: locality radius and its terms.
#[derive(Debug, Serialize, Deserialize)]
pub struct FamilySpec {
    pub radius: u32,
    pub terms: Vec<TermSpec>,
}

/// A family term, as a named constructor or a dense matrix. The named forms
/// cover the shipped two-site terms; `matrix` is row-major over the listed
/// sites with [re, im] entries.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TermSpec {
    Named {
        name: String,
        sites: Vec<usize>,
    },
    Dense {
        sites: Vec<usize>,
        matrix: Vec<[f64; 2]>,
    },
}

/// One site of the product state: a named state or two [re, im] amplitudes.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SiteSpec {
    Named(String),
    Amplitudes(Vec<[f64; 2]>),
}

impl TermSpec {
    fn to_operator(&self) -> Result<LocalOperator> {
        match self {
            TermSpec::Named { name, sites } => {
                let pair = || -> Result<(usize, usize)> {
                    if sites.len() != 2 {
                        bail!("named term {name} needs exactly two sites, got {}", sites.len());
                    }
                    Ok((sites[0], sites[1]))
                };
                match name.as_str() {
                    "projector11" => {
                        let (a, b) = pair()?;
                        Ok(projector11(a, b))
                    }
                    "ising-edge" => {
                        let (a, b) = pair()?;
                        Ok(ising_edge(a, b, false))
                    }
                    "ferro-ising-edge" => {
                        let (a, b) = pair()?;
                        Ok(ising_edge(a, b, true))
                    }
                    "x-ising-edge" => {
                        let (a, b) = pair()?;
                        Ok(x_ising_edge(a, b))
                    }
                    "minus-minus-projector" => {
                        let (a, b) = pair()?;
                        Ok(minus_minus_projector(a, b))
                    }
                    other => bail!("unknown named term constructor {other:?}"),
                }
            }
            TermSpec::Dense { sites, matrix } => {
                let dim = 1usize << sites.len();
                if matrix.len() != dim * dim {
                    bail!(
                        "dense term on {} sites needs {} entries, got {}",
                        sites.len(),
                        dim * dim,
                        matrix.len()
                    );
                }
                let entries: Vec<Complex64> = matrix
                    .iter()
                    .map(|&[re, im]| Complex64::new(re, im))
                    .collect();
                let m = CMat::from_row_slice(dim, dim, &entries);
                Ok(LocalOperator::new(sites.clone(), m)?)
            }
        }
    }

    fn from_operator(op: &LocalOperator) -> TermSpec {
        let m = op.matrix();
        let mut matrix = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let z = m[(r, c)];
                matrix.push([z.re, z.im]);
            }
        }
        TermSpec::Dense {
            sites: op.support().to_vec(),
            matrix,
        }
    }
}

impl SiteSpec {
    fn to_amplitudes(&self) -> Result<CVec> {
        match self {
            SiteSpec::Named(name) => match name.as_str() {
                "zero" => Ok(zero_state()),
                "plus" => Ok(plus_state()),
                other => bail!("unknown named site state {other:?} (use \"zero\" or \"plus\")"),
            },
            SiteSpec::Amplitudes(pairs) => {
                if pairs.len() != 2 {
                    bail!("site state needs 2 amplitudes, got {}", pairs.len());
                }
                Ok(CVec::from_iterator(
                    2,
                    pairs.iter().map(|&[re, im]| Complex64::new(re, im)),
                ))
            }
        }
    }
}

impl ModelSpec {
    /// Serializes a validated model with dense matrices.
    pub fn from_model(model: &Model) -> ModelSpec {
        ModelSpec {
            version: SPEC_VERSION,
            graph: GraphSpec {
                n: model.graph.len(),
                edges: model.graph.edges().to_vec(),
            },
            k1: FamilySpec {
                radius: model.k1.radius(),
                terms: model.k1.terms().iter().map(TermSpec::from_operator).collect(),
            },
            k2: FamilySpec {
                radius: model.k2.radius(),
                terms: model.k2.terms().iter().map(TermSpec::from_operator).collect(),
            },
            beta: model.beta,
            t: model.t,
            product_state: model
                .product_state
                .iter()
                .map(|phi| SiteSpec::Amplitudes(vec![[phi[0].re, phi[0].im], [phi[1].re, phi[1].im]]))
                .collect(),
        }
    }

    /// Rebuilds the model, running every family and model invariant; the
    /// error chain lists the first violated one.
    pub fn to_model(&self) -> Result<Model> {
        if self.version != SPEC_VERSION {
            bail!("unsupported model-spec version {}", self.version);
        }
        let graph = Graph::new(self.graph.n, &self.graph.edges)?;
        let build_family = |fam: &FamilySpec, label: &str| -> Result<CommutingFamily> {
            let terms = fam
                .terms
                .iter()
                .enumerate()
                .map(|(i, t)| t.to_operator().with_context(|| format!("{label} term {i}")))
                .collect::<Result<Vec<_>>>()?;
            CommutingFamily::new(&graph, terms, fam.radius)
                .with_context(|| format!("family {label} failed validation"))
        };
        let k1 = build_family(&self.k1, "K1")?;
        let k2 = build_family(&self.k2, "K2")?;
        let product_state = self
            .product_state
            .iter()
            .enumerate()
            .map(|(j, s)| s.to_amplitudes().with_context(|| format!("site {j}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Model::new(graph, k1, k2, self.beta, self.t, product_state)?)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a document and reports position on malformed JSON.
    pub fn parse(text: &str) -> Result<ModelSpec> {
        serde_json::from_str(text).map_err(|e| anyhow!("malformed model spec: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tns_core::models::Fixture;
    use tns_core::state::build_state;

    #[test]
    fn fixture_round_trips_through_json() {
        for name in ["FX-CHAIN4", "FX-GIBBS4", "FX-CHAIN4-HC", "FX-GRAM3", "FX-PROD3"] {
            let model = Fixture::parse(name).unwrap().model(0.3).unwrap();
            let text = ModelSpec::from_model(&model).to_json().unwrap();
            let back = ModelSpec::parse(&text).unwrap().to_model().unwrap();
            assert_eq!(back.n(), model.n());
            assert_eq!(back.beta, model.beta);
            assert_eq!(back.t, model.t);
            let a = build_state(&model).unwrap();
            let b = build_state(&back).unwrap();
            let overlap: Complex64 = a
                .amplitudes()
                .iter()
                .zip(b.amplitudes().iter())
                .map(|(x, y)| x.conj() * y)
                .sum();
            assert!((overlap.norm() - 1.0).abs() < 1e-12, "{name}: {overlap}");
        }
    }

    #[test]
    fn named_shorthand_builds_terms() {
        let text = r#"{
            "version": 1,
            "graph": {"n": 2, "edges": [[0, 1]]},
            "K1": {"radius": 1, "terms": [{"name": "ising-edge", "sites": [0, 1]}]},
            "K2": {"radius": 1, "terms": [{"name": "projector11", "sites": [0, 1]}]},
            "beta": 0.2,
            "t": 3.141592653589793,
            "product_state": ["plus", "zero"]
        }"#;
        let model = ModelSpec::parse(text).unwrap().to_model().unwrap();
        assert_eq!(model.n(), 2);
        assert_eq!(model.k1.len(), 1);
        assert_eq!(model.product_state[1][0].re, 1.0);
    }

    #[test]
    fn violations_are_reported() {
        // Non-commuting K1: two rank-1 projectors with overlap 1/2.
        let text = r#"{
            "version": 1,
            "graph": {"n": 2, "edges": [[0, 1]]},
            "K1": {"radius": 1, "terms": [
                {"name": "projector11", "sites": [0, 1]},
                {"name": "minus-minus-projector", "sites": [0, 1]}
            ]},
            "K2": {"radius": 1, "terms": []},
            "beta": 0.1,
            "t": 0.0,
            "product_state": ["zero", "zero"]
        }"#;
        let err = ModelSpec::parse(text).unwrap().to_model().unwrap_err();
        assert!(format!("{err:#}").contains("K1"), "{err:#}");
        // Unnormalized site state.
        let text2 = r#"{
            "version": 1,
            "graph": {"n": 1, "edges": []},
            "K1": {"radius": 1, "terms": []},
            "K2": {"radius": 1, "terms": []},
            "beta": 0.0,
            "t": 0.0,
            "product_state": [[[0.5, 0.0], [0.0, 0.0]]]
        }"#;
        assert!(ModelSpec::parse(text2).unwrap().to_model().is_err());
    }
}
