//! Interaction graphs, graph distance, and locality radii.
//!
//! Vertices are qubits, edges are the interaction graph `G`. Locality of an
//! operator family is measured by graph distance: the radius of a family is
//! the smallest `r` such that some vertex `c` in the spanning region has every
//! support within distance `r` of `c`.

use std::collections::VecDeque;
use thiserror::Error;

/// Marker for vertices unreachable from a BFS source.
pub const UNREACHABLE: u32 = u32::MAX;

/// Errors from graph construction and locality queries.
#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("vertex {vertex} out of range for graph with {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("duplicate edge ({a}, {b})")]
    DuplicateEdge { a: usize, b: usize },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("radius undefined: spanning region {region:?} is disconnected in the graph")]
    DisconnectedRegion { region: Vec<usize> },
    #[error("empty region has no radius")]
    EmptyRegion,
}

/// Undirected simple graph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adjacency: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from an explicit edge list. Edges are stored with the
    /// smaller endpoint first; duplicates and self-loops are rejected.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, LatticeError> {
        let mut adjacency = vec![Vec::new(); n];
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n {
                return Err(LatticeError::VertexOutOfRange { vertex: a, n });
            }
            if b >= n {
                return Err(LatticeError::VertexOutOfRange { vertex: b, n });
            }
            if a == b {
                return Err(LatticeError::SelfLoop(a));
            }
            let e = (a.min(b), a.max(b));
            if normalized.contains(&e) {
                return Err(LatticeError::DuplicateEdge { a: e.0, b: e.1 });
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
            normalized.push(e);
        }
        for neighbors in &mut adjacency {
            neighbors.sort_unstable();
        }
        Ok(Self {
            n,
            adjacency,
            edges: normalized,
        })
    }

    /// Path graph `0 - 1 - ... - n-1`.
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        Self::new(n, &edges).expect("path edges are valid")
    }

    /// Cycle graph on `n >= 3` vertices.
    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 vertices");
        let mut edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        edges.push((n - 1, 0));
        Self::new(n, &edges).expect("cycle edges are valid")
    }

    /// Rectangular grid with `rows x cols` vertices in row-major order.
    /// `periodic` wraps both directions (skipping wrap edges that would
    /// duplicate an existing edge on 1- or 2-wide dimensions).
    pub fn grid(rows: usize, cols: usize, periodic: bool) -> Self {
        let idx = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((idx(r, c), idx(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((idx(r, c), idx(r + 1, c)));
                }
            }
        }
        if periodic {
            if cols > 2 {
                for r in 0..rows {
                    edges.push((idx(r, cols - 1), idx(r, 0)));
                }
            }
            if rows > 2 {
                for c in 0..cols {
                    edges.push((idx(rows - 1, c), idx(0, c)));
                }
            }
        }
        Self::new(rows * cols, &edges).expect("grid edges are valid")
    }

    /// Number of vertices.
    pub fn len(&self) -> usize {
        self.n
    }

    /// True when the graph has no vertices.
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Normalized edge list, smaller endpoint first, in insertion order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbors of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    /// BFS distances from `source`; unreachable vertices get [`UNREACHABLE`].
    pub fn distances_from(&self, source: usize) -> Result<Vec<u32>, LatticeError> {
        if source >= self.n {
            return Err(LatticeError::VertexOutOfRange {
                vertex: source,
                n: self.n,
            });
        }
        let mut dist = vec![UNREACHABLE; self.n];
        dist[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                if dist[w] == UNREACHABLE {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        Ok(dist)
    }

    /// Graph distance between two vertices, [`UNREACHABLE`] if disconnected.
    pub fn distance(&self, a: usize, b: usize) -> Result<u32, LatticeError> {
        Ok(self.distances_from(a)?[b])
    }

    /// Closed ball of radius `r` around `center`, sorted ascending.
    pub fn ball(&self, center: usize, r: u32) -> Result<Vec<usize>, LatticeError> {
        let dist = self.distances_from(center)?;
        Ok((0..self.n).filter(|&v| dist[v] <= r).collect())
    }

    /// Locality radius of a collection of supports: the minimum over centers
    /// `c` in the spanning region of the maximum over supports `S` of
    /// `max_{v in S} d(c, v)`. Centers range over every vertex of the
    /// spanning region (the union of the supports). Errors if the spanning
    /// region is disconnected (some support vertex unreachable from a center)
    /// or empty.
    pub fn radius(&self, supports: &[Vec<usize>]) -> Result<u32, LatticeError> {
        let mut region: Vec<usize> = supports.iter().flatten().copied().collect();
        region.sort_unstable();
        region.dedup();
        if region.is_empty() {
            return Err(LatticeError::EmptyRegion);
        }
        for &v in &region {
            if v >= self.n {
                return Err(LatticeError::VertexOutOfRange { vertex: v, n: self.n });
            }
        }
        let mut best = None;
        for &c in &region {
            let dist = self.distances_from(c)?;
            let mut worst = 0u32;
            let mut reachable = true;
            for &v in &region {
                if dist[v] == UNREACHABLE {
                    reachable = false;
                    break;
                }
                worst = worst.max(dist[v]);
            }
            if reachable {
                best = Some(best.map_or(worst, |b: u32| b.min(worst)));
            }
        }
        best.ok_or(LatticeError::DisconnectedRegion { region })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_distances() {
        let g = Graph::path(5);
        assert_eq!(g.distance(0, 4).unwrap(), 4);
        assert_eq!(g.distance(2, 2).unwrap(), 0);
        assert_eq!(g.edges().len(), 4);
    }

    #[test]
    fn cycle_wraps() {
        let g = Graph::cycle(6);
        assert_eq!(g.distance(0, 5).unwrap(), 1);
        assert_eq!(g.distance(0, 3).unwrap(), 3);
    }

    #[test]
    fn grid_open_and_periodic() {
        let open = Graph::grid(3, 3, false);
        assert_eq!(open.distance(0, 8).unwrap(), 4);
        let per = Graph::grid(3, 3, true);
        assert_eq!(per.distance(0, 8).unwrap(), 2);
        // 2x2 periodic grid must not duplicate edges.
        let small = Graph::grid(2, 2, true);
        assert_eq!(small.edges().len(), 4);
    }

    #[test]
    fn unreachable_is_flagged() {
        let g = Graph::new(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(g.distance(0, 3).unwrap(), UNREACHABLE);
    }

    #[test]
    fn ball_collects_neighborhood() {
        let g = Graph::path(6);
        assert_eq!(g.ball(2, 1).unwrap(), vec![1, 2, 3]);
        assert_eq!(g.ball(0, 2).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn radius_of_edge_supports_on_path() {
        let g = Graph::path(4);
        // Edge supports of a path: center 1 or 2 reaches everything in 2.
        let supports: Vec<Vec<usize>> =
            g.edges().iter().map(|&(a, b)| vec![a, b]).collect();
        assert_eq!(g.radius(&supports).unwrap(), 2);
        // A single edge support has radius 1 (center on either endpoint).
        assert_eq!(g.radius(&[vec![1, 2]]).unwrap(), 1);
        assert_eq!(g.radius(&[vec![2]]).unwrap(), 0);
    }

    #[test]
    fn radius_errors_on_disconnected_region() {
        let g = Graph::new(4, &[(0, 1), (2, 3)]).unwrap();
        let err = g.radius(&[vec![0], vec![3]]).unwrap_err();
        assert!(matches!(err, LatticeError::DisconnectedRegion { .. }));
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(
            Graph::new(2, &[(0, 0)]),
            Err(LatticeError::SelfLoop(0))
        ));
        assert!(matches!(
            Graph::new(2, &[(0, 1), (1, 0)]),
            Err(LatticeError::DuplicateEdge { .. })
        ));
        assert!(matches!(
            Graph::new(2, &[(0, 5)]),
            Err(LatticeError::VertexOutOfRange { .. })
        ));
    }
}
