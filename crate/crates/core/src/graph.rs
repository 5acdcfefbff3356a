//! Weighted undirected graphs with a designated source and sink, and the
//! dense matrix operators derived from them.
//!
//! Node ids are dense integers `0..n`. A [`WeightedGraph`] is validated on
//! construction (positive weights, no self-loops, no parallel edges,
//! connected, `source != sink`) and immutable afterwards.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("a graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("node id {id} out of range for a graph with {n} nodes")]
    IdOutOfRange { id: usize, n: usize },
    #[error("source and sink are both node {0}")]
    SourceEqualsSink(usize),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge {{{u},{v}}} has non-positive or non-finite weight {w}")]
    NonPositiveWeight { u: usize, v: usize, w: f64 },
    #[error("edge {{{u},{v}}} listed more than once")]
    DuplicateEdge { u: usize, v: usize },
    #[error("graph is disconnected: node {unreached} not reachable from node 0")]
    Disconnected { unreached: usize },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// An undirected edge stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub u: usize,
    pub v: usize,
    pub w: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph<T> {
    n: usize,
    edges: Vec<Edge<T>>,
    adjacency: Vec<Vec<(usize, T)>>,
    volume: Vec<T>,
    source: usize,
    sink: usize,
}

impl<T: Scalar> WeightedGraph<T> {
    /// Validates an edge list and builds the graph.
    ///
    /// Edges may be given in either orientation; they are stored sorted by
    /// `(min, max)` endpoint so that two graphs with the same edge set
    /// compare equal.
    pub fn new<I>(n: usize, edge_list: I, source: usize, sink: usize) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        for id in [source, sink] {
            if id >= n {
                return Err(GraphError::IdOutOfRange { id, n });
            }
        }
        if source == sink {
            return Err(GraphError::SourceEqualsSink(source));
        }

        let mut edges = Vec::new();
        for (a, b, w) in edge_list {
            for id in [a, b] {
                if id >= n {
                    return Err(GraphError::IdOutOfRange { id, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if !(w > T::zero()) || !w.is_finite() {
                return Err(GraphError::NonPositiveWeight { u, v, w: w.to_f64_lossy() });
            }
            edges.push(Edge { u, v, w });
        }
        edges.sort_by_key(|e| (e.u, e.v));
        if let Some(pair) = edges.windows(2).find(|p| (p[0].u, p[0].v) == (p[1].u, p[1].v)) {
            return Err(GraphError::DuplicateEdge { u: pair[0].u, v: pair[0].v });
        }

        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.u].push((e.v, e.w));
            adjacency[e.v].push((e.u, e.w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
        let volume = adjacency
            .iter()
            .map(|list| list.iter().fold(T::zero(), |acc, &(_, w)| acc + w))
            .collect();

        let g = Self { n, edges, adjacency, volume, source, sink };
        if let Some(unreached) = g.unreached_node(None) {
            return Err(GraphError::Disconnected { unreached });
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Neighbors of `u` with edge weights, sorted by neighbor id.
    pub fn neighbors(&self, u: usize) -> &[(usize, T)] {
        &self.adjacency[u]
    }

    pub fn volume(&self, u: usize) -> T {
        self.volume[u]
    }

    pub fn volumes(&self) -> &[T] {
        &self.volume
    }

    pub fn vol_min(&self) -> T {
        self.volume.iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b))
    }

    pub fn vol_max(&self) -> T {
        self.volume.iter().copied().fold(T::zero(), |a, b| a.max(b))
    }

    /// Weight of `{u, v}`, zero when the pair is not an edge.
    pub fn weight(&self, u: usize, v: usize) -> T {
        self.adjacency[u]
            .binary_search_by_key(&v, |&(x, _)| x)
            .map(|i| self.adjacency[u][i].1)
            .unwrap_or_else(|_| T::zero())
    }

    /// Whether the graph with the sink and its incident edges removed is
    /// still connected.
    pub fn connected_without_sink(&self) -> bool {
        self.n > 1 && self.unreached_node(Some(self.sink)).is_none()
    }

    /// First node not reachable by BFS from the smallest non-excluded node.
    fn unreached_node(&self, excluded: Option<usize>) -> Option<usize> {
        let start = (0..self.n).find(|&u| Some(u) != excluded)?;
        let mut seen = vec![false; self.n];
        if let Some(x) = excluded {
            seen[x] = true;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().position(|&s| !s)
    }

    /// Copy of the graph where only the `u -> v` direction of edge `{u, v}`
    /// is rescaled, leaving volumes untouched. The result violates the
    /// graph invariants; it exists so the self-check can demonstrate that it
    /// notices a corrupted weight.
    #[doc(hidden)]
    pub fn with_corrupted_weight(&self, u: usize, v: usize, factor: T) -> Self {
        let mut g = self.clone();
        if let Ok(i) = g.adjacency[u].binary_search_by_key(&v, |&(x, _)| x) {
            g.adjacency[u][i].1 *= factor;
        }
        g
    }
}

/// Dense operators of a graph: adjacency `A`, volume matrix `D`, Laplacian
/// `L = D - A`, transition matrix `P = D⁻¹A` and its symmetric conjugate
/// `N = D^{-1/2} A D^{-1/2}`.
#[derive(Debug, Clone)]
pub struct OperatorBundle<T: Scalar> {
    pub adjacency: DMatrix<T>,
    pub degree: DMatrix<T>,
    pub laplacian: DMatrix<T>,
    pub transition: DMatrix<T>,
    pub normalized: DMatrix<T>,
    pub vol_min: T,
    pub vol_max: T,
}

pub fn adjacency_matrix<T: Scalar>(g: &WeightedGraph<T>) -> DMatrix<T> {
    let mut a = DMatrix::zeros(g.n(), g.n());
    for u in 0..g.n() {
        for &(v, w) in g.neighbors(u) {
            a[(u, v)] = w;
        }
    }
    a
}

pub fn operator_matrices<T: Scalar>(g: &WeightedGraph<T>) -> OperatorBundle<T> {
    let n = g.n();
    let adjacency = adjacency_matrix(g);
    let vol = DVector::from_column_slice(g.volumes());
    let degree = DMatrix::from_diagonal(&vol);
    let laplacian = &degree - &adjacency;
    let transition = DMatrix::from_fn(n, n, |i, j| adjacency[(i, j)] / vol[i]);
    let normalized =
        DMatrix::from_fn(n, n, |i, j| adjacency[(i, j)] / (vol[i].sqrt() * vol[j].sqrt()));
    OperatorBundle {
        adjacency,
        degree,
        laplacian,
        transition,
        normalized,
        vol_min: g.vol_min(),
        vol_max: g.vol_max(),
    }
}

/// Unit-current demand: `+1` at the source, `-1` at the sink.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandVector<T: Scalar>(pub DVector<T>);

impl<T: Scalar> DemandVector<T> {
    pub fn as_vector(&self) -> &DVector<T> {
        &self.0
    }
}

pub fn demand_vector<T: Scalar>(g: &WeightedGraph<T>) -> DemandVector<T> {
    let mut b = DVector::zeros(g.n());
    b[g.source()] = T::one();
    b[g.sink()] = -T::one();
    DemandVector(b)
}

/// Transition matrix and demand with the sink grounded.
#[derive(Debug, Clone)]
pub struct GroundedOperators<T: Scalar> {
    /// `P` with the sink row and column zeroed (n×n).
    pub transition_under: DMatrix<T>,
    /// `b` with the sink entry zeroed.
    pub demand_under: DVector<T>,
    /// `transition_under` with the sink row and column deleted ((n-1)×(n-1)).
    pub transition_ground: DMatrix<T>,
}

pub fn grounded_operators<T: Scalar>(g: &WeightedGraph<T>) -> GroundedOperators<T> {
    let sink = g.sink();
    let ops = operator_matrices(g);
    let mut transition_under = ops.transition;
    transition_under.row_mut(sink).fill(T::zero());
    transition_under.column_mut(sink).fill(T::zero());
    let mut demand_under = demand_vector(g).0;
    demand_under[sink] = T::zero();
    let transition_ground = ground(&transition_under, sink);
    GroundedOperators { transition_under, demand_under, transition_ground }
}

/// Deletes row and column `idx` from a square matrix.
pub fn ground<T: Scalar>(m: &DMatrix<T>, idx: usize) -> DMatrix<T> {
    m.clone().remove_row(idx).remove_column(idx)
}

/// Deletes entry `idx` from a vector.
pub fn ground_vector<T: Scalar>(v: &DVector<T>, idx: usize) -> DVector<T> {
    v.clone().remove_row(idx)
}

/// Reinserts a zero at `idx`, inverting [`ground_vector`].
pub fn unground_vector<T: Scalar>(v: &DVector<T>, idx: usize) -> DVector<T> {
    v.clone().insert_row(idx, T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p3() -> WeightedGraph<f64> {
        WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)], 0, 2).unwrap()
    }

    fn k4() -> WeightedGraph<f64> {
        let edges = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v, 1.0)));
        WeightedGraph::new(4, edges, 0, 3).unwrap()
    }

    #[test]
    fn smallest_graph() {
        let g = WeightedGraph::new(2, [(0, 1, 1.0)], 0, 1).unwrap();
        assert_eq!((g.n(), g.m(), g.source(), g.sink()), (2, 1, 0, 1));
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            WeightedGraph::new(3, [(0, 1, 1.0)], 0, 2).unwrap_err(),
            GraphError::Disconnected { unreached: 2 }
        );
        assert!(matches!(
            WeightedGraph::new(2, [(0, 1, -1.0)], 0, 1),
            Err(GraphError::NonPositiveWeight { .. })
        ));
        assert!(matches!(
            WeightedGraph::new(2, [(0, 1, 0.0)], 0, 1),
            Err(GraphError::NonPositiveWeight { .. })
        ));
        assert!(matches!(
            WeightedGraph::new(2, [(0, 1, f64::NAN)], 0, 1),
            Err(GraphError::NonPositiveWeight { .. })
        ));
        assert_eq!(
            WeightedGraph::new(2, [(0, 1, 1.0), (1, 0, 2.0)], 0, 1).unwrap_err(),
            GraphError::DuplicateEdge { u: 0, v: 1 }
        );
        assert_eq!(
            WeightedGraph::new(2, [(0, 1, 1.0)], 1, 1).unwrap_err(),
            GraphError::SourceEqualsSink(1)
        );
        assert_eq!(
            WeightedGraph::new(2, [(0, 2, 1.0)], 0, 1).unwrap_err(),
            GraphError::IdOutOfRange { id: 2, n: 2 }
        );
        assert_eq!(
            WeightedGraph::new(2, [(0, 1, 1.0)], 0, 5).unwrap_err(),
            GraphError::IdOutOfRange { id: 5, n: 2 }
        );
        assert_eq!(
            WeightedGraph::new(2, [(1, 1, 1.0)], 0, 1).unwrap_err(),
            GraphError::SelfLoop(1)
        );
        assert_eq!(
            WeightedGraph::<f64>::new(1, [], 0, 0).unwrap_err(),
            GraphError::TooFewNodes(1)
        );
    }

    #[test]
    fn single_edge_operators() {
        let g = WeightedGraph::new(2, [(0, 1, 1.0)], 0, 1).unwrap();
        let ops = operator_matrices(&g);
        assert_eq!(ops.degree, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        assert_eq!(ops.laplacian, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(ops.transition, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn path_volumes() {
        let g = p3();
        assert_eq!(g.volumes(), &[1.0, 2.0, 1.0]);
        assert_eq!(g.vol_min(), 1.0);
        assert_eq!(g.vol_max(), 2.0);
    }

    #[test]
    fn complete_graph_transition() {
        let ops = operator_matrices(&k4());
        let expected = (DMatrix::from_element(4, 4, 1.0) - DMatrix::identity(4, 4)) / 3.0;
        assert_relative_eq!(ops.transition, expected, epsilon = 1e-15);
        for r in 0..4 {
            assert_relative_eq!(ops.transition.row(r).sum(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn demand_vectors() {
        let single = WeightedGraph::new(2, [(0, 1, 1.0)], 0, 1).unwrap();
        assert_eq!(demand_vector(&single).0.as_slice(), &[1.0, -1.0]);
        assert_eq!(demand_vector(&p3()).0.as_slice(), &[1.0, 0.0, -1.0]);
        assert_eq!(demand_vector(&k4()).0.as_slice(), &[1.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn grounding() {
        let single = WeightedGraph::new(2, [(0, 1, 1.0)], 0, 1).unwrap();
        let gr = grounded_operators(&single);
        assert_eq!(gr.transition_under, DMatrix::zeros(2, 2));
        assert_eq!(gr.transition_ground, DMatrix::zeros(1, 1));

        let gr = grounded_operators(&p3());
        assert_eq!(gr.transition_ground, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]));
        assert_eq!(gr.demand_under.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn sink_removal_connectivity() {
        assert!(p3().connected_without_sink());
        // star centred on the sink falls apart without it
        let star = WeightedGraph::new(3, [(0, 2, 1.0), (1, 2, 1.0)], 0, 2).unwrap();
        assert!(!star.connected_without_sink());
    }

    #[test]
    fn generic_over_f32() {
        let g = WeightedGraph::<f32>::new(3, [(0, 1, 1.0), (1, 2, 3.0)], 0, 2).unwrap();
        let ops = operator_matrices(&g);
        assert!((ops.transition.row(1).sum() - 1.0).abs() < 1e-6);
        assert_eq!(g.weight(2, 1), 3.0);
        assert_eq!(g.weight(0, 2), 0.0);
    }
}
