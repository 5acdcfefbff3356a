//! Exact Kirchhoff solver and the electrical quantities derived from it.
//!
//! Every estimate produced elsewhere in the crate is measured against
//! [`solve_grounded`], which factors the sink-deleted Laplacian directly.

use std::collections::BTreeMap;
use std::ops::Index;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::{
    demand_vector, ground, ground_vector, grounded_operators, operator_matrices, unground_vector,
    WeightedGraph,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("reduced Laplacian is not positive definite")]
    SingularSystem,
    #[error("Neumann series of the grounded transition matrix did not converge")]
    NeumannDivergence,
}

/// Node potentials under the grounded convention (`p[sink] == 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialVector<T: Scalar>(pub DVector<T>);

impl<T: Scalar> PotentialVector<T> {
    pub fn as_vector(&self) -> &DVector<T> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<T: Scalar> Index<usize> for PotentialVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

/// Solves `L p = b` with `p[sink] = 0` by Cholesky factorization of the
/// Laplacian with the sink row and column deleted.
pub fn solve_grounded<T: Scalar>(g: &WeightedGraph<T>) -> Result<PotentialVector<T>, OracleError> {
    let sink = g.sink();
    let ops = operator_matrices(g);
    let reduced = ground(&ops.laplacian, sink);
    let rhs = ground_vector(&demand_vector(g).0, sink);
    let chol = reduced.cholesky().ok_or(OracleError::SingularSystem)?;
    Ok(PotentialVector(unground_vector(&chol.solve(&rhs), sink)))
}

/// `‖L p - b‖_∞`.
pub fn residual_inf<T: Scalar>(g: &WeightedGraph<T>, p: &DVector<T>) -> T {
    let ops = operator_matrices(g);
    (ops.laplacian * p - demand_vector(g).0).amax()
}

/// The limit `(I - P̲)⁻¹ D⁻¹ b̲` of the grounded recurrence, summed as a
/// Neumann series with repeated squaring:
/// `Σ_{k<2^J} P̲^k = Π_{j<J} (I + P̲^{2^j})`.
///
/// Shares no code path with [`solve_grounded`] beyond operator assembly.
pub fn neumann_potentials<T: Scalar>(g: &WeightedGraph<T>) -> Result<DVector<T>, OracleError> {
    const MAX_SQUARINGS: usize = 64;
    let gr = grounded_operators(g);
    let mut term = DVector::from_fn(g.n(), |u, _| gr.demand_under[u] / g.volume(u));
    let mut power: DMatrix<T> = gr.transition_under;
    let mut sum = term.clone();
    let tiny = T::default_epsilon() * T::default_epsilon();
    for _ in 0..MAX_SQUARINGS {
        term = &power * &sum;
        sum += &term;
        if power.amax() <= tiny {
            return Ok(sum);
        }
        power = &power * &power;
    }
    Err(OracleError::NeumannDivergence)
}

/// Current on every ordered edge, `f(u,v) = w_uv (p_u - p_v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowAssignment<T> {
    flows: BTreeMap<(usize, usize), T>,
    n: usize,
}

impl<T: Scalar> FlowAssignment<T> {
    /// Flow from `u` to `v`; `None` when `{u, v}` is not an edge.
    pub fn get(&self, u: usize, v: usize) -> Option<T> {
        self.flows.get(&(u, v)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), T)> + '_ {
        self.flows.iter().map(|(&k, &v)| (k, v))
    }

    /// Sum of flows leaving `u`.
    pub fn net_outflow(&self, u: usize) -> T {
        self.flows
            .range((u, 0)..(u, self.n))
            .fold(T::zero(), |acc, (_, &f)| acc + f)
    }
}

pub fn edge_flows<T: Scalar>(g: &WeightedGraph<T>, p: &PotentialVector<T>) -> FlowAssignment<T> {
    let mut flows = BTreeMap::new();
    for e in g.edges() {
        let f = e.w * (p[e.u] - p[e.v]);
        flows.insert((e.u, e.v), f);
        flows.insert((e.v, e.u), -f);
    }
    FlowAssignment { flows, n: g.n() }
}

/// Energy `pᵀ L p` of the flow induced by `p`.
pub fn energy<T: Scalar>(g: &WeightedGraph<T>, p: &PotentialVector<T>) -> T {
    let ops = operator_matrices(g);
    p.0.dot(&(ops.laplacian * &p.0))
}
