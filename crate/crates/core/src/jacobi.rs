//! Synchronous round-based Jacobi potential exchange.
//!
//! Every round each node sends its current estimate to all neighbors and
//! then replaces it with `(b_u + Σ_v w_uv p̃_v) / vol(u)`. An optional
//! damping factor `beta` blends the new value with the previous one, which
//! is the lazy-walk variant and removes the period-2 oscillation on
//! bipartite graphs. `beta = 1` is the undamped update.

use nalgebra::DVector;
use serde::Serialize;

use crate::graph::{demand_vector, WeightedGraph};
use crate::oracle::{residual_inf, PotentialVector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobiState<T: Scalar> {
    pub potentials: DVector<T>,
    pub round: usize,
    pub beta: T,
    pub messages_sent: u64,
}

impl<T: Scalar> JacobiState<T> {
    pub fn new(initial: DVector<T>, beta: T) -> Self {
        Self { potentials: initial, round: 0, beta, messages_sent: 0 }
    }
}

pub fn jacobi_step<T: Scalar>(g: &WeightedGraph<T>, state: &JacobiState<T>) -> JacobiState<T> {
    let b = demand_vector(g).0;
    let old = &state.potentials;
    let beta = state.beta;
    let potentials = DVector::from_fn(g.n(), |u, _| {
        let pooled = g
            .neighbors(u)
            .iter()
            .fold(b[u], |acc, &(v, w)| acc + w * old[v])
            / g.volume(u);
        if beta == T::one() {
            pooled
        } else {
            (T::one() - beta) * old[u] + beta * pooled
        }
    });
    JacobiState {
        potentials,
        round: state.round + 1,
        beta,
        messages_sent: state.messages_sent + 2 * g.m() as u64,
    }
}

#[derive(Debug, Clone)]
pub struct JacobiConfig<T: Scalar> {
    pub rounds: usize,
    pub beta: T,
    /// Stop once `‖p̃(t+1) - p̃(t)‖_∞` drops below this; `None` always runs
    /// the full round budget.
    pub stop_tol: Option<T>,
    /// Starting potentials; zero when absent.
    pub initial: Option<DVector<T>>,
}

impl<T: Scalar> Default for JacobiConfig<T> {
    fn default() -> Self {
        Self { rounds: 200, beta: T::one(), stop_tol: Some(T::lit(1e-12)), initial: None }
    }
}

/// Runs the process and returns every state, starting with the initial one.
pub fn run_jacobi<T: Scalar>(g: &WeightedGraph<T>, config: &JacobiConfig<T>) -> Vec<JacobiState<T>> {
    let initial = config.initial.clone().unwrap_or_else(|| DVector::zeros(g.n()));
    assert_eq!(initial.len(), g.n(), "initial vector length must equal node count");
    let mut trajectory = Vec::with_capacity(config.rounds + 1);
    trajectory.push(JacobiState::new(initial, config.beta));
    for _ in 0..config.rounds {
        let prev = trajectory.last().unwrap();
        let next = jacobi_step(g, prev);
        let delta = (&next.potentials - &prev.potentials).amax();
        trajectory.push(next);
        if config.stop_tol.is_some_and(|tol| delta < tol) {
            break;
        }
    }
    trajectory
}

/// Split of the error `e = p - p̃` into its component orthogonal to the
/// all-ones vector and the coefficient along it: `e = e_⊥ + α·𝟏`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDecomposition<T: Scalar> {
    pub error: DVector<T>,
    pub error_perp: DVector<T>,
    pub alpha: T,
}

pub fn error_decomposition<T: Scalar>(
    p_ref: &PotentialVector<T>,
    p_tilde: &DVector<T>,
) -> ErrorDecomposition<T> {
    let error = &p_ref.0 - p_tilde;
    let alpha = error.mean();
    let error_perp = error.add_scalar(-alpha);
    ErrorDecomposition { error, error_perp, alpha }
}

/// Guaranteed contraction of `‖e_⊥(t)‖ / ‖e_⊥(0)‖` after `t` rounds of the
/// undamped process: `(vol_max/vol_min)^{1/2} · ρ*^t`, where `rho_star` is
/// the second largest eigenvalue modulus of the transition matrix.
pub fn jacobi_rate_bound<T: Scalar>(g: &WeightedGraph<T>, rho_star: T, t: usize) -> T {
    (g.vol_max() / g.vol_min()).sqrt() * powu(rho_star, t)
}

pub(crate) fn powu<T: Scalar>(x: T, t: usize) -> T {
    match i32::try_from(t) {
        Ok(k) => x.powi(k),
        Err(_) => x.powf(T::from_count(t as u64)),
    }
}

/// Worst-case comparison of an observed error curve against its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCheck {
    pub rounds: usize,
    /// `max_t (observed(t) - bound(t))`; nonpositive when the bound holds,
    /// absent when there was nothing to measure.
    pub worst_excess: Option<f64>,
    pub holds: bool,
}

/// Slack added to the Jacobi contraction bound.
pub const RATE_SLACK: f64 = 1e-9;

/// Runs the undamped process from zero for `rounds` rounds and checks
/// `‖e_⊥(t)‖ / ‖e_⊥(0)‖ ≤ (vol_max/vol_min)^{1/2} ρ*^t + RATE_SLACK` at
/// every round.
pub fn verify_rate_bound<T: Scalar>(
    g: &WeightedGraph<T>,
    p_ref: &PotentialVector<T>,
    rho_star: T,
    rounds: usize,
) -> RateCheck {
    let traj = run_jacobi(g, &JacobiConfig { rounds, beta: T::one(), stop_tol: None, initial: None });
    let e0 = error_decomposition(p_ref, &traj[0].potentials).error_perp.norm();
    if e0 == T::zero() {
        return RateCheck { rounds, worst_excess: None, holds: true };
    }
    let worst_excess = traj
        .iter()
        .map(|s| {
            let ratio = error_decomposition(p_ref, &s.potentials).error_perp.norm() / e0;
            (ratio - jacobi_rate_bound(g, rho_star, s.round)).to_f64_lossy()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    RateCheck { rounds, worst_excess: Some(worst_excess), holds: worst_excess <= RATE_SLACK }
}

/// One row of the trajectory export.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TrajectoryRow {
    pub t: usize,
    pub err_perp_norm: f64,
    /// Absolute bound `‖e_⊥(0)‖ · (vol_max/vol_min)^{1/2} · ρ*^t`.
    pub bound: f64,
    pub residual_inf: f64,
    pub messages: u64,
}

pub fn trajectory_rows<T: Scalar>(
    g: &WeightedGraph<T>,
    p_ref: &PotentialVector<T>,
    trajectory: &[JacobiState<T>],
    rho_star: T,
) -> Vec<TrajectoryRow> {
    let Some(first) = trajectory.first() else { return Vec::new() };
    let initial_norm = error_decomposition(p_ref, &first.potentials).error_perp.norm();
    trajectory
        .iter()
        .map(|s| TrajectoryRow {
            t: s.round,
            err_perp_norm: error_decomposition(p_ref, &s.potentials).error_perp.norm().to_f64_lossy(),
            bound: (initial_norm * jacobi_rate_bound(g, rho_star, s.round)).to_f64_lossy(),
            residual_inf: residual_inf(g, &s.potentials).to_f64_lossy(),
            messages: s.messages_sent,
        })
        .collect()
}
