//! Token diffusion: `K` random walkers are released at the source every
//! round, each walker steps to a neighbor chosen with probability
//! proportional to the edge weight, and walkers reaching the sink are
//! absorbed. The count `Z(u)` of walkers at a node, divided by
//! `K · vol(u)`, estimates the node potential.
//!
//! Round phases are fixed: every token present at the start of the round
//! moves once, then `K` tokens are injected at the source, then the sink is
//! emptied. Randomness for round `t` of replication `r` is a pure function
//! of `(seed, r, t)` and the token's position in node-id order, so runs are
//! reproducible regardless of how replications are scheduled.

use nalgebra::DVector;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::WeightedGraph;
use crate::jacobi::{powu, RateCheck};
use crate::spectral::BOUND_SLACK;
use crate::oracle::{energy, PotentialVector};
use crate::scalar::Scalar;

/// Token counts above this lose integer precision when converted to `f64`.
pub const MAX_TOKEN_COUNT: u64 = 1 << 53;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TokenError {
    #[error("token count {count} at node {node} exceeds 2^53")]
    Overflow { node: usize, count: u64 },
    #[error("grounded spectral radius {0} is not below 1")]
    DegenerateSpectrum(f64),
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenState {
    /// Tokens at each node at the end of `round`.
    pub counts: Vec<u64>,
    /// Tokens injected at the source per round (`K`).
    pub rate: u64,
    pub round: u64,
    pub seed: u64,
    pub replication: u64,
    /// Token moves performed so far (one message per move).
    pub moves_total: u64,
    /// Tokens absorbed at the sink so far.
    pub absorbed_total: u64,
}

impl TokenState {
    /// Empty network before the first round.
    pub fn new(n: usize, rate: u64, seed: u64, replication: u64) -> Self {
        Self { counts: vec![0; n], rate, round: 0, seed, replication, moves_total: 0, absorbed_total: 0 }
    }

    pub fn total_tokens(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Per-node categorical samplers over neighbors (sorted by node id), built
/// once per graph.
#[derive(Debug, Clone)]
pub struct TokenDiffusion {
    source: usize,
    sink: usize,
    neighbors: Vec<Vec<usize>>,
    samplers: Vec<WeightedIndex<f64>>,
}

fn round_rng(seed: u64, replication: u64, round: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replication.to_le_bytes());
    key[16..24].copy_from_slice(&round.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

impl TokenDiffusion {
    pub fn new<T: Scalar>(g: &WeightedGraph<T>) -> Self {
        let neighbors = (0..g.n()).map(|u| g.neighbors(u).iter().map(|&(v, _)| v).collect()).collect();
        let samplers = (0..g.n())
            .map(|u| {
                WeightedIndex::new(g.neighbors(u).iter().map(|&(_, w)| w.to_f64_lossy()))
                    .expect("connected graph has positive volume at every node")
            })
            .collect();
        Self { source: g.source(), sink: g.sink(), neighbors, samplers }
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    /// Advances one round.
    pub fn round(&self, state: &TokenState) -> Result<TokenState, TokenError> {
        let next_round = state.round + 1;
        let mut rng = round_rng(state.seed, state.replication, next_round);
        let mut counts = vec![0u64; self.n()];
        let mut moves = 0u64;
        for (u, &z) in state.counts.iter().enumerate() {
            for _ in 0..z {
                let v = self.neighbors[u][self.samplers[u].sample(&mut rng)];
                counts[v] += 1;
            }
            moves += z;
        }
        counts[self.source] += state.rate;
        let absorbed = std::mem::take(&mut counts[self.sink]);
        if let Some((node, &count)) = counts.iter().enumerate().find(|(_, &c)| c > MAX_TOKEN_COUNT) {
            return Err(TokenError::Overflow { node, count });
        }
        Ok(TokenState {
            counts,
            rate: state.rate,
            round: next_round,
            seed: state.seed,
            replication: state.replication,
            moves_total: state.moves_total + moves,
            absorbed_total: state.absorbed_total + absorbed,
        })
    }

    /// All states of one replication from the empty start through `rounds`.
    pub fn trajectory(
        &self,
        rate: u64,
        seed: u64,
        replication: u64,
        rounds: u64,
    ) -> Result<Vec<TokenState>, TokenError> {
        let mut states = Vec::with_capacity(rounds as usize + 1);
        states.push(TokenState::new(self.n(), rate, seed, replication));
        for _ in 0..rounds {
            let next = self.round(states.last().unwrap())?;
            states.push(next);
        }
        Ok(states)
    }
}

/// One round of the token process on `g`.
pub fn diffusion_round<T: Scalar>(g: &WeightedGraph<T>, state: &TokenState) -> Result<TokenState, TokenError> {
    TokenDiffusion::new(g).round(state)
}

/// Node estimates `Z(u) / (K · vol(u))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<T: Scalar>(pub DVector<T>);

pub fn estimate<T: Scalar>(state: &TokenState, g: &WeightedGraph<T>) -> Estimate<T> {
    let k = T::from_count(state.rate);
    Estimate(DVector::from_fn(g.n(), |u, _| T::from_count(state.counts[u]) / (k * g.volume(u))))
}

/// Expected value of the estimator at a given round.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedPotentialIterate<T: Scalar>(pub DVector<T>);

impl<T: Scalar> ExpectedPotentialIterate<T> {
    pub fn zero(n: usize) -> Self {
        Self(DVector::zeros(n))
    }
}

/// `φ_u ← (Σ_v w_uv φ_v + b_u) / vol(u)` for `u ≠ sink`, `φ_sink ← 0`.
pub fn expected_iterate_step<T: Scalar>(
    g: &WeightedGraph<T>,
    phi: &ExpectedPotentialIterate<T>,
) -> ExpectedPotentialIterate<T> {
    ExpectedPotentialIterate(DVector::from_fn(g.n(), |u, _| {
        if u == g.sink() {
            return T::zero();
        }
        let b = if u == g.source() { T::one() } else { T::zero() };
        g.neighbors(u).iter().fold(b, |acc, &(v, w)| acc + w * phi.0[v]) / g.volume(u)
    }))
}

/// `φ^{(0)}, …, φ^{(rounds)}` starting from zero.
pub fn expected_iterates<T: Scalar>(g: &WeightedGraph<T>, rounds: usize) -> Vec<ExpectedPotentialIterate<T>> {
    let mut out = Vec::with_capacity(rounds + 1);
    out.push(ExpectedPotentialIterate::zero(g.n()));
    for _ in 0..rounds {
        let next = expected_iterate_step(g, out.last().unwrap());
        out.push(next);
    }
    out
}

/// Upper bound on `‖φ^{(t)} - p‖` where `p` is the grounded solution:
/// `(vol_max/vol_min)^{1/2} · ρ̲^t / ((1 - ρ̲) · vol(source))`.
pub fn diffusion_rate_bound<T: Scalar>(g: &WeightedGraph<T>, rho_under: T, t: usize) -> Result<T, TokenError> {
    if rho_under >= T::one() {
        return Err(TokenError::DegenerateSpectrum(rho_under.to_f64_lossy()));
    }
    Ok((g.vol_max() / g.vol_min()).sqrt() * powu(rho_under, t)
        / ((T::one() - rho_under) * g.volume(g.source())))
}

/// Checks `‖φ^{(t)} - p‖₂ ≤ diffusion_rate_bound(t)` for `t = 0..=rounds`.
pub fn verify_convergence_bound<T: Scalar>(
    g: &WeightedGraph<T>,
    p: &PotentialVector<T>,
    rho_under: T,
    rounds: usize,
) -> Result<RateCheck, TokenError> {
    let mut worst_excess = f64::NEG_INFINITY;
    for (t, phi) in expected_iterates(g, rounds).iter().enumerate() {
        let gap = (&phi.0 - &p.0).norm();
        worst_excess = worst_excess.max((gap - diffusion_rate_bound(g, rho_under, t)?).to_f64_lossy());
    }
    Ok(RateCheck { rounds, worst_excess: Some(worst_excess), holds: worst_excess <= BOUND_SLACK })
}

fn check_eps_delta(eps: f64, delta: f64) -> Result<(), TokenError> {
    // eps = 1 is admitted: the bound is still meaningful there
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(TokenError::ParameterOutOfRange(format!("eps = {eps} not in (0, 1]")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TokenError::ParameterOutOfRange(format!("delta = {delta} not in (0, 1)")));
    }
    Ok(())
}

/// Smallest expected potential at node `u` for which the estimator is an
/// `(eps, delta)`-approximation with injection rate `rate`:
/// `3 ln(2/δ) / (ε² · K · vol(u))`.
pub fn accuracy_threshold<T: Scalar>(
    eps: f64,
    delta: f64,
    rate: u64,
    g: &WeightedGraph<T>,
    u: usize,
) -> Result<f64, TokenError> {
    check_eps_delta(eps, delta)?;
    if rate < 1 {
        return Err(TokenError::ParameterOutOfRange("K must be at least 1".into()));
    }
    Ok(chernoff_factor(eps, delta) / (rate as f64 * g.volume(u).to_f64_lossy()))
}

/// Inverse form: the (real) injection rate needed so that every potential
/// of at least `phi_floor` at node `u` is `(eps, delta)`-approximated.
pub fn min_rate_for_floor<T: Scalar>(
    eps: f64,
    delta: f64,
    phi_floor: f64,
    g: &WeightedGraph<T>,
    u: usize,
) -> Result<f64, TokenError> {
    check_eps_delta(eps, delta)?;
    if !(phi_floor > 0.0) {
        return Err(TokenError::ParameterOutOfRange(format!("potential floor {phi_floor} must be positive")));
    }
    Ok(chernoff_factor(eps, delta) / (phi_floor * g.volume(u).to_f64_lossy()))
}

fn chernoff_factor(eps: f64, delta: f64) -> f64 {
    3.0 * (2.0 / delta).ln() / (eps * eps)
}

/// Long-run token population: the exact stationary expectation
/// `K Σ_u vol(u) p_u` and the bound `K · n · vol_max · E`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TokenCountBound {
    pub expected_total: f64,
    pub bound: f64,
}

pub fn token_count_bound<T: Scalar>(g: &WeightedGraph<T>, p: &PotentialVector<T>, rate: u64) -> TokenCountBound {
    let k = T::from_count(rate);
    let expected = (0..g.n()).fold(T::zero(), |acc, u| acc + g.volume(u) * p[u]) * k;
    let bound = k * T::from_count(g.n() as u64) * g.vol_max() * energy(g, p);
    TokenCountBound { expected_total: expected.to_f64_lossy(), bound: bound.to_f64_lossy() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffusionConfig {
    pub rate: u64,
    pub rounds: u64,
    pub seed: u64,
    pub replications: u64,
    /// Keep every `(replication, t, node)` record for CSV export.
    pub record_trace: bool,
}

/// Cross-replication statistics at one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundSummary {
    pub t: u64,
    pub mean_estimate: Vec<f64>,
    /// Sample variance (denominator `R - 1`; zero for a single replication).
    pub var_estimate: Vec<f64>,
    pub mean_tokens: f64,
    pub var_tokens: f64,
    /// Mean number of token moves performed in this round.
    pub mean_moves: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub replication: u64,
    pub t: u64,
    pub node: usize,
    #[serde(rename = "Z")]
    pub z: u64,
    pub estimate: f64,
    pub phi: f64,
    pub moves: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionRun {
    pub config: DiffusionConfig,
    pub rounds: Vec<RoundSummary>,
    pub trace: Option<Vec<TraceRow>>,
}

/// Integer moment sums; merging is exact, so the reduction order of
/// parallel replications does not affect the result.
#[derive(Debug, Clone)]
struct Moments {
    sum: Vec<Vec<u128>>,
    sum_sq: Vec<Vec<u128>>,
    tokens: Vec<(u128, u128)>,
    moves: Vec<u128>,
}

impl Moments {
    fn zero(rounds: usize, n: usize) -> Self {
        Self {
            sum: vec![vec![0; n]; rounds],
            sum_sq: vec![vec![0; n]; rounds],
            tokens: vec![(0, 0); rounds],
            moves: vec![0; rounds],
        }
    }

    fn add_trajectory(mut self, states: &[TokenState]) -> Self {
        for (t, s) in states.iter().enumerate() {
            for (u, &z) in s.counts.iter().enumerate() {
                self.sum[t][u] += z as u128;
                self.sum_sq[t][u] += (z as u128) * (z as u128);
            }
            let total = s.total_tokens() as u128;
            self.tokens[t].0 += total;
            self.tokens[t].1 += total * total;
            let moved = if t == 0 { 0 } else { s.moves_total - states[t - 1].moves_total };
            self.moves[t] += moved as u128;
        }
        self
    }

    fn merge(mut self, other: Self) -> Self {
        for t in 0..self.sum.len() {
            for u in 0..self.sum[t].len() {
                self.sum[t][u] += other.sum[t][u];
                self.sum_sq[t][u] += other.sum_sq[t][u];
            }
            self.tokens[t].0 += other.tokens[t].0;
            self.tokens[t].1 += other.tokens[t].1;
            self.moves[t] += other.moves[t];
        }
        self
    }
}

/// Mean and sample variance from exact integer sums over `r` samples.
fn mean_var(sum: u128, sum_sq: u128, r: u64) -> (f64, f64) {
    let r = r as u128;
    let mean = sum as f64 / r as f64;
    if r < 2 {
        return (mean, 0.0);
    }
    let centered = r * sum_sq - sum * sum;
    (mean, centered as f64 / (r * (r - 1)) as f64)
}

/// Runs independent replications of the token process and summarizes the
/// estimator per round and node.
pub fn run_diffusion<T: Scalar>(g: &WeightedGraph<T>, config: &DiffusionConfig) -> Result<DiffusionRun, TokenError> {
    if config.replications < 1 {
        return Err(TokenError::ParameterOutOfRange("replications must be at least 1".into()));
    }
    if config.rate < 1 {
        return Err(TokenError::ParameterOutOfRange("K must be at least 1".into()));
    }
    let n = g.n();
    let slots = config.rounds as usize + 1;
    let process = TokenDiffusion::new(g);
    let vol: Vec<f64> = g.volumes().iter().map(|v| v.to_f64_lossy()).collect();
    let k = config.rate as f64;
    let phi: Vec<Vec<f64>> = expected_iterates(g, config.rounds as usize)
        .into_iter()
        .map(|p| p.0.iter().map(|x| x.to_f64_lossy()).collect())
        .collect();

    let per_rep = |rep: u64| -> Result<(Moments, Vec<TraceRow>), TokenError> {
        let states = process.trajectory(config.rate, config.seed, rep, config.rounds)?;
        let mut rows = Vec::new();
        if config.record_trace {
            rows.reserve(slots * n);
            for (t, s) in states.iter().enumerate() {
                let moves = if t == 0 { 0 } else { s.moves_total - states[t - 1].moves_total };
                for u in 0..n {
                    rows.push(TraceRow {
                        replication: rep,
                        t: s.round,
                        node: u,
                        z: s.counts[u],
                        estimate: s.counts[u] as f64 / (k * vol[u]),
                        phi: phi[t][u],
                        moves,
                    });
                }
            }
        }
        Ok((Moments::zero(slots, n).add_trajectory(&states), rows))
    };

    let results: Vec<(Moments, Vec<TraceRow>)> =
        (0..config.replications).into_par_iter().map(per_rep).collect::<Result<_, _>>()?;
    let mut moments = Moments::zero(slots, n);
    let mut trace = config.record_trace.then(Vec::new);
    for (m, rows) in results {
        moments = moments.merge(m);
        if let Some(tr) = trace.as_mut() {
            tr.extend(rows);
        }
    }

    let r = config.replications;
    let rounds = (0..slots)
        .map(|t| {
            let (mut mean_estimate, mut var_estimate) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for u in 0..n {
                let (m, v) = mean_var(moments.sum[t][u], moments.sum_sq[t][u], r);
                let scale = k * vol[u];
                mean_estimate.push(m / scale);
                var_estimate.push(v / (scale * scale));
            }
            let (mean_tokens, var_tokens) = mean_var(moments.tokens[t].0, moments.tokens[t].1, r);
            RoundSummary {
                t: t as u64,
                mean_estimate,
                var_estimate,
                mean_tokens,
                var_tokens,
                mean_moves: moments.moves[t] as f64 / r as f64,
            }
        })
        .collect();
    Ok(DiffusionRun { config: *config, rounds, trace })
}
