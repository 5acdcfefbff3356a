//! Spectral and combinatorial quantities that govern the convergence of
//! both processes, and numerical checks of the inequalities relating them.
//!
//! Eigenvalues are always taken from symmetric conjugates (`N`, the
//! grounded `N`, Laplacians) with a dense symmetric eigensolver, never from
//! the nonsymmetric transition matrix directly. Conductance and edge
//! expansion are computed by exhaustive cut enumeration, so they are capped
//! at [`MAX_EXACT_NODES`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::graph::{adjacency_matrix, ground, grounded_operators, operator_matrices, WeightedGraph};
use crate::scalar::Scalar;

pub const MAX_EXACT_NODES: usize = 24;

/// Slack for the inequality checks.
pub const BOUND_SLACK: f64 = 1e-10;

const EIGEN_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("exact cut enumeration limited to {max} nodes, graph has {n}")]
    TooLargeForExact { n: usize, max: usize },
    #[error("symmetric eigensolver did not converge")]
    ConvergenceFailure,
    #[error("bound `{name}` violated: lhs {lhs} vs rhs {rhs}")]
    BoundViolation { name: String, lhs: f64, rhs: f64 },
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending with the
/// eigenvector columns permuted to match.
pub fn symmetric_eigen<T: Scalar>(m: DMatrix<T>) -> Result<(Vec<T>, DMatrix<T>), SpectralError> {
    let eig = SymmetricEigen::try_new(m, T::default_epsilon(), EIGEN_MAX_ITER)
        .ok_or(SpectralError::ConvergenceFailure)?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

pub fn symmetric_eigenvalues<T: Scalar>(m: DMatrix<T>) -> Result<Vec<T>, SpectralError> {
    symmetric_eigen(m).map(|(values, _)| values)
}

/// Eigenvalues `ρ_1 ≥ … ≥ ρ_n` of the transition matrix, computed from its
/// symmetric conjugate `N`.
pub fn eigen_spectrum<T: Scalar>(g: &WeightedGraph<T>) -> Result<Vec<T>, SpectralError> {
    symmetric_eigenvalues(operator_matrices(g).normalized)
}

/// `max(|ρ_2|, |ρ_n|)` of a descending spectrum.
pub fn rho_star<T: Scalar>(spectrum: &[T]) -> T {
    spectrum[1].abs().max(spectrum[spectrum.len() - 1].abs())
}

/// `N` with the sink row and column deleted: symmetric conjugate of the
/// grounded transition matrix, built with the original volumes.
fn normalized_ground<T: Scalar>(g: &WeightedGraph<T>) -> DMatrix<T> {
    ground(&operator_matrices(g).normalized, g.sink())
}

fn non_sink_nodes<T: Scalar>(g: &WeightedGraph<T>) -> impl Iterator<Item = usize> + '_ {
    (0..g.n()).filter(move |&u| u != g.sink())
}

/// Spectral radius of the grounded transition matrix and its left Perron
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedRadius<T: Scalar> {
    pub rho_under: T,
    /// Left Perron vector over the non-sink nodes (in increasing id order),
    /// nonnegative with unit ℓ₁ norm.
    pub perron: DVector<T>,
}

impl<T: Scalar> GroundedRadius<T> {
    /// `1 - Σ_i v_i P_{i,sink}`, which equals the spectral radius.
    pub fn perron_identity(&self, g: &WeightedGraph<T>) -> T {
        let leak = non_sink_nodes(g)
            .zip(self.perron.iter())
            .fold(T::zero(), |acc, (u, &v)| acc + v * g.weight(u, g.sink()) / g.volume(u));
        T::one() - leak
    }

    /// `‖v P_ground - ρ̲ v‖_∞`.
    pub fn eigen_residual(&self, g: &WeightedGraph<T>) -> T {
        let pg = grounded_operators(g).transition_ground;
        (pg.tr_mul(&self.perron) - &self.perron * self.rho_under).amax()
    }
}

pub fn grounded_spectral_radius<T: Scalar>(g: &WeightedGraph<T>) -> Result<GroundedRadius<T>, SpectralError> {
    let (values, vectors) = symmetric_eigen(normalized_ground(g))?;
    let rho_under = values[0];
    // Left eigenvectors of D⁻¹A are D^{1/2} x for eigenvectors x of N. On a
    // degenerate top eigenspace the components have disjoint supports, so
    // taking magnitudes still yields an eigenvector.
    let mut perron = DVector::from_iterator(
        values.len(),
        non_sink_nodes(g).enumerate().map(|(i, u)| (vectors[(i, 0)] * g.volume(u).sqrt()).abs()),
    );
    let l1 = perron.sum();
    perron /= l1;
    Ok(GroundedRadius { rho_under, perron })
}

/// An optimal cut and the set attaining it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutResult<T> {
    pub value: T,
    pub witness: Vec<usize>,
}

/// Visits every nonempty proper subset in reflected Gray-code order, maintaining the
/// set's volume, size and crossing weight incrementally.
fn enumerate_cuts<T: Scalar>(
    g: &WeightedGraph<T>,
    mut visit: impl FnMut(&[bool], T, usize, T),
) -> Result<(), SpectralError> {
    let n = g.n();
    if n > MAX_EXACT_NODES {
        return Err(SpectralError::TooLargeForExact { n, max: MAX_EXACT_NODES });
    }
    let two = T::lit(2.0);
    let mut in_set = vec![false; n];
    let (mut vol, mut cut, mut size) = (T::zero(), T::zero(), 0usize);
    for k in 1u64..(1u64 << n) {
        let v = k.trailing_zeros() as usize;
        let inside = g
            .neighbors(v)
            .iter()
            .filter(|&&(x, _)| in_set[x])
            .fold(T::zero(), |acc, &(_, w)| acc + w);
        if in_set[v] {
            in_set[v] = false;
            vol -= g.volume(v);
            cut += two * inside - g.volume(v);
            size -= 1;
        } else {
            in_set[v] = true;
            vol += g.volume(v);
            cut += g.volume(v) - two * inside;
            size += 1;
        }
        if size < n {
            visit(&in_set, vol, size, cut);
        }
    }
    Ok(())
}

fn crossing_weight<T: Scalar>(g: &WeightedGraph<T>, set: &[usize]) -> T {
    let mut mask = vec![false; g.n()];
    set.iter().for_each(|&u| mask[u] = true);
    g.edges()
        .iter()
        .filter(|e| mask[e.u] != mask[e.v])
        .fold(T::zero(), |acc, e| acc + e.w)
}

/// Graph conductance: minimum of `w(S, V∖S) / vol(S)` over `S` with
/// `vol(S) ≤ vol(V)/2`.
pub fn conductance<T: Scalar>(g: &WeightedGraph<T>) -> Result<CutResult<T>, SpectralError> {
    let half = g.volumes().iter().fold(T::zero(), |a, &b| a + b) / T::lit(2.0);
    minimize_cut(g, |vol, _| vol <= half, |vol, _| vol, |set| set.iter().fold(T::zero(), |a, &u| a + g.volume(u)))
}

/// Edge expansion: minimum of `w(S, V∖S) / |S|` over `S` with `|S| ≤ n/2`.
pub fn edge_expansion<T: Scalar>(g: &WeightedGraph<T>) -> Result<CutResult<T>, SpectralError> {
    let n = g.n();
    minimize_cut(
        g,
        |_, size| 2 * size <= n,
        |_, size| T::from_count(size as u64),
        |set| T::from_count(set.len() as u64),
    )
}

fn minimize_cut<T: Scalar>(
    g: &WeightedGraph<T>,
    admissible: impl Fn(T, usize) -> bool,
    denominator: impl Fn(T, usize) -> T,
    exact_denominator: impl Fn(&[usize]) -> T,
) -> Result<CutResult<T>, SpectralError> {
    let mut best: Option<(T, Vec<bool>)> = None;
    enumerate_cuts(g, |set, vol, size, cut| {
        if admissible(vol, size) {
            let ratio = cut / denominator(vol, size);
            if best.as_ref().is_none_or(|(b, _)| ratio < *b) {
                best = Some((ratio, set.to_vec()));
            }
        }
    })?;
    let (_, mask) = best.expect("some admissible cut exists for n >= 2");
    let witness: Vec<usize> = (0..g.n()).filter(|&u| mask[u]).collect();
    // recompute from scratch to shed incremental rounding
    let value = crossing_weight(g, &witness) / exact_denominator(&witness);
    Ok(CutResult { value, witness })
}

/// Outcome of comparing the two sides of an inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// The inequality is trivially satisfied and carries no information.
    pub vacuous: bool,
}

impl BoundCheck {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, holds: bool) -> Self {
        Self { name: name.into(), lhs, rhs, holds, vacuous: false }
    }

    pub fn with_vacuous(mut self, vacuous: bool) -> Self {
        self.vacuous = vacuous;
        self
    }

    fn at_most<T: Scalar>(name: &str, lhs: T, rhs: T) -> Self {
        let (lhs, rhs) = (lhs.to_f64_lossy(), rhs.to_f64_lossy());
        Self { name: name.into(), lhs, rhs, holds: lhs <= rhs + BOUND_SLACK, vacuous: false }
    }

    fn at_least<T: Scalar>(name: &str, lhs: T, rhs: T) -> Self {
        let (lhs, rhs) = (lhs.to_f64_lossy(), rhs.to_f64_lossy());
        Self { name: name.into(), lhs, rhs, holds: lhs >= rhs - BOUND_SLACK, vacuous: false }
    }

    pub fn into_result(self) -> Result<Self, SpectralError> {
        if self.holds {
            Ok(self)
        } else {
            Err(SpectralError::BoundViolation { name: self.name, lhs: self.lhs, rhs: self.rhs })
        }
    }
}

/// `ρ_2 ≤ 1 - φ²/2`.
pub fn check_cheeger<T: Scalar>(g: &WeightedGraph<T>) -> Result<BoundCheck, SpectralError> {
    let rho = eigen_spectrum(g)?;
    let phi = conductance(g)?.value;
    Ok(BoundCheck::at_most("cheeger", rho[1], T::one() - phi * phi / T::lit(2.0)))
}

/// Second smallest eigenvalue of a graph Laplacian given its adjacency.
fn laplacian_lambda2<T: Scalar>(adjacency: &DMatrix<T>) -> Result<T, SpectralError> {
    let degrees = DVector::from_iterator(adjacency.nrows(), adjacency.row_iter().map(|r| r.sum()));
    let laplacian = DMatrix::from_diagonal(&degrees) - adjacency;
    let values = symmetric_eigenvalues(laplacian)?;
    Ok(values[values.len() - 2])
}

/// `λ_2 ≥ vol_max - (vol_max² - θ²)^{1/2}` for the Laplacian `L = D - A`.
pub fn check_lambda2_expansion<T: Scalar>(g: &WeightedGraph<T>) -> Result<BoundCheck, SpectralError> {
    let lambda2 = laplacian_lambda2(&adjacency_matrix(g))?;
    let theta = edge_expansion(g)?.value;
    let vmax = g.vol_max();
    let rhs = vmax - (vmax * vmax - theta * theta).max(T::zero()).sqrt();
    Ok(BoundCheck::at_least("lambda2_expansion", lambda2, rhs))
}

/// Second smallest Laplacian eigenvalue of the graph with the sink and its
/// edges removed; `None` when that graph has a single node.
pub fn lambda_bar_2<T: Scalar>(g: &WeightedGraph<T>) -> Result<Option<T>, SpectralError> {
    if g.n() < 3 {
        return Ok(None);
    }
    laplacian_lambda2(&ground(&adjacency_matrix(g), g.sink())).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinLambdaCheck {
    pub check: BoundCheck,
    pub lambda_bar_2: Option<f64>,
}

/// `λ̲ = 1 - ρ̲ ≥ (λ̄_2 / (2 vol_max (n-1))) Σ_{i≠sink} w_{i,sink} / (w_{i,sink} + λ̄_2)`.
///
/// Vacuous when the sink-deleted graph is disconnected (`λ̄_2 = 0`) or is a
/// single node.
pub fn check_min_lambda<T: Scalar>(g: &WeightedGraph<T>) -> Result<MinLambdaCheck, SpectralError> {
    let lambda_under = T::one() - grounded_spectral_radius(g)?.rho_under;
    let Some(lb2) = lambda_bar_2(g)? else {
        let mut check = BoundCheck::at_least("min_lambda", lambda_under, T::zero());
        check.vacuous = true;
        return Ok(MinLambdaCheck { check, lambda_bar_2: None });
    };
    let n1 = T::from_count(g.n() as u64 - 1);
    let sum = non_sink_nodes(g).fold(T::zero(), |acc, i| {
        let w = g.weight(i, g.sink());
        acc + w / (w + lb2)
    });
    let connected = g.connected_without_sink();
    let rhs = if connected { lb2 / (T::lit(2.0) * g.vol_max() * n1) * sum } else { T::zero() };
    let mut check = BoundCheck::at_least("min_lambda", lambda_under, rhs);
    check.vacuous = !connected;
    Ok(MinLambdaCheck { check, lambda_bar_2: Some(lb2.to_f64_lossy()) })
}

/// Norm bounds on `y = D̲^{-1/2} x`, where `x` is the unit eigenvector of the
/// perturbed normalized Laplacian `I - N̲` at its smallest eigenvalue `λ̲`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormSandwich {
    pub norm_sq: f64,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
    /// `yᵀ(L̄ + Δ)y`, which must reproduce `λ̲`.
    pub rayleigh: f64,
    pub lambda_under: f64,
}

pub fn check_norm_sandwich<T: Scalar>(g: &WeightedGraph<T>) -> Result<NormSandwich, SpectralError> {
    let m = normalized_ground(g);
    let k = m.nrows();
    let perturbed = DMatrix::<T>::identity(k, k) - m;
    let (values, vectors) = symmetric_eigen(perturbed)?;
    let lambda_under = values[k - 1];
    let vols: Vec<T> = non_sink_nodes(g).map(|u| g.volume(u)).collect();
    let y = DVector::from_fn(k, |i, _| vectors[(i, k - 1)] / vols[i].sqrt());
    let norm_sq = y.norm_squared();
    // L̄ + Δ is the grounded D - A with the original volumes on the diagonal
    let perturbed_laplacian = ground(&operator_matrices(g).laplacian, g.sink());
    let rayleigh = y.dot(&(perturbed_laplacian * &y));
    let (lower, upper) = (T::one() / g.vol_max(), T::one() / g.vol_min());
    let slack = T::lit(BOUND_SLACK);
    Ok(NormSandwich {
        norm_sq: norm_sq.to_f64_lossy(),
        lower: lower.to_f64_lossy(),
        upper: upper.to_f64_lossy(),
        holds: norm_sq >= lower - slack && norm_sq <= upper + slack,
        rayleigh: rayleigh.to_f64_lossy(),
        lambda_under: lambda_under.to_f64_lossy(),
    })
}

/// Largest mismatch between the spectrum of the n×n grounded transition
/// matrix and the spectrum of its sink-deleted version with a zero added.
pub fn grounding_spectrum_gap<T: Scalar>(g: &WeightedGraph<T>) -> Result<T, SpectralError> {
    let mut under = operator_matrices(g).normalized;
    under.row_mut(g.sink()).fill(T::zero());
    under.column_mut(g.sink()).fill(T::zero());
    let full = symmetric_eigenvalues(under)?;
    let mut reduced = symmetric_eigenvalues(normalized_ground(g))?;
    reduced.push(T::zero());
    reduced.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(full.iter().zip(&reduced).fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs())))
}

/// Every spectral and combinatorial quantity for one graph, with the
/// outcome of each inequality check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub n: usize,
    pub m: usize,
    pub rho: Vec<f64>,
    pub rho_star: f64,
    pub rho_under: f64,
    pub lambda_under: f64,
    pub lambda_bar_2: Option<f64>,
    /// Every edge touches the sink, so the grounded matrix is zero and
    /// `ρ̲ = 0` (always the case for `n = 2`).
    pub degenerate_grounded: bool,
    pub perron_vector: Vec<f64>,
    pub perron_identity: f64,
    pub perron_residual: f64,
    pub phi: Option<CutResult<f64>>,
    pub theta: Option<CutResult<f64>>,
    pub grounding_spectrum_gap: f64,
    pub norm_sandwich: NormSandwich,
    pub bounds: Vec<BoundCheck>,
}

impl SpectralReport {
    pub fn all_hold(&self) -> bool {
        self.bounds.iter().all(|b| b.holds)
    }
}

fn cut_to_f64<T: Scalar>(c: CutResult<T>) -> CutResult<f64> {
    CutResult { value: c.value.to_f64_lossy(), witness: c.witness }
}

/// Tolerance for identities that hold exactly in exact arithmetic.
pub const IDENTITY_TOL: f64 = 1e-9;

pub fn spectral_report<T: Scalar>(g: &WeightedGraph<T>) -> Result<SpectralReport, SpectralError> {
    let rho = eigen_spectrum(g)?;
    let grounded = grounded_spectral_radius(g)?;
    let identity = grounded.perron_identity(g);
    let residual = grounded.eigen_residual(g);
    let small = g.n() <= MAX_EXACT_NODES;
    let phi = if small { Some(conductance(g)?) } else { None };
    let theta = if small { Some(edge_expansion(g)?) } else { None };
    let gap = grounding_spectrum_gap(g)?.to_f64_lossy();
    let sandwich = check_norm_sandwich(g)?;
    let min_lambda = check_min_lambda(g)?;

    let mut bounds = Vec::new();
    if small {
        bounds.push(check_cheeger(g)?);
        bounds.push(check_lambda2_expansion(g)?);
    }
    bounds.push(min_lambda.check.clone());
    let rho_under = grounded.rho_under.to_f64_lossy();
    let perron_gap = (rho_under - identity.to_f64_lossy()).abs();
    bounds.push(BoundCheck {
        name: "perron_identity".into(),
        lhs: perron_gap,
        rhs: IDENTITY_TOL,
        holds: perron_gap <= IDENTITY_TOL,
        vacuous: false,
    });
    // every edge touches the sink (always so for n = 2): the grounded matrix is zero
    let degenerate = g.edges().iter().all(|e| e.u == g.sink() || e.v == g.sink());
    let in_range = if degenerate { rho_under.abs() <= IDENTITY_TOL } else { rho_under > 0.0 && rho_under < 1.0 };
    bounds.push(BoundCheck {
        name: "grounded_radius_range".into(),
        lhs: rho_under,
        rhs: 1.0,
        holds: in_range,
        vacuous: degenerate,
    });
    bounds.push(BoundCheck {
        name: "grounding_spectrum".into(),
        lhs: gap,
        rhs: IDENTITY_TOL,
        holds: gap <= IDENTITY_TOL,
        vacuous: false,
    });
    bounds.push(BoundCheck {
        name: "norm_sandwich".into(),
        lhs: sandwich.norm_sq,
        rhs: sandwich.upper,
        holds: sandwich.holds,
        vacuous: false,
    });

    Ok(SpectralReport {
        n: g.n(),
        m: g.m(),
        rho_star: rho_star(&rho).to_f64_lossy(),
        rho: rho.iter().map(|x| x.to_f64_lossy()).collect(),
        rho_under,
        lambda_under: 1.0 - rho_under,
        lambda_bar_2: min_lambda.lambda_bar_2,
        degenerate_grounded: degenerate,
        perron_vector: grounded.perron.iter().map(|x| x.to_f64_lossy()).collect(),
        perron_identity: identity.to_f64_lossy(),
        perron_residual: residual.to_f64_lossy(),
        phi: phi.map(cut_to_f64),
        theta: theta.map(cut_to_f64),
        grounding_spectrum_gap: gap,
        norm_sandwich: sandwich,
        bounds,
    })
}
