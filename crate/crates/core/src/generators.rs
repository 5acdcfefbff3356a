//! Graph families used as test substrates. Every generator puts the source
//! at node `0` and the sink at node `n - 1`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{GraphError, WeightedGraph};
use crate::scalar::Scalar;

/// Attempts made by [`random`] before giving up on drawing a connected graph.
pub const MAX_CONNECTIVITY_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("no connected graph after {0} attempts")]
    ConnectivityRetryExhausted(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Path,
    Cycle,
    Complete,
    Grid,
    Barbell,
    Random,
}

impl FromStr for Family {
    type Err = GeneratorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "path" => Family::Path,
            "cycle" => Family::Cycle,
            "complete" => Family::Complete,
            "grid" => Family::Grid,
            "barbell" => Family::Barbell,
            "random" => Family::Random,
            other => return Err(GeneratorError::InvalidParams(format!("unknown family `{other}`"))),
        })
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Path => "path",
            Family::Cycle => "cycle",
            Family::Complete => "complete",
            Family::Grid => "grid",
            Family::Barbell => "barbell",
            Family::Random => "random",
        })
    }
}

/// Family plus parameters, as given on the command line.
///
/// `n` is the node count for path, cycle, complete and random; the side
/// length of a square grid; and the clique size of a barbell, whose
/// connecting path has `bridge` nodes (default `n`).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub n: usize,
    pub p: f64,
    pub wmin: f64,
    pub wmax: f64,
    pub seed: u64,
    pub bridge: Option<usize>,
}

impl GeneratorSpec {
    pub fn new(family: Family, n: usize) -> Self {
        Self { family, n, p: 0.5, wmin: 0.1, wmax: 10.0, seed: 0, bridge: None }
    }
}

pub fn generate<T: Scalar>(spec: &GeneratorSpec) -> Result<WeightedGraph<T>, GeneratorError> {
    match spec.family {
        Family::Path => path(spec.n),
        Family::Cycle => cycle(spec.n),
        Family::Complete => complete(spec.n),
        Family::Grid => grid(spec.n, spec.n),
        Family::Barbell => barbell(spec.n, spec.bridge.unwrap_or(spec.n)),
        Family::Random => random(spec.n, spec.p, spec.wmin, spec.wmax, spec.seed),
    }
}

fn invalid(msg: impl Into<String>) -> GeneratorError {
    GeneratorError::InvalidParams(msg.into())
}

fn unit<T: Scalar>(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<WeightedGraph<T>, GeneratorError> {
    Ok(WeightedGraph::new(n, pairs.into_iter().map(|(u, v)| (u, v, T::one())), 0, n - 1)?)
}

pub fn path<T: Scalar>(n: usize) -> Result<WeightedGraph<T>, GeneratorError> {
    if n < 2 {
        return Err(invalid("path needs n >= 2"));
    }
    unit(n, (0..n - 1).map(|i| (i, i + 1)))
}

pub fn cycle<T: Scalar>(n: usize) -> Result<WeightedGraph<T>, GeneratorError> {
    if n < 3 {
        return Err(invalid("cycle needs n >= 3"));
    }
    unit(n, (0..n).map(|i| (i, (i + 1) % n)))
}

pub fn complete<T: Scalar>(n: usize) -> Result<WeightedGraph<T>, GeneratorError> {
    if n < 2 {
        return Err(invalid("complete graph needs n >= 2"));
    }
    unit(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))))
}

/// `rows × cols` lattice, node `r * cols + c`.
pub fn grid<T: Scalar>(rows: usize, cols: usize) -> Result<WeightedGraph<T>, GeneratorError> {
    if rows == 0 || cols == 0 || rows * cols < 2 {
        return Err(invalid("grid needs at least 2 nodes"));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut pairs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                pairs.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                pairs.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    unit(rows * cols, pairs)
}

/// Two `clique`-node complete graphs joined through a path of `bridge`
/// intermediate nodes.
pub fn barbell<T: Scalar>(clique: usize, bridge: usize) -> Result<WeightedGraph<T>, GeneratorError> {
    if clique < 2 {
        return Err(invalid("barbell needs cliques of at least 2 nodes"));
    }
    let n = 2 * clique + bridge;
    let second = clique + bridge;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for offset in [0, second] {
        for u in 0..clique {
            for v in u + 1..clique {
                pairs.push((offset + u, offset + v));
            }
        }
    }
    // chain: last node of the first clique, the bridge nodes, first node of the second
    let chain: Vec<usize> = (clique - 1..=second).collect();
    pairs.extend(chain.windows(2).map(|w| (w[0], w[1])));
    unit(n, pairs)
}

/// Erdős–Rényi graph `G(n, p)` with weights log-uniform in `[wmin, wmax]`,
/// redrawn until connected.
pub fn random<T: Scalar>(n: usize, p: f64, wmin: f64, wmax: f64, seed: u64) -> Result<WeightedGraph<T>, GeneratorError> {
    if n < 2 {
        return Err(invalid("random graph needs n >= 2"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!("edge probability {p} not in (0, 1]")));
    }
    if !(wmin > 0.0 && wmin <= wmax && wmax.is_finite()) {
        return Err(invalid(format!("weight range [{wmin}, {wmax}] must satisfy 0 < wmin <= wmax")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (wmin.ln(), wmax.ln());
    for _ in 0..MAX_CONNECTIVITY_RETRIES {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    let w = if hi > lo { rng.gen_range(lo..=hi).exp() } else { wmin };
                    edges.push((u, v, T::lit(w)));
                }
            }
        }
        match WeightedGraph::new(n, edges, 0, n - 1) {
            Ok(g) => return Ok(g),
            Err(GraphError::Disconnected { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(GeneratorError::ConnectivityRetryExhausted(MAX_CONNECTIVITY_RETRIES))
}
