//! The built-in family of test graphs, or a directory of graph files named
//! by the `OHM_SUITE_DIR` environment variable.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::format::parse_graph;
use crate::generators::{self, GeneratorError};
use crate::graph::{GraphError, WeightedGraph};

pub const SUITE_DIR_ENV: &str = "OHM_SUITE_DIR";

/// Seeds of the random members of the built-in suite.
pub const RANDOM_SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedGraph {
    pub name: String,
    pub graph: WeightedGraph<f64>,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("reading suite directory {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: GraphError },
    #[error("suite directory {0} contains no graph files")]
    Empty(PathBuf),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

fn named(name: impl Into<String>, graph: WeightedGraph<f64>) -> NamedGraph {
    NamedGraph { name: name.into(), graph }
}

/// P3, a single edge, K4, C5, the 3×3 grid, barbell(4,4) and ten random
/// `G(8, 0.5)` graphs with weights in `[0.1, 10]`.
pub fn builtin_suite() -> Result<Vec<NamedGraph>, GeneratorError> {
    let mut suite = vec![
        named("path3", generators::path(3)?),
        named("single_edge", generators::path(2)?),
        named("complete4", generators::complete(4)?),
        named("cycle5", generators::cycle(5)?),
        named("grid3x3", generators::grid(3, 3)?),
        named("barbell4_4", generators::barbell(4, 4)?),
    ];
    for seed in RANDOM_SEEDS {
        suite.push(named(format!("random8_s{seed}"), generators::random(8, 0.5, 0.1, 10.0, seed)?));
    }
    Ok(suite)
}

/// Every `*.graph` or `*.txt` file in `dir`, sorted by file name.
pub fn load_suite_dir(dir: &Path) -> Result<Vec<NamedGraph>, SuiteError> {
    let io = |source| SuiteError::Io { path: dir.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    paths.retain(|p| p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("graph" | "txt")));
    paths.sort();
    if paths.is_empty() {
        return Err(SuiteError::Empty(dir.to_path_buf()));
    }
    paths
        .into_iter()
        .map(|path| {
            let text = fs::read_to_string(&path).map_err(|source| SuiteError::Io { path: path.clone(), source })?;
            let graph = parse_graph(&text).map_err(|source| SuiteError::Parse { path: path.clone(), source })?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(named(name, graph))
        })
        .collect()
}

/// The directory suite when `OHM_SUITE_DIR` is set, the built-in one
/// otherwise.
pub fn suite_from_env() -> Result<Vec<NamedGraph>, SuiteError> {
    match std::env::var_os(SUITE_DIR_ENV) {
        Some(dir) if !dir.is_empty() => load_suite_dir(Path::new(&dir)),
        _ => Ok(builtin_suite()?),
    }
}
