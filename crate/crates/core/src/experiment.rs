//! Experiment orchestration behind the command-line front end: load or
//! generate a graph, run one algorithm (or all of them), check the bounds
//! and write CSV/JSON artifacts.
//!
//! Artifacts are written once, after all computation, from order-fixed
//! results, so a fixed configuration always produces identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::format::{parse_graph, serialize_graph};
use crate::generators::{generate, GeneratorError, GeneratorSpec};
use crate::graph::{demand_vector, operator_matrices, GraphError, WeightedGraph};
use crate::jacobi::{run_jacobi, trajectory_rows, verify_rate_bound, JacobiConfig, RateCheck, TrajectoryRow};
use crate::oracle::{edge_flows, energy, neumann_potentials, residual_inf, solve_grounded, OracleError, PotentialVector};
use crate::spectral::{
    eigen_spectrum, grounded_spectral_radius, rho_star, spectral_report, BoundCheck, SpectralError, SpectralReport,
};
use crate::suite::{NamedGraph, SuiteError};
use crate::tokens::{
    diffusion_rate_bound, run_diffusion, token_count_bound, verify_convergence_bound, DiffusionConfig, RoundSummary,
    TokenCountBound, TokenDiffusion, TokenError, TokenState, TraceRow,
};

/// Residual tolerance for the exact solver.
pub const ORACLE_RESIDUAL_TOL: f64 = 1e-9;
/// Agreement required between the direct and the series solution.
pub const NEUMANN_TOL: f64 = 1e-8;
/// Standard errors a Monte-Carlo mean may sit away from its expectation.
pub const MC_SIGMAS: f64 = 4.0;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: GraphError },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error("writing {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bound violated: {}", .0.join(", "))]
    BoundViolation(Vec<String>),
    #[error("self-check failed on {graph}: {property} ({detail})")]
    InvariantViolated { graph: String, property: String, detail: String },
}

impl ExperimentError {
    /// `1` usage error, `2` data or runtime error, `3` bound violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Usage(_)
            | ExperimentError::Generator(GeneratorError::InvalidParams(_))
            | ExperimentError::Token(TokenError::ParameterOutOfRange(_)) => 1,
            ExperimentError::BoundViolation(_)
            | ExperimentError::InvariantViolated { .. }
            | ExperimentError::Spectral(SpectralError::BoundViolation { .. }) => 3,
            _ => 2,
        }
    }
}

fn usage(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Usage(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    File(PathBuf),
    Generated(GeneratorSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Oracle,
    Jacobi,
    Tokens,
    Spectral,
    Compare,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: GraphSource,
    pub algorithm: Algorithm,
    pub rounds: usize,
    /// Tokens injected per round (`K`).
    pub rate: u64,
    pub beta: f64,
    /// Required by the token and compare runs.
    pub seed: Option<u64>,
    pub replications: u64,
    pub stop_tol: Option<f64>,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn new(source: GraphSource, algorithm: Algorithm, out: impl Into<PathBuf>) -> Self {
        Self {
            source,
            algorithm,
            rounds: 200,
            rate: 100,
            beta: 1.0,
            seed: None,
            replications: 100,
            stop_tol: Some(1e-12),
            out: out.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(usage(format!("beta = {} not in (0, 1]", self.beta)));
        }
        if self.rate < 1 {
            return Err(usage("K must be at least 1"));
        }
        if self.replications < 1 {
            return Err(usage("replications must be at least 1"));
        }
        if let Some(tol) = self.stop_tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(usage(format!("stop tolerance {tol} must be positive")));
            }
        }
        if matches!(self.algorithm, Algorithm::Tokens | Algorithm::Compare) && self.seed.is_none() {
            return Err(usage("token runs need an explicit --seed"));
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

pub fn load_graph(source: &GraphSource) -> Result<WeightedGraph<f64>, ExperimentError> {
    match source {
        GraphSource::File(path) => {
            let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
            parse_graph(&text).map_err(|source| ExperimentError::Parse { path: path.clone(), source })
        }
        GraphSource::Generated(spec) => Ok(generate(spec)?),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphInfo {
    pub n: usize,
    pub m: usize,
    pub source: usize,
    pub sink: usize,
    pub vol_min: f64,
    pub vol_max: f64,
}

impl GraphInfo {
    pub fn of(g: &WeightedGraph<f64>) -> Self {
        Self { n: g.n(), m: g.m(), source: g.source(), sink: g.sink(), vol_min: g.vol_min(), vol_max: g.vol_max() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeFlow {
    pub u: usize,
    pub v: usize,
    /// Current from `u` to `v` (negative when it runs the other way).
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub graph: GraphInfo,
    pub p: Vec<f64>,
    pub energy: f64,
    pub residual_inf: f64,
    pub neumann_max_gap: f64,
    pub flows: Vec<EdgeFlow>,
    pub checks: Vec<BoundCheck>,
}

pub fn oracle_report(g: &WeightedGraph<f64>) -> Result<(PotentialVector<f64>, OracleReport), ExperimentError> {
    let p = solve_grounded(g)?;
    let residual = residual_inf(g, &p.0);
    let neumann_gap = (neumann_potentials(g)? - &p.0).amax();
    let flows = edge_flows(g, &p);
    let flows = g.edges().iter().map(|e| EdgeFlow { u: e.u, v: e.v, flow: flows.get(e.u, e.v).unwrap_or(0.0) }).collect();
    let sink_value = p[g.sink()];
    let checks = vec![
        BoundCheck::new("oracle_residual", residual, ORACLE_RESIDUAL_TOL, residual <= ORACLE_RESIDUAL_TOL),
        BoundCheck::new("oracle_grounded", sink_value.abs(), 0.0, sink_value == 0.0),
        BoundCheck::new("neumann_agreement", neumann_gap, NEUMANN_TOL, neumann_gap <= NEUMANN_TOL),
    ];
    let report = OracleReport {
        graph: GraphInfo::of(g),
        p: p.0.iter().copied().collect(),
        energy: energy(g, &p),
        residual_inf: residual,
        neumann_max_gap: neumann_gap,
        flows,
        checks,
    };
    Ok((p, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobiReport {
    pub graph: GraphInfo,
    pub beta: f64,
    pub rounds_requested: usize,
    pub rounds_run: usize,
    pub stop_tol: Option<f64>,
    pub rho_star: f64,
    pub final_potentials: Vec<f64>,
    pub final_err_perp_norm: f64,
    pub final_residual_inf: f64,
    pub messages_sent: u64,
    /// Contraction check over the full round budget; only for `beta = 1`.
    pub rate_check: Option<RateCheck>,
    pub checks: Vec<BoundCheck>,
}

pub fn jacobi_report(
    g: &WeightedGraph<f64>,
    p: &PotentialVector<f64>,
    config: &ExperimentConfig,
) -> Result<(JacobiReport, Vec<TrajectoryRow>), ExperimentError> {
    let rho = rho_star(&eigen_spectrum(g)?);
    let jc = JacobiConfig { rounds: config.rounds, beta: config.beta, stop_tol: config.stop_tol, initial: None };
    let trajectory = run_jacobi(g, &jc);
    let rows = trajectory_rows(g, p, &trajectory, rho);
    let last = trajectory.last().expect("trajectory holds the initial state");
    let final_row = rows.last().expect("one row per state");

    let mut checks = Vec::new();
    let expected_messages = 2 * g.m() as u64 * last.round as u64;
    checks.push(BoundCheck::new(
        "jacobi_messages",
        last.messages_sent as f64,
        expected_messages as f64,
        last.messages_sent == expected_messages,
    ));
    let rate_check = (config.beta == 1.0).then(|| verify_rate_bound(g, p, rho, config.rounds));
    if let Some(rc) = &rate_check {
        checks.push(
            BoundCheck::new("jacobi_rate_bound", rc.worst_excess.unwrap_or(0.0), crate::jacobi::RATE_SLACK, rc.holds)
                .with_vacuous(rc.worst_excess.is_none()),
        );
    }
    let stopped_early = last.round < config.rounds;
    if let (true, Some(tol)) = (stopped_early, config.stop_tol) {
        let limit = 10.0 * tol * g.vol_max();
        checks.push(BoundCheck::new("jacobi_fixed_point", final_row.residual_inf, limit, final_row.residual_inf <= limit));
    }
    let report = JacobiReport {
        graph: GraphInfo::of(g),
        beta: config.beta,
        rounds_requested: config.rounds,
        rounds_run: last.round,
        stop_tol: config.stop_tol,
        rho_star: rho,
        final_potentials: last.potentials.iter().copied().collect(),
        final_err_perp_norm: final_row.err_perp_norm,
        final_residual_inf: final_row.residual_inf,
        messages_sent: last.messages_sent,
        rate_check,
        checks,
    };
    Ok((report, rows))
}

/// Per-node statistics of the estimator at one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeStats {
    pub t: u64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokensReport {
    pub graph: GraphInfo,
    #[serde(rename = "K")]
    pub rate: u64,
    pub rounds: u64,
    pub seed: u64,
    pub replications: u64,
    pub rho_under: f64,
    pub final_round: NodeStats,
    /// `‖φ^{(T)} - p‖` at the final round and its bound.
    pub final_phi_gap: f64,
    pub diffusion_rate_bound: f64,
    pub convergence: RateCheck,
    pub token_count_bound: TokenCountBound,
    pub mean_tokens_final: f64,
    pub per_round: Vec<RoundSummary>,
    pub checks: Vec<BoundCheck>,
}

pub fn tokens_report(
    g: &WeightedGraph<f64>,
    p: &PotentialVector<f64>,
    config: &ExperimentConfig,
) -> Result<(TokensReport, Vec<TraceRow>), ExperimentError> {
    let rho_under = grounded_spectral_radius(g)?.rho_under;
    let rounds = config.rounds as u64;
    let dc = DiffusionConfig {
        rate: config.rate,
        rounds,
        seed: config.seed(),
        replications: config.replications,
        record_trace: true,
    };
    let run = run_diffusion(g, &dc)?;
    let last = run.rounds.last().expect("summary per round");
    let phi_final: Vec<f64> = crate::tokens::expected_iterates(g, config.rounds)
        .last()
        .map(|x| x.0.iter().copied().collect())
        .unwrap_or_default();
    let r = config.replications as f64;
    let standard_error: Vec<f64> = last.var_estimate.iter().map(|v| (v / r).sqrt()).collect();

    let mut checks = Vec::new();
    let convergence = verify_convergence_bound(g, p, rho_under, config.rounds)?;
    let final_phi_gap = phi_final.iter().zip(p.0.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let rate_bound = diffusion_rate_bound(g, rho_under, config.rounds)?;
    checks.push(BoundCheck::new("expected_iterate_convergence", final_phi_gap, rate_bound, convergence.holds));

    let mut worst_z: f64 = 0.0;
    let mut unbiased = true;
    for u in 0..g.n() {
        let dev = (last.mean_estimate[u] - phi_final[u]).abs();
        unbiased &= dev <= MC_SIGMAS * standard_error[u] + 1e-12;
        if standard_error[u] > 0.0 {
            worst_z = worst_z.max(dev / standard_error[u]);
        }
    }
    checks.push(
        BoundCheck::new("estimator_unbiased", worst_z, MC_SIGMAS, unbiased).with_vacuous(config.replications < 2),
    );

    let count = token_count_bound(g, p, config.rate);
    checks.push(BoundCheck::new(
        "token_count_expectation",
        count.expected_total,
        count.bound,
        count.expected_total <= count.bound * (1.0 + 1e-12),
    ));
    let tokens_se = (last.var_tokens / r).sqrt();
    checks.push(BoundCheck::new(
        "token_count_observed",
        last.mean_tokens,
        count.bound,
        last.mean_tokens <= count.bound + MC_SIGMAS * tokens_se,
    ));

    let report = TokensReport {
        graph: GraphInfo::of(g),
        rate: config.rate,
        rounds,
        seed: config.seed(),
        replications: config.replications,
        rho_under,
        final_round: NodeStats {
            t: last.t,
            mean: last.mean_estimate.clone(),
            variance: last.var_estimate.clone(),
            standard_error,
            phi: phi_final,
        },
        final_phi_gap,
        diffusion_rate_bound: rate_bound,
        convergence,
        token_count_bound: count,
        mean_tokens_final: last.mean_tokens,
        per_round: run.rounds.clone(),
        checks,
    };
    Ok((report, run.trace.unwrap_or_default()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub section: String,
    #[serde(flatten)]
    pub check: BoundCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSettings {
    pub rounds: usize,
    #[serde(rename = "K")]
    pub rate: u64,
    pub beta: f64,
    pub seed: u64,
    pub replications: u64,
    pub stop_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub settings: CompareSettings,
    pub oracle: OracleReport,
    pub jacobi: JacobiReport,
    pub tokens: TokensReport,
    pub spectral: SpectralReport,
    pub verdicts: Vec<Verdict>,
    pub all_pass: bool,
}

fn verdicts<'a>(section: &str, checks: &'a [BoundCheck]) -> impl Iterator<Item = Verdict> + 'a {
    let section = section.to_string();
    checks.iter().map(move |c| Verdict { section: section.clone(), check: c.clone() })
}

/// Every check of every algorithm on one graph.
pub fn compare_report(
    g: &WeightedGraph<f64>,
    config: &ExperimentConfig,
) -> Result<(CompareReport, Vec<TrajectoryRow>, Vec<TraceRow>), ExperimentError> {
    let (p, oracle) = oracle_report(g)?;
    let (jacobi, jacobi_rows) = jacobi_report(g, &p, config)?;
    let (tokens, trace) = tokens_report(g, &p, config)?;
    let spectral = spectral_report(g)?;
    let all: Vec<Verdict> = verdicts("oracle", &oracle.checks)
        .chain(verdicts("jacobi", &jacobi.checks))
        .chain(verdicts("tokens", &tokens.checks))
        .chain(verdicts("spectral", &spectral.bounds))
        .collect();
    let all_pass = all.iter().all(|v| v.check.holds);
    let settings = CompareSettings {
        rounds: config.rounds,
        rate: config.rate,
        beta: config.beta,
        seed: config.seed(),
        replications: config.replications,
        stop_tol: config.stop_tol,
    };
    Ok((CompareReport { settings, oracle, jacobi, tokens, spectral, verdicts: all, all_pass }, jacobi_rows, trace))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Header row, `.` decimals, LF line endings.
pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), ExperimentError> {
    let csv_err = |source| ExperimentError::Csv { path: path.to_path_buf(), source };
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(io_err(path))
}

fn failed_checks<'a>(checks: impl IntoIterator<Item = &'a BoundCheck>, section: &str) -> Vec<String> {
    checks.into_iter().filter(|c| !c.holds).map(|c| format!("{section}/{}", c.name)).collect()
}

/// Runs the configured algorithm, writes its artifacts into `config.out`
/// and returns their paths. Bound violations are reported as
/// [`ExperimentError::BoundViolation`] after the artifacts are written.
pub fn run(config: &ExperimentConfig) -> Result<Vec<PathBuf>, ExperimentError> {
    config.validate()?;
    let g = load_graph(&config.source)?;
    fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
    let out = |name: &str| config.out.join(name);
    let mut written = Vec::new();
    let failures = match config.algorithm {
        Algorithm::Oracle => {
            let (_, report) = oracle_report(&g)?;
            write_json(&out("oracle.json"), &report)?;
            written.push(out("oracle.json"));
            failed_checks(&report.checks, "oracle")
        }
        Algorithm::Jacobi => {
            let p = solve_grounded(&g)?;
            let (report, rows) = jacobi_report(&g, &p, config)?;
            write_csv(&out("jacobi.csv"), &rows)?;
            write_json(&out("jacobi.json"), &report)?;
            written.extend([out("jacobi.csv"), out("jacobi.json")]);
            failed_checks(&report.checks, "jacobi")
        }
        Algorithm::Tokens => {
            let p = solve_grounded(&g)?;
            let (report, trace) = tokens_report(&g, &p, config)?;
            write_csv(&out("tokens.csv"), &trace)?;
            write_json(&out("tokens.json"), &report)?;
            written.extend([out("tokens.csv"), out("tokens.json")]);
            failed_checks(&report.checks, "tokens")
        }
        Algorithm::Spectral => {
            let report = spectral_report(&g)?;
            write_json(&out("spectral.json"), &report)?;
            written.push(out("spectral.json"));
            failed_checks(&report.bounds, "spectral")
        }
        Algorithm::Compare => {
            let (report, jacobi_rows, trace) = compare_report(&g, config)?;
            write_csv(&out("jacobi.csv"), &jacobi_rows)?;
            write_csv(&out("tokens.csv"), &trace)?;
            write_json(&out("compare.json"), &report)?;
            written.extend([out("jacobi.csv"), out("tokens.csv"), out("compare.json")]);
            report.verdicts.iter().filter(|v| !v.check.holds).map(|v| format!("{}/{}", v.section, v.check.name)).collect()
        }
    };
    if failures.is_empty() {
        Ok(written)
    } else {
        Err(ExperimentError::BoundViolation(failures))
    }
}

/// Writes the serialized graph to `out/graph.txt`, or returns it when `out`
/// is absent.
pub fn run_generate(spec: &GeneratorSpec, out: Option<&Path>) -> Result<String, ExperimentError> {
    let g: WeightedGraph<f64> = generate(spec)?;
    let text = serialize_graph(&g);
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("graph.txt");
        fs::write(&path, &text).map_err(io_err(&path))?;
    }
    Ok(text)
}

/// Rescales the `u -> v` direction of edge `{u, v}` by `factor` in every
/// suite graph that has the edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    pub u: usize,
    pub v: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphCheck {
    pub graph: String,
    pub n: usize,
    pub m: usize,
    pub properties: Vec<PropertyResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub graph: String,
    pub property: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfcheckSummary {
    pub seed: u64,
    pub graphs: Vec<GraphCheck>,
    pub passed: bool,
    pub first_failure: Option<Failure>,
}

impl SelfcheckSummary {
    pub fn property_count(&self) -> usize {
        self.graphs.iter().map(|g| g.properties.len()).sum()
    }
}

/// Collects property outcomes and stops at the first failure.
struct Recorder(Vec<PropertyResult>);

impl Recorder {
    fn check(&mut self, name: &str, holds: bool, detail: impl Into<String>) -> Result<(), ()> {
        self.0.push(PropertyResult { name: name.into(), holds, detail: detail.into() });
        if holds {
            Ok(())
        } else {
            Err(())
        }
    }

    fn value<V, E: std::fmt::Display>(&mut self, name: &str, r: Result<V, E>) -> Result<V, ()> {
        r.map_err(|e| {
            self.0.push(PropertyResult { name: name.into(), holds: false, detail: e.to_string() });
        })
    }
}

const SELFCHECK_JACOBI_ROUNDS: usize = 200;
const SELFCHECK_RECURRENCE_ROUNDS: usize = 300;
const SELFCHECK_TOKEN_ROUNDS: u64 = 50;
const SELFCHECK_TOKEN_RATE: u64 = 8;

fn graph_properties(g: &WeightedGraph<f64>, seed: u64, rec: &mut Recorder) -> Result<(), ()> {
    let n = g.n();
    let ops = operator_matrices(g);
    let asym = (&ops.adjacency - ops.adjacency.transpose()).amax();
    rec.check("adjacency symmetric", asym == 0.0, format!("max |A - Aᵀ| = {asym:e}"))?;
    let row_gap = ops.transition.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
    rec.check("transition rows stochastic", row_gap <= 1e-12, format!("max |P·1 - 1| = {row_gap:e}"))?;
    let kernel = ops.laplacian.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max);
    rec.check("laplacian annihilates ones", kernel <= 1e-12 * g.vol_max(), format!("max |L·1| = {kernel:e}"))?;
    let mut similarity: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let conj = g.volume(i).sqrt() * ops.transition[(i, j)] / g.volume(j).sqrt();
            similarity = similarity.max((conj - ops.normalized[(i, j)]).abs());
        }
    }
    rec.check("normalized similar to transition", similarity <= 1e-12, format!("max gap {similarity:e}"))?;

    let p = rec.value("oracle solves", solve_grounded(g))?;
    let residual = residual_inf(g, &p.0);
    rec.check(
        "oracle residual",
        residual <= ORACLE_RESIDUAL_TOL && p[g.sink()] == 0.0,
        format!("‖Lp - b‖∞ = {residual:e}, p_sink = {}", p[g.sink()]),
    )?;
    let series = rec.value("neumann series converges", neumann_potentials(g))?;
    let gap = (series - &p.0).amax();
    rec.check("neumann agreement", gap <= NEUMANN_TOL, format!("max gap {gap:e}"))?;
    let e = energy(g, &p);
    let src = p[g.source()];
    rec.check("energy equals source potential", (e - src).abs() <= 1e-9 * e.max(1.0), format!("E = {e}, p_source = {src}"))?;
    let flows = edge_flows(g, &p);
    let b = demand_vector(g).0;
    let conservation = (0..n).map(|u| (flows.net_outflow(u) - b[u]).abs()).fold(0.0, f64::max);
    rec.check("flow conservation", conservation <= 1e-9, format!("max |net outflow - b| = {conservation:e}"))?;

    let rho = rho_star(&rec.value("transition spectrum", eigen_spectrum(g))?);
    let rate = verify_rate_bound(g, &p, rho, SELFCHECK_JACOBI_ROUNDS);
    rec.check("jacobi rate bound", rate.holds, format!("worst excess {:?}", rate.worst_excess))?;
    let plain = JacobiConfig { rounds: 50, beta: 1.0, stop_tol: None, initial: None };
    let base = run_jacobi(g, &plain);
    let expected_messages = 2 * g.m() as u64 * 50;
    let sent = base.last().map_or(0, |s| s.messages_sent);
    rec.check("jacobi message count", sent == expected_messages, format!("{sent} sent, {expected_messages} expected"))?;
    let shift = 0.75;
    let shifted = run_jacobi(g, &JacobiConfig { initial: Some(nalgebra::DVector::from_element(n, shift)), ..plain });
    let scale = base.iter().map(|s| s.potentials.amax()).fold(1.0, f64::max);
    let drift = base
        .iter()
        .zip(&shifted)
        .map(|(a, s)| (&s.potentials - &a.potentials).add_scalar(-shift).amax())
        .fold(0.0, f64::max);
    rec.check("jacobi kernel shift", drift <= 1e-12 * scale, format!("max drift {drift:e}"))?;

    let grounded = rec.value("grounded spectral radius", grounded_spectral_radius(g))?;
    let conv = rec.value("recurrence bound", verify_convergence_bound(g, &p, grounded.rho_under, SELFCHECK_RECURRENCE_ROUNDS))?;
    rec.check("expected iterate convergence", conv.holds, format!("worst excess {:?}", conv.worst_excess))?;
    let iterates = crate::tokens::expected_iterates(g, SELFCHECK_RECURRENCE_ROUNDS);
    let monotone = iterates.windows(2).all(|w| w[0].0.iter().zip(w[1].0.iter()).all(|(a, b)| *a >= 0.0 && b >= a));
    rec.check("expected iterate monotone", monotone, "φ nonnegative and nondecreasing")?;

    let process = TokenDiffusion::new(g);
    let mut state = TokenState::new(n, SELFCHECK_TOKEN_RATE, seed, 0);
    let mut imbalance = None;
    for _ in 0..SELFCHECK_TOKEN_ROUNDS {
        let next = rec.value("token round", process.round(&state))?;
        let absorbed = next.absorbed_total - state.absorbed_total;
        let balanced = next.total_tokens() + absorbed == state.total_tokens() + SELFCHECK_TOKEN_RATE;
        if !balanced || next.counts[g.sink()] != 0 {
            imbalance = Some(format!("round {}: {} tokens, {absorbed} absorbed", next.round, next.total_tokens()));
            break;
        }
        state = next;
    }
    let detail = imbalance.clone().unwrap_or_else(|| format!("{SELFCHECK_TOKEN_ROUNDS} rounds balanced"));
    rec.check("token conservation", imbalance.is_none(), detail)?;

    let report = rec.value("spectral report", spectral_report(g))?;
    for bound in &report.bounds {
        rec.check(&bound.name, bound.holds, format!("lhs {} rhs {}", bound.lhs, bound.rhs))?;
    }
    Ok(())
}

/// Runs the full invariant list on every suite graph, stopping at the
/// first failing property.
pub fn selfcheck(suite: &[NamedGraph], seed: u64, corruption: Option<Corruption>) -> SelfcheckSummary {
    let mut graphs = Vec::new();
    let mut first_failure = None;
    for named in suite {
        let mut g = named.graph.clone();
        if let Some(c) = corruption {
            if c.u < g.n() && c.v < g.n() && g.weight(c.u, c.v) > 0.0 {
                g = g.with_corrupted_weight(c.u, c.v, c.factor);
            }
        }
        let mut rec = Recorder(Vec::new());
        let outcome = graph_properties(&g, seed, &mut rec);
        if outcome.is_err() {
            let last = rec.0.last().expect("a failure is always recorded");
            first_failure =
                Some(Failure { graph: named.name.clone(), property: last.name.clone(), detail: last.detail.clone() });
        }
        graphs.push(GraphCheck { graph: named.name.clone(), n: g.n(), m: g.m(), properties: rec.0 });
        if first_failure.is_some() {
            break;
        }
    }
    SelfcheckSummary { seed, graphs, passed: first_failure.is_none(), first_failure }
}

/// [`selfcheck`] with the summary written to `out/selfcheck.json` when
/// `out` is given; a failing property becomes
/// [`ExperimentError::InvariantViolated`].
pub fn run_selfcheck(
    suite: &[NamedGraph],
    seed: u64,
    corruption: Option<Corruption>,
    out: Option<&Path>,
) -> Result<SelfcheckSummary, ExperimentError> {
    if let Some(c) = corruption {
        if !suite.iter().any(|s| c.u < s.graph.n() && c.v < s.graph.n() && s.graph.weight(c.u, c.v) > 0.0) {
            return Err(usage(format!("no suite graph has edge {{{}, {}}}", c.u, c.v)));
        }
    }
    let summary = selfcheck(suite, seed, corruption);
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_json(&dir.join("selfcheck.json"), &summary)?;
    }
    Ok(summary)
}
