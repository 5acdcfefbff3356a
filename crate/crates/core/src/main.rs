use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use ohm::experiment::{self, Algorithm, Corruption, ExperimentConfig, ExperimentError, GraphSource};
use ohm::generators::{Family, GeneratorSpec};
use ohm::suite::suite_from_env;

/// Decentralized electrical-flow estimation: exact potentials, Jacobi
/// exchange, token diffusion and spectral bound checks.
#[derive(Parser)]
#[command(name = "ohm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a generated graph (or write it to DIR/graph.txt).
    Generate {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Exact grounded potentials, flows and energy.
    Oracle(RunArgs),
    /// Jacobi potential exchange against the exact solution.
    Jacobi(RunArgs),
    /// Monte-Carlo token diffusion.
    Tokens(RunArgs),
    /// Spectral quantities, cuts and inequality checks.
    Spectral(RunArgs),
    /// All of the above on one graph, with a unified verdict report.
    Compare(RunArgs),
    /// Invariant suite over the built-in graphs (or OHM_SUITE_DIR).
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Rescale one direction of edge {U, V}: `U,V,FACTOR`.
        #[arg(long, hide = true, value_parser = parse_corruption)]
        corrupt_weight: Option<Corruption>,
    },
}

#[derive(Args)]
struct FamilyArgs {
    /// path, cycle, complete, grid, barbell or random.
    #[arg(long)]
    family: Option<Family>,
    /// Node count; side length for grid, clique size for barbell.
    #[arg(long)]
    n: Option<usize>,
    /// Edge probability of the random family.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 0.1)]
    wmin: f64,
    #[arg(long, default_value_t = 10.0)]
    wmax: f64,
    /// Path nodes between the two barbell cliques (default: clique size).
    #[arg(long)]
    bridge: Option<usize>,
}

impl FamilyArgs {
    fn spec(&self, seed: u64) -> Result<GeneratorSpec, ExperimentError> {
        let (Some(family), Some(n)) = (self.family, self.n) else {
            return Err(ExperimentError::Usage("need --family and --n".into()));
        };
        Ok(GeneratorSpec { family, n, p: self.p, wmin: self.wmin, wmax: self.wmax, seed, bridge: self.bridge })
    }
}

#[derive(Args)]
struct RunArgs {
    /// Graph file; alternatively describe a generated graph with --family.
    #[arg(long, value_name = "FILE", conflicts_with = "family")]
    graph: Option<PathBuf>,
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long, default_value_t = 200)]
    rounds: usize,
    /// Tokens injected at the source per round.
    #[arg(long = "K", visible_alias = "k", default_value_t = 100)]
    rate: u64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Seeds the token process and the random graph family.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    reps: u64,
    /// Jacobi early-stop tolerance; 0 runs the full round budget.
    #[arg(long, default_value_t = 1e-12)]
    stop_tol: f64,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self, algorithm: Algorithm) -> Result<ExperimentConfig, ExperimentError> {
        let source = match &self.graph {
            Some(path) => GraphSource::File(path.clone()),
            None => GraphSource::Generated(self.family.spec(self.seed.unwrap_or(0))?),
        };
        Ok(ExperimentConfig {
            rounds: self.rounds,
            rate: self.rate,
            beta: self.beta,
            seed: self.seed,
            replications: self.reps,
            stop_tol: (self.stop_tol != 0.0).then_some(self.stop_tol),
            ..ExperimentConfig::new(source, algorithm, &self.out)
        })
    }
}

fn parse_corruption(s: &str) -> Result<Corruption, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [u, v, factor] = parts[..] else {
        return Err("expected U,V,FACTOR".into());
    };
    Ok(Corruption {
        u: u.trim().parse().map_err(|e| format!("U: {e}"))?,
        v: v.trim().parse().map_err(|e| format!("V: {e}"))?,
        factor: factor.trim().parse().map_err(|e| format!("FACTOR: {e}"))?,
    })
}

fn run(command: Command) -> Result<(), ExperimentError> {
    let (args, algorithm) = match command {
        Command::Generate { family, seed, out } => {
            let text = experiment::run_generate(&family.spec(seed)?, out.as_deref())?;
            if out.is_none() {
                print!("{text}");
            }
            return Ok(());
        }
        Command::Selfcheck { seed, out, corrupt_weight } => {
            let suite = suite_from_env()?;
            let summary = experiment::run_selfcheck(&suite, seed, corrupt_weight, out.as_deref())?;
            for g in &summary.graphs {
                let ok = g.properties.iter().all(|p| p.holds);
                println!("{} {}: {} checked", if ok { "ok" } else { "FAIL" }, g.graph, g.properties.len());
            }
            return match summary.first_failure {
                None => {
                    println!("PASS: {} graphs, {} properties", summary.graphs.len(), summary.property_count());
                    Ok(())
                }
                Some(f) => Err(ExperimentError::InvariantViolated { graph: f.graph, property: f.property, detail: f.detail }),
            };
        }
        Command::Oracle(a) => (a, Algorithm::Oracle),
        Command::Jacobi(a) => (a, Algorithm::Jacobi),
        Command::Tokens(a) => (a, Algorithm::Tokens),
        Command::Spectral(a) => (a, Algorithm::Spectral),
        Command::Compare(a) => (a, Algorithm::Compare),
    };
    for path in experiment::run(&args.config(algorithm)?)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
