use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use corshape::io::{read_config, write_factors, write_text, RunConfig};
use corshape::optimizer::Termination;
use corshape::oracle::{oracle_report_csv, run_oracle_suite};
use corshape::{assemble_correlation_matrix, run_optimization, CorrelationKernel, Error};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Mean-value shape optimization under random loads.
#[derive(Debug, Parser)]
#[command(name = "corshape", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the level-set optimization of a scenario.
    Run {
        config: PathBuf,
        /// Output directory, overriding `[output] directory`.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Iteration budget, overriding `[optimization] iterations`.
        #[arg(short, long)]
        iterations: Option<usize>,
    },
    /// Run the dense oracle comparisons of the `[oracle]` table.
    Oracle {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Factorize the load correlation of a scenario and report the ranks.
    Cholesky {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Config(Error),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e)
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    read_config(path).map_err(|e| match e {
        Error::Io { .. } => Failure::Config(e),
        e => e.into(),
    })
}

fn output_dir(cli: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    cli.or_else(|| cfg.optimization.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(config: &Path, output: Option<PathBuf>, iterations: Option<usize>) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    let dir = output_dir(output, &cfg);
    let opt = &mut cfg.optimization;
    if let Some(n) = iterations {
        opt.iterations = n;
    }
    opt.output_dir = Some(dir.clone());
    let history = run_optimization(opt)?;
    let last = history.records.last().expect("at least one record");
    println!(
        "{} iterations: objective {:.6e}, volume {:.4} (target {:.4}), rank {}",
        last.iteration, last.objective, last.volume, opt.volume_target, last.rank
    );
    if history.termination == Termination::StepCollapse {
        log::warn!("step size collapsed at iteration {}", last.iteration);
    }
    println!("results in {}", dir.display());
    Ok(())
}

fn oracle(config: &Path, output: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config)?;
    let dir = output_dir(output, &cfg);
    let rows = run_oracle_suite(&cfg.oracle)?;
    let path = dir.join("oracle_report.csv");
    write_text(&path, &oracle_report_csv(&rows))?;
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.quantity.as_str())
        .collect();
    println!(
        "{} of {} comparisons passed; report in {}",
        rows.len() - failed.len(),
        rows.len(),
        path.display()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "oracle mismatches: {}",
            failed.join(", ")
        )))
    }
}

fn cholesky(config: &Path, output: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config)?;
    let dir = output_dir(output, &cfg);
    let opt = &cfg.optimization;
    let mesh = &opt.scenario.mesh;
    if opt.scenario.pieces.is_empty() {
        println!("scenario has no random load");
    }
    for (k, piece) in opt.scenario.pieces.iter().enumerate() {
        let dc = assemble_correlation_matrix(&piece.kernel, mesh, piece.region)?;
        let fac = match dc.factorize(opt.cholesky_epsilon, opt.max_rank) {
            Ok(f) => f,
            Err(Error::RankExhausted { partial, .. }) => *partial,
            Err(e) => return Err(e.into()),
        };
        let components = dc.field_kind().components();
        let nodes: Vec<usize> = if matches!(piece.kernel, CorrelationKernel::FiniteRank { .. }) {
            dc.region_dofs().iter().map(|d| d / components).collect()
        } else {
            dc.region_dofs().to_vec()
        };
        write_factors(
            mesh,
            &nodes,
            &fac,
            dir.join(format!("factors_{k}.csv")),
            dir.join(format!("trace_{k}.csv")),
        )?;
        println!(
            "piece {k}: {} dofs, rank {}, relative trace error {:.3e} (requested {:.1e})",
            fac.dim(),
            fac.rank(),
            fac.trace_error,
            opt.cholesky_epsilon
        );
    }
    println!("factors in {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            output,
            iterations,
        } => run(&config, output, iterations),
        Command::Oracle { config, output } => oracle(&config, output),
        Command::Cholesky { config, output } => cholesky(&config, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
