//! Command-line front end.
//!
//! Every subcommand reads JSON documents in the formats fixed by
//! [`bellkit::json`] and writes one JSON document to `--out`, or to
//! stdout when no path is given. Diagnostic lines (functional values,
//! residuals under `--tol-report`) go to stderr so stdout stays
//! machine-readable; the `pipeline` subcommand is the exception and
//! prints its text report to stdout.
//!
//! Exit codes: 0 success, 2 malformed or invalid input, 3 unmet
//! preconditions or refused problem sizes, 4 numerical or internal
//! failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use bellkit::blocks::{compress, slocc_filter};
use bellkit::classical::{is_classical, verify_certificate, MembershipCertificate};
use bellkit::error::{Error, Result};
use bellkit::json::{
    parse_json, render_json, BehaviorDto, CertificateDto, DecompositionDto, FilterDto,
    FunctionalDto, MixtureDto, ReductionDto, SeesawResultDto, StrategyDto,
};
use bellkit::pipeline::run_pipeline;
use bellkit::projectivize::projectivize_strategy;
use bellkit::quantum::{born_behavior, random_strategy, QuantumStrategy};
use bellkit::reduction::strip_shared_vectors;
use bellkit::scenario::{bell_value, Behavior, BellFunctional};
use bellkit::seesaw::{seesaw, SeesawConfig, DEFAULT_SEED};

#[derive(Parser)]
#[command(name = "bellkit", version, about = "Decompose, classify and optimize \
two-setting two-outcome Bell correlations")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write the resulting JSON document here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for randomized subcommands. The fixed default makes runs
    /// reproducible; pass a different value for fresh draws.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Print residuals and slacks of the computed object to stderr.
    #[arg(long, global = true)]
    tol_report: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the behavior of a strategy, optionally evaluating a
    /// functional on it.
    Evaluate {
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long)]
        functional: Option<PathBuf>,
    },
    /// Decide membership of a behavior in the classical polytope and
    /// write the certificate.
    Classify {
        #[arg(long)]
        behavior: PathBuf,
    },
    /// Decompose a strategy into a mixture of projective ones.
    Projectivize {
        #[arg(long)]
        strategy: PathBuf,
    },
    /// Strip locally deterministic directions from a projective strategy.
    Reduce {
        #[arg(long)]
        strategy: PathBuf,
    },
    /// Decompose a balanced projective strategy into two-dimensional
    /// blocks per party.
    Compress {
        #[arg(long)]
        strategy: PathBuf,
    },
    /// Extract the local filter concentrating the violation of a
    /// functional on one block component.
    Filter {
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long)]
        functional: PathBuf,
    },
    /// Minimize a functional over strategies of fixed local dimensions
    /// by alternating state and measurement updates.
    Optimize {
        #[arg(long)]
        functional: PathBuf,
        /// Local dimensions, comma separated, e.g. 2,2.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 200)]
        max_rounds: usize,
        /// Stop a restart once the round-to-round improvement drops
        /// below this.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Run projectivize, reduce, compress and filter end to end and
    /// print a report; --out also writes it as JSON.
    Pipeline {
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long)]
        functional: PathBuf,
    },
    /// Generate a random strategy.
    Random {
        /// Local dimensions, comma separated, e.g. 2,2.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        /// Draw a pure state instead of a mixed one.
        #[arg(long)]
        pure: bool,
        /// Draw projective measurements instead of POVMs.
        #[arg(long)]
        projective: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bellkit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Evaluate { strategy, functional } => {
            let strat = load_strategy(&strategy)?;
            let behavior = born_behavior(&strat)?;
            if let Some(path) = functional {
                let f = load_functional(&path)?;
                eprintln!("functional value: {:+.12}", bell_value(&f, &behavior)?);
            }
            if cli.tol_report {
                let (norm, min_p) = behavior_residuals(&behavior);
                eprintln!("tol: normalization deviation {norm:.3e}, smallest entry {min_p:.3e}");
            }
            emit(&BehaviorDto::from(&behavior), out)
        }
        Command::Classify { behavior } => {
            let b = load_behavior(&behavior)?;
            let cert = is_classical(&b)?;
            if cli.tol_report {
                verify_certificate(&b, &cert)?;
                let slack = match &cert {
                    MembershipCertificate::Member { reconstruction_residual, .. } => {
                        *reconstruction_residual
                    }
                    MembershipCertificate::NonMember { value, .. } => -*value,
                };
                eprintln!("tol: certificate verified, slack {slack:.3e}");
            }
            emit(&CertificateDto::from(&cert), out)
        }
        Command::Projectivize { strategy } => {
            let strat = load_strategy(&strategy)?;
            let mixture = projectivize_strategy(&strat)?;
            if cli.tol_report {
                let total: f64 = mixture.branches.iter().map(|b| b.weight).sum();
                eprintln!(
                    "tol: {} branches, weight sum deviation {:.3e}",
                    mixture.branches.len(),
                    (total - 1.0).abs()
                );
            }
            emit(&MixtureDto::from(&mixture), out)
        }
        Command::Reduce { strategy } => {
            let strat = load_strategy(&strategy)?;
            let reduction = strip_shared_vectors(&strat)?;
            if cli.tol_report {
                let stripped: f64 = reduction.steps.iter().map(|s| s.absolute_weight).sum();
                let mass = (stripped + reduction.residual_weight - 1.0).abs();
                match reduction.reconstructed_behavior()? {
                    Some(rec) => {
                        let original = born_behavior(&strat)?;
                        let residual = rec
                            .table()
                            .iter()
                            .zip(original.table())
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max);
                        eprintln!(
                            "tol: weight deviation {mass:.3e}, reconstruction residual {residual:.3e}"
                        );
                    }
                    None => eprintln!(
                        "tol: weight deviation {mass:.3e}, reconstruction skipped \
                         (a stripped term fell below the weight cutoff)"
                    ),
                }
            }
            emit(&ReductionDto::from(&reduction), out)
        }
        Command::Compress { strategy } => {
            let strat = load_strategy(&strategy)?;
            let decomposition = compress(&strat)?;
            if cli.tol_report {
                eprintln!(
                    "tol: reconstruction residual {:.3e}",
                    decomposition.reconstruction_residual
                );
            }
            emit(&DecompositionDto::from(&decomposition), out)
        }
        Command::Filter { strategy, functional } => {
            let strat = load_strategy(&strategy)?;
            let f = load_functional(&functional)?;
            let filter = slocc_filter(&strat, &f)?;
            if cli.tol_report {
                eprintln!(
                    "tol: filtered value {:+.9}, drift from original {:.3e}, success \
                     probability {:.9}",
                    filter.filtered_value,
                    (filter.filtered_value - filter.original_value).abs(),
                    filter.success_probability
                );
            }
            emit(&FilterDto::from(&filter), out)
        }
        Command::Optimize { functional, dims, restarts, max_rounds, tol } => {
            let f = load_functional(&functional)?;
            let cfg = SeesawConfig {
                restarts,
                max_rounds,
                convergence_tol: tol,
                seed: cli.seed,
            };
            let result = seesaw(&f, &dims, &cfg)?;
            if cli.tol_report {
                let worst = result.per_restart_values.iter().cloned().fold(f64::MIN, f64::max);
                let rounds = result.rounds_used.iter().max().copied().unwrap_or(0);
                eprintln!(
                    "tol: best value {:+.9}, worst restart {worst:+.9}, most rounds {rounds}",
                    result.best_value
                );
            }
            emit(&SeesawResultDto::from(&result), out)
        }
        Command::Pipeline { strategy, functional } => {
            let strat = load_strategy(&strategy)?;
            let f = load_functional(&functional)?;
            let report = run_pipeline(&strat, &f)?;
            print!("{}", report.render_text());
            if cli.tol_report {
                eprintln!("tol: reconstruction residual {:.3e}", report.reconstruction_residual);
            }
            match out {
                Some(_) => emit(&report, out),
                None => Ok(()),
            }
        }
        Command::Random { dims, pure, projective } => {
            let strat = random_strategy(&dims, pure, projective, cli.seed)?;
            if cli.tol_report {
                let trace: f64 = (0..strat.total_dim()).map(|i| strat.state()[(i, i)].re).sum();
                eprintln!("tol: state trace deviation {:.3e}", (trace - 1.0).abs());
            }
            emit(&StrategyDto::from(&strat), out)
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Structural(format!("cannot read {}: {e}", path.display())))
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_file(path)?, &path.display().to_string())
}

fn load_strategy(path: &Path) -> Result<QuantumStrategy> {
    load::<StrategyDto>(path)?.into_strategy()
}

fn load_behavior(path: &Path) -> Result<Behavior> {
    load::<BehaviorDto>(path)?.into_behavior()
}

fn load_functional(path: &Path) -> Result<BellFunctional> {
    load::<FunctionalDto>(path)?.into_functional()
}

fn emit<T: Serialize>(doc: &T, out: Option<&Path>) -> Result<()> {
    let text = render_json(doc)?;
    match out {
        Some(path) => fs::write(path, &text)
            .map_err(|e| Error::Structural(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Largest per-setting normalization deviation and the smallest table
/// entry of a behavior.
fn behavior_residuals(b: &Behavior) -> (f64, f64) {
    let s = b.scenario();
    let outcomes = 1usize << s.n_parties();
    let mut norm: f64 = 0.0;
    let mut min_p = f64::INFINITY;
    for x in 0..s.vector_count() {
        let mut sum = 0.0;
        for a in 0..outcomes {
            let p = b.table()[s.flat(x, a)];
            sum += p;
            min_p = min_p.min(p);
        }
        norm = norm.max((sum - 1.0).abs());
    }
    (norm, min_p)
}
