use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use realexp::adapters::{render_overlay, OverlayStyle};
use realexp::coalition::{exact_shapley, permutation_shapley, PermutationMode, TableGame};
use realexp::evaluation::{ConsistencyReport, ExpertAnnotation};
use realexp::perturbation::{empirical_variance, generic_contributions};
use realexp::pipeline::{consistency_eval, explain, stability_study, sweep, write_sweep_csv, ImportanceReport, RunConfig, SweepParam};
use realexp::{Error, Result};

#[derive(Parser)]
#[command(name = "realexp", version, about = "Similarity-aware feature attribution for black-box models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleMethod {
    Exact,
    Perm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Lambda,
    Alpha,
}

#[derive(Subcommand)]
enum Command {
    /// Explain one instance and print (or write) the importance report.
    Explain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Shaded PPM of the top segments (image instances only).
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Segments kept bright in the overlay; defaults to the config's top_k.
        #[arg(long)]
        overlay_top: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Attribute a tabulated game directly.
    Oracle {
        #[arg(long)]
        game: PathBuf,
        #[arg(long, value_enum)]
        method: OracleMethod,
        /// Sample this many permutations instead of visiting all of them.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare analytic and empirical score variance under the three masking policies.
    VarianceDemo {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0.3)]
        alpha: f64,
        #[arg(long, default_value_t = 0.05)]
        sigma_q2: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Top-k Jaccard stability of repeated runs under each masking policy.
    Stability {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Expert consistency of a saved report.
    Eval {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        expert: PathBuf,
    },
    /// Stability and held-out fit across values of one hyperparameter, as CSV.
    Sweep {
        #[arg(long, value_enum)]
        param: Param,
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Serialize)]
struct EvalOutput {
    report_sha256: String,
    expert_sha256: String,
    #[serde(flatten)]
    consistency: ConsistencyReport,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn read_hashed(path: &Path) -> Result<(String, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(text.as_bytes());
    let hex = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok((text, hex))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Explain { config, out, overlay, overlay_top, seed } => {
            let config = load_config(&config, seed)?;
            let report = explain(&config)?;
            if let Some(path) = overlay {
                let instance = config.adapt_instance()?;
                let style = OverlayStyle::top_k(overlay_top.unwrap_or(config.top_k).min(report.n));
                let written = render_overlay(&instance, &report.attribution, &style, &path)?;
                eprintln!("overlay written to {}", written.image.display());
            }
            match out {
                Some(path) => std::fs::write(&path, report.to_json()).map_err(|e| Error::io(&path, e))?,
                None => println!("{}", report.to_json()),
            }
        }
        Command::Oracle { game, method, samples, seed } => {
            let game = TableGame::load(&game)?;
            let attribution = match (method, samples) {
                (OracleMethod::Exact, _) => exact_shapley(&game)?,
                (OracleMethod::Perm, None) => permutation_shapley(&game, PermutationMode::Exhaustive)?,
                (OracleMethod::Perm, Some(count)) => {
                    permutation_shapley(&game, PermutationMode::Sampled { count, seed })?
                }
            };
            print_json(&attribution)?;
        }
        Command::VarianceDemo { n, alpha, sigma_q2, samples, seed } => {
            let c = generic_contributions(n, seed);
            print_json(&empirical_variance(&c, 0.0, n, alpha, sigma_q2, samples, seed)?)?;
        }
        Command::Stability { config, repeats, seed } => {
            let config = load_config(&config, seed)?;
            print_json(&stability_study(&config, repeats)?)?;
        }
        Command::Eval { report, expert } => {
            let (report_text, report_sha256) = read_hashed(&report)?;
            let (expert_text, expert_sha256) = read_hashed(&expert)?;
            let report = ImportanceReport::from_json(&report_text)?;
            let expert: ExpertAnnotation = serde_json::from_str(&expert_text)?;
            let consistency = consistency_eval(&report, &expert)?;
            print_json(&EvalOutput { report_sha256, expert_sha256, consistency })?;
        }
        Command::Sweep { param, values, config, repeats, seed } => {
            let config = load_config(&config, seed)?;
            let param = match param {
                Param::Lambda => SweepParam::Lambda,
                Param::Alpha => SweepParam::Alpha,
            };
            let rows = sweep(&config, param, &values, repeats)?;
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_sweep_csv(&rows, &mut lock)?;
            lock.flush().map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
