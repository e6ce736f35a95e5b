mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "metapop", version, about = "Infer, simulate, and rank inter-zone infection networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic city, its ground-truth network, and an outbreak.
    Gen(GenArgs),
    /// Infer an infection network from daily case counts.
    Infer(InferArgs),
    /// Score rolling multi-day predictions of a network.
    Predict(PredictArgs),
    /// Compare networked and single-population simulations of an outbreak.
    Simulate(SimulateArgs),
    /// Rank zones by PageRank on a network and by observed infections.
    Rank(RankArgs),
    /// Compare a network with a reference and describe its degree law.
    Eval(EvalArgs),
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    #[arg(long, default_value_t = 50)]
    pub zones: usize,
    /// Links each new zone makes under preferential attachment.
    #[arg(long, default_value_t = 2)]
    pub attach_m: usize,
    /// Infection rate. Defaults to `r0 * beta / mean population`.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Within-zone reproduction number used when `--alpha` is absent.
    #[arg(long, default_value_t = 1.5)]
    pub r0: f64,
    #[arg(long, default_value_t = 0.2)]
    pub beta: f64,
    /// Upper bound of edge volumes as a fraction of the mean population.
    #[arg(long, default_value_t = 0.2)]
    pub volume_scale: f64,
    #[arg(long, default_value_t = 100)]
    pub days: usize,
    /// Standard deviation of the noise on daily incidence rates.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 3)]
    pub seed_zones: usize,
    #[arg(long, default_value_t = 10.0)]
    pub seed_cases: f64,
    /// Log-scale spread of the noisy mobility feature.
    #[arg(long, default_value_t = 0.5)]
    pub proxy_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Zones and daily counts.
#[derive(Args, Debug, Clone)]
pub struct SeriesArgs {
    #[arg(long)]
    pub zones: PathBuf,
    #[arg(long)]
    pub deltas: PathBuf,
    /// Daily recovery rate of the disease.
    #[arg(long, default_value_t = 0.2)]
    pub beta: f64,
}

#[derive(Args, Debug, Clone)]
pub struct InferArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// basic, plpri, datpri, l1pri, l2pri or d2pri.
    #[arg(long, default_value = "d2pri")]
    pub model: String,
    /// Headerless N x N feature matrix; repeat for several features.
    #[arg(long = "feature")]
    pub features: Vec<PathBuf>,
    /// JSON inference config; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub l1: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ground-truth network; when given, the cosine similarity is reported.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PredictArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
    pub horizons: Vec<usize>,
    /// Days used to refit the rate adjustment; predictions start after them.
    #[arg(long, default_value_t = 30)]
    pub fit_days: usize,
    /// Use this rate adjustment instead of fitting one.
    #[arg(long)]
    pub alpha_adj: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Network inferred with the priors.
    #[arg(long)]
    pub d2pri: PathBuf,
    /// Network inferred without priors.
    #[arg(long)]
    pub basic: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RankArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, default_value_t = metapop::evaluation::DEFAULT_DAMPING)]
    pub damping: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub zones: PathBuf,
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub n_bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Rank(a) => commands::rank(&a),
        Command::Eval(a) => commands::eval(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
