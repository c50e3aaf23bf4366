use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use riskwarn::pipeline::{self, CreditParams, PipelineConfig, PipelineError, SimulateKind, Stage};
use riskwarn::timeseries::{ArchModel, ArmaModel};

/// Credit-risk early warning: simulate data, train, evaluate and assess.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Arma,
    Arch,
    Credit,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic series or labelled credit dataset as CSV.
    Simulate {
        kind: Kind,
        #[command(flatten)]
        common: Common,
        /// Number of observations (credit: overrides the config's `credit.n`).
        #[arg(long)]
        n: Option<usize>,
        /// Output CSV path; defaults to `<out>/<kind>.csv`, or the config's
        /// `input` for credit data.
        #[arg(long)]
        file: Option<PathBuf>,
        /// Intercept (arma).
        #[arg(long, default_value_t = 0.0)]
        c: f64,
        /// AR coefficients, comma separated (arma).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        phi: Vec<f64>,
        /// MA coefficients, comma separated (arma).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Vec<f64>,
        /// Innovation variance (arma).
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        /// Discarded warm-up draws (arma).
        #[arg(long, default_value_t = 200)]
        burn_in: usize,
        /// Variance intercept (arch).
        #[arg(long, default_value_t = 0.2)]
        a0: f64,
        /// Lagged squared-residual coefficients, comma separated (arch).
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        a: Vec<f64>,
    },
    /// Clean, split, normalize and fit the network and logistic models.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score stored models on the held-out test partition.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory holding the trained models; defaults to the output dir.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Grade unlabelled samples and write warning reports.
    Assess {
        #[command(flatten)]
        common: Common,
        /// Unlabelled CSV (`id` then feature columns); defaults to the config's `input`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Directory holding the trained models; defaults to the output dir.
        #[arg(long)]
        models: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| PipelineError::new(Stage::Config, "--config is required"))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn simulate(
    kind: Kind,
    common: &Common,
    n: Option<usize>,
    file: Option<PathBuf>,
    arma: (f64, Vec<f64>, Vec<f64>, f64, usize),
    arch: (f64, Vec<f64>),
) -> Result<(), PipelineError> {
    let cfg = common
        .config
        .as_ref()
        .map(|_| load_config(common))
        .transpose()?;
    let seed = common.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let bad = |e: riskwarn::timeseries::TimeSeriesError| PipelineError::new(Stage::Simulate, e);
    let (request, name) = match kind {
        Kind::Arma => {
            let (c, phi, theta, sigma2, burn_in) = arma;
            let model = ArmaModel::new(c, phi, theta, sigma2).map_err(bad)?;
            (
                SimulateKind::Arma {
                    model,
                    n: n.unwrap_or(1000),
                    burn_in,
                },
                "arma.csv",
            )
        }
        Kind::Arch => {
            let (a0, a) = arch;
            let model = ArchModel::new(0.0, a0, a).map_err(bad)?;
            (
                SimulateKind::Arch {
                    model,
                    n: n.unwrap_or(1000),
                },
                "arch.csv",
            )
        }
        Kind::Credit => {
            let mut params = cfg
                .as_ref()
                .map(|c| c.credit.clone())
                .unwrap_or_else(CreditParams::default);
            if let Some(n) = n {
                params.n = n;
            }
            (SimulateKind::Credit(params), "credit.csv")
        }
    };
    let path = match (file, &common.out, &cfg, kind) {
        (Some(f), ..) => f,
        (None, Some(out), ..) => out.join(name),
        (None, None, Some(cfg), Kind::Credit) => cfg.input.clone(),
        (None, None, Some(cfg), _) => cfg.output_dir.join(name),
        (None, None, None, _) => {
            return Err(PipelineError::new(
                Stage::Config,
                "one of --file, --out or --config is required",
            ))
        }
    };
    pipeline::cmd_simulate(&request, seed, &path)
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Simulate {
            kind,
            common,
            n,
            file,
            c,
            phi,
            theta,
            sigma2,
            burn_in,
            a0,
            a,
        } => simulate(
            kind,
            &common,
            n,
            file,
            (c, phi, theta, sigma2, burn_in),
            (a0, a),
        ),
        Command::Train { common } => {
            let summary = pipeline::cmd_train(&load_config(&common)?)?;
            emit(&serde_json::to_string_pretty(&summary).expect("summary serialises"));
            Ok(())
        }
        Command::Evaluate { common, models } => {
            let report = pipeline::cmd_evaluate(&load_config(&common)?, models.as_deref())?;
            emit(&serde_json::to_string_pretty(&report).expect("metrics serialise"));
            Ok(())
        }
        Command::Assess {
            common,
            input,
            models,
        } => {
            let cfg = load_config(&common)?;
            let input = input.unwrap_or_else(|| cfg.input.clone());
            let reports = pipeline::cmd_assess(&cfg, Path::new(&input), models.as_deref())?;
            emit(&format!("assessed {} samples", reports.len()));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RISKWARN_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("ERROR args: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
