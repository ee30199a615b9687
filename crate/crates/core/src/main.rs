use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

use fde_core::envs::{lqr_true_params, LqrEnv};
use fde_core::harness::config::parse_list;
use fde_core::harness::experiment::{sidecar_path, summarize};
use fde_core::harness::properties::slc_suite;
use fde_core::harness::{run_experiment_full, run_property_suite, save, ExperimentConfig, ExperimentKind, Suite};
use fde_core::Error;

/// Fitted distributional evaluation experiments and property checks.
#[derive(Parser, Debug)]
#[command(name = "fde", version)]
struct Cli {
    /// TOML configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV; a `.meta.json` sidecar is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long, global = true)]
    n: Option<String>,
    /// Comma-separated methods (cramer, energy, rbf, laplace, pdf_l2, kl, fle, tvd_mc).
    #[arg(long, global = true)]
    methods: Option<String>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// LQR benchmark sweep.
    RunLqr,
    /// Random tabular MDP sweep.
    RunTabular,
    /// Run a property suite; exits with 2 on counterexamples.
    Check {
        #[arg(long)]
        suite: String,
        /// Add the wrong-constant metric to the slc suite.
        #[arg(long)]
        negative_control: bool,
    },
    /// Print the ground-truth LQR parameters as JSON.
    TruthLqr {
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
}

enum Failure {
    Config(String),
    Suite,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn config(cli: &Cli, kind: ExperimentKind) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.experiment = kind;
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    if let Some(r) = cli.reps {
        cfg.reps = r;
    }
    if let Some(n) = &cli.n {
        cfg.n_list = parse_list(n)?;
    }
    if let Some(m) = &cli.methods {
        cfg.methods = parse_list(m)?;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::RunLqr | Command::RunTabular => {
            let kind = if matches!(cli.command, Command::RunLqr) {
                ExperimentKind::Lqr
            } else {
                ExperimentKind::Tabular
            };
            let cfg = config(cli, kind)?;
            let out = run_experiment_full(&cfg)?;
            save(&out, &cfg.output)?;
            println!("method,n,mean_inaccuracy,completed");
            for ((method, n), (mean, count)) in summarize(&out.reports) {
                println!("{method},{n},{mean:.4},{count}");
            }
            if out.metadata.failures > 0 {
                eprintln!("{} cells failed (recorded as NaN rows)", out.metadata.failures);
            }
            eprintln!("wrote {} and {}", cfg.output.display(), sidecar_path(&cfg.output).display());
            Ok(())
        }
        Command::Check { suite, negative_control } => {
            let suite: Suite = suite.parse()?;
            let seed = match &cli.config {
                Some(_) => cli.seed.unwrap_or(config(cli, ExperimentKind::Properties)?.master_seed),
                None => cli.seed.unwrap_or(1),
            };
            let report = match suite {
                Suite::Slc => slc_suite(seed, *negative_control)?,
                s => run_property_suite(s, seed)?,
            };
            println!("{report}");
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Suite)
            }
        }
        Command::TruthLqr { tol } => {
            let env = LqrEnv::default();
            let theta = lqr_true_params(&env, *tol)?;
            let json = serde_json::json!({
                "M1": theta.m1.transpose().as_slice(),
                "M2": theta.m2.transpose().as_slice(),
                "M3": theta.m3.transpose().as_slice(),
                "row_major": theta.to_vec(),
                "return_variance": env.return_variance(),
            });
            println!("{}", serde_json::to_string_pretty(&json).expect("plain numbers serialize"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Suite) => ExitCode::from(2),
    }
}
