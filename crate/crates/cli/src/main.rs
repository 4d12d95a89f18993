use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedsurv_core::data::{write_synthetic_dataset, SyntheticSpec};
use fedsurv_core::experiment::{
    budget_table, evaluate_saved, run_experiment, write_budget_csv, AccountantConfig, EvalSplit, ExperimentConfig,
    Scenario,
};
use fedsurv_core::{Error, Execution, Result};

/// Federated discrete-time survival experiments under differential privacy.
#[derive(Debug, Parser)]
#[command(name = "fedsurv", version)]
struct Cli {
    /// Worker threads for data-parallel loops (0 = one per core).
    #[arg(long, env = "FEDSURV_WORKERS", global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic lending dataset with its ground truth.
    Generate {
        /// Synthetic spec (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every configured scenario and seed, writing result bundles.
    Train(TrainArgs),
    /// Re-score a saved model on a rebuilt split.
    Evaluate(EvaluateArgs),
    /// Print a privacy budget table as CSV.
    Accountant(AccountantArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Experiment config (TOML); the default synthetic experiment when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Results root, replacing `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Restrict to these scenarios, e.g. `federated_bayesian`.
    #[arg(long)]
    scenario: Vec<Scenario>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// The experiment config the model was trained with.
    #[arg(long)]
    config: Option<PathBuf>,
    /// A `model.json` from a run directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "test")]
    split: EvalSplit,
    /// Second `model.json` for a per-client head-to-head table.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AccountantArgs {
    /// Accountant config (TOML); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "sigma", value_delimiter = ',')]
    sigmas: Vec<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "target", value_delimiter = ',')]
    targets: Vec<f64>,
    /// Squared sensitivities relative to C^2, comma separated.
    #[arg(long, value_delimiter = ',')]
    profile: Vec<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { config, out } => {
            let spec = match config {
                Some(p) => SyntheticSpec::load(&p)?,
                None => SyntheticSpec::default(),
            };
            let rows = write_synthetic_dataset(&spec, &out, Execution::Parallel)?;
            println!("wrote {rows} rows to {}", out.join("data.csv").display());
            Ok(())
        }
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Accountant(args) => accountant(args),
    }
}

fn experiment_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::synthetic_default()),
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = experiment_config(args.config.as_deref())?;
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Some(seed) = args.seed_override {
        cfg.seeds = vec![seed];
    }
    if !args.scenario.is_empty() {
        cfg.scenarios.retain(|s| args.scenario.contains(s));
        if cfg.scenarios.is_empty() {
            return Err(Error::Config("`--scenario` matches none of the configured scenarios".into()));
        }
    }
    let summary = run_experiment(&cfg)?;
    let mut out = io::stdout().lock();
    for row in &summary.summary {
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let _ = writeln!(
            out,
            "{:<22} CI {} ± {}  IBS {} ± {}  eps {}",
            row.scenario,
            show(row.ci_test_mean),
            show(row.ci_test_std),
            show(row.ibs_test_mean),
            show(row.ibs_test_std),
            show(row.epsilon_mean),
        );
    }
    let _ = writeln!(out, "results in {}", cfg.experiment_dir().display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = experiment_config(args.config.as_deref())?;
    let result = evaluate_saved(&cfg, &args.model, args.split, args.baseline.as_deref(), args.out.as_deref())?;
    if !result.present {
        println!("{} split is empty; section marked absent", args.split.as_str());
        return Ok(());
    }
    if let Some(r) = &result.evaluation.pooled {
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        println!(
            "{} {} seed {}: n {} CI {} IBS {}",
            result.scenario,
            args.split.as_str(),
            result.seed,
            r.n,
            show(r.mean_c_index),
            show(r.ibs)
        );
    }
    Ok(())
}

fn accountant(args: AccountantArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            AccountantConfig::from_toml(&text)?
        }
        None => AccountantConfig::default(),
    };
    if !args.sigmas.is_empty() {
        cfg.sigmas = args.sigmas;
    }
    if !args.targets.is_empty() {
        cfg.target_epsilons = args.targets;
    }
    if !args.profile.is_empty() {
        cfg.sensitivity_profile = args.profile;
    }
    cfg.q = args.q.unwrap_or(cfg.q);
    cfg.steps = args.steps.unwrap_or(cfg.steps);
    cfg.delta = args.delta.unwrap_or(cfg.delta);
    cfg.beta = args.beta.unwrap_or(cfg.beta);
    cfg.gamma = args.gamma.unwrap_or(cfg.gamma);
    let rows = budget_table(&cfg)?;
    match args.out {
        Some(p) => {
            let f = fs::File::create(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            write_budget_csv(&rows, f)
        }
        None => write_budget_csv(&rows, io::stdout().lock()),
    }
}
