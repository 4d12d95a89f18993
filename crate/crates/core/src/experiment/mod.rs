//! Config-driven experiments: scenario runs, result bundles, re-evaluation of
//! saved models and the budget calculator.

mod accountant;
mod bundle;
mod config;
mod evaluate;
mod runner;

use std::collections::BTreeMap;
use std::fs;

pub use accountant::{budget_table, profile_ledger, write_budget_csv, AccountantConfig, BudgetRow};
pub use bundle::{mean_std, summarize, win_rates, write_run, write_summary, RunMetrics, SeedRow, SummaryRow, WinRateRow};
pub use config::{
    DataConfig, EvaluationConfig, ExperimentConfig, ModelConfig, PrivacyConfig, Scenario, Setting, TrainingConfig,
};
pub use evaluate::{evaluate_saved, load_bundle, PairwiseRow, SavedEvaluation};
pub use runner::{
    calibrated_sigma, evaluate_examples, evaluate_model, load_source, model_dims, predict, prepare_seed, run_scenario,
    split_of, ClientMetrics, EvalContext, EvalSplit, LossPoint, ModelBundle, ModelEvaluation, ScenarioRun, SourceData,
};

use crate::error::{Error, Result};

/// Aggregated outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub per_seed: Vec<SeedRow>,
    pub summary: Vec<SummaryRow>,
    pub win_rates: Vec<WinRateRow>,
}

/// Runs every configured scenario for every seed and writes all bundles.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let config_text = cfg.to_toml()?;
    let source = load_source(cfg)?;
    let mut per_seed = Vec::new();
    let mut per_client = BTreeMap::new();
    for &seed in &cfg.seeds {
        let data = prepare_seed(cfg, &source, seed)?;
        let ctx = EvalContext::new(cfg, &data)?;
        for &scenario in &cfg.scenarios {
            log::info!("running {} seed {seed}", scenario.name());
            let run = run_scenario(cfg, &data, &ctx, scenario, seed)?;
            write_run(cfg, &run, &data.preprocessing, &config_text)?;
            per_seed.push(SeedRow::from_run(&run));
            per_client.insert((scenario, seed), run.test.clients.clone());
        }
    }
    let summary = summarize(&per_seed);
    let wins = win_rates(&per_client);
    let dir = cfg.experiment_dir();
    write_summary(&dir, &per_seed, &summary, &wins)?;
    let path = dir.join("resolved_config.toml");
    fs::write(&path, &config_text).map_err(|e| Error::io(&path, e))?;
    Ok(ExperimentSummary {
        per_seed,
        summary,
        win_rates: wins,
    })
}
