use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bundle::{write_csv, write_evaluation_files, write_json};
use super::config::ExperimentConfig;
use super::runner::{evaluate_model, load_source, prepare_seed, EvalContext, EvalSplit, ModelBundle, ModelEvaluation};
use crate::error::{Error, Result};

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Load {
        path: path.into(),
        reason: e.to_string(),
    })
}

/// Head-to-head result of two saved models on one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    pub client: String,
    pub c_index: Option<f64>,
    pub baseline_c_index: Option<f64>,
    pub win: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedEvaluation {
    pub scenario: String,
    pub seed: u64,
    /// False when the requested split has no rows.
    pub present: bool,
    pub evaluation: ModelEvaluation,
    pub pairwise: Vec<PairwiseRow>,
}

/// Re-scores a saved model on a split rebuilt from the experiment config.
/// Outputs land in `out` when given.
pub fn evaluate_saved(
    cfg: &ExperimentConfig,
    model_path: &Path,
    split: EvalSplit,
    baseline: Option<&Path>,
    out: Option<&Path>,
) -> Result<SavedEvaluation> {
    let bundle = load_bundle(model_path)?;
    let source = load_source(cfg)?;
    let data = prepare_seed(cfg, &source, bundle.seed)?;
    if data.preprocessing != bundle.preprocessing || data.grid != bundle.grid {
        return Err(Error::Config(format!(
            "{} was trained on data that does not match this config",
            model_path.display()
        )));
    }
    let ctx = EvalContext::new(cfg, &data)?;
    let evaluation = evaluate_model(cfg, &bundle.model, &data, &ctx, split)?;
    let mut pairwise = Vec::new();
    if let Some(b) = baseline {
        let other = load_bundle(b)?;
        if other.seed != bundle.seed {
            return Err(Error::Config("baseline was trained on a different seed".into()));
        }
        let base = evaluate_model(cfg, &other.model, &data, &ctx, split)?;
        for (a, b) in evaluation.clients.iter().zip(&base.clients) {
            pairwise.push(PairwiseRow {
                client: a.client.clone(),
                c_index: a.c_index,
                baseline_c_index: b.c_index,
                win: a.c_index.zip(b.c_index).map(|(x, y)| x > y),
            });
        }
    }
    let result = SavedEvaluation {
        scenario: bundle.scenario.name(),
        seed: bundle.seed,
        present: evaluation.pooled.is_some(),
        evaluation,
        pairwise,
    };
    if let Some(dir) = out {
        write_json(&dir.join("metrics.json"), &result)?;
        write_evaluation_files(dir, &result.evaluation)?;
        if baseline.is_some() {
            write_csv(&dir.join("client_winrates.csv"), &result.pairwise)?;
        }
    }
    Ok(result)
}
