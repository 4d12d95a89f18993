use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scenario, Setting};
use super::runner::{ClientMetrics, ModelBundle, ModelEvaluation, ScenarioRun};
use crate::data::Preprocessing;
use crate::dp::PrivacyRegime;
use crate::error::{Error, Result};
use crate::federation::ClientSpend;
use crate::metrics::{write_calibration_csv, MetricReport};

pub(crate) fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Contents of `metrics.json` for one seed of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: Scenario,
    pub seed: u64,
    pub noise_multiplier: Option<f64>,
    pub test: Option<MetricReport>,
    pub oot: Option<MetricReport>,
    pub test_mean_ecl: Option<f64>,
    pub epsilon: Option<f64>,
    pub epsilon_linear: Option<f64>,
    pub privacy: Vec<ClientSpend>,
}

#[derive(Serialize)]
struct LedgerRow<'a> {
    client: usize,
    name: &'a str,
    n: usize,
    accountant: PrivacyRegime,
    fallback: bool,
    epsilon: f64,
    delta: f64,
    order: Option<u32>,
    epsilon_linear: f64,
    delta_linear: f64,
    steps: u64,
    rounds: u64,
}

pub(crate) fn write_client_metrics(path: &Path, clients: &[ClientMetrics]) -> Result<()> {
    write_csv(path, clients)
}

pub(crate) fn write_evaluation_files(dir: &Path, eval: &ModelEvaluation) -> Result<()> {
    let path = dir.join("calibration.csv");
    let w = create(&path)?;
    write_calibration_csv(&eval.calibration, w)?;
    write_client_metrics(&dir.join("client_metrics.csv"), &eval.clients)
}

/// Writes the per-seed bundle of one scenario.
pub fn write_run(cfg: &ExperimentConfig, run: &ScenarioRun, preprocessing: &Preprocessing, config_text: &str) -> Result<()> {
    let dir = cfg.run_dir(run.scenario, run.seed);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let path = dir.join("rounds.jsonl");
    let mut w = create(&path)?;
    for r in &run.rounds {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    write_json(
        &dir.join("metrics.json"),
        &RunMetrics {
            scenario: run.scenario,
            seed: run.seed,
            noise_multiplier: run.noise_multiplier,
            test: run.test.pooled.clone(),
            oot: run.oot.pooled.clone(),
            test_mean_ecl: run.test.mean_ecl,
            epsilon: run.epsilon(),
            epsilon_linear: run.epsilon_linear(),
            privacy: run.spends.clone(),
        },
    )?;
    let ledger: Vec<LedgerRow> = run
        .spends
        .iter()
        .map(|s| LedgerRow {
            client: s.client,
            name: &s.name,
            n: s.n,
            accountant: if run.scenario.regime == PrivacyRegime::None {
                PrivacyRegime::None
            } else {
                s.composed.regime
            },
            fallback: s.fallback,
            epsilon: s.composed.epsilon,
            delta: s.composed.delta,
            order: s.composed.order,
            epsilon_linear: s.epsilon_linear,
            delta_linear: s.delta_linear,
            steps: s.steps,
            rounds: s.rounds,
        })
        .collect();
    write_csv(&dir.join("ledger.csv"), &ledger)?;
    write_csv(&dir.join("loss_curve.csv"), &run.loss_curve)?;
    write_evaluation_files(&dir, &run.test)?;
    if run.oot.pooled.is_some() {
        write_client_metrics(&dir.join("client_metrics_oot.csv"), &run.oot.clients)?;
    }
    write_json(
        &dir.join("model.json"),
        &ModelBundle {
            scenario: run.scenario,
            seed: run.seed,
            grid: cfg.grid()?,
            preprocessing: preprocessing.clone(),
            model: run.model.clone(),
        },
    )?;
    let path = dir.join("resolved_config.toml");
    fs::write(&path, config_text).map_err(|e| Error::io(&path, e))
}

/// One seed of one scenario, as listed in `per_seed.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub scenario: String,
    pub setting: Setting,
    pub regime: PrivacyRegime,
    pub seed: u64,
    pub ci_test: Option<f64>,
    pub ibs_test: Option<f64>,
    pub ci_oot: Option<f64>,
    pub ibs_oot: Option<f64>,
    pub epsilon: Option<f64>,
    pub epsilon_linear: Option<f64>,
    pub noise_multiplier: Option<f64>,
    pub final_train_loss: f64,
}

impl SeedRow {
    pub fn from_run(run: &ScenarioRun) -> Self {
        let ci = |e: &ModelEvaluation| e.pooled.as_ref().and_then(|r| r.mean_c_index);
        let ibs = |e: &ModelEvaluation| e.pooled.as_ref().and_then(|r| r.ibs);
        Self {
            scenario: run.scenario.name(),
            setting: run.scenario.setting,
            regime: run.scenario.regime,
            seed: run.seed,
            ci_test: ci(&run.test),
            ibs_test: ibs(&run.test),
            ci_oot: ci(&run.oot),
            ibs_oot: ibs(&run.oot),
            epsilon: run.epsilon(),
            epsilon_linear: run.epsilon_linear(),
            noise_multiplier: run.noise_multiplier,
            final_train_loss: run.loss_curve.last().map_or(f64::NAN, |l| l.train_loss),
        }
    }
}

/// Mean and sample standard deviation over seeds, one row per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub setting: Setting,
    pub regime: PrivacyRegime,
    pub seeds: usize,
    pub ci_test_mean: Option<f64>,
    pub ci_test_std: Option<f64>,
    pub ibs_test_mean: Option<f64>,
    pub ibs_test_std: Option<f64>,
    pub ci_oot_mean: Option<f64>,
    pub ci_oot_std: Option<f64>,
    pub ibs_oot_mean: Option<f64>,
    pub ibs_oot_std: Option<f64>,
    pub epsilon_mean: Option<f64>,
    pub epsilon_linear_mean: Option<f64>,
    pub noise_multiplier_mean: Option<f64>,
}

/// `(mean, sample std)` of the defined values; std is 0 for a single value.
pub fn mean_std(values: impl IntoIterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

pub fn summarize(rows: &[SeedRow]) -> Vec<SummaryRow> {
    let mut by: BTreeMap<(Setting, PrivacyRegime), Vec<&SeedRow>> = BTreeMap::new();
    for r in rows {
        by.entry((r.setting, r.regime)).or_default().push(r);
    }
    by.into_iter()
        .map(|((setting, regime), rs)| {
            let (ci_test_mean, ci_test_std) = mean_std(rs.iter().map(|r| r.ci_test));
            let (ibs_test_mean, ibs_test_std) = mean_std(rs.iter().map(|r| r.ibs_test));
            let (ci_oot_mean, ci_oot_std) = mean_std(rs.iter().map(|r| r.ci_oot));
            let (ibs_oot_mean, ibs_oot_std) = mean_std(rs.iter().map(|r| r.ibs_oot));
            SummaryRow {
                scenario: Scenario::new(setting, regime).name(),
                setting,
                regime,
                seeds: rs.len(),
                ci_test_mean,
                ci_test_std,
                ibs_test_mean,
                ibs_test_std,
                ci_oot_mean,
                ci_oot_std,
                ibs_oot_mean,
                ibs_oot_std,
                epsilon_mean: mean_std(rs.iter().map(|r| r.epsilon)).0,
                epsilon_linear_mean: mean_std(rs.iter().map(|r| r.epsilon_linear)).0,
                noise_multiplier_mean: mean_std(rs.iter().map(|r| r.noise_multiplier)).0,
            }
        })
        .collect()
}

/// Per-client comparison of Bayesian against classical accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateRow {
    pub setting: Setting,
    pub client: String,
    pub seeds: usize,
    pub bayesian_wins: usize,
    pub win_rate: f64,
    pub mean_ci_difference: f64,
}

/// `per_client[(scenario, seed)]` holds client metrics of that run.
pub fn win_rates(per_client: &BTreeMap<(Scenario, u64), Vec<ClientMetrics>>) -> Vec<WinRateRow> {
    let mut out = Vec::new();
    for setting in [Setting::Centralized, Setting::Federated] {
        let bdp = Scenario::new(setting, PrivacyRegime::Bayesian);
        let cls = Scenario::new(setting, PrivacyRegime::Classical);
        let mut tally: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
        for ((scenario, seed), clients) in per_client {
            if *scenario != bdp {
                continue;
            }
            let Some(other) = per_client.get(&(cls, *seed)) else { continue };
            for (a, b) in clients.iter().zip(other) {
                if let (Some(x), Some(y)) = (a.c_index, b.c_index) {
                    let e = tally.entry(a.client.clone()).or_default();
                    e.0 += 1;
                    e.1 += usize::from(x > y);
                    e.2 += x - y;
                }
            }
        }
        for (client, (n, wins, diff)) in tally {
            out.push(WinRateRow {
                setting,
                client,
                seeds: n,
                bayesian_wins: wins,
                win_rate: wins as f64 / n as f64,
                mean_ci_difference: diff / n as f64,
            });
        }
    }
    out
}

pub fn write_summary(dir: &Path, rows: &[SeedRow], summary: &[SummaryRow], wins: &[WinRateRow]) -> Result<()> {
    write_csv(&dir.join("per_seed.csv"), rows)?;
    write_csv(&dir.join("summary.csv"), summary)?;
    write_csv(&dir.join("client_winrates.csv"), wins)
}
