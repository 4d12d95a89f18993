use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scenario, Setting};
use crate::data::{
    generate_synthetic, load_csv, prepare, synthetic_schema, DatasetSchema, GroundTruth, PreparedData, Preprocessing,
    RawRecord, SyntheticRecord,
};
use crate::dp::{calibrate_sigma, PrivacyRegime, DEFAULT_RDP_ORDERS};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::federation::{run_centralized, run_federated, ClientSpend, ClientState, FederationConfig, RoundReport};
use crate::metrics::{
    calibration_curve, censoring_km, evaluate, expected_credit_loss, CalibrationPoint, EvalTimes, KmCurve, MetricReport,
    PredictedSurvival,
};
use crate::rng::stream;
use crate::rng::tag::INIT;
use crate::survival::{Example, HazardModel, TimeGrid};

/// Raw rows shared by every seed of an experiment.
#[derive(Debug, Clone)]
pub struct SourceData {
    pub raw: Vec<RawRecord>,
    pub schema: DatasetSchema,
    pub truth: Option<GroundTruth>,
    pub grid: TimeGrid,
}

pub fn load_source(cfg: &ExperimentConfig) -> Result<SourceData> {
    let grid = cfg.grid()?;
    if let Some(spec) = &cfg.data.synthetic {
        let (records, truth) = generate_synthetic(spec, cfg.execution)?;
        return Ok(SourceData {
            raw: records.iter().map(SyntheticRecord::to_raw).collect(),
            schema: synthetic_schema(spec.n_features),
            truth: Some(truth),
            grid,
        });
    }
    let (csv, schema) = match (&cfg.data.csv, &cfg.data.schema) {
        (Some(c), Some(s)) => (c, s),
        _ => return Err(Error::Config("no data source configured".into())),
    };
    let schema = DatasetSchema::load(schema)?;
    let raw = load_csv(csv, &schema)?;
    Ok(SourceData {
        raw: raw.records,
        schema,
        truth: None,
        grid,
    })
}

/// Splits, encodes and standardizes the source for one seed.
pub fn prepare_seed(cfg: &ExperimentConfig, source: &SourceData, seed: u64) -> Result<PreparedData> {
    prepare(
        source.raw.clone(),
        &source.schema,
        &source.grid,
        &cfg.data.partition,
        &cfg.data.split,
        seed,
    )
}

/// Pooled evaluation inputs derived from one prepared dataset.
pub struct EvalContext {
    pub censoring: KmCurve,
    pub eval_times: EvalTimes,
}

impl EvalContext {
    pub fn new(cfg: &ExperimentConfig, data: &PreparedData) -> Result<Self> {
        let train: Vec<&Example> = data.clients.iter().flat_map(|c| &c.train).collect();
        let (tt, te) = times_events(&train);
        let censoring = censoring_km(&tt, &te)?;
        let eval_times = match &cfg.evaluation.eval_times {
            Some(t) => EvalTimes::new(t.clone())?,
            None => {
                let test: Vec<&Example> = data.clients.iter().flat_map(|c| &c.test).collect();
                let (t, e) = times_events(&test);
                EvalTimes::default_for(&data.grid, &t, &e)?
            }
        };
        Ok(Self { censoring, eval_times })
    }
}

fn times_events(examples: &[&Example]) -> (Vec<f64>, Vec<bool>) {
    examples.iter().map(|e| (e.record.t, e.record.event)).unzip()
}

pub fn predict(model: &HazardModel, grid: &TimeGrid, examples: &[&Example], exec: Execution) -> Result<PredictedSurvival> {
    let xs: Vec<&[f64]> = examples.iter().map(|e| e.record.x.as_slice()).collect();
    PredictedSurvival::from_model(model, grid, &xs, exec)
}

/// Metrics of `model` on `examples`; `None` for an empty split.
pub fn evaluate_examples(
    model: &HazardModel,
    grid: &TimeGrid,
    examples: &[&Example],
    ctx: &EvalContext,
    exec: Execution,
) -> Result<Option<MetricReport>> {
    if examples.is_empty() {
        return Ok(None);
    }
    let pred = predict(model, grid, examples, exec)?;
    let (t, e) = times_events(examples);
    evaluate(&pred, &t, &e, &ctx.censoring, &ctx.eval_times, exec).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub client: String,
    pub n_train: usize,
    pub n_test: usize,
    pub events_test: usize,
    pub c_index: Option<f64>,
    pub ibs: Option<f64>,
}

/// Everything measured on one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub split: String,
    pub pooled: Option<MetricReport>,
    pub clients: Vec<ClientMetrics>,
    pub calibration: Vec<CalibrationPoint>,
    /// Mean lifetime expected credit loss per record.
    pub mean_ecl: Option<f64>,
}

/// Which split to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Train,
    Test,
    Oot,
}

impl EvalSplit {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalSplit::Train => "train",
            EvalSplit::Test => "test",
            EvalSplit::Oot => "oot",
        }
    }
}

impl std::str::FromStr for EvalSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(EvalSplit::Train),
            "test" => Ok(EvalSplit::Test),
            "oot" => Ok(EvalSplit::Oot),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

pub fn split_of(data: &PreparedData, client: usize, split: EvalSplit) -> &[Example] {
    let c = &data.clients[client];
    match split {
        EvalSplit::Train => &c.train,
        EvalSplit::Test => &c.test,
        EvalSplit::Oot => &c.oot,
    }
}

pub fn evaluate_model(
    cfg: &ExperimentConfig,
    model: &HazardModel,
    data: &PreparedData,
    ctx: &EvalContext,
    split: EvalSplit,
) -> Result<ModelEvaluation> {
    let exec = cfg.execution;
    let pooled: Vec<&Example> = (0..data.clients.len()).flat_map(|k| split_of(data, k, split)).collect();
    let report = evaluate_examples(model, &data.grid, &pooled, ctx, exec)?;
    let (calibration, mean_ecl) = if pooled.is_empty() {
        (Vec::new(), None)
    } else {
        let pred = predict(model, &data.grid, &pooled, exec)?;
        let (t, e) = times_events(&pooled);
        let cal = calibration_curve(&pred, &t, &e, data.grid.right_endpoints())?;
        let n_t = data.grid.intervals();
        let lgd = vec![cfg.evaluation.lgd; n_t];
        let ead = vec![cfg.evaluation.ead; n_t];
        let mut ecl = 0.0;
        for ex in &pooled {
            ecl += expected_credit_loss(&model.forward(&ex.record.x)?, &lgd, &ead)?;
        }
        (cal, Some(ecl / pooled.len() as f64))
    };
    let mut clients = Vec::with_capacity(data.clients.len());
    for (k, c) in data.clients.iter().enumerate() {
        let rows: Vec<&Example> = split_of(data, k, split).iter().collect();
        let r = evaluate_examples(model, &data.grid, &rows, ctx, exec)?;
        clients.push(ClientMetrics {
            client: c.name.clone(),
            n_train: c.train.len(),
            n_test: rows.len(),
            events_test: rows.iter().filter(|e| e.record.event).count(),
            c_index: r.as_ref().and_then(|r| r.mean_c_index),
            ibs: r.as_ref().and_then(|r| r.ibs),
        });
    }
    Ok(ModelEvaluation {
        split: split.as_str().into(),
        pooled: report,
        clients,
        calibration,
        mean_ecl,
    })
}

/// Noise multiplier meeting the target epsilon for every client of the
/// scenario; `None` when no target is set.
pub fn calibrated_sigma(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<Option<f64>> {
    let Some(target) = cfg.privacy.target_epsilon else {
        return Ok(None);
    };
    let t = &cfg.training;
    let mut sigma: f64 = 0.0;
    for &n in sizes {
        let q = (t.batch_size as f64 / n as f64).min(1.0);
        let steps = (t.rounds * t.local_epochs * n.div_ceil(t.batch_size)) as u64;
        sigma = sigma.max(calibrate_sigma(target, cfg.privacy.dp.delta, q, steps, &DEFAULT_RDP_ORDERS)?);
    }
    Ok(Some(sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub round: usize,
    pub train_loss: f64,
    pub test_c_index: Option<f64>,
    pub test_ibs: Option<f64>,
}

/// A persisted model with what is needed to score new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub scenario: Scenario,
    pub seed: u64,
    pub grid: TimeGrid,
    pub preprocessing: Preprocessing,
    pub model: HazardModel,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    pub seed: u64,
    pub noise_multiplier: Option<f64>,
    pub model: HazardModel,
    pub rounds: Vec<RoundReport>,
    pub spends: Vec<ClientSpend>,
    pub loss_curve: Vec<LossPoint>,
    pub test: ModelEvaluation,
    pub oot: ModelEvaluation,
}

impl ScenarioRun {
    pub fn test_c_index(&self) -> Option<f64> {
        self.test.pooled.as_ref().and_then(|r| r.mean_c_index)
    }

    /// Largest composed epsilon over clients.
    pub fn epsilon(&self) -> Option<f64> {
        (self.scenario.regime != PrivacyRegime::None)
            .then(|| self.spends.iter().map(|s| s.composed.epsilon).fold(0.0, f64::max))
    }

    pub fn epsilon_linear(&self) -> Option<f64> {
        (self.scenario.regime != PrivacyRegime::None)
            .then(|| self.spends.iter().map(|s| s.epsilon_linear).fold(0.0, f64::max))
    }
}

pub fn model_dims(cfg: &ExperimentConfig, data: &PreparedData) -> Vec<usize> {
    let mut dims = vec![data.input_dim()];
    dims.extend(&cfg.model.hidden);
    dims.push(data.grid.intervals());
    dims
}

/// Trains and scores one scenario on one seed's prepared data.
pub fn run_scenario(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    ctx: &EvalContext,
    scenario: Scenario,
    seed: u64,
) -> Result<ScenarioRun> {
    let wrap = |e: Error| Error::Run {
        scenario: scenario.name(),
        seed,
        source: Box::new(e),
    };
    run_scenario_inner(cfg, data, ctx, scenario, seed).map_err(wrap)
}

fn run_scenario_inner(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    ctx: &EvalContext,
    scenario: Scenario,
    seed: u64,
) -> Result<ScenarioRun> {
    let initial = HazardModel::new(model_dims(cfg, data), cfg.model.activation, &mut stream(&[seed, INIT]))?;
    let sizes: Vec<usize> = match scenario.setting {
        Setting::Centralized => vec![data.clients.iter().map(|c| c.train.len()).sum()],
        Setting::Federated => data.clients.iter().map(|c| c.train.len()).collect(),
    };
    let noise_multiplier = if scenario.regime == PrivacyRegime::None {
        None
    } else {
        calibrated_sigma(cfg, &sizes)?.or(Some(cfg.privacy.dp.noise_multiplier))
    };
    let mut dp = cfg.privacy.dp.clone();
    if let Some(s) = noise_multiplier {
        dp.noise_multiplier = s;
    }
    let t = &cfg.training;
    let fed = FederationConfig {
        rounds: t.rounds,
        local_epochs: t.local_epochs,
        participation_rate: t.participation_rate,
        batch_size: t.batch_size,
        optimizer: t.optimizer,
        regime: scenario.regime,
        weighting: t.weighting,
        dp,
        bdp: cfg.privacy.bdp.clone(),
        fallback_threshold: t.fallback_threshold,
        seed,
        execution: cfg.execution,
        parallel_clients: t.parallel_clients,
    };
    let test_rows: Vec<&Example> = data.clients.iter().flat_map(|c| &c.test).collect();
    let mut loss_curve = Vec::new();
    let observer = |report: &RoundReport, model: &HazardModel| -> Result<()> {
        let (c, ibs) = if cfg.evaluation.track_rounds {
            let r = evaluate_examples(model, &data.grid, &test_rows, ctx, cfg.execution)?;
            (r.as_ref().and_then(|r| r.mean_c_index), r.as_ref().and_then(|r| r.ibs))
        } else {
            (None, None)
        };
        loss_curve.push(LossPoint {
            round: report.round,
            train_loss: report.train_loss,
            test_c_index: c,
            test_ibs: ibs,
        });
        Ok(())
    };
    let outcome = match scenario.setting {
        Setting::Centralized => run_centralized(data.pooled_train(), &fed, &initial, observer)?,
        Setting::Federated => {
            let mut clients = data
                .clients
                .iter()
                .enumerate()
                .map(|(k, c)| ClientState::new(k, c.name.clone(), c.train.clone(), &fed))
                .collect::<Result<Vec<_>>>()?;
            run_federated(&mut clients, &fed, &initial, observer)?
        }
    };
    let test = evaluate_model(cfg, &outcome.model, data, ctx, EvalSplit::Test)?;
    let oot = evaluate_model(cfg, &outcome.model, data, ctx, EvalSplit::Oot)?;
    Ok(ScenarioRun {
        scenario,
        seed,
        noise_multiplier,
        model: outcome.model,
        rounds: outcome.rounds,
        spends: outcome.spends,
        loss_curve,
        test,
        oot,
    })
}
