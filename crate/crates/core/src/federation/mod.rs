//! Simulated cross-silo federated training.
//!
//! Each round samples clients, broadcasts the global parameters, runs
//! private local training on every participant and averages the returned
//! models weighted by client size. Clients run in id order unless
//! `parallel_clients` is set; either way each client draws from its own
//! seed-derived streams, so the two schedules agree bit for bit.

mod client;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use client::{local_train, ClientLedger, ClientState, LocalUpdate};

use crate::dp::{BdpConfig, DpConfig, PrivacyRegime, PrivacySpend};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::stream;
use crate::rng::tag::SERVER;
use crate::survival::{Example, HazardModel, OptimizerConfig};

/// How participant models are weighted when averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `n_k / sum n_j` over participants.
    #[default]
    Samples,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub participation_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub regime: PrivacyRegime,
    pub weighting: Weighting,
    pub dp: DpConfig,
    pub bdp: BdpConfig,
    /// Bayesian-regime clients smaller than this use classical accounting.
    pub fallback_threshold: usize,
    pub seed: u64,
    pub execution: Execution,
    pub parallel_clients: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            local_epochs: 5,
            participation_rate: 1.0,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            regime: PrivacyRegime::None,
            weighting: Weighting::Samples,
            dp: DpConfig::default(),
            bdp: BdpConfig::default(),
            fallback_threshold: 100,
            seed: 42,
            execution: Execution::Parallel,
            parallel_clients: false,
        }
    }
}

impl FederationConfig {
    /// Local epochs may be zero and the noise multiplier may be zero here;
    /// both only make sense in tests.
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::param("rounds", "need at least one round"));
        }
        if !(self.participation_rate > 0.0 && self.participation_rate <= 1.0) {
            return Err(Error::param("participation_rate", "must lie in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        self.optimizer.validate()?;
        if self.regime != PrivacyRegime::None {
            let dp = &self.dp;
            if !(dp.clip_norm > 0.0 && dp.clip_norm.is_finite()) {
                return Err(Error::param("clip_norm", "must be positive and finite"));
            }
            if !(dp.noise_multiplier >= 0.0 && dp.noise_multiplier.is_finite()) {
                return Err(Error::param("noise_multiplier", "must be nonnegative and finite"));
            }
            if !(dp.delta > 0.0 && dp.delta < 1.0) {
                return Err(Error::param("delta", "must lie in (0, 1)"));
            }
        }
        if self.regime == PrivacyRegime::Bayesian {
            self.bdp.validate()?;
        }
        Ok(())
    }
}

/// `floor(p K)` distinct clients (at least one), sorted.
pub fn sample_clients<R: Rng + ?Sized>(k: usize, p: f64, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::EmptyInput("clients"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param("participation_rate", "must lie in (0, 1]"));
    }
    let m = ((p * k as f64).floor() as usize).clamp(1, k);
    if m == k {
        return Ok((0..k).collect());
    }
    let mut ids = rand::seq::index::sample(rng, k, m).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Parameter-wise average with weights proportional to `n_k`.
pub fn aggregate(updates: &[(&HazardModel, usize)]) -> Result<HazardModel> {
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::EmptyInput("aggregation inputs"));
    }
    let weights: Vec<f64> = updates.iter().map(|(_, n)| *n as f64 / total as f64).collect();
    let models: Vec<&HazardModel> = updates.iter().map(|(m, _)| *m).collect();
    aggregate_weighted(&models, &weights)
}

/// Parameter-wise weighted sum, accumulated in input order.
pub fn aggregate_weighted(models: &[&HazardModel], weights: &[f64]) -> Result<HazardModel> {
    let first = models.first().ok_or(Error::EmptyInput("aggregation inputs"))?;
    if models.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: models.len(),
            actual: weights.len(),
        });
    }
    let mut out = HazardModel::zeros(first.dims().to_vec(), first.activation())?;
    for (m, &w) in models.iter().zip(weights) {
        if !m.same_shape(first) {
            return Err(Error::DimensionMismatch {
                expected: first.num_params(),
                actual: m.num_params(),
            });
        }
        out.params_mut().iter_mut().zip(m.params()).for_each(|(o, p)| *o += w * p);
    }
    Ok(out)
}

/// SHA-256 of the little-endian parameter bytes, hex encoded.
pub fn model_checksum(model: &HazardModel) -> String {
    let mut hasher = Sha256::new();
    for p in model.params() {
        hasher.update(p.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Per-participant line of a [`RoundReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRound {
    pub client: usize,
    pub name: String,
    pub n: usize,
    pub weight: f64,
    pub train_loss: f64,
    pub steps: u64,
    pub accountant: PrivacyRegime,
    pub epsilon_round: f64,
    pub delta_round: f64,
    /// Ledger-composed spend after this round.
    pub epsilon: f64,
    pub delta: f64,
    /// Per-round epsilons summed.
    pub epsilon_linear: f64,
    pub delta_linear: f64,
    pub sensitivity_ratio_mean: Option<f64>,
    pub sensitivity_ratio_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub participants: Vec<usize>,
    pub clients: Vec<ClientRound>,
    /// Weighted mean of participant training losses.
    pub train_loss: f64,
    pub checksum: String,
}

/// Final spend of one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSpend {
    pub client: usize,
    pub name: String,
    pub n: usize,
    pub fallback: bool,
    pub composed: PrivacySpend,
    pub epsilon_linear: f64,
    pub delta_linear: f64,
    pub steps: u64,
    pub rounds: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: HazardModel,
    pub rounds: Vec<RoundReport>,
    pub spends: Vec<ClientSpend>,
}

/// Runs the federated loop. `observer` sees every round's report and the
/// new global model; an error from it aborts the run.
pub fn run_federated<F>(clients: &mut [ClientState], cfg: &FederationConfig, initial: &HazardModel, mut observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&RoundReport, &HazardModel) -> Result<()>,
{
    cfg.validate()?;
    if clients.is_empty() {
        return Err(Error::EmptyInput("clients"));
    }
    for (i, c) in clients.iter().enumerate() {
        if c.id != i {
            return Err(Error::param("clients", "client ids must equal their position"));
        }
    }
    let mut global = initial.clone();
    let mut reports = Vec::with_capacity(cfg.rounds);

    for round in 0..cfg.rounds {
        let mut server_rng = stream(&[cfg.seed, SERVER, round as u64]);
        let participants = sample_clients(clients.len(), cfg.participation_rate, &mut server_rng)?;
        let mut selected: Vec<&mut ClientState> = clients
            .iter_mut()
            .filter(|c| participants.binary_search(&c.id).is_ok())
            .collect();
        let exec = if cfg.parallel_clients {
            Execution::Parallel
        } else {
            Execution::Sequential
        };
        let results = exec.map_mut(&mut selected, |c| {
            let id = c.id;
            local_train(c, &global, cfg, round).map_err(|e| Error::RoundFailure {
                round,
                client: id,
                source: Box::new(e),
            })
        });
        let updates = results.into_iter().collect::<Result<Vec<_>>>()?;

        let total: usize = selected.iter().map(|c| c.n()).sum();
        let weights: Vec<f64> = match cfg.weighting {
            Weighting::Samples => selected.iter().map(|c| c.n() as f64 / total as f64).collect(),
            Weighting::Uniform => vec![1.0 / selected.len() as f64; selected.len()],
        };
        let models: Vec<&HazardModel> = updates.iter().map(|u| &u.model).collect();
        global = aggregate_weighted(&models, &weights)?;

        let mut lines = Vec::with_capacity(selected.len());
        for ((c, u), &w) in selected.iter().zip(&updates).zip(&weights) {
            let composed = c.ledger.composed(&cfg.dp, &cfg.bdp)?;
            lines.push(ClientRound {
                client: c.id,
                name: c.name.clone(),
                n: c.n(),
                weight: w,
                train_loss: u.train_loss,
                steps: u.steps,
                accountant: c.ledger.regime,
                epsilon_round: u.spend.epsilon,
                delta_round: u.spend.delta,
                epsilon: composed.epsilon,
                delta: composed.delta,
                epsilon_linear: c.ledger.epsilon_linear,
                delta_linear: c.ledger.delta_linear,
                sensitivity_ratio_mean: u.sensitivity_ratio.map(|r| r.0),
                sensitivity_ratio_max: u.sensitivity_ratio.map(|r| r.1),
            });
        }
        let report = RoundReport {
            round,
            participants,
            train_loss: lines.iter().map(|l| l.weight * l.train_loss).sum(),
            clients: lines,
            checksum: model_checksum(&global),
        };
        log::debug!("round {round}: loss {:.6}", report.train_loss);
        observer(&report, &global)?;
        reports.push(report);
    }

    let spends = clients
        .iter()
        .map(|c| {
            Ok(ClientSpend {
                client: c.id,
                name: c.name.clone(),
                n: c.n(),
                fallback: c.fallback,
                composed: c.ledger.composed(&cfg.dp, &cfg.bdp)?,
                epsilon_linear: c.ledger.epsilon_linear,
                delta_linear: c.ledger.delta_linear,
                steps: c.ledger.rdp.steps().max(c.ledger.bdp.steps()),
                rounds: c.ledger.rounds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainOutcome {
        model: global,
        rounds: reports,
        spends,
    })
}

/// Trains on the pooled data as a single, always participating client.
pub fn run_centralized<F>(pooled: Vec<Example>, cfg: &FederationConfig, initial: &HazardModel, observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&RoundReport, &HazardModel) -> Result<()>,
{
    let cfg = FederationConfig {
        participation_rate: 1.0,
        ..cfg.clone()
    };
    let mut clients = vec![ClientState::new(0, "pooled", pooled, &cfg)?];
    run_federated(&mut clients, &cfg, initial, observer)
}
