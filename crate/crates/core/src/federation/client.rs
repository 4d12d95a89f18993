use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::FederationConfig;
use crate::dp::{
    add_noise, clip_in_place, mc_sensitivity_excluding, noise_std, BdpConfig, BdpLedger,
    DpConfig, PrivacyRegime, PrivacySpend, RdpLedger,
};
use crate::error::{Error, Result};
use crate::rng::tag::{NOISE, SENSITIVITY, SHUFFLE};
use crate::rng::{derive_seed, stream};
use crate::survival::{per_sample_gradients, DiscretizedTarget, Example, HazardModel, Optimizer};

/// Privacy bookkeeping of one client across rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientLedger {
    /// Accountant actually used; classical for fallback clients.
    pub regime: PrivacyRegime,
    pub rdp: RdpLedger,
    pub bdp: BdpLedger,
    /// Sum of per-round epsilons.
    pub epsilon_linear: f64,
    /// Sum of per-round deltas.
    pub delta_linear: f64,
    pub rounds: u64,
}

impl ClientLedger {
    pub fn new(regime: PrivacyRegime, bdp_orders: &[u32]) -> Result<Self> {
        Ok(Self {
            regime,
            rdp: RdpLedger::default(),
            bdp: BdpLedger::new(bdp_orders.to_vec())?,
            epsilon_linear: 0.0,
            delta_linear: 0.0,
            rounds: 0,
        })
    }

    /// Spend composed over every step so far, converted once.
    pub fn composed(&self, dp: &DpConfig, bdp: &BdpConfig) -> Result<PrivacySpend> {
        match self.regime {
            PrivacyRegime::None => Ok(PrivacySpend::zero(PrivacyRegime::None)),
            _ if dp.noise_multiplier == 0.0 => Ok(unbounded(self.regime)),
            PrivacyRegime::Classical => self.rdp.to_dp(dp.delta),
            PrivacyRegime::Bayesian => self.bdp.finalize(bdp.beta, bdp.gamma),
        }
    }
}

fn unbounded(regime: PrivacyRegime) -> PrivacySpend {
    PrivacySpend {
        epsilon: f64::INFINITY,
        delta: 0.0,
        regime,
        order: None,
    }
}

/// One silo: its training data and privacy ledger.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub name: String,
    pub examples: Vec<Example>,
    pub stream_seed: u64,
    pub ledger: ClientLedger,
    pub fallback: bool,
}

impl ClientState {
    /// `seed` is the run seed; the client's streams derive from it and `id`.
    pub fn new(id: usize, name: impl Into<String>, examples: Vec<Example>, cfg: &FederationConfig) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyInput("client dataset"));
        }
        let fallback = cfg.regime == PrivacyRegime::Bayesian && examples.len() < cfg.fallback_threshold;
        let regime = if fallback { PrivacyRegime::Classical } else { cfg.regime };
        Ok(Self {
            id,
            name: name.into(),
            stream_seed: derive_seed(&[cfg.seed, id as u64]),
            ledger: ClientLedger::new(regime, &cfg.bdp.orders)?,
            examples,
            fallback,
        })
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn event_rate(&self) -> f64 {
        self.examples.iter().filter(|e| e.record.event).count() as f64 / self.n() as f64
    }

    /// Sampling rate `B / n_k`, capped at one.
    pub fn sampling_rate(&self, batch_size: usize) -> f64 {
        (batch_size as f64 / self.n() as f64).min(1.0)
    }
}

/// Result of one client's local training in one round.
#[derive(Debug, Clone)]
pub struct LocalUpdate {
    pub model: HazardModel,
    pub train_loss: f64,
    pub steps: u64,
    /// Spend of this round alone.
    pub spend: PrivacySpend,
    /// Mean and max of sampled sensitivities relative to the worst case `(2C/L)^2`.
    pub sensitivity_ratio: Option<(f64, f64)>,
}

/// Runs `E` epochs of mini-batch training from `global` and charges the
/// client's ledger.
///
/// Each epoch reshuffles with the client's stream and keeps the last
/// partial batch. Noise, shuffling and sensitivity sampling use separate
/// streams keyed by the round.
pub fn local_train(client: &mut ClientState, global: &HazardModel, cfg: &FederationConfig, round: usize) -> Result<LocalUpdate> {
    let regime = client.ledger.regime;
    let mut model = global.clone();
    if cfg.local_epochs == 0 {
        return Ok(LocalUpdate {
            model,
            train_loss: 0.0,
            steps: 0,
            spend: PrivacySpend::zero(regime),
            sensitivity_ratio: None,
        });
    }
    let n = client.n();
    let r = round as u64;
    let mut shuffle_rng = stream(&[client.stream_seed, SHUFFLE, r]);
    let mut noise_rng = stream(&[client.stream_seed, NOISE, r]);
    let mut mc_rng = stream(&[client.stream_seed, SENSITIVITY, r]);
    let mut optimizer = Optimizer::new(&cfg.optimizer, model.num_params());
    let c = cfg.dp.clip_norm;
    let sigma = cfg.dp.noise_multiplier;
    let q = client.sampling_rate(cfg.batch_size);
    let accounted = regime != PrivacyRegime::None && sigma > 0.0;
    let mut round_rdp = RdpLedger::new(client.ledger.rdp.orders().to_vec())?;
    let mut round_bdp = BdpLedger::new(client.ledger.bdp.orders().to_vec())?;

    let pool: Vec<(&[f64], &DiscretizedTarget)> = client
        .examples
        .iter()
        .map(|e| (e.record.x.as_slice(), &e.target))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut in_batch = vec![false; n];
    let (mut loss_sum, mut loss_count, mut steps) = (0.0, 0usize, 0u64);
    let (mut ratio_sum, mut ratio_max, mut ratio_count) = (0.0, 0.0f64, 0usize);

    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], &DiscretizedTarget)> = chunk.iter().map(|&i| pool[i]).collect();
            let grads = per_sample_gradients(&model, &batch, cfg.execution)?;
            let l = grads.len();
            for g in &grads {
                if !g.loss.is_finite() {
                    return Err(Error::Divergence(format!("non-finite loss at step {steps}")));
                }
                loss_sum += g.loss;
            }
            loss_count += l;

            let mut per_sample: Vec<Vec<f64>> = grads.into_iter().map(|g| g.grad).collect();
            if regime != PrivacyRegime::None {
                per_sample.iter_mut().for_each(|g| clip_in_place(g, c));
            }
            let mut update = vec![0.0; model.num_params()];
            for g in &per_sample {
                update.iter_mut().zip(g).for_each(|(u, v)| *u += v);
            }
            update.iter_mut().for_each(|u| *u /= l as f64);

            if regime != PrivacyRegime::None {
                let std = noise_std(sigma, c, l);
                if accounted {
                    match regime {
                        PrivacyRegime::Classical => round_rdp.compose(q, sigma, 1)?,
                        _ => {
                            chunk.iter().for_each(|&i| in_batch[i] = true);
                            let deltas = mc_sensitivity_excluding(
                                &model,
                                &per_sample,
                                &pool,
                                &in_batch,
                                cfg.bdp.mc_samples,
                                c,
                                &mut mc_rng,
                                cfg.execution,
                            );
                            chunk.iter().for_each(|&i| in_batch[i] = false);
                            let deltas = deltas?;
                            let worst = (2.0 * c / l as f64).powi(2);
                            for d in &deltas {
                                ratio_sum += d / worst;
                                ratio_max = ratio_max.max(d / worst);
                            }
                            ratio_count += deltas.len();
                            round_bdp.accumulate(&deltas, q, std, cfg.bdp.gamma)?;
                        }
                    }
                }
                add_noise(&mut update, std, &mut noise_rng);
            }
            optimizer.step(&mut model, &update)?;
            steps += 1;
        }
    }

    let spend = if !accounted {
        if regime == PrivacyRegime::None {
            PrivacySpend::zero(regime)
        } else {
            unbounded(regime)
        }
    } else if regime == PrivacyRegime::Classical {
        client.ledger.rdp.merge(&round_rdp)?;
        round_rdp.to_dp(cfg.dp.delta)?
    } else {
        client.ledger.bdp.merge(&round_bdp)?;
        round_bdp.finalize(cfg.bdp.beta, cfg.bdp.gamma)?
    };
    if regime != PrivacyRegime::None {
        client.ledger.epsilon_linear += spend.epsilon;
        client.ledger.delta_linear += spend.delta;
    }
    client.ledger.rounds += 1;
    Ok(LocalUpdate {
        model,
        train_loss: loss_sum / loss_count as f64,
        steps,
        spend,
        sensitivity_ratio: (ratio_count > 0).then(|| (ratio_sum / ratio_count as f64, ratio_max)),
    })
}
