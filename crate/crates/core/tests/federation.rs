mod common;

use common::{random_examples, random_model};
use fedsurv_core::dp::{clip_gradient, rdp_step_cost, PrivacyRegime, DEFAULT_RDP_ORDERS};
use fedsurv_core::federation::{local_train, run_centralized, run_federated, ClientState, FederationConfig, RoundReport};
use fedsurv_core::survival::{Activation, Example, HazardModel, OptimizerConfig, OptimizerKind, TimeGrid};
use fedsurv_core::Execution;

fn sgd(lr: f64) -> OptimizerConfig {
    OptimizerConfig {
        kind: OptimizerKind::Sgd,
        learning_rate: lr,
        ..Default::default()
    }
}

fn no_observer(_: &RoundReport, _: &HazardModel) -> fedsurv_core::Result<()> {
    Ok(())
}

fn clients(shards: &[Vec<Example>], cfg: &FederationConfig) -> Vec<ClientState> {
    shards
        .iter()
        .enumerate()
        .map(|(k, s)| ClientState::new(k, format!("c{k}"), s.clone(), cfg).unwrap())
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Plain gradient descent on the mean loss, optionally with clipped per-sample gradients.
fn descend(model: &HazardModel, data: &[Example], lr: f64, steps: usize, clip: Option<f64>) -> HazardModel {
    let mut m = model.clone();
    for _ in 0..steps {
        let mut mean = vec![0.0; m.num_params()];
        for e in data {
            let mut g = m.sample_gradient(&e.record.x, &e.target).unwrap().grad;
            if let Some(c) = clip {
                g = clip_gradient(&g, c).unwrap();
            }
            mean.iter_mut().zip(&g).for_each(|(a, b)| *a += b / data.len() as f64);
        }
        m.params_mut().iter_mut().zip(&mean).for_each(|(p, g)| *p -= lr * g);
    }
    m
}

#[test]
fn full_batch_round_is_gradient_descent() {
    let grid = TimeGrid::monthly(4).unwrap();
    let data = random_examples(1, 40, 3, &grid);
    let init = random_model(1, 3, &[5], 4, Activation::Selu);
    let cfg = FederationConfig {
        rounds: 1,
        local_epochs: 3,
        batch_size: 40,
        optimizer: sgd(0.1),
        ..Default::default()
    };
    let mut c = clients(std::slice::from_ref(&data), &cfg);
    let update = local_train(&mut c[0], &init, &cfg, 0).unwrap();
    let oracle = descend(&init, &data, 0.1, 3, None);
    assert!(max_abs_diff(update.model.params(), oracle.params()) < 1e-12);
    assert_eq!(update.steps, 3);
}

#[test]
fn noiseless_classical_follows_clipped_descent() {
    let grid = TimeGrid::monthly(3).unwrap();
    let data = random_examples(2, 30, 2, &grid);
    let init = random_model(2, 2, &[4], 3, Activation::Tanh);
    let mut cfg = FederationConfig {
        rounds: 2,
        local_epochs: 2,
        batch_size: 30,
        optimizer: sgd(0.05),
        regime: PrivacyRegime::Classical,
        ..Default::default()
    };
    cfg.dp.clip_norm = 0.1;
    cfg.dp.noise_multiplier = 0.0;
    let mut c = clients(std::slice::from_ref(&data), &cfg);
    let out = run_federated(&mut c, &cfg, &init, no_observer).unwrap();
    let oracle = descend(&init, &data, 0.05, 4, Some(0.1));
    assert!(max_abs_diff(out.model.params(), oracle.params()) < 1e-12);
    assert!(out.spends[0].composed.epsilon.is_infinite());
}

#[test]
fn identical_shards_match_pooled_training() {
    let grid = TimeGrid::monthly(4).unwrap();
    let shard = random_examples(3, 25, 3, &grid);
    let init = random_model(3, 3, &[4], 4, Activation::Selu);
    let fed = FederationConfig {
        rounds: 3,
        local_epochs: 1,
        batch_size: 25,
        optimizer: sgd(0.2),
        ..Default::default()
    };
    let mut cs = clients(&[shard.clone(), shard.clone(), shard.clone()], &fed);
    let a = run_federated(&mut cs, &fed, &init, no_observer).unwrap();
    let pooled: Vec<Example> = (0..3).flat_map(|_| shard.clone()).collect();
    let cen = FederationConfig { batch_size: 75, ..fed.clone() };
    let b = run_centralized(pooled, &cen, &init, no_observer).unwrap();
    assert!(max_abs_diff(a.model.params(), b.model.params()) < 1e-12);
}

#[test]
fn single_client_round_is_its_local_update() {
    let grid = TimeGrid::monthly(3).unwrap();
    let data = random_examples(4, 50, 2, &grid);
    let init = random_model(4, 2, &[3], 3, Activation::Selu);
    let cfg = FederationConfig {
        rounds: 1,
        local_epochs: 2,
        batch_size: 8,
        ..Default::default()
    };
    let mut a = clients(std::slice::from_ref(&data), &cfg);
    let fed = run_federated(&mut a, &cfg, &init, no_observer).unwrap();
    let mut b = clients(&[data], &cfg);
    let local = local_train(&mut b[0], &init, &cfg, 0).unwrap();
    assert_eq!(fed.model, local.model);
}

#[test]
fn zero_epochs_leave_the_model_unchanged() {
    let grid = TimeGrid::monthly(3).unwrap();
    let data = random_examples(5, 10, 2, &grid);
    let init = random_model(5, 2, &[3], 3, Activation::Selu);
    let cfg = FederationConfig {
        local_epochs: 0,
        ..Default::default()
    };
    let mut c = clients(&[data], &cfg);
    assert_eq!(local_train(&mut c[0], &init, &cfg, 0).unwrap().model, init);
}

#[test]
fn classical_ledger_composes_additively() {
    let grid = TimeGrid::monthly(3).unwrap();
    let data = random_examples(6, 100, 2, &grid);
    let init = random_model(6, 2, &[3], 3, Activation::Selu);
    let cfg = FederationConfig {
        rounds: 3,
        local_epochs: 2,
        batch_size: 32,
        regime: PrivacyRegime::Classical,
        ..Default::default()
    };
    let mut c = clients(&[data], &cfg);
    let mut eps = Vec::new();
    run_federated(&mut c, &cfg, &init, |r, _| {
        eps.push(r.clients[0].epsilon);
        Ok(())
    })
    .unwrap();
    // 100 records in batches of 32: four steps per epoch.
    let steps = 3 * 2 * 4;
    assert_eq!(c[0].ledger.rdp.steps(), steps);
    for (&a, cost) in DEFAULT_RDP_ORDERS.iter().zip(c[0].ledger.rdp.costs()) {
        let want = steps as f64 * rdp_step_cost(0.32, 1.0, a).unwrap();
        assert!((cost - want).abs() <= 1e-12 * want);
    }
    assert!(eps.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn bayesian_epsilon_is_nondecreasing_and_idle_clients_keep_their_spend() {
    let grid = TimeGrid::monthly(3).unwrap();
    let shards: Vec<Vec<Example>> = (0..4).map(|k| random_examples(10 + k, 120, 2, &grid)).collect();
    let init = random_model(7, 2, &[3], 3, Activation::Selu);
    let cfg = FederationConfig {
        rounds: 4,
        local_epochs: 1,
        participation_rate: 0.5,
        batch_size: 40,
        regime: PrivacyRegime::Bayesian,
        execution: Execution::Sequential,
        ..Default::default()
    };
    let mut cs = clients(&shards, &cfg);
    let mut history: Vec<Vec<Option<f64>>> = Vec::new();
    let mut last = [0.0f64; 4];
    run_federated(&mut cs, &cfg, &init, |r, _| {
        assert_eq!(r.participants.len(), 2);
        let mut row = vec![None; 4];
        for c in &r.clients {
            assert!(c.epsilon >= last[c.client]);
            last[c.client] = c.epsilon;
            row[c.client] = Some(c.epsilon);
        }
        history.push(row);
        Ok(())
    })
    .unwrap();
    for c in &cs {
        let rounds = history.iter().filter(|r| r[c.id].is_some()).count() as u64;
        assert_eq!(c.ledger.rounds, rounds);
        assert_eq!(c.ledger.bdp.steps(), rounds * 3);
    }
}

#[test]
fn runs_are_deterministic_across_execution_modes() {
    let grid = TimeGrid::monthly(4).unwrap();
    let shards: Vec<Vec<Example>> = (0..3).map(|k| random_examples(20 + k, 150, 3, &grid)).collect();
    let init = random_model(8, 3, &[6], 4, Activation::Selu);
    let run = |execution: Execution, parallel_clients: bool| {
        let cfg = FederationConfig {
            rounds: 2,
            local_epochs: 1,
            regime: PrivacyRegime::Bayesian,
            execution,
            parallel_clients,
            ..Default::default()
        };
        let mut cs = clients(&shards, &cfg);
        run_federated(&mut cs, &cfg, &init, no_observer).unwrap()
    };
    let a = run(Execution::Sequential, false);
    let b = run(Execution::Parallel, true);
    let c = run(Execution::Sequential, false);
    assert_eq!(a.model, b.model);
    assert_eq!(a.model, c.model);
    assert_eq!(a.spends, b.spends);
    let checks: Vec<&str> = a.rounds.iter().map(|r| r.checksum.as_str()).collect();
    assert_eq!(checks, b.rounds.iter().map(|r| r.checksum.as_str()).collect::<Vec<_>>());
}

#[test]
fn training_reduces_loss() {
    let grid = TimeGrid::monthly(4).unwrap();
    let data = random_examples(9, 300, 3, &grid);
    let init = random_model(9, 3, &[8], 4, Activation::Selu);
    let cfg = FederationConfig {
        rounds: 5,
        local_epochs: 2,
        ..Default::default()
    };
    let out = run_centralized(data, &cfg, &init, no_observer).unwrap();
    let first = out.rounds.first().unwrap().train_loss;
    let last = out.rounds.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn divergence_names_the_client_and_round() {
    let grid = TimeGrid::monthly(3).unwrap();
    let shards: Vec<Vec<Example>> = (0..2).map(|k| random_examples(30 + k, 20, 2, &grid)).collect();
    let mut init = random_model(10, 2, &[3], 3, Activation::Selu);
    let last = init.num_params() - 1;
    init.params_mut()[last] = f64::NAN;
    let cfg = FederationConfig {
        rounds: 3,
        ..Default::default()
    };
    let mut cs = clients(&shards, &cfg);
    let err = run_federated(&mut cs, &cfg, &init, no_observer).unwrap_err();
    match err {
        fedsurv_core::Error::RoundFailure { round, client, source } => {
            assert_eq!((round, client), (0, 0));
            assert!(matches!(*source, fedsurv_core::Error::Divergence(_)));
        }
        other => panic!("{other}"),
    }
}
