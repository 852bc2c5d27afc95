use std::sync::Arc;

use dhlab::control::WaterCurve;
use dhlab::dqn::{
    argmax, epsilon_at, features, td_loss_and_grad, train_agent, DqnConfig, Experience, Learner, QNetwork,
    ReplayBuffer,
};
use dhlab::mdp::{ActionKind, GroundTruth, ObservationWindow, TargetSchedule, N_ACTIONS};
use dhlab::rng::rng_from;
use dhlab::thermal::single_apartment;
use dhlab::weather::CityTable;
use proptest::prelude::*;
use rand::Rng;

fn window(rng: &mut impl Rng, n_apts: usize) -> Arc<[f32]> {
    let frame = 4 + n_apts;
    (0..ObservationWindow::dim(n_apts))
        .map(|i| match i % frame {
            0 => rng.random_range(-15.0..10.0),
            1 => rng.random_range(20.0..50.0),
            2 | 3 => rng.random_range(-1.0..1.0),
            _ => rng.random_range(14.0..22.0),
        })
        .collect()
}

fn experience(rng: &mut impl Rng, n_apts: usize) -> Experience {
    Experience {
        state: window(rng, n_apts),
        action: rng.random_range(0..N_ACTIONS) as u8,
        reward: rng.random_range(-3.0..0.0),
        next_state: window(rng, n_apts),
        done: rng.random_bool(0.1),
    }
}

/// Output layer reduced to its bias: every input maps to the bias vector.
fn zero_output_weights(net: &mut QNetwork, hidden: usize) {
    let len = net.mlp.params.len();
    net.mlp.params[len - N_ACTIONS - N_ACTIONS * hidden..len - N_ACTIONS].fill(0.0);
}

#[test]
fn replay_uniform_within_three_sigma() {
    let cap = 50;
    let mut b = ReplayBuffer::new(cap);
    for i in 0..(cap * 3 + 7) {
        b.push(i);
    }
    let draws = 100_000;
    let mut hits = vec![0usize; cap];
    let mut rng = rng_from(99);
    for _ in 0..draws {
        hits[b.sample_index(&mut rng)] += 1;
    }
    let p = 1.0 / cap as f64;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (i, &h) in hits.iter().enumerate() {
        assert!((h as f64 - mean).abs() <= 3.0 * sigma, "slot {i}: {h} hits vs {mean:.0} +- {sigma:.1}");
    }
}

proptest! {
    #[test]
    fn replay_keeps_last_capacity(cap in 1usize..64, n in 0usize..300) {
        let mut b = ReplayBuffer::new(cap);
        for i in 0..n {
            b.push(i);
        }
        let got: Vec<usize> = b.chronological().copied().collect();
        let want: Vec<usize> = (n.saturating_sub(cap)..n).collect();
        prop_assert_eq!(got, want);
        prop_assert!(b.len() <= cap);
    }

    #[test]
    fn epsilon_non_increasing(total in 1usize..100_000, a in 0usize..200_000, d in 0usize..1000) {
        let c = DqnConfig::default();
        let (e0, e1) = (epsilon_at(a, total, &c), epsilon_at(a + d, total, &c));
        prop_assert!(e1 <= e0);
        prop_assert!((c.eps_end..=c.eps_start).contains(&e1));
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn td_gradient_matches_finite_differences() {
    for seed in 0..3u64 {
        let mut rng = rng_from(seed);
        let net = QNetwork::new(1, &[4], &mut rng);
        let target = QNetwork::new(1, &[4], &mut rng);
        let batch: Vec<Experience> = (0..6).map(|_| experience(&mut rng, 1)).collect();
        let refs: Vec<&Experience> = batch.iter().collect();
        let mut grad = vec![0.0; net.mlp.n_params()];
        td_loss_and_grad(&net, &target, &refs, 0.9, &mut grad);
        for _ in 0..5 {
            let i = rng.random_range(0..grad.len());
            let h = 1e-6;
            let mut plus = net.clone();
            plus.mlp.params[i] += h;
            let mut minus = net.clone();
            minus.mlp.params[i] -= h;
            let mut scratch = vec![0.0; grad.len()];
            let fd = (td_loss_and_grad(&plus, &target, &refs, 0.9, &mut scratch)
                - td_loss_and_grad(&minus, &target, &refs, 0.9, &mut scratch))
                / (2.0 * h);
            assert!(rel_err(grad[i], fd) < 1e-4, "seed {seed} param {i}: {} vs {fd}", grad[i]);
        }
    }
}

#[test]
fn zero_gamma_regresses_on_rewards() {
    let mut rng = rng_from(4);
    let net = QNetwork::new(1, &[8], &mut rng);
    let batch: Vec<Experience> = (0..32).map(|_| experience(&mut rng, 1)).collect();
    let refs: Vec<&Experience> = batch.iter().collect();
    let mut g = vec![0.0; net.mlp.n_params()];
    let loss = td_loss_and_grad(&net, &net, &refs, 0.0, &mut g);
    let want = batch
        .iter()
        .map(|e| (net.q_window(&e.state)[e.action as usize] - e.reward).powi(2))
        .sum::<f64>()
        / 32.0;
    assert!((loss - want).abs() < 1e-12);
}

#[test]
fn identical_batch_equals_single() {
    let mut rng = rng_from(5);
    let net = QNetwork::new(1, &[8], &mut rng);
    let target = QNetwork::new(1, &[8], &mut rng);
    let e = experience(&mut rng, 1);
    let mut one = vec![0.0; net.mlp.n_params()];
    let mut many = vec![0.0; net.mlp.n_params()];
    let l1 = td_loss_and_grad(&net, &target, &[&e], 0.9, &mut one);
    let l32 = td_loss_and_grad(&net, &target, &[&e; 32], 0.9, &mut many);
    assert!((l1 - l32).abs() < 1e-12);
    for (a, b) in one.iter().zip(&many) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
    }
}

#[test]
fn greedy_tie_break_and_dominance() {
    let mut rng = rng_from(6);
    let mut net = QNetwork::new(11, &[64, 64], &mut rng);
    zero_output_weights(&mut net, 64);
    let w = window(&mut rng, 11);
    assert_eq!(net.greedy(&w), 0);
    net.mlp.output_bias_mut()[7] = 1.0;
    assert_eq!(net.greedy(&w), 7);
}

#[test]
fn argmax_invariant_under_constant_shift() {
    let mut rng = rng_from(8);
    let net = QNetwork::new(11, &[64, 64], &mut rng);
    let mut shifted = net.clone();
    shifted.mlp.output_bias_mut().iter_mut().for_each(|b| *b += 3.25);
    for _ in 0..100 {
        let w = window(&mut rng, 11);
        assert_eq!(net.greedy(&w), shifted.greedy(&w));
        assert_eq!(argmax(&net.q_window(&w)), net.greedy(&w));
    }
}

#[test]
fn features_use_fixed_affine_map() {
    let mut rng = rng_from(1);
    let w = window(&mut rng, 2);
    let mut x = Vec::new();
    features(&w, 2, &mut x);
    assert_eq!(x.len(), ObservationWindow::dim(2));
    assert_eq!(x[0], (f64::from(w[0]) - 18.0) / 10.0);
    assert_eq!(x[2], f64::from(w[2]));
    assert_eq!(x[5], (f64::from(w[5]) - 18.0) / 10.0);
}

#[test]
fn target_network_is_stale_between_syncs() {
    let config = DqnConfig {
        batch: 4,
        buffer_capacity: 64,
        target_update_every: 7,
        hidden: vec![8],
        ..DqnConfig::default()
    };
    let mut learner = Learner::new(1, &config).unwrap();
    let mut rng = rng_from(2);
    let mut synced = learner.online.mlp.params.clone();
    for _ in 0..50 {
        learner.observe(experience(&mut rng, 1)).unwrap();
        if learner.steps.is_multiple_of(7) {
            synced = learner.online.mlp.params.clone();
        }
        assert_eq!(learner.target.mlp.params, synced);
    }
    assert_ne!(learner.online.mlp.params, synced);
}

fn pool() -> Vec<dhlab::weather::WeatherSeries> {
    let t = CityTable::default();
    ["Beijing", "Harbin"].iter().map(|c| t.synthesize(c, 2002, 3).unwrap()).collect()
}

#[test]
fn zero_episodes_returns_untrained_network() {
    let config = DqnConfig {
        episodes: 0,
        seed: 1,
        ..DqnConfig::default()
    };
    let model = GroundTruth::new(single_apartment());
    let a = train_agent(ActionKind::Increment, &model, WaterCurve::default(), &pool(), &TargetSchedule::default(), &config).unwrap();
    assert!(a.history.is_empty());
    let fresh = Learner::new(1, &config).unwrap();
    assert_eq!(a.net, fresh.online);
}

#[test]
fn smoke_training_bookkeeping_and_determinism() {
    let config = DqnConfig {
        episodes: 2,
        seed: 12,
        ..DqnConfig::default()
    };
    let model = GroundTruth::new(single_apartment());
    let run = || {
        train_agent(ActionKind::BaselineDelta, &model, WaterCurve::new(30.0, -1.0), &pool(), &TargetSchedule::default(), &config)
            .unwrap()
    };
    let a = run();
    assert_eq!(a.history.len(), 2);
    assert_eq!(a.replay_len, 2 * 1883);
    assert_eq!(a.steps, 2 * 1883);
    assert!(a.history.iter().all(|h| h.total_reward <= 0.0 && h.loss_mean.is_finite()));
    let b = run();
    assert_eq!(a.reward_history(), b.reward_history());
    assert_eq!(a.net, b.net);
}
