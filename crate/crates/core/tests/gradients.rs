//! Analytic gradients against central finite differences.

use dhlab::nn::{LstmDims, LstmNet, Mlp, SeqLoss};
use dhlab::rng::rng_from;
use rand::Rng;

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn toy_lstm(seed: u64, hidden: usize) -> (LstmNet, Vec<f64>, Vec<f64>, usize) {
    let mut rng = rng_from(seed);
    let dims = LstmDims {
        input: 4,
        hidden,
        layers: 2,
        output: 2,
    };
    let mut net = LstmNet::new(dims, &mut rng);
    net.randomize_readout(&mut rng);
    let steps = 12;
    let xs: Vec<f64> = (0..steps * 4).map(|_| rng.random_range(-1.5..1.5)).collect();
    let ys: Vec<f64> = (0..steps * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    (net, xs, ys, steps)
}

fn lstm_check(seed: u64, loss: SeqLoss, coords: Option<usize>) {
    let (net, xs, ys, steps) = toy_lstm(seed, 3);
    let mut grad = vec![0.0; net.n_params()];
    net.loss_and_grad(&xs, &ys, steps, 4, loss, &mut grad);
    let mut rng = rng_from(seed + 100);
    let idx: Vec<usize> = match coords {
        Some(k) => (0..k).map(|_| rng.random_range(0..net.n_params())).collect(),
        None => (0..net.n_params()).collect(),
    };
    for i in idx {
        let mut p = net.clone();
        p.params[i] += H;
        let up = p.loss(&xs, &ys, steps, 4, loss);
        p.params[i] -= 2.0 * H;
        let down = p.loss(&xs, &ys, steps, 4, loss);
        let fd = (up - down) / (2.0 * H);
        assert!(
            rel_err(grad[i], fd) < 1e-4,
            "seed {seed} param {i}: analytic {} vs fd {fd}",
            grad[i]
        );
    }
}

#[test]
fn lstm_bptt_every_parameter_mae() {
    lstm_check(0, SeqLoss::Mae, None);
}

#[test]
fn lstm_bptt_every_parameter_mse() {
    lstm_check(1, SeqLoss::Mse, None);
}

#[test]
fn lstm_bptt_random_coordinates() {
    for seed in [11, 12, 13] {
        lstm_check(seed, SeqLoss::Mae, Some(5));
    }
}

#[test]
fn mlp_random_coordinates() {
    for seed in [21, 22, 23] {
        let mut rng = rng_from(seed);
        let net = Mlp::new(&[6, 4, 4, 3], &mut rng);
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |m: &Mlp| m.forward(&x).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let tape = net.forward_tape(&x);
        let mut g = vec![0.0; net.n_params()];
        net.backward(&tape, &w, &mut g);
        for _ in 0..5 {
            let i = rng.random_range(0..net.n_params());
            let mut p = net.clone();
            p.params[i] += H;
            let up = f(&p);
            p.params[i] -= 2.0 * H;
            let fd = (up - f(&p)) / (2.0 * H);
            assert!(rel_err(g[i], fd) < 1e-4 || (g[i] == 0.0 && fd.abs() < 1e-9));
        }
    }
}
