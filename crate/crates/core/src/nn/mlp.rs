use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{axpy, dot};

/// Fully connected network: ReLU hidden layers, linear output.
///
/// Layer `l` stores its weight matrix row-major (`out × in`) followed by its
/// bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    /// Input followed by the post-activation output of every layer.
    acts: Vec<Vec<f64>>,
}

impl MlpTape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape has at least the input")
    }
}

impl Mlp {
    /// He-initialised weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut params = Vec::with_capacity(Self::count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = rng.sample(StandardNormal);
                params.push(scale * z);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Mlp {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        (params.len() == Self::count(sizes) && sizes.len() >= 2).then(|| Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_tape(x).acts.pop().unwrap()
    }

    pub fn forward_tape(&self, x: &[f64]) -> MlpTape {
        assert_eq!(x.len(), self.sizes[0], "input width");
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = acts.last().unwrap();
            let out: Vec<f64> = (0..n_out)
                .map(|r| {
                    let z = dot(&weights[r * n_in..(r + 1) * n_in], input) + bias[r];
                    if l < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        MlpTape { acts }
    }

    /// Accumulate d(loss)/d(params) into `grad` given d(loss)/d(output).
    pub fn backward(&self, tape: &MlpTape, grad_out: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &tape.acts[l];
            if l < n_layers - 1 {
                // ReLU derivative on this layer's output
                for (d, a) in delta.iter_mut().zip(&tape.acts[l + 1]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let (gw, rest) = grad[off..].split_at_mut(n_in * n_out);
            for r in 0..n_out {
                if delta[r] != 0.0 {
                    axpy(delta[r], input, &mut gw[r * n_in..(r + 1) * n_in]);
                    rest[r] += delta[r];
                }
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for r in 0..n_out {
                    if delta[r] != 0.0 {
                        axpy(delta[r], &weights[r * n_in..(r + 1) * n_in], &mut prev);
                    }
                }
                delta = prev;
            }
        }
    }

    /// Mutable view of the output layer's bias.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let n = self.output_dim();
        let len = self.params.len();
        &mut self.params[len - n..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn loss(net: &Mlp, x: &[f64], w: &[f64]) -> f64 {
        net.forward(x).iter().zip(w).map(|(o, w)| o * w).sum()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_from(3);
        let net = Mlp::new(&[5, 4, 4, 3], &mut rng);
        let x: Vec<f64> = (0..5).map(|i| (i as f64 * 0.37).sin()).collect();
        let w = [0.3, -1.2, 0.8];
        let tape = net.forward_tape(&x);
        let mut g = vec![0.0; net.n_params()];
        net.backward(&tape, &w, &mut g);
        for (i, &gi) in g.iter().enumerate() {
            let mut p = net.clone();
            p.params[i] += 1e-6;
            let up = loss(&p, &x, &w);
            p.params[i] -= 2e-6;
            let down = loss(&p, &x, &w);
            let fd = (up - down) / 2e-6;
            assert!((fd - gi).abs() < 1e-6, "param {i}: {fd} vs {gi}");
        }
    }

    #[test]
    fn shapes() {
        let net = Mlp::new(&[360, 64, 64, 13], &mut rng_from(0));
        assert_eq!(net.n_params(), 360 * 64 + 64 + 64 * 64 + 64 + 64 * 13 + 13);
        assert_eq!(net.forward(&vec![0.1; 360]).len(), 13);
        assert!(Mlp::from_params(&[2, 2], vec![0.0; 5]).is_none());
    }
}
