use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{axpy, dot, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmDims {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    pub output: usize,
}

impl LstmDims {
    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input
        } else {
            self.hidden
        }
    }

    fn layer_len(&self, l: usize) -> usize {
        4 * self.hidden * (self.layer_input(l) + self.hidden) + 4 * self.hidden
    }

    fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.layer_len(k)).sum()
    }

    fn readout_offset(&self) -> usize {
        self.layer_offset(self.layers)
    }

    pub fn n_params(&self) -> usize {
        self.readout_offset() + self.output * self.hidden + self.output
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeqLoss {
    Mae,
    Mse,
}

/// Stacked LSTM with an affine readout from the top layer's hidden state.
///
/// Each layer stores its gate weights row-major as `4H × (in + H)` acting on
/// `[x_t; h_{t-1}]`, gate blocks ordered input, forget, cell, output, then
/// the `4H` bias. The readout `O × H` and its bias come last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNet {
    pub dims: LstmDims,
    pub params: Vec<f64>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct LstmTape {
    steps: usize,
    /// Per layer: hidden states h_0..h_T, `(T+1) × H`, h_0 = 0.
    h: Vec<Vec<f64>>,
    /// Per layer: cell states c_0..c_T.
    c: Vec<Vec<f64>>,
    /// Per layer: activated gates `T × 4H`.
    gates: Vec<Vec<f64>>,
    /// Per layer: tanh(c_t), `T × H`.
    tanh_c: Vec<Vec<f64>>,
}

impl LstmTape {
    pub fn top_hidden(&self, t: usize) -> &[f64] {
        let hdim = self.h[0].len() / (self.steps + 1);
        let top = self.h.last().unwrap();
        &top[(t + 1) * hdim..(t + 2) * hdim]
    }
}

impl LstmNet {
    /// Uniform(±1/√H) gate weights, forget-gate bias 1, zero readout.
    pub fn new(dims: LstmDims, rng: &mut impl Rng) -> Self {
        let hd = dims.hidden;
        let bound = 1.0 / (hd as f64).sqrt();
        let mut params = Vec::with_capacity(dims.n_params());
        for l in 0..dims.layers {
            let cols = dims.layer_input(l) + hd;
            for _ in 0..4 * hd * cols {
                params.push(rng.random_range(-bound..bound));
            }
            for r in 0..4 * hd {
                params.push(if (hd..2 * hd).contains(&r) { 1.0 } else { 0.0 });
            }
        }
        params.resize(dims.n_params(), 0.0);
        LstmNet { dims, params }
    }

    pub fn randomize_readout(&mut self, rng: &mut impl Rng) {
        let bound = 1.0 / (self.dims.hidden as f64).sqrt();
        let off = self.dims.readout_offset();
        for p in &mut self.params[off..] {
            *p = rng.random_range(-bound..bound);
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn readout(&self, h: &[f64]) -> Vec<f64> {
        let (hd, od) = (self.dims.hidden, self.dims.output);
        let off = self.dims.readout_offset();
        let w = &self.params[off..off + od * hd];
        let b = &self.params[off + od * hd..off + od * hd + od];
        (0..od).map(|o| dot(&w[o * hd..(o + 1) * hd], h) + b[o]).collect()
    }

    /// Run one layer over `steps` inputs of width `n_in`, writing hidden
    /// states into `h_out` (`steps × H`). When `tape` is given, cell states
    /// and gates are recorded for back-propagation.
    fn run_layer(
        &self,
        l: usize,
        xs: &[f64],
        steps: usize,
        h_out: &mut [f64],
        mut tape: Option<(&mut [f64], &mut [f64], &mut [f64])>,
    ) {
        let hd = self.dims.hidden;
        let n_in = self.dims.layer_input(l);
        let cols = n_in + hd;
        let off = self.dims.layer_offset(l);
        let w = &self.params[off..off + 4 * hd * cols];
        let b = &self.params[off + 4 * hd * cols..off + 4 * hd * cols + 4 * hd];

        let mut xh = vec![0.0; cols];
        let mut c = vec![0.0; hd];
        let mut z = vec![0.0; 4 * hd];
        for t in 0..steps {
            xh[..n_in].copy_from_slice(&xs[t * n_in..(t + 1) * n_in]);
            if t == 0 {
                xh[n_in..].iter_mut().for_each(|v| *v = 0.0);
            } else {
                xh[n_in..].copy_from_slice(&h_out[(t - 1) * hd..t * hd]);
            }
            for r in 0..4 * hd {
                z[r] = dot(&w[r * cols..(r + 1) * cols], &xh) + b[r];
            }
            for k in 0..hd {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[hd + k]);
                let g = z[2 * hd + k].tanh();
                let o = sigmoid(z[3 * hd + k]);
                c[k] = f * c[k] + i * g;
                let tc = c[k].tanh();
                h_out[t * hd + k] = o * tc;
                if let Some((cs, gs, ts)) = tape.as_mut() {
                    cs[(t + 1) * hd + k] = c[k];
                    gs[t * 4 * hd + k] = i;
                    gs[t * 4 * hd + hd + k] = f;
                    gs[t * 4 * hd + 2 * hd + k] = g;
                    gs[t * 4 * hd + 3 * hd + k] = o;
                    ts[t * hd + k] = tc;
                }
            }
        }
    }

    /// Readout after the last of `steps` inputs (row-major `steps × input`).
    pub fn predict_last(&self, inputs: &[f64], steps: usize) -> Vec<f64> {
        assert_eq!(inputs.len(), steps * self.dims.input, "input length");
        let hd = self.dims.hidden;
        let mut cur = inputs.to_vec();
        for l in 0..self.dims.layers {
            let mut h = vec![0.0; steps * hd];
            self.run_layer(l, &cur, steps, &mut h, None);
            cur = h;
        }
        self.readout(&cur[(steps - 1) * hd..])
    }

    pub fn forward(&self, inputs: &[f64], steps: usize) -> LstmTape {
        assert_eq!(inputs.len(), steps * self.dims.input, "input length");
        let hd = self.dims.hidden;
        let mut tape = LstmTape {
            steps,
            h: Vec::new(),
            c: Vec::new(),
            gates: Vec::new(),
            tanh_c: Vec::new(),
        };
        for l in 0..self.dims.layers {
            let mut h = vec![0.0; (steps + 1) * hd];
            let mut c = vec![0.0; (steps + 1) * hd];
            let mut gates = vec![0.0; steps * 4 * hd];
            let mut tanh_c = vec![0.0; steps * hd];
            {
                let xs: &[f64] = if l == 0 { inputs } else { &tape.h[l - 1][hd..] };
                self.run_layer(l, xs, steps, &mut h[hd..], Some((&mut c, &mut gates, &mut tanh_c)));
            }
            tape.h.push(h);
            tape.c.push(c);
            tape.gates.push(gates);
            tape.tanh_c.push(tanh_c);
        }
        tape
    }

    pub fn output_at(&self, tape: &LstmTape, t: usize) -> Vec<f64> {
        self.readout(tape.top_hidden(t))
    }

    /// Mean loss over the outputs at steps `supervise_from..steps`, and its
    /// gradient accumulated into `grad`.
    pub fn loss_and_grad(
        &self,
        inputs: &[f64],
        targets: &[f64],
        steps: usize,
        supervise_from: usize,
        loss: SeqLoss,
        grad: &mut [f64],
    ) -> f64 {
        assert!(supervise_from < steps);
        assert_eq!(targets.len(), steps * self.dims.output, "target length");
        assert_eq!(grad.len(), self.params.len());
        let LstmDims {
            hidden: hd,
            output: od,
            layers,
            ..
        } = self.dims;
        let tape = self.forward(inputs, steps);

        let count = ((steps - supervise_from) * od) as f64;
        let ro = self.dims.readout_offset();
        let w_out = &self.params[ro..ro + od * hd];
        let mut total = 0.0;
        let mut dh_ext = vec![0.0; steps * hd];
        for t in supervise_from..steps {
            let h = tape.top_hidden(t);
            let y = self.readout(h);
            let target = &targets[t * od..(t + 1) * od];
            for o in 0..od {
                let e = y[o] - target[o];
                let dy = match loss {
                    SeqLoss::Mae => {
                        total += e.abs();
                        if e > 0.0 {
                            1.0
                        } else if e < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    SeqLoss::Mse => {
                        total += e * e;
                        2.0 * e
                    }
                } / count;
                if dy != 0.0 {
                    axpy(dy, h, &mut grad[ro + o * hd..ro + (o + 1) * hd]);
                    grad[ro + od * hd + o] += dy;
                    axpy(dy, &w_out[o * hd..(o + 1) * hd], &mut dh_ext[t * hd..(t + 1) * hd]);
                }
            }
        }

        for l in (0..layers).rev() {
            let n_in = self.dims.layer_input(l);
            let cols = n_in + hd;
            let off = self.dims.layer_offset(l);
            let w = &self.params[off..off + 4 * hd * cols];
            let (gw, gb) = grad[off..off + 4 * hd * cols + 4 * hd].split_at_mut(4 * hd * cols);
            let (h, c, gates, tanh_c) = (&tape.h[l], &tape.c[l], &tape.gates[l], &tape.tanh_c[l]);
            let xs: &[f64] = if l == 0 { inputs } else { &tape.h[l - 1][hd..] };

            let mut dh_below = if l > 0 { vec![0.0; steps * n_in] } else { Vec::new() };
            let mut dh_next = vec![0.0; hd];
            let mut dc_next = vec![0.0; hd];
            let mut dz = vec![0.0; 4 * hd];
            let mut xh = vec![0.0; cols];
            let mut dxh = vec![0.0; cols];
            for t in (0..steps).rev() {
                let gt = &gates[t * 4 * hd..(t + 1) * 4 * hd];
                for k in 0..hd {
                    let (i, f, g, o) = (gt[k], gt[hd + k], gt[2 * hd + k], gt[3 * hd + k]);
                    let tc = tanh_c[t * hd + k];
                    let dh = dh_ext[t * hd + k] + dh_next[k];
                    let d_o = dh * tc;
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                    let d_i = dc * g;
                    let d_g = dc * i;
                    let d_f = dc * c[t * hd + k];
                    dc_next[k] = dc * f;
                    dz[k] = d_i * i * (1.0 - i);
                    dz[hd + k] = d_f * f * (1.0 - f);
                    dz[2 * hd + k] = d_g * (1.0 - g * g);
                    dz[3 * hd + k] = d_o * o * (1.0 - o);
                }
                xh[..n_in].copy_from_slice(&xs[t * n_in..(t + 1) * n_in]);
                xh[n_in..].copy_from_slice(&h[t * hd..(t + 1) * hd]);
                dxh.iter_mut().for_each(|v| *v = 0.0);
                for r in 0..4 * hd {
                    let d = dz[r];
                    if d != 0.0 {
                        axpy(d, &xh, &mut gw[r * cols..(r + 1) * cols]);
                        gb[r] += d;
                        axpy(d, &w[r * cols..(r + 1) * cols], &mut dxh);
                    }
                }
                if l > 0 {
                    dh_below[t * n_in..(t + 1) * n_in].copy_from_slice(&dxh[..n_in]);
                }
                dh_next.copy_from_slice(&dxh[n_in..]);
            }
            dh_ext = dh_below;
        }
        total / count
    }

    /// Loss only, no gradient.
    pub fn loss(&self, inputs: &[f64], targets: &[f64], steps: usize, supervise_from: usize, loss: SeqLoss) -> f64 {
        let tape = self.forward(inputs, steps);
        let od = self.dims.output;
        let mut total = 0.0;
        for t in supervise_from..steps {
            let y = self.output_at(&tape, t);
            for o in 0..od {
                let e = y[o] - targets[t * od + o];
                total += match loss {
                    SeqLoss::Mae => e.abs(),
                    SeqLoss::Mse => e * e,
                };
            }
        }
        total / ((steps - supervise_from) * od) as f64
    }
}
