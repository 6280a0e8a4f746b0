//! A small two-layer LSTM regressor over scalar sequences.
//!
//! Input is a bandwidth window fed one scalar per step; the prediction is a
//! linear readout of the last hidden state of the second layer. Training is
//! plain SGD on squared error with gradients from backpropagation through
//! time. Everything is f64 and deterministic given the construction seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Gate blocks are packed in the row order [input, forget, output, candidate].
const GATES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
struct LstmLayer {
    input_dim: usize,
    hidden: usize,
    /// 4H x D input weights, row-major.
    w_x: Vec<f64>,
    /// 4H x H recurrent weights, row-major.
    w_h: Vec<f64>,
    /// 4H biases.
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct LayerGrads {
    w_x: Vec<f64>,
    w_h: Vec<f64>,
    bias: Vec<f64>,
}

struct StepCache {
    x: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LstmLayer {
    fn new(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / ((input_dim + hidden) as f64).sqrt();
        let mut init = |len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
        };
        let w_x = init(GATES * hidden * input_dim);
        let w_h = init(GATES * hidden * hidden);
        let mut bias = vec![0.0; GATES * hidden];
        // forget-gate bias starts open
        for b in bias[hidden..2 * hidden].iter_mut() {
            *b = 1.0;
        }
        LstmLayer { input_dim, hidden, w_x, w_h, bias }
    }

    fn zero_grads(&self) -> LayerGrads {
        LayerGrads {
            w_x: vec![0.0; self.w_x.len()],
            w_h: vec![0.0; self.w_h.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    /// Runs the layer over `xs`, returning hidden states per step and the
    /// cache needed for backprop.
    fn forward(&self, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<StepCache>) {
        let h = self.hidden;
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut hs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            debug_assert_eq!(x.len(), self.input_dim);
            let mut z = self.bias.clone();
            for (row, z_val) in z.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (col, &xv) in x.iter().enumerate() {
                    acc += self.w_x[row * self.input_dim + col] * xv;
                }
                for (col, &hv) in h_prev.iter().enumerate() {
                    acc += self.w_h[row * h + col] * hv;
                }
                *z_val += acc;
            }
            let mut gi = vec![0.0; h];
            let mut gf = vec![0.0; h];
            let mut go = vec![0.0; h];
            let mut gg = vec![0.0; h];
            for j in 0..h {
                gi[j] = sigmoid(z[j]);
                gf[j] = sigmoid(z[h + j]);
                go[j] = sigmoid(z[2 * h + j]);
                gg[j] = z[3 * h + j].tanh();
            }
            let mut c = vec![0.0; h];
            let mut tanh_c = vec![0.0; h];
            let mut h_new = vec![0.0; h];
            for j in 0..h {
                c[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
                tanh_c[j] = c[j].tanh();
                h_new[j] = go[j] * tanh_c[j];
            }
            caches.push(StepCache {
                x: x.clone(),
                i: gi,
                f: gf,
                o: go,
                g: gg,
                c: c.clone(),
                tanh_c,
            });
            hs.push(h_new.clone());
            h_prev = h_new;
            c_prev = c;
        }
        (hs, caches)
    }

    /// Backpropagates through time. `dh_ext[t]` is the loss gradient flowing
    /// into `h_t` from outside the layer; returns parameter gradients and the
    /// gradient with respect to each step's input.
    fn backward(&self, caches: &[StepCache], dh_ext: &[Vec<f64>]) -> (LayerGrads, Vec<Vec<f64>>) {
        let h = self.hidden;
        let steps = caches.len();
        let mut grads = self.zero_grads();
        let mut dxs = vec![vec![0.0; self.input_dim]; steps];
        let mut dh_rec = vec![0.0; h];
        let mut dc_rec = vec![0.0; h];
        for t in (0..steps).rev() {
            let cache = &caches[t];
            let (h_prev_vals, c_prev_vals): (Vec<f64>, Vec<f64>) = if t == 0 {
                (vec![0.0; h], vec![0.0; h])
            } else {
                let prev = &caches[t - 1];
                ((0..h).map(|j| prev.o[j] * prev.tanh_c[j]).collect(), prev.c.clone())
            };

            let mut dz = vec![0.0; GATES * h];
            for j in 0..h {
                let dh = dh_ext[t][j] + dh_rec[j];
                let d_o = dh * cache.tanh_c[j];
                let mut dc = dc_rec[j] + dh * cache.o[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);
                let d_i = dc * cache.g[j];
                let d_g = dc * cache.i[j];
                let d_f = dc * c_prev_vals[j];
                dc *= cache.f[j];
                dc_rec[j] = dc;
                dz[j] = d_i * cache.i[j] * (1.0 - cache.i[j]);
                dz[h + j] = d_f * cache.f[j] * (1.0 - cache.f[j]);
                dz[2 * h + j] = d_o * cache.o[j] * (1.0 - cache.o[j]);
                dz[3 * h + j] = d_g * (1.0 - cache.g[j] * cache.g[j]);
            }
            for (row, &dz_val) in dz.iter().enumerate() {
                for (col, &xv) in cache.x.iter().enumerate() {
                    grads.w_x[row * self.input_dim + col] += dz_val * xv;
                }
                for (col, &hv) in h_prev_vals.iter().enumerate() {
                    grads.w_h[row * h + col] += dz_val * hv;
                }
                grads.bias[row] += dz_val;
            }
            for dx in dxs[t].iter_mut() {
                *dx = 0.0;
            }
            for (row, &dz_val) in dz.iter().enumerate() {
                for col in 0..self.input_dim {
                    dxs[t][col] += self.w_x[row * self.input_dim + col] * dz_val;
                }
            }
            for j in 0..h {
                let mut acc = 0.0;
                for (row, &dz_val) in dz.iter().enumerate() {
                    acc += self.w_h[row * h + j] * dz_val;
                }
                dh_rec[j] = acc;
            }
        }
        (grads, dxs)
    }

    fn apply(&mut self, grads: &LayerGrads, lr: f64) {
        for (w, g) in self.w_x.iter_mut().zip(&grads.w_x) {
            *w -= lr * g;
        }
        for (w, g) in self.w_h.iter_mut().zip(&grads.w_h) {
            *w -= lr * g;
        }
        for (w, g) in self.bias.iter_mut().zip(&grads.bias) {
            *w -= lr * g;
        }
    }
}

/// Two stacked LSTM layers with a linear readout of the final hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmNet {
    layer1: LstmLayer,
    layer2: LstmLayer,
    out_w: Vec<f64>,
    out_b: f64,
}

/// Parameter gradients matching [`LstmNet`]'s layout.
#[derive(Debug, Clone)]
pub struct LstmGrads {
    layer1: LayerGrads,
    layer2: LayerGrads,
    out_w: Vec<f64>,
    out_b: f64,
}

impl LstmNet {
    /// Builds a net with the given hidden sizes and seeded initial weights.
    pub fn new(hidden1: usize, hidden2: usize, seed: u64) -> Result<Self> {
        if hidden1 == 0 || hidden2 == 0 {
            return Err(Error::invalid("hidden sizes must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer1 = LstmLayer::new(1, hidden1, &mut rng);
        let layer2 = LstmLayer::new(hidden1, hidden2, &mut rng);
        let scale = 1.0 / (hidden2 as f64).sqrt();
        let out_w = (0..hidden2).map(|_| rng.gen_range(-scale..scale)).collect();
        Ok(LstmNet { layer1, layer2, out_w, out_b: 0.0 })
    }

    pub fn hidden_sizes(&self) -> (usize, usize) {
        (self.layer1.hidden, self.layer2.hidden)
    }

    /// Predicts the next value of the sequence.
    pub fn forward(&self, seq: &[f64]) -> f64 {
        let xs1: Vec<Vec<f64>> = seq.iter().map(|&v| vec![v]).collect();
        let (hs1, _) = self.layer1.forward(&xs1);
        let (hs2, _) = self.layer2.forward(&hs1);
        let last = hs2.last().expect("non-empty sequence");
        self.out_w.iter().zip(last).map(|(w, h)| w * h).sum::<f64>() + self.out_b
    }

    /// Squared error against `label` and its gradient in all parameters.
    pub fn loss_and_grad(&self, seq: &[f64], label: f64) -> (f64, LstmGrads) {
        assert!(!seq.is_empty(), "sequence must be non-empty");
        let xs1: Vec<Vec<f64>> = seq.iter().map(|&v| vec![v]).collect();
        let (hs1, cache1) = self.layer1.forward(&xs1);
        let (hs2, cache2) = self.layer2.forward(&hs1);
        let last = hs2.last().expect("non-empty");
        let y = self.out_w.iter().zip(last).map(|(w, h)| w * h).sum::<f64>() + self.out_b;
        let err = y - label;
        let loss = err * err;
        let dy = 2.0 * err;

        let out_w_grad: Vec<f64> = last.iter().map(|&h| dy * h).collect();
        let mut dh2 = vec![vec![0.0; self.layer2.hidden]; hs2.len()];
        for (j, d) in dh2.last_mut().expect("non-empty").iter_mut().enumerate() {
            *d = dy * self.out_w[j];
        }
        let (g2, dx2) = self.layer2.backward(&cache2, &dh2);
        let (g1, _) = self.layer1.backward(&cache1, &dx2);
        (
            loss,
            LstmGrads { layer1: g1, layer2: g2, out_w: out_w_grad, out_b: dy },
        )
    }

    /// One SGD step: `theta -= lr * grad`.
    pub fn sgd_step(&mut self, grads: &LstmGrads, lr: f64) {
        self.layer1.apply(&grads.layer1, lr);
        self.layer2.apply(&grads.layer2, lr);
        for (w, g) in self.out_w.iter_mut().zip(&grads.out_w) {
            *w -= lr * g;
        }
        self.out_b -= lr * grads.out_b;
    }

    /// Flat parameter vector: layer 1 (w_x, w_h, bias), layer 2, readout.
    pub fn params_vec(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for layer in [&self.layer1, &self.layer2] {
            v.extend_from_slice(&layer.w_x);
            v.extend_from_slice(&layer.w_h);
            v.extend_from_slice(&layer.bias);
        }
        v.extend_from_slice(&self.out_w);
        v.push(self.out_b);
        v
    }

    /// Restores parameters from [`LstmNet::params_vec`] layout.
    pub fn set_params_vec(&mut self, params: &[f64]) -> Result<()> {
        let expected = self.params_vec().len();
        if params.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        let mut offset = 0;
        for layer in [&mut self.layer1, &mut self.layer2] {
            for slot in [&mut layer.w_x, &mut layer.w_h, &mut layer.bias] {
                let len = slot.len();
                slot.copy_from_slice(&params[offset..offset + len]);
                offset += len;
            }
        }
        let len = self.out_w.len();
        self.out_w.copy_from_slice(&params[offset..offset + len]);
        offset += len;
        self.out_b = params[offset];
        Ok(())
    }

    /// Gradient as one flat vector in [`LstmNet::params_vec`] order.
    pub fn grads_vec(grads: &LstmGrads) -> Vec<f64> {
        let mut v = Vec::new();
        for layer in [&grads.layer1, &grads.layer2] {
            v.extend_from_slice(&layer.w_x);
            v.extend_from_slice(&layer.w_h);
            v.extend_from_slice(&layer.bias);
        }
        v.extend_from_slice(&grads.out_w);
        v.push(grads.out_b);
        v
    }
}
