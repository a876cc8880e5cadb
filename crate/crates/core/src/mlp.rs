//! Feed-forward predictor with rectifier hidden layers, plus the
//! adaptive-moment optimizer used for every gradient-based fit in the crate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Output head: identity for regression, logistic for classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputHead {
    Identity,
    Logistic,
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Fully-connected network; evaluation is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpPredictor {
    /// Layer widths including input and output, e.g. `[d, 16, 16, 1]`.
    pub dims: Vec<usize>,
    /// Per layer, row-major `dims[l+1] x dims[l]`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub output: OutputHead,
    pub seed: u64,
}

/// Per-layer post-activation values for a batch, kept for backpropagation.
pub struct BatchCache {
    /// `activations[0]` is the input batch; last entry is the head output.
    pub activations: Vec<Vec<f64>>,
    pub n_rows: usize,
}

/// Parameter gradients, same shapes as the model.
#[derive(Debug, Clone)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(model: &MlpPredictor) -> Grads {
        Grads {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

impl MlpPredictor {
    /// He-uniform initialization, deterministic per seed.
    pub fn new(input_dim: usize, hidden: &[usize], output: OutputHead, init_seed: u64) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut rng = seed::rng_for(init_seed, 0x31f0);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let fan_in = dims[l].max(1);
            let limit = (6.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..dims[l] * dims[l + 1])
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
                .collect();
            weights.push(w);
            biases.push(vec![0.0; dims[l + 1]]);
        }
        MlpPredictor {
            dims,
            weights,
            biases,
            output,
            seed: init_seed,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Forward pass over a row-major batch, caching activations.
    pub fn forward_batch(&self, inputs: &[f64], n_rows: usize) -> BatchCache {
        debug_assert_eq!(inputs.len(), n_rows * self.dims[0]);
        let mut activations = Vec::with_capacity(self.n_layers() + 1);
        activations.push(inputs.to_vec());
        for l in 0..self.n_layers() {
            let (d_in, d_out) = (self.dims[l], self.dims[l + 1]);
            let prev = &activations[l];
            let w = &self.weights[l];
            let b = &self.biases[l];
            let last = l + 1 == self.n_layers();
            let mut out = vec![0.0; n_rows * d_out];
            for i in 0..n_rows {
                let row = &prev[i * d_in..(i + 1) * d_in];
                let out_row = &mut out[i * d_out..(i + 1) * d_out];
                for j in 0..d_out {
                    let wr = &w[j * d_in..(j + 1) * d_in];
                    let mut s = b[j];
                    for (wk, xk) in wr.iter().zip(row.iter()) {
                        s += wk * xk;
                    }
                    out_row[j] = if last {
                        match self.output {
                            OutputHead::Identity => s,
                            OutputHead::Logistic => sigmoid(s),
                        }
                    } else {
                        s.max(0.0)
                    };
                }
            }
            activations.push(out);
        }
        BatchCache {
            activations,
            n_rows,
        }
    }

    /// Head outputs of the batch (final activation column).
    pub fn outputs<'c>(&self, cache: &'c BatchCache) -> &'c [f64] {
        cache.activations.last().expect("forward ran")
    }

    /// Backpropagate `dL/d(head output)` per row, accumulating into `grads`.
    pub fn backward_batch(&self, cache: &BatchCache, dl_dout: &[f64], grads: &mut Grads) {
        let n_rows = cache.n_rows;
        debug_assert_eq!(dl_dout.len(), n_rows);
        let outs = self.outputs(cache);
        // Delta at the final linear layer.
        let mut delta: Vec<f64> = match self.output {
            OutputHead::Identity => dl_dout.to_vec(),
            OutputHead::Logistic => dl_dout
                .iter()
                .zip(outs.iter())
                .map(|(g, o)| g * o * (1.0 - o))
                .collect(),
        };
        for l in (0..self.n_layers()).rev() {
            let (d_in, d_out) = (self.dims[l], self.dims[l + 1]);
            let prev = &cache.activations[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for i in 0..n_rows {
                let row = &prev[i * d_in..(i + 1) * d_in];
                let drow = &delta[i * d_out..(i + 1) * d_out];
                for j in 0..d_out {
                    let dj = drow[j];
                    if dj == 0.0 {
                        continue;
                    }
                    gb[j] += dj;
                    let gwr = &mut gw[j * d_in..(j + 1) * d_in];
                    for (g, xk) in gwr.iter_mut().zip(row.iter()) {
                        *g += dj * xk;
                    }
                }
            }
            if l > 0 {
                let w = &self.weights[l];
                let act = &cache.activations[l];
                let mut next = vec![0.0; n_rows * d_in];
                for i in 0..n_rows {
                    let drow = &delta[i * d_out..(i + 1) * d_out];
                    let arow = &act[i * d_in..(i + 1) * d_in];
                    let nrow = &mut next[i * d_in..(i + 1) * d_in];
                    for j in 0..d_out {
                        let dj = drow[j];
                        if dj == 0.0 {
                            continue;
                        }
                        let wr = &w[j * d_in..(j + 1) * d_in];
                        for k in 0..d_in {
                            nrow[k] += dj * wr[k];
                        }
                    }
                    // Rectifier gate: activation 0 means the unit was off.
                    for (nk, ak) in nrow.iter_mut().zip(arow.iter()) {
                        if *ak <= 0.0 {
                            *nk = 0.0;
                        }
                    }
                }
                delta = next;
            }
        }
    }

    /// Single-row convenience evaluation.
    pub fn predict_row(&self, features: &[f64]) -> f64 {
        let cache = self.forward_batch(features, 1);
        self.outputs(&cache)[0]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Flat parameter indexing: all weight tensors, then all bias vectors.
    pub fn get_param(&self, idx: usize) -> f64 {
        let mut i = idx;
        for w in &self.weights {
            if i < w.len() {
                return w[i];
            }
            i -= w.len();
        }
        for b in &self.biases {
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("parameter index {idx} out of range");
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let mut i = idx;
        for w in &mut self.weights {
            if i < w.len() {
                w[i] = value;
                return;
            }
            i -= w.len();
        }
        for b in &mut self.biases {
            if i < b.len() {
                b[i] = value;
                return;
            }
            i -= b.len();
        }
        panic!("parameter index {idx} out of range");
    }

    pub fn grad_param(grads: &Grads, idx: usize) -> f64 {
        let mut i = idx;
        for w in &grads.weights {
            if i < w.len() {
                return w[i];
            }
            i -= w.len();
        }
        for b in &grads.biases {
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("parameter index {idx} out of range");
    }

    /// Serialize to the versioned checkpoint format.
    pub fn to_checkpoint(&self) -> String {
        let doc = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            model: self.clone(),
        };
        serde_json::to_string(&doc).expect("checkpoint serializes")
    }

    pub fn from_checkpoint(text: &str) -> Result<MlpPredictor> {
        let doc: Checkpoint = serde_json::from_str(text)?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidCheckpoint(format!(
                "unsupported format `{}`",
                doc.format
            )));
        }
        let m = doc.model;
        let expected: Vec<usize> = (0..m.dims.len() - 1).map(|l| m.dims[l] * m.dims[l + 1]).collect();
        let actual: Vec<usize> = m.weights.iter().map(|w| w.len()).collect();
        if expected != actual {
            return Err(Error::InvalidCheckpoint(
                "weight shapes do not match layer dims".to_string(),
            ));
        }
        Ok(m)
    }
}

const CHECKPOINT_FORMAT: &str = "mlp-checkpoint/v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    model: MlpPredictor,
}

/// Adaptive-moment gradient descent state over a flat parameter group.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &MlpPredictor, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m_w: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn step(&mut self, model: &mut MlpPredictor, grads: &Grads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (beta1, beta2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                p[k] -= lr * mh / (vh.sqrt() + eps);
            }
        };
        for l in 0..model.weights.len() {
            update(
                &mut model.weights[l],
                &grads.weights[l],
                &mut self.m_w[l],
                &mut self.v_w[l],
            );
            update(
                &mut model.biases[l],
                &grads.biases[l],
                &mut self.m_b[l],
                &mut self.v_b[l],
            );
        }
    }
}
