//! Dense feed-forward networks with hand-rolled exact backpropagation and an
//! Adam optimizer. Everything is `f64`; gradient correctness is enforced by
//! finite-difference checks in the tests.

use serde::{Deserialize, Serialize};

use crate::market::Sampler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn forward(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            // Clamped to the open interval so saturated inputs keep a live
            // gradient and the output contract (0, 1) holds in floats.
            Activation::Sigmoid => {
                (1.0 / (1.0 + (-z).exp())).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
            }
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn grad_from_output(&self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer; weights are row-major `(out_dim, in_dim)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Per-layer post-activation outputs of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    pub outputs: Vec<Vec<f64>>,
}

/// Parameter gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_weights: Vec<Vec<f64>>,
    pub d_biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            d_weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            d_biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for w in &mut self.d_weights {
            w.fill(0.0);
        }
        for b in &mut self.d_biases {
            b.fill(0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.d_weights {
            for v in w.iter_mut() {
                *v *= s;
            }
        }
        for b in &mut self.d_biases {
            for v in b.iter_mut() {
                *v *= s;
            }
        }
    }
}

impl Mlp {
    /// He-style random initialization: `sizes` runs input to output,
    /// `hidden` activates every layer but the last, which uses `output`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, sampler: &mut Sampler) -> Self {
        assert!(sizes.len() >= 2, "network needs input and output sizes");
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for i in 0..sizes.len() - 1 {
            let (in_dim, out_dim) = (sizes[i], sizes[i + 1]);
            let last = i == sizes.len() - 2;
            let scale = (2.0 / in_dim as f64).sqrt();
            let weights = (0..in_dim * out_dim)
                .map(|_| sampler.standard_normal() * scale)
                .collect();
            layers.push(Layer {
                in_dim,
                out_dim,
                weights,
                biases: vec![0.0; out_dim],
                activation: if last { output } else { hidden },
            });
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().expect("non-empty").in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Deterministic forward pass.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut cache = ForwardCache::default();
        self.forward_cached(input, &mut cache);
        cache.outputs.pop().expect("at least one layer")
    }

    pub fn forward_cached(&self, input: &[f64], cache: &mut ForwardCache) {
        assert_eq!(input.len(), self.input_dim(), "input size mismatch");
        cache.outputs.clear();
        let mut current: &[f64] = input;
        for layer in &self.layers {
            let mut out = vec![0.0; layer.out_dim];
            for o in 0..layer.out_dim {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let mut z = layer.biases[o];
                for (w, x) in row.iter().zip(current) {
                    z += w * x;
                }
                out[o] = layer.activation.forward(z);
            }
            cache.outputs.push(out);
            current = cache.outputs.last().unwrap();
        }
    }

    /// Exact reverse-mode gradients for one sample. `upstream` is
    /// `dL/d(output)`; parameter gradients are accumulated into `grads`
    /// (callers zero them per batch) and `dL/d(input)` is returned.
    pub fn backward(
        &self,
        input: &[f64],
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Vec<f64> {
        assert_eq!(upstream.len(), self.output_dim(), "upstream size mismatch");
        assert_eq!(cache.outputs.len(), self.layers.len(), "stale forward cache");

        let mut delta: Vec<f64> = upstream.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let outputs = &cache.outputs[idx];
            // dL/dz = dL/dy * act'(z), with act' taken from the output.
            for (d, y) in delta.iter_mut().zip(outputs) {
                *d *= layer.activation.grad_from_output(*y);
            }
            let layer_input: &[f64] = if idx == 0 {
                input
            } else {
                &cache.outputs[idx - 1]
            };
            let dw = &mut grads.d_weights[idx];
            let db = &mut grads.d_biases[idx];
            for o in 0..layer.out_dim {
                let d = delta[o];
                db[o] += d;
                let row = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, x) in row.iter_mut().zip(layer_input) {
                    *g += d * x;
                }
            }
            if idx == 0 {
                let mut d_input = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (di, w) in d_input.iter_mut().zip(row) {
                        *di += d * w;
                    }
                }
                return d_input;
            }
            let mut next_delta = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let d = delta[o];
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (nd, w) in next_delta.iter_mut().zip(row) {
                    *nd += d * w;
                }
            }
            delta = next_delta;
        }
        unreachable!("loop returns at layer 0");
    }

    /// Flatten all parameters (weights then biases per layer) into one vector.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn load_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "parameter count mismatch");
        let mut at = 0;
        for l in &mut self.layers {
            let wn = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + wn]);
            at += wn;
            let bn = l.biases.len();
            l.biases.copy_from_slice(&flat[at..at + bn]);
            at += bn;
        }
    }

    /// Polyak soft update: `self = coeff * source + (1 - coeff) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, coeff: f64) {
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            for (d, s) in dst.weights.iter_mut().zip(&src.weights) {
                *d += coeff * (s - *d);
            }
            for (d, s) in dst.biases.iter_mut().zip(&src.biases) {
                *d += coeff * (s - *d);
            }
        }
    }

    pub fn max_abs_param_diff(&self, other: &Mlp) -> f64 {
        let mut max = 0.0f64;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                max = max.max((x - y).abs());
            }
            for (x, y) in a.biases.iter().zip(&b.biases) {
                max = max.max((x - y).abs());
            }
        }
        max
    }
}

/// Adam with the standard bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
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
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m_w: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            v_w: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            m_b: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
            v_b: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    /// Descend along `grads` (negate the gradient before calling to ascend).
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, layer) in net.layers.iter_mut().enumerate() {
            Self::update_slice(
                &mut layer.weights,
                &grads.d_weights[i],
                &mut self.m_w[i],
                &mut self.v_w[i],
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
            Self::update_slice(
                &mut layer.biases,
                &grads.d_biases[i],
                &mut self.m_b[i],
                &mut self.v_b[i],
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn update_slice(
        params: &mut [f64],
        grads: &[f64],
        m: &mut [f64],
        v: &mut [f64],
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        bc1: f64,
        bc2: f64,
    ) {
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
