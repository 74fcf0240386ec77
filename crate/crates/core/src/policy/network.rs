use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::ObservationFrame;
use crate::env::Controller;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("observation has {got} values, network expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Dense tanh network; the output layer is linear.
///
/// Parameters are one flat vector, layer by layer: the weight matrix
/// (row-major, `out x in`) followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Per-layer inputs recorded by a forward pass, reused by backprop.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    layers: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self { sizes: sizes.to_vec(), params: vec![0.0; Self::param_count(sizes)] }
    }

    /// Gaussian weights with std `1/sqrt(fan_in)`; the last layer is further
    /// scaled by `output_gain`. Biases start at zero.
    pub fn init(sizes: &[usize], output_gain: f64, rng: &mut impl Rng) -> Self {
        let mut params = Vec::with_capacity(Self::param_count(sizes));
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = if l + 1 == layers { output_gain } else { 1.0 };
            let std = gain / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = StandardNormal.sample(rng);
                params.push(z * std);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { sizes: sizes.to_vec(), params }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn forward_into(&self, x: &[f64], acts: &mut Activations) {
        let n_layers = self.sizes.len() - 1;
        acts.layers.resize_with(n_layers, Vec::new);
        acts.layers[0].clear();
        acts.layers[0].extend_from_slice(x);
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let input = &acts.layers[l];
            let mut out = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z = b[o] + dot(row, input);
                out.push(if l + 1 < n_layers { z.tanh() } else { z });
            }
            if l + 1 < n_layers {
                acts.layers[l + 1] = out;
            } else {
                acts.output = out;
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut acts = Activations::default();
        self.forward_into(x, &mut acts);
        acts.output
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given `d(loss)/d(output)`.
    pub fn backward(&self, acts: &Activations, d_out: &[f64], grad: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            offsets.push(offset);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &acts.layers[l];
            {
                let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for o in 0..fan_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, x) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wv) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *p += d * wv;
                }
            }
            // the layer input is tanh of the previous pre-activation
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Gaussian policy (mean network plus state-independent log std) and a
/// separate value network of the same topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub schema_name: String,
    /// Inputs are normalized as `(obs - obs_offset) * obs_scale`.
    pub obs_offset: Vec<f64>,
    pub obs_scale: Vec<f64>,
    pub mu: Mlp,
    pub log_sigma: Vec<f64>,
    pub value: Mlp,
}

impl PolicyParams {
    pub fn new(
        schema_name: impl Into<String>,
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        init_log_sigma: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let mut vsizes = sizes.clone();
        sizes.push(act_dim);
        vsizes.push(1);
        Self {
            schema_name: schema_name.into(),
            obs_offset: vec![0.0; obs_dim],
            obs_scale: vec![1.0; obs_dim],
            mu: Mlp::init(&sizes, 0.01, rng),
            log_sigma: vec![init_log_sigma; act_dim],
            value: Mlp::init(&vsizes, 1.0, rng),
        }
    }

    pub fn zeros(schema_name: impl Into<String>, obs_dim: usize, act_dim: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let mut vsizes = sizes.clone();
        sizes.push(act_dim);
        vsizes.push(1);
        Self {
            schema_name: schema_name.into(),
            obs_offset: vec![0.0; obs_dim],
            obs_scale: vec![1.0; obs_dim],
            mu: Mlp::zeros(&sizes),
            log_sigma: vec![0.0; act_dim],
            value: Mlp::zeros(&vsizes),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mu.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.mu.output_dim()
    }

    pub fn normalize(&self, obs: &[f64]) -> Result<Vec<f64>, PolicyError> {
        if obs.len() != self.obs_dim() {
            return Err(PolicyError::Dimension { expected: self.obs_dim(), got: obs.len() });
        }
        Ok(obs.iter().zip(&self.obs_offset).zip(&self.obs_scale).map(|((o, c), s)| (o - c) * s).collect())
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|l| l.exp()).collect()
    }

    pub fn value_of(&self, obs: &[f64]) -> Result<f64, PolicyError> {
        Ok(self.value.forward(&self.normalize(obs)?)[0])
    }

    // Flat layout shared with gradients and the optimizer: mu | log_sigma | value.

    pub fn param_count(&self) -> usize {
        self.mu.params.len() + self.log_sigma.len() + self.value.params.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.mu.params);
        v.extend_from_slice(&self.log_sigma);
        v.extend_from_slice(&self.value.params);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let (a, rest) = flat.split_at(self.mu.params.len());
        let (b, c) = rest.split_at(self.log_sigma.len());
        self.mu.params.copy_from_slice(a);
        self.log_sigma.copy_from_slice(b);
        self.value.params.copy_from_slice(c);
    }

    pub fn is_finite(&self) -> bool {
        self.mu.params.iter().chain(&self.log_sigma).chain(&self.value.params).all(|v| v.is_finite())
    }

    /// Greedy action: the Gaussian mean.
    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>, PolicyError> {
        Ok(self.mu.forward(&self.normalize(obs)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint { version: CHECKPOINT_VERSION, policy: self.clone() })
            .expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(PolicyError::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        let p = ck.policy;
        let ok = Mlp::param_count(&p.mu.sizes) == p.mu.params.len()
            && Mlp::param_count(&p.value.sizes) == p.value.params.len()
            && p.log_sigma.len() == p.mu.output_dim()
            && p.obs_offset.len() == p.obs_dim()
            && p.obs_scale.len() == p.obs_dim()
            && p.value.input_dim() == p.obs_dim()
            && p.value.output_dim() == 1;
        if !ok {
            return Err(PolicyError::Checkpoint("inconsistent layer shapes".into()));
        }
        if !p.is_finite() {
            return Err(PolicyError::Checkpoint("non-finite parameters".into()));
        }
        Ok(p)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    version: u32,
    policy: PolicyParams,
}

/// Mean and standard deviation of the action distribution at `obs`.
pub fn policy_forward(params: &PolicyParams, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), PolicyError> {
    Ok((params.mean_action(obs)?, params.sigma()))
}

/// Diagonal Gaussian log density.
pub fn log_prob(mu: &[f64], sigma: &[f64], action: &[f64]) -> f64 {
    mu.iter()
        .zip(sigma)
        .zip(action)
        .map(|((m, s), a)| -(s * (2.0 * PI).sqrt()).ln() - (a - m) * (a - m) / (2.0 * s * s))
        .sum()
}

impl Controller for PolicyParams {
    fn act(&self, frame: &ObservationFrame) -> f64 {
        self.mean_action(frame.as_slice()).map(|a| a[0]).unwrap_or(0.0)
    }
}
