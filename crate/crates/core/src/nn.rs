//! Small dense networks with ReLU hidden layers, analytic backpropagation and
//! Adam.
//!
//! Parameters live in one flat vector. Layer `l` maps `dims[l]` inputs to
//! `dims[l+1]` outputs and occupies `dims[l+1]·dims[l]` row-major weights
//! followed by `dims[l+1]` biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Head {
    Softmax,
    Sigmoid,
    Identity,
}

impl Head {
    pub fn code(self) -> u8 {
        match self {
            Head::Softmax => 0,
            Head::Sigmoid => 1,
            Head::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Head::Softmax),
            1 => Some(Head::Sigmoid),
            2 => Some(Head::Identity),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpNet {
    dims: Vec<usize>,
    head: Head,
    params: Vec<f64>,
}

/// Intermediate values kept by [`MlpNet::forward`] for [`MlpNet::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer (post-ReLU for hidden layers).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl MlpNet {
    /// Weights and biases drawn from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], head: Head, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims, head)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let len = w[1] * w[0] + w[1];
            for p in &mut net.params[offset..offset + len] {
                *p = rng.random_range(-bound..bound);
            }
            offset += len;
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize], head: Head) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidModel(format!("bad layer dims {dims:?}")));
        }
        Ok(Self { dims: dims.to_vec(), head, params: vec![0.0; param_count(dims)] })
    }

    pub fn from_params(dims: &[usize], head: Head, params: Vec<f64>) -> Result<Self> {
        let net = Self::zeros(dims, head)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch { expected: net.params.len(), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        Ok(Self { params, ..net })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.dims.windows(2).scan(0, |offset, w| {
            let start = *offset;
            *offset += w[1] * w[0] + w[1];
            Some((start, w[0], w[1]))
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let n_layers = self.dims.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut a = x.to_vec();
        for (l, (offset, fan_in, fan_out)) in self.layers().enumerate() {
            let w = &self.params[offset..offset + fan_out * fan_in];
            let b = &self.params[offset + fan_out * fan_in..offset + fan_out * fan_in + fan_out];
            let z: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>() + b[o]
                })
                .collect();
            let next = if l + 1 < n_layers {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                apply_head(self.head, &z)
            };
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        let cache = ForwardCache { inputs, pre, output: a.clone() };
        Ok((a, cache))
    }

    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Gradient of `output · output_grad` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<Vec<f64>> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch { expected: self.output_dim(), got: output_grad.len() });
        }
        if cache.inputs.len() != self.dims.len() - 1 || cache.output.len() != self.output_dim() {
            return Err(Error::DimensionMismatch { expected: self.dims.len() - 1, got: cache.inputs.len() });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut g = head_vjp(self.head, &cache.output, output_grad);
        let layers: Vec<_> = self.layers().collect();
        for (l, &(offset, fan_in, fan_out)) in layers.iter().enumerate().rev() {
            let a = &cache.inputs[l];
            let (gw, gb) = grads[offset..offset + fan_out * fan_in + fan_out].split_at_mut(fan_out * fan_in);
            for o in 0..fan_out {
                let go = g[o];
                gb[o] = go;
                if go != 0.0 {
                    for (gwi, ai) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(a) {
                        *gwi = go * ai;
                    }
                }
            }
            if l > 0 {
                let w = &self.params[offset..offset + fan_out * fan_in];
                let z_prev = &cache.pre[l - 1];
                let mut g_prev = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let go = g[o];
                    if go == 0.0 {
                        continue;
                    }
                    for (gp, wi) in g_prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *gp += go * wi;
                    }
                }
                for (gp, &z) in g_prev.iter_mut().zip(z_prev) {
                    if z <= 0.0 {
                        *gp = 0.0;
                    }
                }
                g = g_prev;
            }
        }
        Ok(grads)
    }
}

fn apply_head(head: Head, z: &[f64]) -> Vec<f64> {
    match head {
        Head::Identity => z.to_vec(),
        Head::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
        Head::Softmax => {
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
            let total: f64 = e.iter().sum();
            e.into_iter().map(|v| v / total).collect()
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Pulls an output-space gradient back through the head to pre-activations.
fn head_vjp(head: Head, y: &[f64], g: &[f64]) -> Vec<f64> {
    match head {
        Head::Identity => g.to_vec(),
        Head::Sigmoid => y.iter().zip(g).map(|(&s, &gi)| gi * s * (1.0 - s)).collect(),
        Head::Softmax => {
            let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
            y.iter().zip(g).map(|(&yi, &gi)| yi * (gi - dot)).collect()
        }
    }
}

/// Adam moments and hyperparameters for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &MlpNet, lr: f64) -> Self {
        let n = net.params.len();
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

const TINY: f64 = 1e-200;

/// Bias-corrected Adam update; `ascend` adds the step instead of subtracting it.
pub fn adam_step(net: &mut MlpNet, grads: &[f64], opt: &mut AdamState, ascend: bool) -> Result<()> {
    let n = net.params.len();
    if grads.len() != n || opt.m.len() != n || opt.v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: grads.len() });
    }
    opt.step += 1;
    let t = opt.step as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);
    let sign = if ascend { 1.0 } else { -1.0 };
    for ((p, &g), (m, v)) in net.params.iter_mut().zip(grads).zip(opt.m.iter_mut().zip(opt.v.iter_mut())) {
        *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
        *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
        // Moments of dead units decay geometrically into subnormals, which are
        // very slow to compute with and contribute nothing to the step.
        if m.abs() < TINY {
            *m = 0.0;
        }
        if *v < TINY {
            *v = 0.0;
        }
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p += sign * opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
    }
    Ok(())
}
