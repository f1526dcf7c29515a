//! Sinusoidal coordinate MLP: parameters, initialization, batched forward
//! pass with cache, and reverse-mode backward pass.
//!
//! Architecture is fixed at 2 -> 128 x5 -> 2. Every hidden layer computes
//! sin(w0 (W a + b)); the output layer is affine.

use crate::error::{Error, Result};
use crate::Real;
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INPUT_DIM: usize = 2;
pub const OUTPUT_DIM: usize = 2;
pub const HIDDEN_WIDTH: usize = 128;
pub const N_SINE_LAYERS: usize = 5;

/// One affine layer; weight shape (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.weight.nrows(), other.weight.ncols())
    }
}

/// Full parameter set of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<DenseLayer<T>>,
    /// Frequency scale applied inside every sine activation.
    pub w0: T,
}

impl<T: Real> MlpParams<T> {
    pub fn layer_dims() -> Vec<(usize, usize)> {
        let mut dims = vec![(HIDDEN_WIDTH, INPUT_DIM)];
        for _ in 1..N_SINE_LAYERS {
            dims.push((HIDDEN_WIDTH, HIDDEN_WIDTH));
        }
        dims.push((OUTPUT_DIM, HIDDEN_WIDTH));
        dims
    }

    pub fn validate(&self) -> Result<()> {
        let dims = Self::layer_dims();
        if self.layers.len() != dims.len() {
            return Err(Error::Shape(format!(
                "expected {} layers, got {}",
                dims.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, (out, inp))) in self.layers.iter().zip(dims).enumerate() {
            if layer.weight.dim() != (out, inp) || layer.bias.len() != out {
                return Err(Error::Shape(format!("layer {i} has wrong shape")));
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: l.weight.mapv(|v| U::c(v.to_f64().unwrap())),
                    bias: l.bias.mapv(|v| U::c(v.to_f64().unwrap())),
                })
                .collect(),
            w0: U::c(self.w0.to_f64().unwrap()),
        }
    }

    pub fn n_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }
}

/// Sinusoidal-network initialization: first layer uniform on
/// [-1/in, 1/in], deeper weights uniform on [-sqrt(6/in)/w0, sqrt(6/in)/w0],
/// biases uniform on [-1/sqrt(in), 1/sqrt(in)]. Deterministic per seed.
pub fn init_siren<T: Real>(seed: u64, w0: T) -> MlpParams<T> {
    assert!(w0 > T::zero(), "w0 must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |limit: f64| -> T { T::c((rng.gen::<f64>() * 2.0 - 1.0) * limit) };
    let mut layers = Vec::new();
    for (li, (out, inp)) in MlpParams::<T>::layer_dims().into_iter().enumerate() {
        let w_limit = if li == 0 {
            1.0 / inp as f64
        } else {
            (6.0 / inp as f64).sqrt() / w0.to_f64().unwrap()
        };
        let b_limit = 1.0 / (inp as f64).sqrt();
        let mut layer = DenseLayer::zeros(out, inp);
        for v in layer.weight.iter_mut() {
            *v = uniform(w_limit);
        }
        for v in layer.bias.iter_mut() {
            *v = uniform(b_limit);
        }
        layers.push(layer);
    }
    MlpParams { layers, w0 }
}

/// Pre-activations of the sine layers, kept for the backward pass.
pub struct ForwardCache<T> {
    pub input: Array2<T>,
    /// z_i = w0 (W_i a_i + b_i) for each sine layer.
    pub zs: Vec<Array2<T>>,
}

/// Batched forward pass over points given as rows of an (n, 2) array.
pub fn forward_cached<T: Real>(
    params: &MlpParams<T>,
    points: &Array2<T>,
) -> (Array2<T>, ForwardCache<T>) {
    let w0 = params.w0;
    let mut a = points.clone();
    let mut zs = Vec::with_capacity(N_SINE_LAYERS);
    for layer in &params.layers[..N_SINE_LAYERS] {
        let mut z = a.dot(&layer.weight.t());
        z += &layer.bias;
        z.mapv_inplace(|u| u * w0);
        a = z.mapv(T::sin);
        zs.push(z);
    }
    let last = &params.layers[N_SINE_LAYERS];
    let mut out = a.dot(&last.weight.t());
    out += &last.bias;
    (
        out,
        ForwardCache {
            input: points.clone(),
            zs,
        },
    )
}

/// Forward pass without gradient bookkeeping.
pub fn forward<T: Real>(params: &MlpParams<T>, points: &Array2<T>) -> Array2<T> {
    let w0 = params.w0;
    let mut a = points.clone();
    for layer in &params.layers[..N_SINE_LAYERS] {
        let mut z = a.dot(&layer.weight.t());
        z += &layer.bias;
        a = z.mapv(|u| (u * w0).sin());
    }
    let last = &params.layers[N_SINE_LAYERS];
    let mut out = a.dot(&last.weight.t());
    out += &last.bias;
    out
}

/// Parameter gradients, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct MlpGrad<T> {
    pub layers: Vec<DenseLayer<T>>,
}

impl<T: Real> MlpGrad<T> {
    pub fn zeros_like(params: &MlpParams<T>) -> Self {
        Self {
            layers: params.layers.iter().map(DenseLayer::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, s: T) {
        for l in self.layers.iter_mut() {
            l.weight.mapv_inplace(|v| v * s);
            l.bias.mapv_inplace(|v| v * s);
        }
    }

    /// Flattened view for optimizer-agnostic inspection.
    pub fn iter_values(&self) -> impl Iterator<Item = T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }
}

/// Accumulate gradients of a batch into `grad` given the output
/// sensitivities `d_out` (n, 2).
pub fn backward<T: Real>(
    params: &MlpParams<T>,
    cache: &ForwardCache<T>,
    d_out: &Array2<T>,
    grad: &mut MlpGrad<T>,
) {
    let w0 = params.w0;
    let a_last = cache.zs[N_SINE_LAYERS - 1].mapv(T::sin);
    let last = &params.layers[N_SINE_LAYERS];
    grad.layers[N_SINE_LAYERS].weight += &d_out.t().dot(&a_last);
    grad.layers[N_SINE_LAYERS].bias += &d_out.sum_axis(Axis(0));
    let mut d_a = d_out.dot(&last.weight);
    for i in (0..N_SINE_LAYERS).rev() {
        // dL/du_i where u_i = W a + b and z = w0 u
        let mut du = cache.zs[i].mapv(T::cos);
        du *= &d_a;
        du.mapv_inplace(|v| v * w0);
        let a_in = if i == 0 {
            cache.input.clone()
        } else {
            cache.zs[i - 1].mapv(T::sin)
        };
        grad.layers[i].weight += &du.t().dot(&a_in);
        grad.layers[i].bias += &du.sum_axis(Axis(0));
        if i > 0 {
            d_a = du.dot(&params.layers[i].weight);
        }
    }
}

/// Adam moment accumulators.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<DenseLayer<T>>,
    v: Vec<DenseLayer<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &MlpParams<T>) -> Self {
        Self {
            m: params.layers.iter().map(DenseLayer::zeros_like).collect(),
            v: params.layers.iter().map(DenseLayer::zeros_like).collect(),
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected Adam update; `step` is 1-based.
pub fn adam_update<T: Real>(
    params: &mut MlpParams<T>,
    grad: &MlpGrad<T>,
    state: &mut AdamState<T>,
    step: usize,
    learning_rate: T,
) {
    let b1 = T::c(ADAM_BETA1);
    let b2 = T::c(ADAM_BETA2);
    let eps = T::c(ADAM_EPS);
    let t = step as i32;
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for (li, layer) in params.layers.iter_mut().enumerate() {
        let g = &grad.layers[li];
        let m = &mut state.m[li];
        let v = &mut state.v[li];
        for ((p, gv), (mv, vv)) in layer
            .weight
            .iter_mut()
            .chain(layer.bias.iter_mut())
            .zip(g.weight.iter().chain(g.bias.iter()))
            .zip(
                m.weight
                    .iter_mut()
                    .chain(m.bias.iter_mut())
                    .zip(v.weight.iter_mut().chain(v.bias.iter_mut())),
            )
        {
            *mv = b1 * *mv + (T::one() - b1) * *gv;
            *vv = b2 * *vv + (T::one() - b2) * *gv * *gv;
            let mhat = *mv / c1;
            let vhat = *vv / c2;
            *p = *p - learning_rate * mhat / (vhat.sqrt() + eps);
        }
    }
}
