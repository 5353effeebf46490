//! Neural Lyapunov candidates `v(x) = φ(x)ᵀφ(x)`.
//!
//! `φ` is a bias-free feedforward net whose layer weights are built as
//! `W = [GᵀG + εI ; H]`. The top block is positive definite, so every layer
//! has a trivial nullspace and with a zero-preserving injective activation
//! `v` is positive definite.

mod codec;
mod train;

pub use codec::{decode, encode, MAGIC, VERSION};
pub use train::{train, TrainConfig, TrainOutcome};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certificate::{LyapunovCandidate, StepLipschitz, StepMap};
use crate::linalg::{self, Matrix};
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-2;
pub const LEAKY_SLOPE: f64 = 0.1;

/// Largest `|σ''|` of `tanh`, reached at `atanh(1/√3)`.
const TANH_CURVATURE: f64 = 0.769_800_358_919_501;

/// Elementwise activation. All variants fix 0, are injective and 1-Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    /// `max(x, 0.1x)`.
    LeakyRelu,
    Linear,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::Tanh => 0,
            Activation::LeakyRelu => 1,
            Activation::Linear => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::LeakyRelu),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Linear => "linear",
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(z),
            Activation::LeakyRelu => {
                if z >= 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Linear => z,
        }
    }

    /// Derivative given the pre-activation `z` and the output `h`.
    #[inline]
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::LeakyRelu => {
                if z >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Linear => 1.0,
        }
    }

    /// Lipschitz constant of the derivative; `None` when the derivative jumps.
    fn curvature(self) -> Option<f64> {
        match self {
            Activation::Tanh => Some(TANH_CURVATURE),
            Activation::LeakyRelu => None,
            Activation::Linear => Some(0.0),
        }
    }
}

/// Structured positive-definite feedforward net.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovNet {
    dims: Vec<usize>,
    epsilon: f64,
    activation: Activation,
    params: Vec<f64>,
    weights: Vec<Matrix>,
}

/// Gradients of `v` at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradient {
    pub value: f64,
    /// Same layout as [`LyapunovNet::params`].
    pub params: Vec<f64>,
    pub state: Vec<f64>,
}

fn layer_param_count(d_in: usize, d_out: usize) -> usize {
    d_in * d_in + (d_out - d_in) * d_in
}

/// Number of raw parameters for `dims`.
pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| layer_param_count(w[0], w[1])).sum()
}

fn check_dims(dims: &[usize], epsilon: f64) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::invalid("layer_dims", "need an input and at least one layer"));
    }
    if dims[0] == 0 {
        return Err(Error::invalid("layer_dims", "input dimension must be positive"));
    }
    if let Some(i) = dims.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::invalid(
            "layer_dims",
            format!("layer {} shrinks from {} to {}", i + 1, dims[i], dims[i + 1]),
        ));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid("epsilon", "must be positive and finite"));
    }
    Ok(())
}

impl LyapunovNet {
    /// Seeded initialization: every raw parameter of layer `ℓ` is uniform in
    /// `±1/√d_{ℓ−1}`.
    pub fn init(dims: &[usize], epsilon: f64, activation: Activation, seed: u64) -> Result<Self> {
        check_dims(dims, epsilon)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(dims));
        for w in dims.windows(2) {
            let bound = 1.0 / libm::sqrt(w[0] as f64);
            for _ in 0..layer_param_count(w[0], w[1]) {
                params.push(rng.gen_range(-bound..=bound));
            }
        }
        LyapunovNet::from_params(dims, epsilon, activation, params)
    }

    pub fn from_params(dims: &[usize], epsilon: f64, activation: Activation, params: Vec<f64>) -> Result<Self> {
        check_dims(dims, epsilon)?;
        if params.len() != param_count(dims) {
            return Err(Error::dim(format!(
                "{} parameters for dims {:?}, expected {}",
                params.len(),
                dims,
                param_count(dims)
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("params", "must be finite"));
        }
        let mut net = LyapunovNet {
            dims: dims.to_vec(),
            epsilon,
            activation,
            params,
            weights: Vec::new(),
        };
        net.rebuild();
        Ok(net)
    }

    fn rebuild(&mut self) {
        let mut weights = Vec::with_capacity(self.dims.len() - 1);
        let mut off = 0;
        for w in self.dims.windows(2) {
            let (d_in, d_out) = (w[0], w[1]);
            let g = Matrix::from_row_slice(d_in, d_in, &self.params[off..off + d_in * d_in]);
            off += d_in * d_in;
            let extra = (d_out - d_in) * d_in;
            let h = Matrix::from_row_slice(d_out - d_in, d_in, &self.params[off..off + extra]);
            off += extra;
            let mut top = g.transpose() * &g;
            for i in 0..d_in {
                top[(i, i)] += self.epsilon;
            }
            let mut wm = Matrix::zeros(d_out, d_in);
            wm.view_mut((0, 0), (d_in, d_in)).copy_from(&top);
            wm.view_mut((d_in, 0), (d_out - d_in, d_in)).copy_from(&h);
            weights.push(wm);
        }
        self.weights = weights;
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Raw parameters: per layer, `G` then `H`, both row-major.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::dim("parameter vector length changed"));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("params", "must be finite"));
        }
        self.params.copy_from_slice(params);
        self.rebuild();
        Ok(())
    }

    /// Effective layer weights `W_ℓ`.
    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    /// Feature map `φ(x)`.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for w in &self.weights {
            let mut z = vec![0.0; w.nrows()];
            linalg::mat_vec(w, &h, &mut z);
            for v in z.iter_mut() {
                *v = self.activation.apply(*v);
            }
            h = z;
        }
        h
    }

    /// `v(x) = φ(x)ᵀφ(x)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.features(x).iter().map(|v| v * v).sum()
    }

    /// Adds `scale · ∂v/∂W_ℓ` into `acc` and returns `(v, ∂v/∂x)`.
    pub(crate) fn backprop(&self, x: &[f64], scale: f64, acc: Option<&mut [Matrix]>) -> (f64, Vec<f64>) {
        let layers = self.weights.len();
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers);
        inputs.push(x.to_vec());
        for w in &self.weights {
            let mut z = vec![0.0; w.nrows()];
            linalg::mat_vec(w, inputs.last().expect("non-empty"), &mut z);
            let h: Vec<f64> = z.iter().map(|&v| self.activation.apply(v)).collect();
            pre.push(z);
            inputs.push(h);
        }
        let out = &inputs[layers];
        let value = out.iter().map(|v| v * v).sum();
        let mut grad_h: Vec<f64> = out.iter().map(|v| 2.0 * v).collect();
        let mut acc = acc;
        for l in (0..layers).rev() {
            let w = &self.weights[l];
            let delta: Vec<f64> = grad_h
                .iter()
                .zip(&pre[l])
                .zip(&inputs[l + 1])
                .map(|((g, &z), &h)| g * self.activation.derivative(z, h))
                .collect();
            if let Some(acc) = acc.as_deref_mut() {
                let h_in = &inputs[l];
                let a = &mut acc[l];
                for i in 0..w.nrows() {
                    let di = scale * delta[i];
                    if di != 0.0 {
                        for j in 0..w.ncols() {
                            a[(i, j)] += di * h_in[j];
                        }
                    }
                }
            }
            let mut next = vec![0.0; w.ncols()];
            for j in 0..w.ncols() {
                next[j] = (0..w.nrows()).map(|i| w[(i, j)] * delta[i]).sum();
            }
            grad_h = next;
        }
        (value, grad_h)
    }

    /// Zero matrices shaped like the layer weights.
    pub(crate) fn zero_weight_grads(&self) -> Vec<Matrix> {
        self.weights
            .iter()
            .map(|w| Matrix::zeros(w.nrows(), w.ncols()))
            .collect()
    }

    /// Chains weight-space gradients back to raw parameters:
    /// `∂/∂G = G(S + Sᵀ)` for the top-block gradient `S`, `∂/∂H` unchanged.
    pub(crate) fn weight_grads_to_params(&self, grads: &[Matrix]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.params.len());
        let mut off = 0;
        for (l, w) in self.dims.windows(2).enumerate() {
            let (d_in, d_out) = (w[0], w[1]);
            let g = Matrix::from_row_slice(d_in, d_in, &self.params[off..off + d_in * d_in]);
            off += d_in * d_in + (d_out - d_in) * d_in;
            let s = grads[l].view((0, 0), (d_in, d_in)).into_owned();
            let dg = &g * (&s + s.transpose());
            for i in 0..d_in {
                for j in 0..d_in {
                    out.push(dg[(i, j)]);
                }
            }
            for i in d_in..d_out {
                for j in 0..d_in {
                    out.push(grads[l][(i, j)]);
                }
            }
        }
        out
    }

    /// Exact reverse-mode gradient of `v` at `x`.
    pub fn gradient(&self, x: &[f64]) -> NetGradient {
        let mut acc = self.zero_weight_grads();
        let (value, state) = self.backprop(x, 1.0, Some(&mut acc));
        NetGradient {
            value,
            params: self.weight_grads_to_params(&acc),
            state,
        }
    }

    /// Spectral norms `‖W_ℓ‖₂`.
    pub fn layer_norms(&self) -> Vec<f64> {
        self.weights.iter().map(linalg::spectral_norm).collect()
    }
}

/// Lipschitz bound of `Δv` over a ball of radius `rho` around the origin,
/// given the layer spectral norms.
///
/// For smooth activations, with `Lφ = Π‖W_ℓ‖`, `L_J` the Lipschitz constant
/// of the feature Jacobian, `L_s`/`L_d` the step and increment constants:
/// `2·L_d·Lφ·ρ·(Lφ(L_s + 1) + L_J·max(1, L_s)·ρ)`. Activations with a jumping
/// derivative fall back to `2·Lφ²·(L_s² + 1)·ρ`.
pub fn lipschitz_from_norms(activation: Activation, norms: &[f64], step: StepLipschitz, rho: f64) -> f64 {
    let lphi: f64 = norms.iter().product();
    match activation.curvature() {
        Some(c2) => {
            let mut prefix = 1.0;
            let mut sum_prefix = 0.0;
            for &s in norms {
                prefix *= s;
                sum_prefix += prefix;
            }
            let l_jac = c2 * lphi * sum_prefix;
            2.0 * step.increment * lphi * rho * (lphi * (step.map + 1.0) + l_jac * step.map.max(1.0) * rho)
        }
        None => 2.0 * lphi * lphi * (step.map * step.map + 1.0) * rho,
    }
}

/// Partial derivatives of [`lipschitz_from_norms`] with respect to each norm.
pub(crate) fn lipschitz_norm_sensitivity(
    activation: Activation,
    norms: &[f64],
    step: StepLipschitz,
    rho: f64,
) -> Vec<f64> {
    let k = norms.len();
    let lphi: f64 = norms.iter().product();
    // Products with one factor removed avoid dividing by a zero norm.
    let without = |j: usize| -> f64 {
        norms
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != j)
            .map(|(_, s)| s)
            .product()
    };
    match activation.curvature() {
        Some(c2) => {
            let a = step.map + 1.0;
            let b = c2 * step.map.max(1.0) * rho;
            let mut prefixes = Vec::with_capacity(k);
            let mut prefix = 1.0;
            for &s in norms {
                prefix *= s;
                prefixes.push(prefix);
            }
            let sum_prefix: f64 = prefixes.iter().sum();
            let front = 2.0 * step.increment * rho;
            (0..k)
                .map(|j| {
                    let d_lphi = without(j);
                    // ∂P_ℓ/∂s_j for ℓ ≥ j is P_ℓ / s_j.
                    let d_sum: f64 = (j..k)
                        .map(|l| {
                            norms[..=l]
                                .iter()
                                .enumerate()
                                .filter(|(i, _)| *i != j)
                                .map(|(_, s)| s)
                                .product::<f64>()
                        })
                        .sum();
                    front * (2.0 * lphi * d_lphi * (a + b * sum_prefix) + lphi * lphi * b * d_sum)
                })
                .collect()
        }
        None => (0..k)
            .map(|j| 4.0 * lphi * without(j) * (step.map * step.map + 1.0) * rho)
            .collect(),
    }
}

/// [`lipschitz_from_norms`] for a concrete net and cell.
pub fn nn_local_lipschitz(net: &LyapunovNet, step: StepLipschitz, center: &[f64], radius: f64) -> f64 {
    lipschitz_from_norms(
        net.activation,
        &net.layer_norms(),
        step,
        linalg::euclid(center) + radius,
    )
}

/// A net bound to the step map it certifies.
#[derive(Debug, Clone)]
pub struct NetCandidate<'a> {
    net: &'a LyapunovNet,
    step: StepLipschitz,
    norms: Vec<f64>,
}

impl<'a> NetCandidate<'a> {
    pub fn new(net: &'a LyapunovNet, step: &dyn StepMap) -> Result<Self> {
        if step.dim() != net.input_dim() {
            return Err(Error::dim(format!(
                "net takes {} states, step has {}",
                net.input_dim(),
                step.dim()
            )));
        }
        Ok(NetCandidate {
            net,
            step: step.lipschitz(),
            norms: net.layer_norms(),
        })
    }
}

impl LyapunovCandidate for NetCandidate<'_> {
    fn dim(&self) -> usize {
        self.net.input_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.net.eval(x)
    }

    fn local_lipschitz(&self, center: &[f64], radius: f64) -> f64 {
        lipschitz_from_norms(
            self.net.activation,
            &self.norms,
            self.step,
            linalg::euclid(center) + radius,
        )
    }
}
