//! Fully connected actor and critic networks with batch normalization and
//! hand-written backpropagation.
//!
//! Both topologies are built from [`Layer`]s (affine map, optional batch
//! normalization, activation):
//!
//! * actor: `state → [dense, bn, relu] → [dense, tanh] → [dense, tanh]`
//! * critic: `state → [dense, bn, relu]`, `action → [dense, bn, relu]`,
//!   concatenated, then `[dense, relu] → [dense]` with a single output.
//!
//! Applying the rectifier to each batch-normalized branch separately is the
//! same as applying it to their concatenation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::real::RealMatrix;
use crate::error::{invalid, Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;
pub const FINAL_LAYER_INIT: f64 = 3e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Topology {
    Actor {
        state_dim: usize,
        hidden: usize,
        action_dim: usize,
    },
    Critic {
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
    },
}

impl Topology {
    pub fn input_dim(&self) -> usize {
        match *self {
            Topology::Actor { state_dim, .. } => state_dim,
            Topology::Critic {
                state_dim,
                action_dim,
                ..
            } => state_dim + action_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            Topology::Actor { action_dim, .. } => action_dim,
            Topology::Critic { .. } => 1,
        }
    }

    /// `(fan_in, fan_out, batch_norm, activation)` for every layer.
    fn layer_specs(&self) -> Vec<(usize, usize, bool, Activation)> {
        match *self {
            Topology::Actor {
                state_dim,
                hidden,
                action_dim,
            } => vec![
                (state_dim, hidden, true, Activation::Relu),
                (hidden, hidden, false, Activation::Tanh),
                (hidden, action_dim, false, Activation::Tanh),
            ],
            Topology::Critic {
                state_dim,
                action_dim,
                hidden,
            } => vec![
                (state_dim, hidden, true, Activation::Relu),
                (action_dim, hidden, true, Activation::Relu),
                (2 * hidden, hidden, false, Activation::Relu),
                (hidden, 1, false, Activation::Identity),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in × fan_out`, so that a batch maps as `x · W + b`.
    pub weight: RealMatrix,
    pub bias: Vec<f64>,
    pub norm: Option<BatchNorm>,
    pub activation: Activation,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize, norm: bool, activation: Activation) -> Self {
        Self {
            weight: RealMatrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
            norm: norm.then(|| BatchNorm::new(fan_out)),
            activation,
        }
    }

    fn randomize(&mut self, bound: f64, rng: &mut impl Rng) {
        for w in self.weight.data_mut() {
            *w = rng.random_range(-bound..=bound);
        }
        for b in &mut self.bias {
            *b = rng.random_range(-bound..=bound);
        }
    }

    fn forward(&self, input: &RealMatrix, mode: Mode) -> Result<(RealMatrix, LayerTrace)> {
        if input.cols() != self.weight.rows() {
            return invalid(format!(
                "layer expects {} input features, got {}",
                self.weight.rows(),
                input.cols()
            ));
        }
        let mut pre = input.matmul(&self.weight)?;
        pre.add_row_broadcast(&self.bias);
        let norm = match &self.norm {
            None => None,
            Some(bn) => Some(batch_norm_forward(bn, &mut pre, mode)?),
        };
        let output = pre.map(|x| self.activation.apply(x));
        if !output.is_finite() {
            return Err(Error::NumericOverflow("non-finite layer activation".into()));
        }
        Ok((
            output.clone(),
            LayerTrace {
                input: input.clone(),
                norm,
                pre_activation: pre,
                output,
            },
        ))
    }

    fn backward(
        &self,
        trace: &LayerTrace,
        upstream: &RealMatrix,
        want_params: bool,
    ) -> Result<(Option<LayerGrad>, RealMatrix)> {
        let mut delta = upstream.clone();
        for ((d, &x), &y) in delta
            .data_mut()
            .iter_mut()
            .zip(trace.pre_activation.data())
            .zip(trace.output.data())
        {
            *d *= self.activation.derivative(x, y);
        }
        let mut norm_grads = None;
        if let (Some(bn), Some(nt)) = (&self.norm, &trace.norm) {
            let (dz, dgamma, dbeta) = batch_norm_backward(bn, nt, &delta);
            delta = dz;
            norm_grads = Some((dgamma, dbeta));
        }
        let input_grad = delta.matmul_t(&self.weight)?;
        let grads = want_params.then(|| {
            let (gamma, beta) = match norm_grads {
                Some((g, b)) => (Some(g), Some(b)),
                None => (None, None),
            };
            LayerGrad {
                weight: trace
                    .input
                    .t_matmul(&delta)
                    .expect("trace shapes are consistent"),
                bias: delta.column_sums(),
                gamma,
                beta,
            }
        });
        Ok((grads, input_grad))
    }
}

#[derive(Debug, Clone)]
struct NormTrace {
    xhat: RealMatrix,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    mode: Mode,
}

#[derive(Debug, Clone)]
struct LayerTrace {
    input: RealMatrix,
    norm: Option<NormTrace>,
    pre_activation: RealMatrix,
    output: RealMatrix,
}

/// Intermediate values of one forward pass, consumed by [`MlpParameters::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    mode: Mode,
    batch: usize,
    layers: Vec<LayerTrace>,
}

impl Trace {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Batch-normalized values (before scale and shift) of every normalized layer.
    pub fn normalized(&self) -> Vec<&RealMatrix> {
        self.layers
            .iter()
            .filter_map(|l| l.norm.as_ref().map(|n| &n.xhat))
            .collect()
    }
}

/// Normalizes `values` in place (including scale and shift).
fn batch_norm_forward(bn: &BatchNorm, values: &mut RealMatrix, mode: Mode) -> Result<NormTrace> {
    let (rows, cols) = (values.rows(), values.cols());
    let (mean, var) = match mode {
        Mode::Train => {
            if rows < 2 {
                return invalid("train-mode batch normalization needs at least two rows");
            }
            let mut mean = values.column_sums();
            mean.iter_mut().for_each(|m| *m /= rows as f64);
            let mut var = vec![0.0; cols];
            for row in values.data().chunks_exact(cols) {
                for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                    let d = x - m;
                    *v += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v /= rows as f64);
            (mean, var)
        }
        Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let mut xhat = RealMatrix::zeros(rows, cols);
    for (i, row) in values.data_mut().chunks_exact_mut(cols).enumerate() {
        for j in 0..cols {
            let h = (row[j] - mean[j]) * inv_std[j];
            xhat.set(i, j, h);
            row[j] = bn.gamma[j] * h + bn.beta[j];
        }
    }
    Ok(NormTrace {
        xhat,
        inv_std,
        mean,
        var,
        mode,
    })
}

fn batch_norm_backward(
    bn: &BatchNorm,
    trace: &NormTrace,
    upstream: &RealMatrix,
) -> (RealMatrix, Vec<f64>, Vec<f64>) {
    let (rows, cols) = (upstream.rows(), upstream.cols());
    let n = rows as f64;
    let mut dgamma = vec![0.0; cols];
    let mut dbeta = vec![0.0; cols];
    // per-feature sums of dxhat and dxhat·xhat
    let mut sum_dxhat = vec![0.0; cols];
    let mut sum_dxhat_xhat = vec![0.0; cols];
    for i in 0..rows {
        for j in 0..cols {
            let dy = upstream.get(i, j);
            let h = trace.xhat.get(i, j);
            dgamma[j] += dy * h;
            dbeta[j] += dy;
            let dh = dy * bn.gamma[j];
            sum_dxhat[j] += dh;
            sum_dxhat_xhat[j] += dh * h;
        }
    }
    let dz = RealMatrix::from_fn(rows, cols, |i, j| {
        let dh = upstream.get(i, j) * bn.gamma[j];
        match trace.mode {
            // frozen statistics: a per-feature affine map
            Mode::Eval => dh * trace.inv_std[j],
            Mode::Train => {
                let h = trace.xhat.get(i, j);
                trace.inv_std[j] / n * (n * dh - sum_dxhat[j] - h * sum_dxhat_xhat[j])
            }
        }
    });
    (dz, dgamma, dbeta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: RealMatrix,
    pub bias: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

/// Partial derivatives of a scalar loss with respect to every trainable
/// parameter, plus the gradient with respect to the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    pub input: RealMatrix,
}

impl Gradients {
    /// Flat tensors in the order of [`MlpParameters::trainable_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.data());
            out.push(&l.bias[..]);
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(&g[..]);
                out.push(&b[..]);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Weights, biases and batch-normalization state of one actor or critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParameters {
    pub topology: Topology,
    pub layers: Vec<Layer>,
}

impl MlpParameters {
    /// All weights and biases zero, batch-norm at its identity state.
    pub fn zeros(topology: Topology) -> Self {
        let layers = topology
            .layer_specs()
            .into_iter()
            .map(|(i, o, bn, act)| Layer::zeros(i, o, bn, act))
            .collect();
        Self { topology, layers }
    }

    /// Hidden layers uniform in ±1/√fan_in, output layer uniform in ±3e-3.
    pub fn random(topology: Topology, rng: &mut impl Rng) -> Self {
        let mut params = Self::zeros(topology);
        let last = params.layers.len() - 1;
        for (idx, layer) in params.layers.iter_mut().enumerate() {
            let bound = if idx == last {
                FINAL_LAYER_INIT
            } else {
                1.0 / (layer.weight.rows() as f64).sqrt()
            };
            layer.randomize(bound, rng);
        }
        params
    }

    pub fn actor(state_dim: usize, hidden: usize, action_dim: usize, rng: &mut impl Rng) -> Self {
        Self::random(
            Topology::Actor {
                state_dim,
                hidden,
                action_dim,
            },
            rng,
        )
    }

    pub fn critic(state_dim: usize, action_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self::random(
            Topology::Critic {
                state_dim,
                action_dim,
                hidden,
            },
            rng,
        )
    }

    pub fn forward(&self, input: &RealMatrix, mode: Mode) -> Result<RealMatrix> {
        self.forward_traced(input, mode).map(|(out, _)| out)
    }

    pub fn forward_traced(&self, input: &RealMatrix, mode: Mode) -> Result<(RealMatrix, Trace)> {
        if input.cols() != self.topology.input_dim() {
            return invalid(format!(
                "network expects {} input features, got {}",
                self.topology.input_dim(),
                input.cols()
            ));
        }
        if mode == Mode::Train && input.rows() < 2 {
            return invalid("train mode needs a batch of at least two rows");
        }
        let mut traces = Vec::with_capacity(self.layers.len());
        let output = match self.topology {
            Topology::Actor { .. } => {
                let mut x = input.clone();
                for layer in &self.layers {
                    let (y, t) = layer.forward(&x, mode)?;
                    traces.push(t);
                    x = y;
                }
                x
            }
            Topology::Critic { state_dim, .. } => {
                let (s, a) = input.hsplit(state_dim)?;
                let (hs, ts) = self.layers[0].forward(&s, mode)?;
                let (ha, ta) = self.layers[1].forward(&a, mode)?;
                let joint_in = hs.hcat(&ha)?;
                let (hj, tj) = self.layers[2].forward(&joint_in, mode)?;
                let (q, tq) = self.layers[3].forward(&hj, mode)?;
                traces.extend([ts, ta, tj, tq]);
                q
            }
        };
        Ok((
            output,
            Trace {
                mode,
                batch: input.rows(),
                layers: traces,
            },
        ))
    }

    /// Backpropagates `upstream` (∂loss/∂output) through a train-mode trace.
    pub fn backward(&self, trace: &Trace, upstream: &RealMatrix) -> Result<Gradients> {
        if trace.mode != Mode::Train {
            return invalid("backward needs a train-mode forward pass");
        }
        self.backward_inner(trace, upstream, true)
    }

    /// Gradient with respect to the network input only. Unlike
    /// [`backward`](Self::backward) this also accepts eval-mode traces, where
    /// batch normalization is a fixed affine map.
    pub fn input_gradient(&self, trace: &Trace, upstream: &RealMatrix) -> Result<RealMatrix> {
        self.backward_inner(trace, upstream, false).map(|g| g.input)
    }

    fn backward_inner(&self, trace: &Trace, upstream: &RealMatrix, want: bool) -> Result<Gradients> {
        if upstream.rows() != trace.batch || upstream.cols() != self.topology.output_dim() {
            return invalid("upstream gradient shape differs from the network output");
        }
        let mut grads: Vec<Option<LayerGrad>> = vec![None; self.layers.len()];
        let input = match self.topology {
            Topology::Actor { .. } => {
                let mut d = upstream.clone();
                for idx in (0..self.layers.len()).rev() {
                    let (g, dx) = self.layers[idx].backward(&trace.layers[idx], &d, want)?;
                    grads[idx] = g;
                    d = dx;
                }
                d
            }
            Topology::Critic { hidden, .. } => {
                let (gq, dh) = self.layers[3].backward(&trace.layers[3], upstream, want)?;
                let (gj, djoint) = self.layers[2].backward(&trace.layers[2], &dh, want)?;
                let (ds_out, da_out) = djoint.hsplit(hidden)?;
                let (gs, ds) = self.layers[0].backward(&trace.layers[0], &ds_out, want)?;
                let (ga, da) = self.layers[1].backward(&trace.layers[1], &da_out, want)?;
                grads = vec![gs, ga, gj, gq];
                ds.hcat(&da)?
            }
        };
        Ok(Gradients {
            layers: grads.into_iter().flatten().collect(),
            input,
        })
    }

    /// Folds the batch statistics of a train-mode trace into the running
    /// estimates (unbiased batch variance).
    pub fn update_running_stats(&mut self, trace: &Trace) {
        for (layer, lt) in self.layers.iter_mut().zip(&trace.layers) {
            if let (Some(bn), Some(nt)) = (&mut layer.norm, &lt.norm) {
                if nt.mode != Mode::Train {
                    continue;
                }
                let n = trace.batch as f64;
                let correction = n / (n - 1.0);
                for j in 0..bn.running_mean.len() {
                    bn.running_mean[j] =
                        BN_MOMENTUM * bn.running_mean[j] + (1.0 - BN_MOMENTUM) * nt.mean[j];
                    bn.running_var[j] = BN_MOMENTUM * bn.running_var[j]
                        + (1.0 - BN_MOMENTUM) * nt.var[j] * correction;
                }
            }
        }
    }

    /// Trainable tensors: per layer weight, bias, then gamma and beta when normalized.
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.data_mut());
            out.push(&mut l.bias[..]);
            if let Some(bn) = &mut l.norm {
                out.push(&mut bn.gamma[..]);
                out.push(&mut bn.beta[..]);
            }
        }
        out
    }

    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(l.weight.data());
            out.push(&l.bias[..]);
            if let Some(bn) = &l.norm {
                out.push(&bn.gamma[..]);
                out.push(&bn.beta[..]);
            }
        }
        out
    }

    /// Every stored tensor, running statistics included, with stable names.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((
                format!("layer{i}.weight"),
                vec![l.weight.rows(), l.weight.cols()],
                l.weight.data(),
            ));
            out.push((format!("layer{i}.bias"), vec![l.bias.len()], &l.bias[..]));
            if let Some(bn) = &l.norm {
                let w = vec![bn.gamma.len()];
                out.push((format!("layer{i}.bn.gamma"), w.clone(), &bn.gamma[..]));
                out.push((format!("layer{i}.bn.beta"), w.clone(), &bn.beta[..]));
                out.push((format!("layer{i}.bn.running_mean"), w.clone(), &bn.running_mean[..]));
                out.push((format!("layer{i}.bn.running_var"), w, &bn.running_var[..]));
            }
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.weight"), l.weight.data_mut()));
            out.push((format!("layer{i}.bias"), &mut l.bias[..]));
            if let Some(bn) = &mut l.norm {
                out.push((format!("layer{i}.bn.gamma"), &mut bn.gamma[..]));
                out.push((format!("layer{i}.bn.beta"), &mut bn.beta[..]));
                out.push((format!("layer{i}.bn.running_mean"), &mut bn.running_mean[..]));
                out.push((format!("layer{i}.bn.running_var"), &mut bn.running_var[..]));
            }
        }
        out
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    /// Largest absolute entry-wise difference over every stored tensor.
    pub fn max_abs_diff(&self, other: &MlpParameters) -> f64 {
        self.named_tensors()
            .iter()
            .zip(other.named_tensors().iter())
            .flat_map(|(a, b)| a.2.iter().zip(b.2.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Batched forward pass.
pub fn mlp_forward(params: &MlpParameters, input: &RealMatrix, mode: Mode) -> Result<RealMatrix> {
    params.forward(input, mode)
}

/// Gradients of `Σ upstream ⊙ forward(input)` with respect to every parameter
/// and the input.
pub fn mlp_backward(
    params: &MlpParameters,
    input: &RealMatrix,
    upstream: &RealMatrix,
    mode: Mode,
) -> Result<Gradients> {
    if mode != Mode::Train {
        return invalid("gradients are only defined for train-mode passes");
    }
    let (_, trace) = params.forward_traced(input, mode)?;
    params.backward(&trace, upstream)
}
