//! Small fully-connected decoder with hand-written forward and backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OutputActivation {
    #[default]
    Linear,
    Sigmoid,
}

/// Fully-connected layer. Weights are stored input-major (`w[i * outputs + o]`)
/// so the forward pass streams contiguous rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    inputs: usize,
    outputs: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    #[inline]
    pub fn weight(&self, output: usize, input: usize) -> T {
        self.weights[input * self.outputs + output]
    }

    #[inline]
    pub fn set_weight(&mut self, output: usize, input: usize, value: T) {
        self.weights[input * self.outputs + output] = value;
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub fn weights_raw(&self) -> &[T] {
        &self.weights
    }

    /// Weights and bias as mutable slices, for optimizer updates.
    pub fn params_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.weights, &mut self.bias)
    }

    fn forward(&self, input: &[T], out: &mut [T]) {
        out.copy_from_slice(&self.bias);
        for (i, &x) in input.iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * x;
            }
        }
    }
}

/// Decoder parameters: hidden layers use ReLU, the last layer is linear
/// (optionally followed by a sigmoid).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    layers: Vec<DenseLayer<T>>,
    activation: OutputActivation,
}

impl<T: Real> MlpParams<T> {
    pub fn zeros(widths: &[usize], activation: OutputActivation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidHyperparameter(format!(
                "layer widths {widths:?} must list at least input and output, all positive"
            )));
        }
        Ok(Self {
            layers: widths
                .windows(2)
                .map(|w| DenseLayer::zeros(w[0], w[1]))
                .collect(),
            activation,
        })
    }

    /// Same shape, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs, l.outputs))
                .collect(),
            activation: self.activation,
        }
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn activation(&self) -> OutputActivation {
        self.activation
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Every parameter in file order: per layer, weights output-major then biases.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for o in 0..layer.outputs {
                for i in 0..layer.inputs {
                    out.push(layer.weight(o, i));
                }
            }
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Inverse of [`MlpParams::flat_params`].
    pub fn from_flat(widths: &[usize], activation: OutputActivation, flat: &[T]) -> Result<Self> {
        let mut params = Self::zeros(widths, activation)?;
        if flat.len() != params.param_count() {
            return Err(Error::ShapeMismatch {
                expected: params.param_count(),
                actual: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for layer in &mut params.layers {
            for o in 0..layer.outputs {
                for i in 0..layer.inputs {
                    layer.set_weight(o, i, it.next().unwrap());
                }
            }
            for b in &mut layer.bias {
                *b = it.next().unwrap();
            }
        }
        Ok(params)
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(T::zero());
            l.bias.fill(T::zero());
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn workspace(&self) -> MlpWorkspace<T> {
        MlpWorkspace {
            activations: self
                .widths()
                .into_iter()
                .map(|w| vec![T::zero(); w])
                .collect(),
            deltas: self
                .widths()
                .into_iter()
                .map(|w| vec![T::zero(); w])
                .collect(),
        }
    }

    /// Forward pass keeping every activation in `ws`; returns the output.
    pub fn forward_ws<'w>(&self, y: &[T], ws: &'w mut MlpWorkspace<T>) -> &'w [T] {
        ws.activations[0].copy_from_slice(y);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let (head, tail) = ws.activations.split_at_mut(k + 1);
            let out = &mut tail[0];
            layer.forward(&head[k], out);
            if k < last {
                for v in out.iter_mut() {
                    *v = v.max(T::zero());
                }
            } else if self.activation == OutputActivation::Sigmoid {
                for v in out.iter_mut() {
                    *v = T::one() / (T::one() + (-*v).exp());
                }
            }
        }
        &ws.activations[last + 1]
    }

    /// Reverse pass after [`MlpParams::forward_ws`]; accumulates parameter
    /// gradients into `grads` and writes `d loss / d y` into `dy`.
    pub fn backward_ws(&self, ws: &mut MlpWorkspace<T>, upstream: &[T], grads: &mut Self, dy: &mut [T]) {
        let n = self.layers.len();
        {
            let out = &ws.activations[n];
            let delta = &mut ws.deltas[n];
            for ((d, &u), &a) in delta.iter_mut().zip(upstream).zip(out) {
                *d = match self.activation {
                    OutputActivation::Linear => u,
                    OutputActivation::Sigmoid => u * a * (T::one() - a),
                };
            }
        }
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let grad = &mut grads.layers[k];
            let (lower, upper) = ws.deltas.split_at_mut(k + 1);
            let delta_out = &upper[0];
            let input = &ws.activations[k];
            for (b, &d) in grad.bias.iter_mut().zip(delta_out) {
                *b += d;
            }
            let delta_in = &mut lower[k];
            for i in 0..layer.inputs {
                let x = input[i];
                // ReLU derivative for hidden inputs; the first layer's input is the encoding.
                if k > 0 && x <= T::zero() {
                    delta_in[i] = T::zero();
                    continue;
                }
                let w_row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                let g_row = &mut grad.weights[i * layer.outputs..(i + 1) * layer.outputs];
                for (g, &d) in g_row.iter_mut().zip(delta_out) {
                    *g += x * d;
                }
                delta_in[i] = dot(w_row, delta_out);
            }
        }
        dy.copy_from_slice(&ws.deltas[0]);
    }
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 8;
    let mut acc = [T::zero(); LANES];
    let (a_head, a_tail) = a.split_at(a.len() - a.len() % LANES);
    let (b_head, b_tail) = b.split_at(a_head.len());
    for (x, y) in a_head.chunks_exact(LANES).zip(b_head.chunks_exact(LANES)) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut total = a_tail.iter().zip(b_tail).fold(T::zero(), |s, (&x, &y)| s + x * y);
    for v in acc {
        total += v;
    }
    total
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct MlpWorkspace<T> {
    activations: Vec<Vec<T>>,
    deltas: Vec<Vec<T>>,
}

fn check_input<T: Real>(y: &[T], params: &MlpParams<T>) -> Result<()> {
    if y.len() != params.input_width() {
        return Err(Error::ShapeMismatch {
            expected: params.input_width(),
            actual: y.len(),
        });
    }
    Ok(())
}

pub fn mlp_forward<T: Real>(y: &[T], params: &MlpParams<T>) -> Result<Vec<T>> {
    check_input(y, params)?;
    let mut ws = params.workspace();
    Ok(params.forward_ws(y, &mut ws).to_vec())
}

/// Gradients of `<upstream, mlp_forward(y)>` with respect to the parameters and to `y`.
pub fn mlp_backward<T: Real>(
    y: &[T],
    params: &MlpParams<T>,
    upstream: &[T],
) -> Result<(MlpParams<T>, Vec<T>)> {
    check_input(y, params)?;
    if upstream.len() != params.output_width() {
        return Err(Error::ShapeMismatch {
            expected: params.output_width(),
            actual: upstream.len(),
        });
    }
    let mut ws = params.workspace();
    params.forward_ws(y, &mut ws);
    let mut grads = params.zeros_like();
    let mut dy = vec![T::zero(); y.len()];
    params.backward_ws(&mut ws, upstream, &mut grads, &mut dy);
    Ok((grads, dy))
}

/// He-uniform weights (`U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`), zero biases.
pub fn mlp_init<T: Real>(seed: u64, widths: &[usize], activation: OutputActivation) -> Result<MlpParams<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mlp_init_with(&mut rng, widths, activation)
}

pub fn mlp_init_with<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    widths: &[usize],
    activation: OutputActivation,
) -> Result<MlpParams<T>> {
    let mut params = MlpParams::zeros(widths, activation)?;
    for layer in &mut params.layers {
        let bound = (6.0 / layer.inputs as f64).sqrt();
        for w in &mut layer.weights {
            *w = T::of(rng.random_range(-bound..bound));
        }
    }
    Ok(params)
}
