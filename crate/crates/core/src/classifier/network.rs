//! Dense network internals: batched forward/backward passes and Adam.
//!
//! The architecture is fixed by what the reweighting steps need: ReLU hidden
//! layers and a single sigmoid output. Only the pre-sigmoid logit is ever
//! computed here; losses and probabilities are derived from it in numerically
//! stable form (`softplus`, never `ln(sigmoid)`).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct DenseLayer {
    /// `(fan_in, fan_out)`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Per-layer parameter gradients, same shapes as the layers.
pub(crate) type Gradients = Vec<(Array2<f64>, Array1<f64>)>;

/// Uniform init scaled by fan-in: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
/// biases zero. `dims` lists `[input, hidden.., output]`.
pub(crate) fn init_layers(dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<DenseLayer> {
    dims.windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let s = 1.0 / (fan_in as f64).sqrt();
            DenseLayer {
                weights: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-s..s)),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect()
}

/// Forward pass returning logits only.
pub(crate) fn forward_logits(layers: &[DenseLayer], x: ArrayView2<f64>) -> Array1<f64> {
    let mut a = x.dot(&layers[0].weights) + &layers[0].bias;
    if layers.len() > 1 {
        relu_inplace(&mut a);
        for layer in &layers[1..layers.len() - 1] {
            a = a.dot(&layer.weights) + &layer.bias;
            relu_inplace(&mut a);
        }
        let last = &layers[layers.len() - 1];
        a = a.dot(&last.weights) + &last.bias;
    }
    a.index_axis(Axis(1), 0).to_owned()
}

/// Forward pass keeping the post-ReLU hidden activations for backprop.
pub(crate) fn forward_cached(
    layers: &[DenseLayer],
    x: ArrayView2<f64>,
) -> (Vec<Array2<f64>>, Array1<f64>) {
    let n_hidden = layers.len() - 1;
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(n_hidden);
    for (i, layer) in layers[..n_hidden].iter().enumerate() {
        let mut z = if i == 0 {
            x.dot(&layer.weights)
        } else {
            hidden[i - 1].dot(&layer.weights)
        };
        z += &layer.bias;
        relu_inplace(&mut z);
        hidden.push(z);
    }
    let last = &layers[n_hidden];
    let mut z_out = if n_hidden == 0 {
        x.dot(&last.weights)
    } else {
        hidden[n_hidden - 1].dot(&last.weights)
    };
    z_out += &last.bias;
    let logits = z_out.index_axis(Axis(1), 0).to_owned();
    (hidden, logits)
}

/// Backpropagate an output delta (`dL/dlogit`, one per event) through the
/// network. `x` and `hidden` must come from the forward pass that produced
/// the logits the delta refers to.
pub(crate) fn backward(
    layers: &[DenseLayer],
    x: ArrayView2<f64>,
    hidden: &[Array2<f64>],
    output_delta: &Array1<f64>,
) -> Gradients {
    let mut grads: Gradients = layers
        .iter()
        .map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.bias.len())))
        .collect();

    let mut delta = output_delta.view().insert_axis(Axis(1)).to_owned();
    for l in (0..layers.len()).rev() {
        grads[l].0 = if l == 0 {
            x.t().dot(&delta)
        } else {
            hidden[l - 1].t().dot(&delta)
        };
        grads[l].1 = delta.sum_axis(Axis(0));
        if l > 0 {
            delta = delta.dot(&layers[l].weights.t());
            // ReLU derivative: the activation is positive exactly where the
            // pre-activation was.
            delta.zip_mut_with(&hidden[l - 1], |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
        }
    }
    grads
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Per-event binary cross-entropy from the logit:
/// `-y ln g - (1-y) ln(1-g)` with `g = sigmoid(z)`, computed as
/// `softplus(z) - y z`. Finite for any finite logit.
#[inline]
pub(crate) fn bce_from_logit(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}

/// Weighted loss sum over a batch.
pub(crate) fn weighted_loss_sum(logits: &Array1<f64>, ys: &[f64], ws: &[f64]) -> f64 {
    logits
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((&z, &y), &w)| w * bce_from_logit(z, y))
        .sum()
}

pub(crate) struct AdamState {
    m: Gradients,
    v: Gradients,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(layers: &[DenseLayer], lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Gradients = layers
            .iter()
            .map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.bias.len())))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step(&mut self, layers: &mut [DenseLayer], grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (l, layer) in layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[l];
            let (mw, mb) = &mut self.m[l];
            let (vw, vb) = &mut self.v[l];
            update_tensor(&mut layer.weights, gw, mw, vw, b1, b2, lr, eps, bc1, bc2);
            update_tensor(&mut layer.bias, gb, mb, vb, b1, b2, lr, eps, bc1, bc2);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_tensor<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    b1: f64,
    b2: f64,
    lr: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    // Zip instead of slices: matrix products can come back in either memory
    // order depending on operand layout.
    ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    });
}
