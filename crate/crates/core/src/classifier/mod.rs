//! Weighted binary classifier used as a density-ratio estimator.
//!
//! Train on two weighted samples A (target, label 1) and B (source, label 0)
//! with the weighted binary cross-entropy; the trained network's odds
//! `f/(1-f)` then estimate the ratio of weighted densities `A/B` at a point.
//! Weights may be negative (that is how background subtraction works), in
//! which case the loss is no longer bounded below pointwise — the output
//! clamp and early stopping keep training sane, and a non-finite loss aborts
//! with an error rather than limping on.
//!
//! Training is deterministic given the config seed: initialization, the
//! validation split and every epoch shuffle come from fixed derived streams.

mod network;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::EventSet;
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

use network::{AdamState, DenseLayer};

/// Chunk size for inference over large sets; keeps temporaries small without
/// losing the batched matrix products.
const EVAL_CHUNK: usize = 8192;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    /// Hidden layer widths; ReLU activations, sigmoid output.
    pub hidden_layers: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Early stopping: stop when this many epochs pass without a new best
    /// validation loss; the best parameters are restored afterwards.
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Fraction of the combined sample held out for validation.
    pub validation_fraction: f64,
    /// Output clamp: the sigmoid output is restricted to
    /// `[eps, 1 - eps]` before forming odds, bounding the ratio.
    pub ratio_clamp_epsilon: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::new(1)
    }
}

impl NetworkConfig {
    pub fn new(input_dim: usize) -> Self {
        NetworkConfig {
            input_dim,
            hidden_layers: vec![50, 50, 50],
            epochs: 200,
            batch_size: 2000,
            patience: 10,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            validation_fraction: 0.2,
            ratio_clamp_epsilon: 1e-5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be at least 1".into()));
        }
        if self.hidden_layers.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer width 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "epochs, batch_size and patience must be at least 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.adam_epsilon.is_finite() && self.adam_epsilon > 0.0) {
            return Err(Error::Config("adam_epsilon must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.ratio_clamp_epsilon > 0.0 && self.ratio_clamp_epsilon < 0.5) {
            return Err(Error::Config(format!(
                "ratio_clamp_epsilon must be in (0, 0.5), got {}",
                self.ratio_clamp_epsilon
            )));
        }
        Ok(())
    }

    fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_layers);
        dims.push(1);
        dims
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    /// Mean weighted loss per training event, accumulated over the epoch's
    /// batches as they were seen (before each update).
    pub train_loss: Vec<f64>,
    /// Mean weighted loss per validation event after each epoch.
    pub val_loss: Vec<f64>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    /// Last epoch that ran.
    pub stopped_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
}

/// A trained density-ratio network.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Classifier {
    pub config: NetworkConfig,
    layers: Vec<DenseLayer>,
    pub diagnostics: TrainDiagnostics,
}

/// Train a classifier separating `a` (label 1) from `b` (label 0) with
/// per-event weights taken from the sets.
pub fn train(a: &EventSet, b: &EventSet, cfg: &NetworkConfig) -> Result<Classifier> {
    cfg.validate()?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("training needs both classes non-empty".into()));
    }
    for (name, set) in [("A", a), ("B", b)] {
        if set.dim() != cfg.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "class {name} has dimension {}, config expects {}",
                set.dim(),
                cfg.input_dim
            )));
        }
        if set.weights().iter().any(|w| !w.is_finite()) {
            return Err(Error::Training(format!("non-finite weight in class {name}")));
        }
    }

    let n = a.n_events() + b.n_events();
    let d = cfg.input_dim;
    let mut x = Array2::<f64>::zeros((n, d));
    let mut y = vec![0.0; n];
    let mut w = vec![0.0; n];
    for (i, set) in [(0, a), (a.n_events(), b)] {
        for j in 0..set.n_events() {
            x.row_mut(i + j)
                .as_slice_mut()
                .expect("standard layout")
                .copy_from_slice(set.row(j));
            w[i + j] = set.weights()[j];
            y[i + j] = if i == 0 { 1.0 } else { 0.0 };
        }
    }

    // Validation split: seeded shuffle of the combined sample. The same
    // stream then drives the per-epoch shuffles.
    let mut shuffle_rng = stream(cfg.seed, tag::NET_SHUFFLE);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut shuffle_rng);
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let n_train = train_idx.len();

    let gather = |idx: &[usize]| -> (Array2<f64>, Vec<f64>, Vec<f64>) {
        let mut xs = Array2::<f64>::zeros((idx.len(), d));
        let mut ys = Vec::with_capacity(idx.len());
        let mut ws = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            xs.row_mut(r)
                .as_slice_mut()
                .expect("standard layout")
                .copy_from_slice(x.row(i).as_slice().expect("standard layout"));
            ys.push(y[i]);
            ws.push(w[i]);
        }
        (xs, ys, ws)
    };
    let (x_val, y_val, w_val) = gather(val_idx);

    let mut init_rng = stream(cfg.seed, tag::NET_INIT);
    let mut layers = network::init_layers(&cfg.dims(), &mut init_rng);
    let mut adam = AdamState::new(&layers, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);

    let mut diag = TrainDiagnostics {
        n_train,
        n_val,
        ..Default::default()
    };
    let mut best: Option<(f64, usize, Vec<DenseLayer>)> = None;

    let batch = cfg.batch_size.min(n_train);
    let mut xb = Array2::<f64>::zeros((batch, d));
    let mut yb = vec![0.0; batch];
    let mut wb = vec![0.0; batch];

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in train_idx.chunks(batch) {
            let m = chunk.len();
            for (r, &i) in chunk.iter().enumerate() {
                xb.row_mut(r)
                    .as_slice_mut()
                    .expect("standard layout")
                    .copy_from_slice(x.row(i).as_slice().expect("standard layout"));
                yb[r] = y[i];
                wb[r] = w[i];
            }
            let xv = xb.slice(ndarray::s![..m, ..]);
            let (hidden, logits) = network::forward_cached(&layers, xv);
            let batch_loss = network::weighted_loss_sum(&logits, &yb[..m], &wb[..m]);
            if !batch_loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            loss_sum += batch_loss;
            // dL/dz = w (sigmoid(z) - y), scaled to a per-event mean so the
            // step size does not depend on the batch size.
            let scale = 1.0 / m as f64;
            let delta = Array1::from_iter(
                logits
                    .iter()
                    .zip(&yb[..m])
                    .zip(&wb[..m])
                    .map(|((&z, &yi), &wi)| scale * wi * (network::sigmoid(z) - yi)),
            );
            let grads = network::backward(&layers, xv, &hidden, &delta);
            adam.step(&mut layers, &grads);
        }
        diag.train_loss.push(loss_sum / n_train as f64);

        let val_logits = network::forward_logits(&layers, x_val.view());
        let val_loss = network::weighted_loss_sum(&val_logits, &y_val, &w_val) / n_val as f64;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        diag.val_loss.push(val_loss);

        let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, epoch, layers.clone()));
        }
        diag.stopped_epoch = epoch;
        let best_epoch = best.as_ref().expect("set above").1;
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    let (_, best_epoch, best_layers) = best.expect("at least one epoch ran");
    diag.best_epoch = best_epoch;
    Ok(Classifier {
        config: cfg.clone(),
        layers: best_layers,
        diagnostics: diag,
    })
}

impl Classifier {
    /// Sigmoid outputs for a set of events.
    pub fn predict(&self, events: &EventSet) -> Result<Vec<f64>> {
        Ok(self.logits(events)?.into_iter().map(network::sigmoid).collect())
    }

    /// Density-ratio estimates `f/(1-f)` with the output clamped to
    /// `[eps, 1-eps]`; the ratio is therefore bounded in
    /// `[eps/(1-eps), (1-eps)/eps]`.
    pub fn ratio(&self, events: &EventSet) -> Result<Vec<f64>> {
        let eps = self.config.ratio_clamp_epsilon;
        Ok(self
            .logits(events)?
            .into_iter()
            .map(|z| {
                let f = network::sigmoid(z).clamp(eps, 1.0 - eps);
                f / (1.0 - f)
            })
            .collect())
    }

    /// Ratio at a single point.
    pub fn ratio_one(&self, x: &[f64]) -> Result<f64> {
        let mut set = EventSet::new(self.config.input_dim);
        if x.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "point of dimension {}, network expects {}",
                x.len(),
                self.config.input_dim
            )));
        }
        set.push(x, 1.0);
        Ok(self.ratio(&set)?[0])
    }

    fn logits(&self, events: &EventSet) -> Result<Vec<f64>> {
        if events.dim() != self.config.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "events of dimension {}, network expects {}",
                events.dim(),
                self.config.input_dim
            )));
        }
        let n = events.n_events();
        let mut out = Vec::with_capacity(n);
        let flat = events.features_flat();
        let d = events.dim();
        let mut start = 0;
        while start < n {
            let end = (start + EVAL_CHUNK).min(n);
            let view = ArrayView2::from_shape((end - start, d), &flat[start * d..end * d])
                .expect("row-major storage");
            out.extend(network::forward_logits(&self.layers, view).iter());
            start = end;
        }
        Ok(out)
    }

    /// All parameters flattened: for each layer, the weight matrix in
    /// row-major order, then the bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Replace all parameters from a flat vector laid out like
    /// [`Classifier::params_flat`].
    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        let expected: usize = self
            .layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum();
        if params.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters, network has {expected}",
                params.len()
            )));
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = *it.next().expect("length checked");
            }
            for b in l.bias.iter_mut() {
                *b = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Classifier> {
        let clf: Classifier = serde_json::from_str(json)?;
        clf.validate_architecture()?;
        Ok(clf)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Classifier> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate_architecture(&self) -> Result<()> {
        self.config.validate()?;
        let dims = self.config.dims();
        if self.layers.len() != dims.len() - 1 {
            return Err(Error::Serialization(format!(
                "{} layers for architecture {:?}",
                self.layers.len(),
                dims
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.dim() != (dims[i], dims[i + 1]) || l.bias.len() != dims[i + 1] {
                return Err(Error::Serialization(format!(
                    "layer {i} has shape {:?}, architecture says ({}, {})",
                    l.weights.dim(),
                    dims[i],
                    dims[i + 1]
                )));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|p| !p.is_finite()) {
                return Err(Error::Serialization(format!("non-finite parameter in layer {i}")));
            }
        }
        Ok(())
    }
}

/// Weighted binary cross-entropy of a classifier on two weighted sets:
/// `Σ_A w (-ln g) + Σ_B w (-ln(1-g))`, an (unnormalized) sum.
pub fn weighted_bce_loss(clf: &Classifier, a: &EventSet, b: &EventSet) -> Result<f64> {
    let mut total = 0.0;
    for (set, label) in [(a, 1.0), (b, 0.0)] {
        let logits = clf.logits(set)?;
        total += logits
            .iter()
            .zip(set.weights())
            .map(|(&z, &w)| w * network::bce_from_logit(z, label))
            .sum::<f64>();
    }
    Ok(total)
}

/// Gradient of [`weighted_bce_loss`] with respect to every parameter, laid
/// out like [`Classifier::params_flat`].
pub fn loss_gradient(clf: &Classifier, a: &EventSet, b: &EventSet) -> Result<Vec<f64>> {
    let mut acc: Option<network::Gradients> = None;
    for (set, label) in [(a, 1.0), (b, 0.0)] {
        if set.dim() != clf.config.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "events of dimension {}, network expects {}",
                set.dim(),
                clf.config.input_dim
            )));
        }
        let n = set.n_events();
        let d = set.dim();
        let flat = set.features_flat();
        let mut start = 0;
        while start < n {
            let end = (start + EVAL_CHUNK).min(n);
            let view = ArrayView2::from_shape((end - start, d), &flat[start * d..end * d])
                .expect("row-major storage");
            let (hidden, logits) = network::forward_cached(&clf.layers, view);
            let delta = Array1::from_iter(
                logits
                    .iter()
                    .zip(&set.weights()[start..end])
                    .map(|(&z, &w)| w * (network::sigmoid(z) - label)),
            );
            let grads = network::backward(&clf.layers, view, &hidden, &delta);
            match &mut acc {
                None => acc = Some(grads),
                Some(acc) => {
                    for (t, g) in acc.iter_mut().zip(&grads) {
                        t.0 += &g.0;
                        t.1 += &g.1;
                    }
                }
            }
            start = end;
        }
    }
    let acc = acc.ok_or_else(|| Error::EmptyInput("gradient of empty sets".into()))?;
    let mut out = Vec::new();
    for (gw, gb) in &acc {
        out.extend(gw.iter());
        out.extend(gb.iter());
    }
    Ok(out)
}
