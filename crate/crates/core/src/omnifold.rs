//! Unbinned iterative unfolding by classifier reweighting.
//!
//! The algorithm assigns each synthetic signal event a weight such that the
//! weighted generator-level sample estimates the truth distribution of the
//! measured data. One iteration:
//!
//! 1. [`step1`] (detector level): train a classifier between the measured
//!    data (weighted by the background-subtracted data weights) and the
//!    reconstructed synthetic events (current weights); its density ratio,
//!    evaluated per reconstructed event, is the detector-level multiplier.
//! 2. [`pull`]: events that were generated but not reconstructed have no
//!    detector-level multiplier. Estimate the conditional average multiplier
//!    given the generator-level features by training a classifier between
//!    the multiplier-weighted and unit-weighted reconstructed events (on
//!    their generator-level features), then evaluate it for the
//!    unreconstructed ones.
//! 3. [`step2`] (generator level): the pulled weights are not yet a proper
//!    function of the generator-level features (the detector smearing is
//!    stochastic). Train a classifier between the pulled and the previous
//!    generator-level sample; its ratio is the generator-level multiplier.
//! 4. [`push`]: reconstructed events with no generator-level match get the
//!    conditional average generator-level multiplier given their
//!    reconstructed features, mirroring step 2; the pushed weights become
//!    the current weights of the next iteration.
//!
//! Before iterating, an optional background-subtraction step
//! ([`subtract_background`]) reweights each data event by an estimate of the
//! local signal fraction, obtained by training a classifier between
//! data-plus-negated-noise and data.
//!
//! The default update is multiplicative (`w_new = w_old * ratio`), which is
//! the form that reduces to Richardson-Lucy iterations when the features are
//! binned — [`run_binned`] implements that limit exactly with histogram
//! ratios in place of classifiers, and agrees with [`crate::binned::ibu`]
//! iterate by iterate. A literal-assignment rule, where the trained ratio
//! replaces the weight and the orientation is current-over-target at the
//! detector level, is kept as a compatibility mode.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::classifier::{train, NetworkConfig, TrainDiagnostics};
use crate::dataset::{EventSet, PairedEvent, PresenceIndex};
use crate::error::{Error, Result};
use crate::hist::validate_edges;
use crate::rng::{derive_seed, tag};
use crate::stats::{chi2_per_bin, effective_sample_size, quantile, weighted_hist};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `w_new = w_old * ratio`, ratio oriented target-over-current.
    #[default]
    Multiplicative,
    /// The trained ratio replaces the weight, oriented current-over-target
    /// at the detector level. Compatibility mode; the multiplicative rule is
    /// the one with the Richardson-Lucy limit and the matched fixed point.
    LiteralAssign,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnfoldConfig {
    pub n_iterations: usize,
    /// Pulled and pushed weights are clamped to `[0, w_max]`.
    pub w_max: f64,
    /// Subtract the noise sample before iterating. Requires a non-empty
    /// noise sample.
    pub enable_background: bool,
    /// Impute detector-level multipliers for generated-but-unreconstructed
    /// events. When disabled such events keep their previous weight through
    /// the pull stage (the prior fills in).
    pub enable_efficiency: bool,
    /// Impute generator-level multipliers for reconstructed events without a
    /// generator-level match. When disabled such events keep their previous
    /// weight through the push stage.
    pub enable_acceptance: bool,
    pub update_rule: UpdateRule,
    /// Network settings per role. `input_dim` and `seed` are set by the
    /// driver (per role and iteration); the values in these configs are
    /// ignored.
    pub detector_step: NetworkConfig,
    pub efficiency_miss: NetworkConfig,
    pub generator_step: NetworkConfig,
    pub acceptance_miss: NetworkConfig,
    pub seed: u64,
}

impl Default for UnfoldConfig {
    fn default() -> Self {
        UnfoldConfig::new(0)
    }
}

impl UnfoldConfig {
    pub fn new(seed: u64) -> Self {
        let net = NetworkConfig::new(1);
        UnfoldConfig {
            n_iterations: 3,
            w_max: 100.0,
            enable_background: true,
            enable_efficiency: true,
            enable_acceptance: true,
            update_rule: UpdateRule::default(),
            detector_step: net.clone(),
            efficiency_miss: net.clone(),
            generator_step: net.clone(),
            acceptance_miss: net,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::Config("n_iterations must be at least 1".into()));
        }
        if !(self.w_max.is_finite() && self.w_max > 0.0) {
            return Err(Error::Config(format!(
                "w_max must be positive and finite, got {}",
                self.w_max
            )));
        }
        // input_dim fields are overridden; validate the rest per role
        for (role, net) in [
            ("detector_step", &self.detector_step),
            ("efficiency_miss", &self.efficiency_miss),
            ("generator_step", &self.generator_step),
            ("acceptance_miss", &self.acceptance_miss),
        ] {
            net.validate()
                .map_err(|e| Error::Config(format!("{role}: {e}")))?;
        }
        Ok(())
    }
}

/// Condensed training record of one classifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoleDiagnostics {
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub best_val_loss: f64,
    pub n_train: usize,
    pub n_val: usize,
}

impl From<&TrainDiagnostics> for RoleDiagnostics {
    fn from(d: &TrainDiagnostics) -> Self {
        RoleDiagnostics {
            best_epoch: d.best_epoch,
            stopped_epoch: d.stopped_epoch,
            best_val_loss: d.val_loss[d.best_epoch - 1],
            n_train: d.n_train,
            n_val: d.n_val,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub detector_step: RoleDiagnostics,
    pub efficiency_miss: Option<RoleDiagnostics>,
    pub generator_step: RoleDiagnostics,
    pub acceptance_miss: Option<RoleDiagnostics>,
    /// Effective sample size of the pushed weights (all synthetic events).
    pub effective_sample_size: f64,
    /// Events whose pulled or pushed weight hit the `[0, w_max]` clamp.
    pub n_clamped: usize,
    /// Sum of the pushed weights.
    pub sum_weights: f64,
    /// Sum of the detector-level weights over reconstructed events; tracks
    /// `sum_data_weights` within a few percent when the detector-level
    /// classifier is well trained.
    pub sum_step1_weights: f64,
    /// Mean chi-square per bin between the detector-level synthetic sample
    /// (weighted by the detector-level weights) and the weighted data, over
    /// 20 bins spanning the central data range of the first feature. `None`
    /// when the comparison is degenerate.
    pub detector_chi2: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct UnfoldDiagnostics {
    pub background: Option<RoleDiagnostics>,
    /// Sum of the (background-subtracted) data weights the iterations target.
    pub sum_data_weights: f64,
    pub iterations: Vec<IterationDiagnostics>,
    pub warnings: Vec<String>,
}

/// Per-event weights at each stage of one iteration, aligned with the
/// synthetic sample. A stage that does not apply to an event (for example
/// the detector stage for an event that was never reconstructed) carries the
/// event's latest value forward, so every vector is full length.
#[derive(Clone, Debug)]
pub struct WeightState {
    /// Iteration index, starting at 1.
    pub iteration: usize,
    /// After the detector-level update (reconstructed events).
    pub w_step1: Vec<f64>,
    /// After imputing the detector-level multiplier for unreconstructed
    /// events; clamped to `[0, w_max]`.
    pub w_pull: Vec<f64>,
    /// After the generator-level update (generated events).
    pub w_step2: Vec<f64>,
    /// Final weights of the iteration: generator-level update plus the
    /// imputed update for events without a generator-level match, clamped
    /// to `[0, w_max]`. These are the next iteration's current weights.
    pub w_push: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct UnfoldResult {
    /// The generator-level features of the generated events with their final
    /// weights — the unfolded sample. Events without a generator-level side
    /// are excluded.
    pub unfolded: EventSet,
    /// Background-subtracted data weights, one per data event (the input
    /// weights when background subtraction is disabled).
    pub data_weights: Vec<f64>,
    /// Weight snapshots for every iteration; `states.last().w_push` are the
    /// final weights over all synthetic events.
    pub states: Vec<WeightState>,
    pub diagnostics: UnfoldDiagnostics,
}

impl UnfoldResult {
    /// Final weight per synthetic event (including events without a
    /// generator-level side; `unfolded` carries the restriction).
    pub fn final_weights(&self) -> &[f64] {
        &self.states.last().expect("at least one iteration").w_push
    }

    /// Write the weight trajectory of every synthetic event as CSV:
    /// `event_id,w_iter1,...,w_iterK` (pushed weights per iteration).
    pub fn write_weight_trajectories<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "event_id")?;
        for k in 1..=self.states.len() {
            write!(out, ",w_iter{k}")?;
        }
        writeln!(out)?;
        let n = self.states[0].w_push.len();
        for i in 0..n {
            write!(out, "{i}")?;
            for st in &self.states {
                write!(out, ",{}", crate::dataset::io::fmt_f64(st.w_push[i]))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Estimate per-event signal weights for the measured data by training a
/// classifier between data-plus-negated-noise and data; the resulting ratio
/// estimates the local signal fraction `1 - noise/data` and is clamped to
/// `[0, 1]`. The summed output weights estimate the signal yield
/// `Σ w_data - Σ w_noise`.
pub fn subtract_background(
    data: &EventSet,
    noise: &EventSet,
    net: &NetworkConfig,
    seed: u64,
) -> Result<(Vec<f64>, RoleDiagnostics)> {
    if noise.is_empty() {
        return Err(Error::EmptyInput(
            "background subtraction needs a non-empty noise sample".into(),
        ));
    }
    if data.dim() != noise.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} features, noise sample has {}",
            data.dim(),
            noise.dim()
        )));
    }
    let sum_data: f64 = data.weights().iter().sum();
    let sum_noise: f64 = noise.weights().iter().sum();
    if sum_noise >= sum_data {
        return Err(Error::Config(format!(
            "noise outweighs data (total noise weight {sum_noise} vs data weight {sum_data}); \
             nothing would remain after subtraction"
        )));
    }
    let mut mixture = EventSet::with_capacity(data.dim(), data.n_events() + noise.n_events());
    for i in 0..data.n_events() {
        mixture.push(data.row(i), data.weights()[i]);
    }
    for i in 0..noise.n_events() {
        mixture.push(noise.row(i), -noise.weights()[i]);
    }
    let cfg = NetworkConfig {
        input_dim: data.dim(),
        seed,
        ..net.clone()
    };
    let clf = train(&mixture, data, &cfg)?;
    let ratios = clf.ratio(data)?;
    let weights = ratios
        .iter()
        .zip(data.weights())
        .map(|(&r, &w)| w * r.clamp(0.0, 1.0))
        .collect();
    Ok((weights, RoleDiagnostics::from(&clf.diagnostics)))
}

/// Gather one side of the paired sample into an event set.
fn gather_side(
    pairs: &[PairedEvent],
    indices: &[usize],
    dim: usize,
    side: fn(&PairedEvent) -> &Option<Vec<f64>>,
    weight: impl Fn(usize) -> f64,
) -> EventSet {
    let mut set = EventSet::with_capacity(dim, indices.len());
    for &i in indices {
        let features = side(&pairs[i]).as_ref().expect("index lists presence");
        set.push(features, weight(i));
    }
    set
}

fn check_weight_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch(format!(
            "{name} has {got} entries for {want} synthetic events"
        )));
    }
    Ok(())
}

/// Detector-level reweighting: train a classifier between the weighted data
/// and the reconstructed synthetic events, and return the multiplier for
/// every synthetic event (1 for events that were never reconstructed, which
/// the detector level cannot see).
///
/// With [`UpdateRule::Multiplicative`] the classifier is oriented
/// data-over-synthetic, so `w_synth * ratio` moves the synthetic sample
/// toward the data and the summed updated weights track the summed data
/// weights. With [`UpdateRule::LiteralAssign`] the orientation is reversed
/// and the caller assigns the ratio as the new weight.
pub fn step1(
    synthetic: &[PairedEvent],
    w_synth: &[f64],
    data: &EventSet,
    data_weights: &[f64],
    rule: UpdateRule,
    net: &NetworkConfig,
    seed: u64,
) -> Result<(Vec<f64>, RoleDiagnostics)> {
    check_weight_len("w_synth", w_synth.len(), synthetic.len())?;
    check_weight_len("data_weights", data_weights.len(), data.n_events())?;
    let (_, sim_dim) = crate::dataset::paired_dims(synthetic)?;
    if sim_dim != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} features, synthetic detector level has {sim_dim}",
            data.dim()
        )));
    }
    let idx = PresenceIndex::build(synthetic)?;
    if idx.sim_present.is_empty() {
        return Err(Error::EmptyInput(
            "no synthetic event was reconstructed; detector-level step has nothing to train on"
                .into(),
        ));
    }
    let sim = gather_side(synthetic, &idx.sim_present, sim_dim, |p| &p.sim, |i| {
        w_synth[i]
    });
    let mut data_w = EventSet::with_capacity(data.dim(), data.n_events());
    for i in 0..data.n_events() {
        data_w.push(data.row(i), data_weights[i]);
    }
    let cfg = NetworkConfig {
        input_dim: data.dim(),
        seed,
        ..net.clone()
    };
    let clf = match rule {
        UpdateRule::Multiplicative => train(&data_w, &sim, &cfg)?,
        UpdateRule::LiteralAssign => train(&sim, &data_w, &cfg)?,
    };
    let present_ratios = clf.ratio(&sim)?;
    let mut ratios = vec![1.0; synthetic.len()];
    for (r, &i) in idx.sim_present.iter().enumerate() {
        ratios[i] = present_ratios[r];
    }
    Ok((ratios, RoleDiagnostics::from(&clf.diagnostics)))
}

/// Train a regressor-classifier for the conditional mean of `values` given
/// the features: same events on both sides, numerator weighted by the
/// values, denominator with unit weights.
fn conditional_mean_of(
    features: &EventSet,
    values: &[f64],
    net: &NetworkConfig,
    seed: u64,
) -> Result<(crate::classifier::Classifier, RoleDiagnostics)> {
    let mut num = EventSet::with_capacity(features.dim(), features.n_events());
    let mut den = EventSet::with_capacity(features.dim(), features.n_events());
    for i in 0..features.n_events() {
        num.push(features.row(i), values[i]);
        den.push(features.row(i), 1.0);
    }
    let cfg = NetworkConfig {
        input_dim: features.dim(),
        seed,
        ..net.clone()
    };
    let clf = train(&num, &den, &cfg)?;
    let diag = RoleDiagnostics::from(&clf.diagnostics);
    Ok((clf, diag))
}

/// Combine the detector-level multipliers into pulled weights for every
/// synthetic event.
///
/// Reconstructed events get `w_synth * r_step1` (or the bare ratio under
/// [`UpdateRule::LiteralAssign`]). When `impute` is set, events that were
/// generated but not reconstructed get the conditional average multiplier at
/// their generator-level features, estimated by a classifier trained between
/// the multiplier-weighted and unit-weighted generator-level sides of the
/// fully reconstructed events; otherwise they keep their previous weight.
pub fn pull(
    synthetic: &[PairedEvent],
    r_step1: &[f64],
    w_synth: &[f64],
    rule: UpdateRule,
    impute: bool,
    net: &NetworkConfig,
    seed: u64,
) -> Result<(Vec<f64>, Option<RoleDiagnostics>)> {
    check_weight_len("r_step1", r_step1.len(), synthetic.len())?;
    check_weight_len("w_synth", w_synth.len(), synthetic.len())?;
    let (gen_dim, _) = crate::dataset::paired_dims(synthetic)?;
    let idx = PresenceIndex::build(synthetic)?;
    if idx.sim_present.is_empty() {
        return Err(Error::EmptyInput(
            "no synthetic event was reconstructed; nothing to pull".into(),
        ));
    }
    let literal = rule == UpdateRule::LiteralAssign;
    let mut w_pull = w_synth.to_vec();
    for &i in &idx.sim_present {
        w_pull[i] = if literal {
            r_step1[i]
        } else {
            w_synth[i] * r_step1[i]
        };
    }
    if idx.sim_absent.is_empty() {
        return Ok((w_pull, None));
    }
    if !impute {
        for &i in &idx.sim_absent {
            w_pull[i] = if literal { 1.0 } else { w_synth[i] };
        }
        return Ok((w_pull, None));
    }
    if idx.both_present.is_empty() {
        return Err(Error::EmptyInput(
            "efficiency imputation needs events with both sides present".into(),
        ));
    }
    let both_gen = gather_side(synthetic, &idx.both_present, gen_dim, |p| &p.gen, |_| 1.0);
    let values: Vec<f64> = idx.both_present.iter().map(|&i| r_step1[i]).collect();
    let (clf, diag) = conditional_mean_of(&both_gen, &values, net, seed)?;
    let miss_gen = gather_side(synthetic, &idx.sim_absent, gen_dim, |p| &p.gen, |_| 1.0);
    let imputed = clf.ratio(&miss_gen)?;
    for (r, &i) in idx.sim_absent.iter().enumerate() {
        w_pull[i] = if literal {
            imputed[r]
        } else {
            w_synth[i] * imputed[r]
        };
    }
    Ok((w_pull, Some(diag)))
}

/// Generator-level reweighting: train a classifier between the pulled and
/// the current generator-level sample (same features, different weights) and
/// return the multiplier for every synthetic event (1 for events without a
/// generator-level side).
///
/// The denominator class is weighted by `w_synth`, so `w_synth * ratio`
/// estimates the conditional expectation of the pulled weight given the
/// generator-level features — the update becomes a proper function of those
/// features.
pub fn step2(
    synthetic: &[PairedEvent],
    w_pull: &[f64],
    w_synth: &[f64],
    rule: UpdateRule,
    net: &NetworkConfig,
    seed: u64,
) -> Result<(Vec<f64>, RoleDiagnostics)> {
    check_weight_len("w_pull", w_pull.len(), synthetic.len())?;
    check_weight_len("w_synth", w_synth.len(), synthetic.len())?;
    let (gen_dim, _) = crate::dataset::paired_dims(synthetic)?;
    let idx = PresenceIndex::build(synthetic)?;
    if idx.gen_present.is_empty() {
        return Err(Error::EmptyInput(
            "no synthetic event has a generator-level side; nothing to unfold".into(),
        ));
    }
    let pulled = gather_side(synthetic, &idx.gen_present, gen_dim, |p| &p.gen, |i| {
        w_pull[i]
    });
    let prior = gather_side(synthetic, &idx.gen_present, gen_dim, |p| &p.gen, |i| {
        w_synth[i]
    });
    let cfg = NetworkConfig {
        input_dim: gen_dim,
        seed,
        ..net.clone()
    };
    let clf = train(&pulled, &prior, &cfg)?;
    let mut features = EventSet::with_capacity(gen_dim, idx.gen_present.len());
    for &i in &idx.gen_present {
        features.push(synthetic[i].gen.as_ref().expect("gen present"), 1.0);
    }
    let present_ratios = clf.ratio(&features)?;
    let mut ratios = vec![1.0; synthetic.len()];
    for (r, &i) in idx.gen_present.iter().enumerate() {
        ratios[i] = present_ratios[r];
    }
    let _ = rule; // orientation is the same under both rules; kept for symmetry
    Ok((ratios, RoleDiagnostics::from(&clf.diagnostics)))
}

/// Combine the generator-level multipliers into pushed weights for every
/// synthetic event — the final weights of the iteration.
///
/// Generated events get `w_synth * r_step2` (or the bare ratio under
/// [`UpdateRule::LiteralAssign`]). When `impute` is set, reconstructed
/// events without a generator-level match get the conditional average
/// multiplier at their detector-level features, estimated from the fully
/// reconstructed events as in [`pull`]; otherwise they keep their previous
/// weight.
pub fn push(
    synthetic: &[PairedEvent],
    r_step2: &[f64],
    w_synth: &[f64],
    rule: UpdateRule,
    impute: bool,
    net: &NetworkConfig,
    seed: u64,
) -> Result<(Vec<f64>, Option<RoleDiagnostics>)> {
    check_weight_len("r_step2", r_step2.len(), synthetic.len())?;
    check_weight_len("w_synth", w_synth.len(), synthetic.len())?;
    let (_, sim_dim) = crate::dataset::paired_dims(synthetic)?;
    let idx = PresenceIndex::build(synthetic)?;
    if idx.gen_present.is_empty() {
        return Err(Error::EmptyInput(
            "no synthetic event has a generator-level side; nothing to push".into(),
        ));
    }
    let literal = rule == UpdateRule::LiteralAssign;
    let mut w_push = w_synth.to_vec();
    for &i in &idx.gen_present {
        w_push[i] = if literal {
            r_step2[i]
        } else {
            w_synth[i] * r_step2[i]
        };
    }
    if idx.gen_absent.is_empty() {
        return Ok((w_push, None));
    }
    if !impute {
        for &i in &idx.gen_absent {
            w_push[i] = if literal { 1.0 } else { w_synth[i] };
        }
        return Ok((w_push, None));
    }
    if idx.both_present.is_empty() {
        return Err(Error::EmptyInput(
            "acceptance imputation needs events with both sides present".into(),
        ));
    }
    let both_sim = gather_side(synthetic, &idx.both_present, sim_dim, |p| &p.sim, |_| 1.0);
    let values: Vec<f64> = idx.both_present.iter().map(|&i| r_step2[i]).collect();
    let (clf, diag) = conditional_mean_of(&both_sim, &values, net, seed)?;
    let miss_sim = gather_side(synthetic, &idx.gen_absent, sim_dim, |p| &p.sim, |_| 1.0);
    let imputed = clf.ratio(&miss_sim)?;
    for (r, &i) in idx.gen_absent.iter().enumerate() {
        w_push[i] = if literal {
            imputed[r]
        } else {
            w_synth[i] * imputed[r]
        };
    }
    Ok((w_push, Some(diag)))
}

/// Detector-level comparison histograms for the chi-square diagnostic:
/// 20 bins spanning the central 99% of the data's first feature.
fn detector_chi2_edges(data: &EventSet) -> Option<Vec<f64>> {
    let col: Vec<f64> = (0..data.n_events()).map(|i| data.row(i)[0]).collect();
    let lo = quantile(&col, 0.005).ok()?;
    let hi = quantile(&col, 0.995).ok()?;
    if !(hi > lo) {
        return None;
    }
    let n = 20;
    Some((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect())
}

/// Unbinned unfolding of `data` using the paired synthetic sample.
///
/// `noise` is a detector-level sample of the noise process; it is required
/// when background subtraction is enabled and ignored otherwise. The
/// synthetic pair weights are the starting weights.
pub fn run(
    data: &EventSet,
    noise: Option<&EventSet>,
    synthetic: &[PairedEvent],
    cfg: &UnfoldConfig,
) -> Result<UnfoldResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("no data events".into()));
    }
    let (gen_dim, sim_dim) = crate::dataset::paired_dims(synthetic)?;
    if sim_dim != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} features, synthetic detector level has {sim_dim}",
            data.dim()
        )));
    }
    if data.weights().iter().any(|w| !w.is_finite()) {
        return Err(Error::Config("non-finite data weight".into()));
    }

    let idx = PresenceIndex::build(synthetic)?;
    let mut diagnostics = UnfoldDiagnostics::default();

    // ------------------------------------------------------------------
    // Background subtraction
    // ------------------------------------------------------------------
    let data_weights: Vec<f64> = if cfg.enable_background {
        let noise = match noise {
            Some(n) if !n.is_empty() => n,
            _ => {
                return Err(Error::Config(
                    "background subtraction is enabled but no noise sample was given".into(),
                ))
            }
        };
        let seed = derive_seed(cfg.seed, tag::UNFOLD_BACKGROUND);
        let (w, diag) = subtract_background(data, noise, &cfg.detector_step, seed)
            .map_err(|e| e.with_context("background subtraction"))?;
        diagnostics.background = Some(diag);
        w
    } else {
        data.weights().to_vec()
    };
    diagnostics.sum_data_weights = data_weights.iter().sum();

    // Fixed comparison histogram for the per-iteration detector-level
    // chi-square diagnostic.
    let chi2_edges = detector_chi2_edges(data);
    let data_col: Vec<f64> = (0..data.n_events()).map(|i| data.row(i)[0]).collect();
    let data_hist = chi2_edges
        .as_ref()
        .and_then(|e| weighted_hist(&data_col, &data_weights, e).ok());
    let sim_col: Vec<f64> = idx
        .sim_present
        .iter()
        .map(|&i| synthetic[i].sim.as_ref().expect("sim present")[0])
        .collect();

    if cfg.enable_efficiency && !idx.sim_absent.is_empty() && idx.both_present.is_empty() {
        return Err(Error::EmptyInput(
            "efficiency imputation needs events with both sides present".into(),
        ));
    }
    if cfg.enable_acceptance && !idx.gen_absent.is_empty() && idx.both_present.is_empty() {
        return Err(Error::EmptyInput(
            "acceptance imputation needs events with both sides present".into(),
        ));
    }

    let mut w_synth: Vec<f64> = synthetic.iter().map(|p| p.weight).collect();
    let mut states: Vec<WeightState> = Vec::with_capacity(cfg.n_iterations);
    let literal = cfg.update_rule == UpdateRule::LiteralAssign;

    let seed_for = |role_tag: u64, iteration: usize| -> u64 {
        derive_seed(derive_seed(cfg.seed, role_tag), iteration as u64)
    };

    for k in 0..cfg.n_iterations {
        let iteration = k + 1;
        let ctx = |stage: &str| format!("iteration {iteration}, {stage}");

        // -------------------------------------------------- detector level
        let (r1, step1_diag) = step1(
            synthetic,
            &w_synth,
            data,
            &data_weights,
            cfg.update_rule,
            &cfg.detector_step,
            seed_for(tag::UNFOLD_STEP1, k),
        )
        .map_err(|e| e.with_context(&ctx("detector-level step")))?;

        let mut w_step1 = w_synth.clone();
        for &i in &idx.sim_present {
            w_step1[i] = if literal {
                r1[i]
            } else {
                w_synth[i] * r1[i]
            };
        }
        let sum_step1_weights: f64 = idx.sim_present.iter().map(|&i| w_step1[i]).sum();
        let detector_chi2 = match (&chi2_edges, &data_hist) {
            (Some(edges), Some(dh)) => {
                let sim_w: Vec<f64> = idx.sim_present.iter().map(|&i| w_step1[i]).collect();
                weighted_hist(&sim_col, &sim_w, edges)
                    .and_then(|sh| chi2_per_bin(&sh, dh))
                    .ok()
            }
            _ => None,
        };

        let (mut w_pull, miss1_diag) = pull(
            synthetic,
            &r1,
            &w_synth,
            cfg.update_rule,
            cfg.enable_efficiency,
            &cfg.efficiency_miss,
            seed_for(tag::UNFOLD_MISS1, k),
        )
        .map_err(|e| e.with_context(&ctx("efficiency imputation")))?;

        let mut n_clamped = 0usize;
        for w in &mut w_pull {
            let clamped = w.clamp(0.0, cfg.w_max);
            if clamped != *w {
                n_clamped += 1;
            }
            *w = clamped;
        }

        // ------------------------------------------------- generator level
        let (r2, step2_diag) = step2(
            synthetic,
            &w_pull,
            &w_synth,
            cfg.update_rule,
            &cfg.generator_step,
            seed_for(tag::UNFOLD_STEP2, k),
        )
        .map_err(|e| e.with_context(&ctx("generator-level step")))?;

        let mut w_step2 = w_pull.clone();
        for &i in &idx.gen_present {
            w_step2[i] = if literal {
                r2[i]
            } else {
                w_synth[i] * r2[i]
            };
        }

        let (mut w_push, miss2_diag) = push(
            synthetic,
            &r2,
            &w_synth,
            cfg.update_rule,
            cfg.enable_acceptance,
            &cfg.acceptance_miss,
            seed_for(tag::UNFOLD_MISS2, k),
        )
        .map_err(|e| e.with_context(&ctx("acceptance imputation")))?;

        for w in &mut w_push {
            let clamped = w.clamp(0.0, cfg.w_max);
            if clamped != *w {
                n_clamped += 1;
            }
            *w = clamped;
        }

        diagnostics.iterations.push(IterationDiagnostics {
            detector_step: step1_diag,
            efficiency_miss: miss1_diag,
            generator_step: step2_diag,
            acceptance_miss: miss2_diag,
            effective_sample_size: effective_sample_size(&w_push),
            n_clamped,
            sum_weights: w_push.iter().sum(),
            sum_step1_weights,
            detector_chi2,
        });
        w_synth = w_push.clone();
        states.push(WeightState {
            iteration,
            w_step1,
            w_pull,
            w_step2,
            w_push,
        });
    }

    let unfolded = gather_side(synthetic, &idx.gen_present, gen_dim, |p| &p.gen, |i| {
        w_synth[i]
    });
    Ok(UnfoldResult {
        unfolded,
        data_weights,
        states,
        diagnostics,
    })
}

// ---------------------------------------------------------------------------
// Binned limit
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BinnedUnfoldResult {
    /// Weighted generator-level histogram after each iteration (all
    /// generated events, updated weights).
    pub gen_hists: Vec<Vec<f64>>,
    /// Final weight per synthetic event (dropped pairs keep their input
    /// weight and are excluded from the histograms).
    pub final_weights: Vec<f64>,
    /// Noise-subtracted, clipped measured histogram the iterations target.
    pub measured_signal: Vec<f64>,
    /// Pairs excluded because a present side fell outside its axis.
    pub n_out_of_range: usize,
    pub warnings: Vec<String>,
}

/// The binned limit of [`run`]: identical event-level bookkeeping, with
/// every classifier replaced by the exact histogram ratio and the average-
/// multiplier imputation replaced by the in-bin weighted average. Agrees
/// with [`crate::binned::ibu`] on the per-iteration generator histograms to
/// rounding error (same fiducial rule: pairs with a present side out of
/// range are dropped).
///
/// `data_hist` and `noise_hist` are contents over the `sim_edges` binning;
/// pass an empty `noise_hist` when there is no background to subtract. The
/// target is `max(data_j - noise_j, 0)`. Weights are not clamped here.
pub fn run_binned(
    data_hist: &[f64],
    noise_hist: &[f64],
    synthetic: &[PairedEvent],
    gen_edges: &[f64],
    sim_edges: &[f64],
    n_iterations: usize,
) -> Result<BinnedUnfoldResult> {
    validate_edges(gen_edges)?;
    validate_edges(sim_edges)?;
    if n_iterations == 0 {
        return Err(Error::Config("n_iterations must be at least 1".into()));
    }
    let n_gen = gen_edges.len() - 1;
    let n_sim = sim_edges.len() - 1;
    if data_hist.len() != n_sim {
        return Err(Error::DimensionMismatch(format!(
            "data histogram has {} bins for {n_sim} detector-level bins",
            data_hist.len()
        )));
    }
    if !noise_hist.is_empty() && noise_hist.len() != n_sim {
        return Err(Error::DimensionMismatch(format!(
            "noise histogram has {} bins for {n_sim} detector-level bins",
            noise_hist.len()
        )));
    }
    let (gen_dim, sim_dim) = crate::dataset::paired_dims(synthetic)?;
    if gen_dim != 1 || sim_dim != 1 {
        return Err(Error::DimensionMismatch(format!(
            "binned unfolding needs one-dimensional events, got {gen_dim} generator-level and {sim_dim} detector-level features"
        )));
    }
    let find = |edges: &[f64], x: f64| -> Option<usize> {
        let n = edges.len() - 1;
        if x < edges[0] || x > edges[n] {
            return None;
        }
        if x == edges[n] {
            return Some(n - 1);
        }
        Some(edges.partition_point(|&e| e <= x) - 1)
    };

    let mut warnings = Vec::new();

    // Measured signal histogram.
    let mut m = data_hist.to_vec();
    if !noise_hist.is_empty() {
        for (v, &n) in m.iter_mut().zip(noise_hist) {
            *v -= n;
        }
        if m.iter().any(|&v| v < 0.0) {
            warnings.push("noise subtraction went negative in some bins; clipped to zero".into());
        }
        for v in &mut m {
            *v = v.max(0.0);
        }
    }

    // Classify pairs once: bin assignments, presence, fiducial cut.
    struct BinnedPair {
        gen_bin: Option<usize>,
        sim_bin: Option<usize>,
    }
    let mut pairs_b: Vec<Option<BinnedPair>> = Vec::with_capacity(synthetic.len());
    let mut n_out = 0usize;
    for p in synthetic {
        let gb = match &p.gen {
            Some(g) => match find(gen_edges, g[0]) {
                Some(b) => Some(Some(b)),
                None => None, // out of range -> drop pair
            },
            None => Some(None),
        };
        let sb = match &p.sim {
            Some(s) => match find(sim_edges, s[0]) {
                Some(b) => Some(Some(b)),
                None => None,
            },
            None => Some(None),
        };
        match (gb, sb) {
            (Some(g), Some(s)) => pairs_b.push(Some(BinnedPair { gen_bin: g, sim_bin: s })),
            _ => {
                pairs_b.push(None);
                n_out += 1;
            }
        }
    }

    let mut w: Vec<f64> = synthetic.iter().map(|p| p.weight).collect();
    let mut gen_hists = Vec::with_capacity(n_iterations);
    let mut warned_unmatched = false;

    for _ in 0..n_iterations {
        // Detector step: multiplier per reconstructed bin.
        let mut nu = vec![0.0; n_sim];
        for (i, bp) in pairs_b.iter().enumerate() {
            if let Some(bp) = bp {
                if let Some(j) = bp.sim_bin {
                    nu[j] += w[i];
                }
            }
        }
        let c: Vec<f64> = (0..n_sim)
            .map(|j| if nu[j] > 0.0 { m[j] / nu[j] } else { 0.0 })
            .collect();

        // Efficiency imputation: weighted average multiplier per generator
        // bin over both-present events.
        let mut avg_num = vec![0.0; n_gen];
        let mut avg_den = vec![0.0; n_gen];
        for (i, bp) in pairs_b.iter().enumerate() {
            if let Some(bp) = bp {
                if let (Some(gi), Some(sj)) = (bp.gen_bin, bp.sim_bin) {
                    avg_num[gi] += w[i] * c[sj];
                    avg_den[gi] += w[i];
                }
            }
        }
        let c_bar: Vec<f64> = (0..n_gen)
            .map(|i| if avg_den[i] > 0.0 { avg_num[i] / avg_den[i] } else { 0.0 })
            .collect();

        // Pulled generator-level histograms.
        let mut pulled = vec![0.0; n_gen];
        let mut prior = vec![0.0; n_gen];
        for (i, bp) in pairs_b.iter().enumerate() {
            if let Some(bp) = bp {
                if let Some(gi) = bp.gen_bin {
                    let mult = match bp.sim_bin {
                        Some(sj) => c[sj],
                        None => c_bar[gi],
                    };
                    pulled[gi] += w[i] * mult;
                    prior[gi] += w[i];
                }
            }
        }
        let r: Vec<f64> = (0..n_gen)
            .map(|i| if prior[i] > 0.0 { pulled[i] / prior[i] } else { 0.0 })
            .collect();

        // Acceptance imputation: weighted average generator multiplier per
        // reconstructed bin over both-present events.
        let mut acc_num = vec![0.0; n_sim];
        let mut acc_den = vec![0.0; n_sim];
        for (i, bp) in pairs_b.iter().enumerate() {
            if let Some(bp) = bp {
                if let (Some(gi), Some(sj)) = (bp.gen_bin, bp.sim_bin) {
                    acc_num[sj] += w[i] * r[gi];
                    acc_den[sj] += w[i];
                }
            }
        }
        let r_bar: Vec<f64> = (0..n_sim)
            .map(|j| if acc_den[j] > 0.0 { acc_num[j] / acc_den[j] } else { 0.0 })
            .collect();

        // Push.
        let mut hist = vec![0.0; n_gen];
        for (i, bp) in pairs_b.iter().enumerate() {
            if let Some(bp) = bp {
                match (bp.gen_bin, bp.sim_bin) {
                    (Some(gi), _) => {
                        w[i] *= r[gi];
                        hist[gi] += w[i];
                    }
                    (None, Some(sj)) => {
                        if acc_den[sj] == 0.0 && !warned_unmatched {
                            warnings.push(format!(
                                "reconstructed bin {sj} has unmatched events but no matched ones; their weights go to zero"
                            ));
                            warned_unmatched = true;
                        }
                        w[i] *= r_bar[sj];
                    }
                    (None, None) => unreachable!("validated on construction"),
                }
            }
        }
        gen_hists.push(hist);
    }

    Ok(BinnedUnfoldResult {
        gen_hists,
        final_weights: w,
        measured_signal: m,
        n_out_of_range: n_out,
        warnings,
    })
}
