//! Event containers and toy data generation.
//!
//! Two toy families drive development and benchmarks, both Gaussian:
//!
//! * a 1-D setup with additive smearing, a background process mixed into the
//!   measured data, and independent acceptance losses (measured events with
//!   no generator-level record) and efficiency losses (generator-level events
//!   that are never measured);
//! * a multidimensional setup where the detector-level value is the true
//!   value plus the sum of several unit Gaussians, and a configurable number
//!   of those smearing draws are *observed* alongside the smeared value. With
//!   all draws observed the true value is recoverable exactly, so widening
//!   the observed set sweeps the problem from hard to trivial.
//!
//! Widths are standard deviations throughout.

pub mod io;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Dense feature vector for one event.
pub type FeatureVector = Vec<f64>;

/// A weighted set of events with a fixed feature dimension, stored row-major.
#[derive(Clone, Debug, Default)]
pub struct EventSet {
    dim: usize,
    features: Vec<f64>,
    weights: Vec<f64>,
}

impl EventSet {
    pub fn new(dim: usize) -> Self {
        EventSet {
            dim,
            features: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        EventSet {
            dim,
            features: Vec::with_capacity(dim * n),
            weights: Vec::with_capacity(n),
        }
    }

    /// Build from parallel rows/weights.
    pub fn from_rows(dim: usize, rows: &[FeatureVector], weights: &[f64]) -> Result<Self> {
        if rows.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows vs {} weights",
                rows.len(),
                weights.len()
            )));
        }
        let mut set = EventSet::with_capacity(dim, rows.len());
        for (row, &w) in rows.iter().zip(weights) {
            if row.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row of dimension {} in {dim}-dimensional set",
                    row.len()
                )));
            }
            set.push(row, w);
        }
        Ok(set)
    }

    /// Append one event. Panics on a dimension mismatch — that is a caller
    /// bug, not a data error.
    pub fn push(&mut self, row: &[f64], weight: f64) {
        assert_eq!(row.len(), self.dim, "feature dimension mismatch");
        self.features.extend_from_slice(row);
        self.weights.push(weight);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_events(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Copy of feature column `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        assert!(k < self.dim, "column {k} out of range");
        (0..self.n_events())
            .map(|i| self.features[i * self.dim + k])
            .collect()
    }

    /// Flat row-major feature storage (`n x dim`).
    pub fn features_flat(&self) -> &[f64] {
        &self.features
    }

    /// Replace all weights.
    /// A copy restricted to the first `n` feature columns, keeping weights.
    /// The feature-count sweep of the multidimensional study observes
    /// prefixes of the same events, so truncation is the projection it needs.
    pub fn first_columns(&self, n: usize) -> Result<EventSet> {
        if n == 0 || n > self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot keep the first {n} of {} feature columns",
                self.dim()
            )));
        }
        let mut out = EventSet::with_capacity(n, self.n_events());
        for i in 0..self.n_events() {
            out.push(&self.row(i)[..n], self.weights()[i]);
        }
        Ok(out)
    }

    pub fn set_weights(&mut self, ws: &[f64]) -> Result<()> {
        if ws.len() != self.n_events() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} events",
                ws.len(),
                self.n_events()
            )));
        }
        self.weights.copy_from_slice(ws);
        Ok(())
    }
}

/// One synthetic event: generator-level and detector-level records, either of
/// which may be missing (never both).
#[derive(Clone, Debug, PartialEq)]
pub struct PairedEvent {
    pub gen: Option<FeatureVector>,
    pub sim: Option<FeatureVector>,
    pub weight: f64,
}

impl PairedEvent {
    pub fn validate(&self) -> Result<()> {
        if self.gen.is_none() && self.sim.is_none() {
            return Err(Error::Config(
                "paired event with neither side present".into(),
            ));
        }
        if !self.weight.is_finite() {
            return Err(Error::Config(format!(
                "non-finite pair weight {}",
                self.weight
            )));
        }
        Ok(())
    }
}

/// Configuration for the Gaussian toy generators. All widths are standard
/// deviations.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    /// Mean of the true (data-side) distribution.
    pub truth_mean: f64,
    pub truth_width: f64,
    /// Mean of the synthetic prior distribution.
    pub prior_mean: f64,
    pub prior_width: f64,
    /// Width of one smearing draw.
    pub smear_width: f64,
    /// Number of smearing draws summed into the detector-level value
    /// (multidimensional toy only; the 1-D toy uses a single draw and
    /// requires this to be 0).
    pub n_aux_smearings: usize,
    /// Fraction of measured data entries that come from the background
    /// process.
    pub noise_fraction: f64,
    pub noise_mean: f64,
    pub noise_width: f64,
    /// Probability that an event has no generator-level record given it was
    /// measured.
    pub acceptance_loss: f64,
    /// Probability that an event is not measured given it has a
    /// generator-level record.
    pub efficiency_loss: f64,
    /// Number of measured data entries, and number of synthetic pairs.
    pub n_events: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    /// The 1-D study setup: truth N(0.2, 0.8), prior N(0, 1), smearing
    /// N(0, 0.5), 10% background from N(0, 1.2), 10% acceptance and
    /// efficiency losses, 1e5 events.
    fn default() -> Self {
        ToyConfig {
            truth_mean: 0.2,
            truth_width: 0.8,
            prior_mean: 0.0,
            prior_width: 1.0,
            smear_width: 0.5,
            n_aux_smearings: 0,
            noise_fraction: 0.1,
            noise_mean: 0.0,
            noise_width: 1.2,
            acceptance_loss: 0.1,
            efficiency_loss: 0.1,
            n_events: 100_000,
            seed: 1,
        }
    }
}

impl ToyConfig {
    /// The multidimensional benchmark setup: truth N(0.3, 0.5), prior
    /// N(0, 1), four unit-width smearing draws, no background and no losses.
    pub fn multidim_defaults() -> Self {
        ToyConfig {
            truth_mean: 0.3,
            truth_width: 0.5,
            prior_mean: 0.0,
            prior_width: 1.0,
            smear_width: 1.0,
            n_aux_smearings: 4,
            noise_fraction: 0.0,
            noise_mean: 0.0,
            noise_width: 1.2,
            acceptance_loss: 0.0,
            efficiency_loss: 0.0,
            n_events: 100_000,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("truth_mean", self.truth_mean),
            ("truth_width", self.truth_width),
            ("prior_mean", self.prior_mean),
            ("prior_width", self.prior_width),
            ("smear_width", self.smear_width),
            ("noise_fraction", self.noise_fraction),
            ("noise_mean", self.noise_mean),
            ("noise_width", self.noise_width),
            ("acceptance_loss", self.acceptance_loss),
            ("efficiency_loss", self.efficiency_loss),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        if self.truth_width <= 0.0 || self.prior_width <= 0.0 {
            return Err(Error::Config("widths must be positive".into()));
        }
        if self.smear_width < 0.0 {
            return Err(Error::Config("smear_width must be non-negative".into()));
        }
        for (name, f) in [
            ("noise_fraction", self.noise_fraction),
            ("acceptance_loss", self.acceptance_loss),
            ("efficiency_loss", self.efficiency_loss),
        ] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!(
                    "{name} must be in [0, 1), got {f}"
                )));
            }
        }
        if self.noise_fraction > 0.0 && self.noise_width <= 0.0 {
            return Err(Error::Config(
                "noise_width must be positive when noise_fraction > 0".into(),
            ));
        }
        if self.n_events == 0 {
            return Err(Error::Config("n_events must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything one toy draw produces. `data`, `noise_mc` and `truth_holdout`
/// carry unit weights; `synthetic` pairs start at weight 1.
#[derive(Clone, Debug)]
pub struct ToyDataset {
    /// Measured detector-level events (signal and background mixed).
    pub data: EventSet,
    /// Independent sample of the background model. Its size is
    /// `round(noise_fraction * n_events)`, so with unit weights its total
    /// weight estimates the expected background count in `data`.
    pub noise_mc: EventSet,
    /// Paired synthetic sample drawn from the prior.
    pub synthetic: Vec<PairedEvent>,
    /// Generator-level reference sample. Validation only — nothing in the
    /// unfolding may look at it.
    pub truth_holdout: EventSet,
    /// Present when generated through one of the `*_traced` entry points.
    pub provenance: Option<Provenance>,
}

/// Debug bookkeeping recorded during generation. Tracing never consumes
/// randomness, so traced and untraced runs of the same config produce
/// identical samples.
#[derive(Clone, Debug)]
pub struct Provenance {
    /// For each data entry, whether it came from the background process.
    pub data_is_background: Vec<bool>,
    /// The signal-only subset of `data` (detector level, noiseless
    /// reference).
    pub data_signal: EventSet,
    /// For each synthetic pair, the raw smearing draws (empty when the
    /// detector side was never produced).
    pub synthetic_smears: Vec<Vec<f64>>,
}

/// Generate the 1-D toy. See [`ToyConfig::default`] for the study setup.
pub fn generate_gaussian_1d(cfg: &ToyConfig) -> Result<ToyDataset> {
    gaussian_1d_impl(cfg, false)
}

/// Same as [`generate_gaussian_1d`] but records [`Provenance`].
pub fn generate_gaussian_1d_traced(cfg: &ToyConfig) -> Result<ToyDataset> {
    gaussian_1d_impl(cfg, true)
}

fn gaussian_1d_impl(cfg: &ToyConfig, trace: bool) -> Result<ToyDataset> {
    cfg.validate()?;
    if cfg.n_aux_smearings != 0 {
        return Err(Error::Config(
            "the 1-D toy uses a single smearing draw; set n_aux_smearings = 0 \
             (the multidimensional generator is the one that sums auxiliary draws)"
                .into(),
        ));
    }

    let truth = Normal::new(cfg.truth_mean, cfg.truth_width).expect("validated width");
    let prior = Normal::new(cfg.prior_mean, cfg.prior_width).expect("validated width");
    let smear = Normal::new(0.0, cfg.smear_width).expect("validated width");
    let noise = Normal::new(cfg.noise_mean, cfg.noise_width).expect("validated width");

    // Measured data: exactly n_events entries. A signal candidate can fail to
    // be measured (efficiency loss); its truth value still belongs in the
    // holdout, and candidates keep coming until one is measured.
    let mut rng = stream(cfg.seed, tag::TOY_DATA);
    let mut data = EventSet::with_capacity(1, cfg.n_events);
    let mut truth_holdout = EventSet::new(1);
    let mut data_is_background = Vec::new();
    let mut data_signal = EventSet::new(1);
    for _ in 0..cfg.n_events {
        if rng.random_bool(cfg.noise_fraction) {
            data.push(&[noise.sample(&mut rng)], 1.0);
            if trace {
                data_is_background.push(true);
            }
            continue;
        }
        loop {
            let (gen_present, sim_present) = draw_presence(&mut rng, cfg);
            let x_t = truth.sample(&mut rng);
            if gen_present {
                truth_holdout.push(&[x_t], 1.0);
            }
            if sim_present {
                let x_d = x_t + smear.sample(&mut rng);
                data.push(&[x_d], 1.0);
                if trace {
                    data_is_background.push(false);
                    data_signal.push(&[x_d], 1.0);
                }
                break;
            }
        }
    }

    // Background model sample, unit weights.
    let mut rng = stream(cfg.seed, tag::TOY_NOISE);
    let n_noise = (cfg.noise_fraction * cfg.n_events as f64).round() as usize;
    let mut noise_mc = EventSet::with_capacity(1, n_noise);
    for _ in 0..n_noise {
        noise_mc.push(&[noise.sample(&mut rng)], 1.0);
    }

    // Synthetic pairs from the prior.
    let mut rng = stream(cfg.seed, tag::TOY_SYNTHETIC);
    let mut synthetic = Vec::with_capacity(cfg.n_events);
    let mut synthetic_smears = Vec::new();
    for _ in 0..cfg.n_events {
        let (gen_present, sim_present) = draw_presence(&mut rng, cfg);
        let x_g = prior.sample(&mut rng);
        let (sim, draws) = if sim_present {
            let z = smear.sample(&mut rng);
            (Some(vec![x_g + z]), vec![z])
        } else {
            (None, Vec::new())
        };
        synthetic.push(PairedEvent {
            gen: gen_present.then(|| vec![x_g]),
            sim,
            weight: 1.0,
        });
        if trace {
            synthetic_smears.push(draws);
        }
    }

    Ok(ToyDataset {
        data,
        noise_mc,
        synthetic,
        truth_holdout,
        provenance: trace.then_some(Provenance {
            data_is_background,
            data_signal,
            synthetic_smears,
        }),
    })
}

/// Which sides of an event exist. Acceptance and efficiency losses are
/// independent coin flips; the (no gen, no sim) outcome describes an event
/// that can never be observed anywhere, so it is redrawn.
fn draw_presence(rng: &mut ChaCha8Rng, cfg: &ToyConfig) -> (bool, bool) {
    loop {
        let gen_present = !rng.random_bool(cfg.acceptance_loss);
        let sim_present = !rng.random_bool(cfg.efficiency_loss);
        if gen_present || sim_present {
            return (gen_present, sim_present);
        }
    }
}

/// Generate the multidimensional toy. The detector-level value is
/// `x_t + sum of n_aux_smearings draws`, and the first `n_observed_aux` of
/// those draws are exposed as extra detector-level features, so the
/// detector-level dimension is `1 + n_observed_aux`. No background, no
/// acceptance or efficiency losses.
pub fn generate_gaussian_multidim(cfg: &ToyConfig, n_observed_aux: usize) -> Result<ToyDataset> {
    gaussian_multidim_impl(cfg, n_observed_aux, false)
}

/// Same as [`generate_gaussian_multidim`] but records [`Provenance`].
pub fn generate_gaussian_multidim_traced(
    cfg: &ToyConfig,
    n_observed_aux: usize,
) -> Result<ToyDataset> {
    gaussian_multidim_impl(cfg, n_observed_aux, true)
}

fn gaussian_multidim_impl(
    cfg: &ToyConfig,
    n_observed_aux: usize,
    trace: bool,
) -> Result<ToyDataset> {
    cfg.validate()?;
    if n_observed_aux > cfg.n_aux_smearings {
        return Err(Error::Config(format!(
            "cannot observe {n_observed_aux} of {} smearing draws",
            cfg.n_aux_smearings
        )));
    }
    if cfg.noise_fraction != 0.0 || cfg.acceptance_loss != 0.0 || cfg.efficiency_loss != 0.0 {
        return Err(Error::Config(
            "the multidimensional toy has no background or losses; set \
             noise_fraction, acceptance_loss and efficiency_loss to 0"
                .into(),
        ));
    }

    let truth = Normal::new(cfg.truth_mean, cfg.truth_width).expect("validated width");
    let prior = Normal::new(cfg.prior_mean, cfg.prior_width).expect("validated width");
    let smear = Normal::new(0.0, cfg.smear_width).expect("validated width");
    let sim_dim = 1 + n_observed_aux;

    let mut draws = vec![0.0; cfg.n_aux_smearings];
    let mut row = vec![0.0; sim_dim];

    let mut sample = |rng: &mut ChaCha8Rng,
                      law: &Normal<f64>,
                      out: &mut EventSet,
                      holdout: Option<&mut EventSet>,
                      smears: Option<&mut Vec<Vec<f64>>>|
     -> f64 {
        let x = law.sample(rng);
        for d in draws.iter_mut() {
            *d = smear.sample(rng);
        }
        row[0] = x + draws.iter().sum::<f64>();
        row[1..].copy_from_slice(&draws[..n_observed_aux]);
        out.push(&row, 1.0);
        if let Some(h) = holdout {
            h.push(&[x], 1.0);
        }
        if let Some(s) = smears {
            s.push(draws.clone());
        }
        x
    };

    let mut rng = stream(cfg.seed, tag::TOY_DATA);
    let mut data = EventSet::with_capacity(sim_dim, cfg.n_events);
    let mut truth_holdout = EventSet::with_capacity(1, cfg.n_events);
    for _ in 0..cfg.n_events {
        sample(&mut rng, &truth, &mut data, Some(&mut truth_holdout), None);
    }

    let mut rng = stream(cfg.seed, tag::TOY_SYNTHETIC);
    let mut sim_side = EventSet::with_capacity(sim_dim, cfg.n_events);
    let mut gen_values = Vec::with_capacity(cfg.n_events);
    let mut synthetic_smears = Vec::new();
    for _ in 0..cfg.n_events {
        let x_g = sample(
            &mut rng,
            &prior,
            &mut sim_side,
            None,
            trace.then_some(&mut synthetic_smears),
        );
        gen_values.push(x_g);
    }
    let synthetic: Vec<PairedEvent> = gen_values
        .iter()
        .enumerate()
        .map(|(i, &x_g)| PairedEvent {
            gen: Some(vec![x_g]),
            sim: Some(sim_side.row(i).to_vec()),
            weight: 1.0,
        })
        .collect();

    let data_is_background = if trace {
        vec![false; cfg.n_events]
    } else {
        Vec::new()
    };
    let data_signal = if trace { data.clone() } else { EventSet::new(sim_dim) };

    Ok(ToyDataset {
        data,
        noise_mc: EventSet::new(sim_dim),
        synthetic,
        truth_holdout,
        provenance: trace.then_some(Provenance {
            data_is_background,
            data_signal,
            synthetic_smears,
        }),
    })
}

/// Split a synthetic sample into the index sets the unfolding steps need.
#[derive(Clone, Debug, Default)]
pub struct PresenceIndex {
    pub sim_present: Vec<usize>,
    pub sim_absent: Vec<usize>,
    pub gen_present: Vec<usize>,
    pub gen_absent: Vec<usize>,
    pub both_present: Vec<usize>,
}

impl PresenceIndex {
    pub fn build(pairs: &[PairedEvent]) -> Result<Self> {
        let mut idx = PresenceIndex::default();
        for (i, p) in pairs.iter().enumerate() {
            p.validate()?;
            match (&p.gen, &p.sim) {
                (Some(_), Some(_)) => {
                    idx.gen_present.push(i);
                    idx.sim_present.push(i);
                    idx.both_present.push(i);
                }
                (Some(_), None) => {
                    idx.gen_present.push(i);
                    idx.sim_absent.push(i);
                }
                (None, Some(_)) => {
                    idx.gen_absent.push(i);
                    idx.sim_present.push(i);
                }
                (None, None) => unreachable!("validated above"),
            }
        }
        Ok(idx)
    }
}

/// Feature dimensions of a paired sample, validated for consistency.
pub fn paired_dims(pairs: &[PairedEvent]) -> Result<(usize, usize)> {
    let mut gen_dim = None;
    let mut sim_dim = None;
    for (i, p) in pairs.iter().enumerate() {
        p.validate()?;
        if let Some(g) = &p.gen {
            match gen_dim {
                None => gen_dim = Some(g.len()),
                Some(d) if d != g.len() => {
                    return Err(Error::DimensionMismatch(format!(
                        "pair {i}: generator-level dimension {} vs {d}",
                        g.len()
                    )))
                }
                _ => {}
            }
        }
        if let Some(s) = &p.sim {
            match sim_dim {
                None => sim_dim = Some(s.len()),
                Some(d) if d != s.len() => {
                    return Err(Error::DimensionMismatch(format!(
                        "pair {i}: detector-level dimension {} vs {d}",
                        s.len()
                    )))
                }
                _ => {}
            }
        }
    }
    match (gen_dim, sim_dim) {
        (Some(g), Some(s)) => Ok((g, s)),
        _ => Err(Error::EmptyInput(
            "paired sample has no events on one side".into(),
        )),
    }
}

/// Restrict every detector-level feature vector to its first `n` columns,
/// leaving generator-level sides and weights untouched.
pub fn truncate_sim_features(pairs: &[PairedEvent], n: usize) -> Result<Vec<PairedEvent>> {
    let (_, sim_dim) = paired_dims(pairs)?;
    if n == 0 || n > sim_dim {
        return Err(Error::DimensionMismatch(format!(
            "cannot keep the first {n} of {sim_dim} detector-level features"
        )));
    }
    Ok(pairs
        .iter()
        .map(|p| PairedEvent {
            gen: p.gen.clone(),
            sim: p.sim.as_ref().map(|s| s[..n].to_vec()),
            weight: p.weight,
        })
        .collect())
}
