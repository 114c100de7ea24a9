//! Ensemble studies and the 1-D demonstration pipeline.
//!
//! [`run_table1`] runs the multidimensional benchmark: many independent
//! replicates of the Gaussian toy, each unfolded with a sweep over the
//! number of observed detector-level features, recording the weighted mean
//! of the unfolded sample at chosen iteration checkpoints. The per-cell
//! ensemble statistics are compared against checked-in reference values.
//!
//! [`run_figure1`] runs the 1-D demonstration end to end — background
//! subtraction, unfolding, and the detector/generator-level histogram
//! bundle — and reports the agreement metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::classifier::NetworkConfig;
use crate::dataset::{
    generate_gaussian_1d_traced, generate_gaussian_multidim, truncate_sim_features, EventSet,
    PresenceIndex, ToyConfig,
};
use crate::error::{Error, Result};
use crate::hist::Histogram1D;
use crate::omnifold::{self, UnfoldConfig, UnfoldDiagnostics};
use crate::rng::{derive_seed, tag};
// Weighted statistics used to read out every study; re-exported so the
// experiment surface is self-contained.
pub use crate::stats::{chi2_per_bin, relative_l1, weighted_hist, weighted_mean};

// ---------------------------------------------------------------------------
// Ensemble benchmark
// ---------------------------------------------------------------------------

/// Specification of one ensemble study over the multidimensional toy.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSpec {
    /// Base toy configuration; the seed field is replaced by a per-replicate
    /// derived seed.
    pub toy: ToyConfig,
    /// Number of independent replicates (at least 2, so the ensemble std is
    /// defined). Desk-scale default is 20; the published-scale study uses
    /// 100.
    pub n_experiments: usize,
    /// Iteration counts at which the unfolded weighted mean is recorded.
    pub checkpoints: Vec<usize>,
    /// Detector-level feature counts to sweep. `N` observes the smeared
    /// value plus the first `N - 1` smearing draws.
    pub feature_counts: Vec<usize>,
    /// Worker threads for replicate parallelism; 0 = one per core.
    pub jobs: usize,
    /// Classifier settings used for every role (input dimension and seed are
    /// set internally).
    pub network: NetworkConfig,
    pub w_max: f64,
    pub seed: u64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec::new(0)
    }
}

impl EnsembleSpec {
    /// Desk-scale defaults: 20 replicates, checkpoints 1/2/4/8, the full
    /// feature sweep.
    pub fn new(seed: u64) -> Self {
        EnsembleSpec {
            toy: ToyConfig::multidim_defaults(),
            n_experiments: 20,
            checkpoints: vec![1, 2, 4, 8],
            feature_counts: vec![1, 2, 3, 4, 5],
            jobs: 0,
            network: NetworkConfig::new(1),
            w_max: 100.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.toy.validate()?;
        self.network.validate()?;
        if self.n_experiments < 2 {
            return Err(Error::Config(
                "n_experiments must be at least 2 for an ensemble std".into(),
            ));
        }
        if self.checkpoints.is_empty() || self.feature_counts.is_empty() {
            return Err(Error::Config(
                "checkpoints and feature_counts must be non-empty".into(),
            ));
        }
        if self.checkpoints.iter().any(|&k| k == 0) {
            return Err(Error::Config("checkpoints must be at least 1".into()));
        }
        let mut sorted = self.checkpoints.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.checkpoints.len() || sorted != self.checkpoints {
            return Err(Error::Config(
                "checkpoints must be strictly increasing".into(),
            ));
        }
        for &n in &self.feature_counts {
            if n == 0 || n > 1 + self.toy.n_aux_smearings {
                return Err(Error::Config(format!(
                    "feature count {n} outside 1..={} (smeared value plus recorded draws)",
                    1 + self.toy.n_aux_smearings
                )));
            }
        }
        if !(self.w_max.is_finite() && self.w_max > 0.0) {
            return Err(Error::Config("w_max must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Ensemble statistics of one (feature count, iteration) cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellStats {
    pub n: usize,
    /// Mean over replicates of the unfolded weighted mean.
    pub mean: f64,
    /// Ensemble standard deviation of the unfolded weighted mean.
    pub std: f64,
    /// Standard error of `mean`: `std / sqrt(n)`.
    pub se_mean: f64,
    /// Standard error of `std`: `std / sqrt(2 (n - 1))`.
    pub se_std: f64,
}

/// Reference statistics for one cell, from the checked-in fixtures.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceCell {
    pub n_features: usize,
    pub iteration: usize,
    pub mean: f64,
    pub mean_err: f64,
    pub std: f64,
    pub std_err: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellReport {
    pub n_features: usize,
    pub iteration: usize,
    pub stats: CellStats,
    /// The unfolded weighted mean of every replicate, in replicate order.
    pub replicate_means: Vec<f64>,
    pub reference: Option<ReferenceCell>,
    /// `|mean - reference|` within 4 combined standard errors; `None`
    /// without a reference.
    pub mean_ok: Option<bool>,
    /// Same comparison for the ensemble std.
    pub std_ok: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub n_experiments: usize,
    pub truth_mean: f64,
    pub feature_counts: Vec<usize>,
    pub checkpoints: Vec<usize>,
    /// One entry per (feature count, checkpoint), feature-count major, in
    /// the order the ensemble specification listed them.
    pub cells: Vec<CellReport>,
    pub reference_cells_checked: usize,
    pub reference_cells_passed: usize,
    /// For each checkpoint, the ensemble std is non-increasing in the
    /// feature count within 2 combined standard errors. `None` when fewer
    /// than two feature counts were run.
    pub trend_ok: Option<bool>,
    pub trend_violations: Vec<String>,
    /// For the single-feature scenario, the distance of the cell mean from
    /// the truth mean decreases along the checkpoints within 2 combined
    /// standard errors. `None` when not applicable.
    pub bias_ok: Option<bool>,
    pub bias_violations: Vec<String>,
}

impl EnsembleReport {
    pub fn cell(&self, n_features: usize, iteration: usize) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.n_features == n_features && c.iteration == iteration)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<EnsembleReport> {
        Ok(serde_json::from_str(json)?)
    }
}

#[derive(Deserialize)]
struct ReferenceFile {
    cell: Vec<ReferenceCell>,
}

/// The checked-in reference table for the multidimensional benchmark
/// (100-replicate statistics; see the fixtures file for conventions).
pub fn reference_table() -> Vec<ReferenceCell> {
    let text = include_str!("../data/table1_reference.toml");
    let parsed: ReferenceFile = toml::from_str(text).expect("fixtures file is well-formed");
    parsed.cell
}

/// The unfolded weighted means of one replicate, one entry per
/// (feature count, checkpoint) in feature-count-major order.
fn run_replicate(spec: &EnsembleSpec, replicate: usize) -> Result<Vec<f64>> {
    let rep_seed = derive_seed(derive_seed(spec.seed, tag::ENSEMBLE_REPLICATE), replicate as u64);
    let ctx = |n: usize| format!("replicate {replicate}, {n} observed features");

    let max_features = *spec.feature_counts.iter().max().expect("validated non-empty");
    let mut toy = spec.toy.clone();
    toy.seed = rep_seed;
    // One generation serves the whole sweep: the generator always draws
    // every smearing, so observing fewer features is a column projection.
    let dataset = generate_gaussian_multidim(&toy, max_features - 1)
        .map_err(|e| e.with_context(&format!("replicate {replicate}, generation")))?;
    let max_iterations = *spec.checkpoints.iter().max().expect("validated non-empty");

    let mut out = Vec::with_capacity(spec.feature_counts.len() * spec.checkpoints.len());
    for &n in &spec.feature_counts {
        let data = dataset.data.first_columns(n).map_err(|e| e.with_context(&ctx(n)))?;
        let pairs =
            truncate_sim_features(&dataset.synthetic, n).map_err(|e| e.with_context(&ctx(n)))?;

        let mut cfg = UnfoldConfig::new(rep_seed);
        cfg.n_iterations = max_iterations;
        cfg.w_max = spec.w_max;
        cfg.enable_background = false;
        cfg.detector_step = spec.network.clone();
        cfg.efficiency_miss = spec.network.clone();
        cfg.generator_step = spec.network.clone();
        cfg.acceptance_miss = spec.network.clone();

        let result =
            omnifold::run(&data, None, &pairs, &cfg).map_err(|e| e.with_context(&ctx(n)))?;

        let idx = PresenceIndex::build(&pairs)?;
        let gen_col: Vec<f64> = idx
            .gen_present
            .iter()
            .map(|&i| pairs[i].gen.as_ref().expect("gen present")[0])
            .collect();
        for &k in &spec.checkpoints {
            let w: Vec<f64> = idx
                .gen_present
                .iter()
                .map(|&i| result.states[k - 1].w_push[i])
                .collect();
            out.push(weighted_mean(&gen_col, &w).map_err(|e| e.with_context(&ctx(n)))?);
        }
    }
    Ok(out)
}

/// Run the ensemble benchmark. Replicates are independent and run in
/// parallel; the report is identical for any `jobs` value because every
/// replicate derives its own seed and the aggregation is order-stable.
pub fn run_table1(spec: &EnsembleSpec) -> Result<EnsembleReport> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let per_replicate: Vec<Vec<f64>> = pool.install(|| {
        (0..spec.n_experiments)
            .into_par_iter()
            .map(|e| run_replicate(spec, e))
            .collect::<Result<Vec<_>>>()
    })?;

    // cell -> means over replicates, keyed in spec order
    let mut cell_means: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for rep in &per_replicate {
        let mut it = rep.iter();
        for &n in &spec.feature_counts {
            for &k in &spec.checkpoints {
                cell_means
                    .entry((n, k))
                    .or_default()
                    .push(*it.next().expect("replicate vector is cell-aligned"));
            }
        }
    }

    let reference = reference_table();
    let mut cells = Vec::new();
    let mut checked = 0usize;
    let mut passed = 0usize;
    for &n in &spec.feature_counts {
        for &k in &spec.checkpoints {
            let means = &cell_means[&(n, k)];
            let (mean, std) = crate::stats::sample_mean_std(means)?;
            let count = means.len();
            let stats = CellStats {
                n: count,
                mean,
                std,
                se_mean: std / (count as f64).sqrt(),
                se_std: std / (2.0 * (count as f64 - 1.0)).sqrt(),
            };
            let reference_cell = reference
                .iter()
                .find(|r| r.n_features == n && r.iteration == k)
                .cloned();
            let (mean_ok, std_ok) = match &reference_cell {
                Some(r) => {
                    let mean_tol = 4.0 * (stats.se_mean.powi(2) + r.mean_err.powi(2)).sqrt();
                    let std_tol = 4.0 * (stats.se_std.powi(2) + r.std_err.powi(2)).sqrt();
                    let m_ok = (stats.mean - r.mean).abs() <= mean_tol;
                    let s_ok = (stats.std - r.std).abs() <= std_tol;
                    checked += 1;
                    if m_ok && s_ok {
                        passed += 1;
                    }
                    (Some(m_ok), Some(s_ok))
                }
                None => (None, None),
            };
            cells.push(CellReport {
                n_features: n,
                iteration: k,
                stats,
                replicate_means: means.clone(),
                reference: reference_cell,
                mean_ok,
                std_ok,
            });
        }
    }

    // Trend: for each checkpoint, std non-increasing in the feature count
    // within 2 combined standard errors.
    let mut trend_violations = Vec::new();
    let mut sorted_counts = spec.feature_counts.clone();
    sorted_counts.sort_unstable();
    let trend_ok = if sorted_counts.len() >= 2 {
        for &k in &spec.checkpoints {
            for pair in sorted_counts.windows(2) {
                let a = cells
                    .iter()
                    .find(|c| c.n_features == pair[0] && c.iteration == k)
                    .expect("cell exists");
                let b = cells
                    .iter()
                    .find(|c| c.n_features == pair[1] && c.iteration == k)
                    .expect("cell exists");
                let tol = 2.0 * (a.stats.se_std.powi(2) + b.stats.se_std.powi(2)).sqrt();
                if b.stats.std > a.stats.std + tol {
                    trend_violations.push(format!(
                        "iteration {k}: std rises from {:.4e} ({} features) to {:.4e} ({} features), tolerance {:.1e}",
                        a.stats.std, pair[0], b.stats.std, pair[1], tol
                    ));
                }
            }
        }
        Some(trend_violations.is_empty())
    } else {
        None
    };

    // Bias: single-feature mean approaches the truth along the checkpoints
    // within 2 combined standard errors.
    let mut bias_violations = Vec::new();
    let bias_ok = if spec.feature_counts.contains(&1) && spec.checkpoints.len() >= 2 {
        for pair in spec.checkpoints.windows(2) {
            let a = cells
                .iter()
                .find(|c| c.n_features == 1 && c.iteration == pair[0])
                .expect("cell exists");
            let b = cells
                .iter()
                .find(|c| c.n_features == 1 && c.iteration == pair[1])
                .expect("cell exists");
            let bias_a = (a.stats.mean - spec.toy.truth_mean).abs();
            let bias_b = (b.stats.mean - spec.toy.truth_mean).abs();
            let tol = 2.0 * (a.stats.se_mean.powi(2) + b.stats.se_mean.powi(2)).sqrt();
            if bias_b > bias_a + tol {
                bias_violations.push(format!(
                    "|mean - truth| grows from {bias_a:.4e} (iteration {}) to {bias_b:.4e} (iteration {}), tolerance {tol:.1e}",
                    pair[0], pair[1]
                ));
            }
        }
        Some(bias_violations.is_empty())
    } else {
        None
    };

    Ok(EnsembleReport {
        n_experiments: spec.n_experiments,
        truth_mean: spec.toy.truth_mean,
        feature_counts: spec.feature_counts.clone(),
        checkpoints: spec.checkpoints.clone(),
        cells,
        reference_cells_checked: checked,
        reference_cells_passed: passed,
        trend_ok,
        trend_violations,
        bias_ok,
        bias_violations,
    })
}

/// `value(err)` notation: the error rounded to one significant digit, shown
/// in units of the value's last printed decimal, e.g. 0.2162 ± 0.0008 at
/// scale 100 renders as `21.62(8)`.
fn fmt_value_err(value: f64, err: f64, scale: f64) -> String {
    let v = value * scale;
    let e = err * scale;
    if !(e.is_finite() && e > 0.0) {
        return format!("{v:.4}");
    }
    let mut mag = e.log10().floor() as i32;
    let mut rounded = (e / 10f64.powi(mag)).round();
    if rounded >= 10.0 {
        mag += 1;
        rounded = 1.0;
    }
    let decimals = (-mag).max(0) as usize;
    format!("{v:.decimals$}({})", rounded as i64)
}

/// Plain-text rendering of an [`EnsembleReport`]: one block of cell means
/// and one of ensemble standard deviations, feature counts down, iteration
/// checkpoints across.
pub fn render_report_text(report: &EnsembleReport) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Ensemble of {} replicates; truth mean {:.4}",
        report.n_experiments, report.truth_mean
    );

    let col_width = 12usize;
    let mut header = String::from("  features ");
    for &k in &report.checkpoints {
        let _ = write!(header, "| {:>width$} ", format!("iter {k}"), width = col_width);
    }
    let rule = "-".repeat(header.len());

    let block = |out: &mut String,
                 title: &str,
                 value: &dyn Fn(&CellReport) -> (f64, f64),
                 scale: f64| {
        let _ = writeln!(out, "\n{title}");
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{rule}");
        for &n in &report.feature_counts {
            let mut line = format!("  N = {n:<5}");
            for &k in &report.checkpoints {
                let cell = report.cell(n, k).expect("cell exists");
                let (v, e) = value(cell);
                let _ = write!(line, "| {:>col_width$} ", fmt_value_err(v, e, scale));
            }
            let _ = writeln!(out, "{line}");
        }
    };

    block(
        &mut out,
        "Unfolded weighted mean, x 10^-2",
        &|c| (c.stats.mean, c.stats.se_mean),
        100.0,
    );
    block(
        &mut out,
        "Ensemble standard deviation, x 10^-3",
        &|c| (c.stats.std, c.stats.se_std),
        1000.0,
    );

    let _ = writeln!(out);
    if report.reference_cells_checked > 0 {
        let _ = writeln!(
            out,
            "Reference check: {}/{} cells within 4 combined standard errors",
            report.reference_cells_passed, report.reference_cells_checked
        );
    }
    match report.trend_ok {
        Some(true) => {
            let _ = writeln!(out, "Trend (std non-increasing in feature count): ok");
        }
        Some(false) => {
            let _ = writeln!(out, "Trend (std non-increasing in feature count): VIOLATED");
            for v in &report.trend_violations {
                let _ = writeln!(out, "  - {v}");
            }
        }
        None => {}
    }
    match report.bias_ok {
        Some(true) => {
            let _ = writeln!(out, "Bias (single-feature approach to truth): ok");
        }
        Some(false) => {
            let _ = writeln!(out, "Bias (single-feature approach to truth): VIOLATED");
            for v in &report.bias_violations {
                let _ = writeln!(out, "  - {v}");
            }
        }
        None => {}
    }
    out
}

// ---------------------------------------------------------------------------
// 1-D demonstration pipeline
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Config {
    /// 1-D toy setup (background, acceptance and efficiency effects on).
    pub toy: ToyConfig,
    /// Classifier settings for every role.
    pub network: NetworkConfig,
    /// Total iterations to run. One more than `plot_iteration` allows the
    /// next-iteration stability readout.
    pub n_iterations: usize,
    /// Iteration whose weights feed the histogram bundle.
    pub plot_iteration: usize,
    pub w_max: f64,
    pub seed: u64,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Figure1Config::new(0)
    }
}

impl Figure1Config {
    pub fn new(seed: u64) -> Self {
        Figure1Config {
            toy: ToyConfig { seed, ..ToyConfig::default() },
            network: NetworkConfig::new(1),
            n_iterations: 4,
            plot_iteration: 3,
            w_max: 100.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.toy.validate()?;
        self.network.validate()?;
        if self.toy.n_aux_smearings != 0 {
            return Err(Error::Config(
                "the demonstration pipeline is one-dimensional; set n_aux_smearings = 0".into(),
            ));
        }
        if self.plot_iteration == 0 || self.plot_iteration > self.n_iterations {
            return Err(Error::Config(format!(
                "plot_iteration {} outside 1..={}",
                self.plot_iteration, self.n_iterations
            )));
        }
        if !(self.w_max.is_finite() && self.w_max > 0.0) {
            return Err(Error::Config("w_max must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Histogram bundle and agreement metrics of the 1-D demonstration.
#[derive(Clone, Debug)]
pub struct Figure1Bundle {
    /// Common binning of every histogram (20 bins over [-3, 3]).
    pub edges: Vec<f64>,
    /// Measured data, unit weights.
    pub data: Histogram1D,
    /// Background-model sample; its total is the expected background yield.
    pub noise: Histogram1D,
    /// Data weighted by the background-subtraction weights.
    pub subtracted: Histogram1D,
    /// Noiseless detector-level signal reference (generation bookkeeping).
    pub signal_reference: Histogram1D,
    /// Reconstructed synthetic events at the plot iteration's
    /// detector-level weights.
    pub reweighted_sim: Histogram1D,
    /// Generator-level synthetic prior, input weights.
    pub prior: Histogram1D,
    /// Truth reference sample.
    pub truth: Histogram1D,
    /// Generator-level synthetic events at the plot iteration's final
    /// weights.
    pub unfolded: Histogram1D,
    /// Subtracted data vs the noiseless signal reference.
    pub chi2_subtracted_vs_signal: f64,
    /// Reweighted synthetic sample vs subtracted data (detector level).
    pub chi2_detector: f64,
    /// Unfolded sample vs truth reference (generator level).
    pub chi2_generator: f64,
    /// Relative L1 distance between the unfolded histograms of the plot
    /// iteration and the one after it; `None` when the run stopped at the
    /// plot iteration.
    pub l1_next_iteration: Option<f64>,
    pub diagnostics: UnfoldDiagnostics,
}

impl Figure1Bundle {
    /// Write the bundle as two CSV files, `figure1_detector.csv` and
    /// `figure1_generator.csv`, into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let fmt = crate::dataset::io::fmt_f64;
        let mut det = String::from("bin_lo,bin_hi,data,noise_model,subtracted_data,signal_reference,reweighted_sim\n");
        let mut gen = String::from("bin_lo,bin_hi,prior,truth,unfolded\n");
        for i in 0..self.data.n_bins() {
            let _ = writeln!(
                det,
                "{},{},{},{},{},{},{}",
                fmt(self.edges[i]),
                fmt(self.edges[i + 1]),
                fmt(self.data.contents[i]),
                fmt(self.noise.contents[i]),
                fmt(self.subtracted.contents[i]),
                fmt(self.signal_reference.contents[i]),
                fmt(self.reweighted_sim.contents[i]),
            );
            let _ = writeln!(
                gen,
                "{},{},{},{},{}",
                fmt(self.edges[i]),
                fmt(self.edges[i + 1]),
                fmt(self.prior.contents[i]),
                fmt(self.truth.contents[i]),
                fmt(self.unfolded.contents[i]),
            );
        }
        std::fs::write(dir.join("figure1_detector.csv"), det)?;
        std::fs::write(dir.join("figure1_generator.csv"), gen)?;
        Ok(())
    }
}

/// Run the 1-D demonstration pipeline: generate, subtract the background,
/// unfold, and aggregate the histogram bundle with agreement metrics.
pub fn run_figure1(cfg: &Figure1Config) -> Result<Figure1Bundle> {
    cfg.validate()?;
    let dataset = generate_gaussian_1d_traced(&cfg.toy)?;
    let provenance = dataset.provenance.as_ref().expect("traced generation");

    let mut ucfg = UnfoldConfig::new(cfg.seed);
    ucfg.n_iterations = cfg.n_iterations;
    ucfg.w_max = cfg.w_max;
    ucfg.enable_background = cfg.toy.noise_fraction > 0.0;
    ucfg.detector_step = cfg.network.clone();
    ucfg.efficiency_miss = cfg.network.clone();
    ucfg.generator_step = cfg.network.clone();
    ucfg.acceptance_miss = cfg.network.clone();

    let noise = (!dataset.noise_mc.is_empty()).then_some(&dataset.noise_mc);
    let result = omnifold::run(&dataset.data, noise, &dataset.synthetic, &ucfg)?;

    let edges: Vec<f64> = (0..=20).map(|i| -3.0 + 6.0 * i as f64 / 20.0).collect();
    let column = |set: &EventSet| -> Vec<f64> { (0..set.n_events()).map(|i| set.row(i)[0]).collect() };
    let unit = |set: &EventSet| vec![1.0; set.n_events()];

    let idx = PresenceIndex::build(&dataset.synthetic)?;
    let state = &result.states[cfg.plot_iteration - 1];
    let sim_col: Vec<f64> = idx
        .sim_present
        .iter()
        .map(|&i| dataset.synthetic[i].sim.as_ref().expect("sim present")[0])
        .collect();
    let sim_w: Vec<f64> = idx.sim_present.iter().map(|&i| state.w_step1[i]).collect();
    let gen_col: Vec<f64> = idx
        .gen_present
        .iter()
        .map(|&i| dataset.synthetic[i].gen.as_ref().expect("gen present")[0])
        .collect();
    let gen_w0: Vec<f64> = idx
        .gen_present
        .iter()
        .map(|&i| dataset.synthetic[i].weight)
        .collect();
    let gen_w: Vec<f64> = idx.gen_present.iter().map(|&i| state.w_push[i]).collect();

    let data = weighted_hist(&column(&dataset.data), &unit(&dataset.data), &edges)?;
    let noise_h = weighted_hist(&column(&dataset.noise_mc), &unit(&dataset.noise_mc), &edges)?;
    let subtracted = weighted_hist(&column(&dataset.data), &result.data_weights, &edges)?;
    let signal_reference = weighted_hist(
        &column(&provenance.data_signal),
        &unit(&provenance.data_signal),
        &edges,
    )?;
    let reweighted_sim = weighted_hist(&sim_col, &sim_w, &edges)?;
    let prior = weighted_hist(&gen_col, &gen_w0, &edges)?;
    let truth = weighted_hist(
        &column(&dataset.truth_holdout),
        &unit(&dataset.truth_holdout),
        &edges,
    )?;
    let unfolded = weighted_hist(&gen_col, &gen_w, &edges)?;

    let chi2_subtracted_vs_signal = chi2_per_bin(&subtracted, &signal_reference)?;
    let chi2_detector = chi2_per_bin(&reweighted_sim, &subtracted)?;
    let chi2_generator = chi2_per_bin(&unfolded, &truth)?;
    let l1_next_iteration = if cfg.plot_iteration < cfg.n_iterations {
        let next_w: Vec<f64> = idx
            .gen_present
            .iter()
            .map(|&i| result.states[cfg.plot_iteration].w_push[i])
            .collect();
        let next = weighted_hist(&gen_col, &next_w, &edges)?;
        Some(relative_l1(&next.contents, &unfolded.contents)?)
    } else {
        None
    };

    Ok(Figure1Bundle {
        edges,
        data,
        noise: noise_h,
        subtracted,
        signal_reference,
        reweighted_sim,
        prior,
        truth,
        unfolded,
        chi2_subtracted_vs_signal,
        chi2_detector,
        chi2_generator,
        l1_next_iteration,
        diagnostics: result.diagnostics,
    })
}
