//! Command-line surface tying generation, unfolding, the binned baseline,
//! and the ensemble benchmark together.
//!
//! Every subcommand reads one JSON configuration file (all keys optional,
//! unknown keys rejected) and a handful of overriding flags:
//!
//! ```text
//! unfold-kit <generate|unfold|ibu|benchmark|compare>
//!     [--config PATH] [--out DIR] [--seed INT] [--jobs INT] [--verbose]
//! ```
//!
//! Precedence is flag > config field > environment (`UNFOLD_KIT_THREADS`
//! for `--jobs`) > built-in default. All outputs are plain CSV/JSON with
//! deterministic bytes: re-running a command with the same configuration
//! overwrites its outputs with identical content.
//!
//! Exit codes: `0` success, `2` configuration errors (including unknown or
//! invalid config keys), `3` file errors (unreadable inputs, malformed data
//! files, failed writes), `4` algorithm errors (training or numerical
//! failures). Failures print a single machine-readable JSON object to
//! stderr: `{"error":{"kind":"...","message":"..."}}`.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::classifier::NetworkConfig;
use crate::dataset::{
    self, generate_gaussian_1d, generate_gaussian_multidim, io, EventSet, PairedEvent,
    PresenceIndex, ToyConfig,
};
use crate::error::{Error, Result};
use crate::experiments::{self, EnsembleSpec};
use crate::hist::Histogram1D;
use crate::omnifold::{self, UnfoldConfig};
use crate::stats::{relative_l1, weighted_hist};
use crate::{binned, rng};

/// Name of the environment variable consulted when neither `--jobs` nor the
/// config file sets a worker count.
pub const THREADS_ENV: &str = "UNFOLD_KIT_THREADS";

// ---------------------------------------------------------------------------
// Configuration file schema
// ---------------------------------------------------------------------------

/// Binning and iteration settings for the binned commands (`ibu`,
/// `compare`).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BinnedOptions {
    pub n_gen_bins: usize,
    pub gen_lo: f64,
    pub gen_hi: f64,
    pub n_sim_bins: usize,
    pub sim_lo: f64,
    pub sim_hi: f64,
    pub n_iterations: usize,
}

impl Default for BinnedOptions {
    fn default() -> Self {
        BinnedOptions {
            n_gen_bins: 20,
            gen_lo: -5.0,
            gen_hi: 5.0,
            n_sim_bins: 20,
            sim_lo: -5.0,
            sim_hi: 5.0,
            n_iterations: 3,
        }
    }
}

impl BinnedOptions {
    pub fn gen_edges(&self) -> Vec<f64> {
        uniform_edges(self.n_gen_bins, self.gen_lo, self.gen_hi)
    }

    pub fn sim_edges(&self) -> Vec<f64> {
        uniform_edges(self.n_sim_bins, self.sim_lo, self.sim_hi)
    }

    pub fn validate(&self) -> Result<()> {
        for (n, lo, hi, side) in [
            (self.n_gen_bins, self.gen_lo, self.gen_hi, "generator"),
            (self.n_sim_bins, self.sim_lo, self.sim_hi, "detector"),
        ] {
            if n == 0 || !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::Config(format!(
                    "binned {side} axis needs at least one bin and lo < hi, \
                     got {n} bins over [{lo}, {hi}]"
                )));
            }
        }
        if self.n_iterations == 0 {
            return Err(Error::Config("binned n_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

fn uniform_edges(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Ensemble sweep settings for the `benchmark` subcommand; the toy and
/// classifier blocks come from the shared sections.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleOptions {
    /// Desk-scale default of 20; `--full` raises it to the published-scale
    /// 100.
    pub n_experiments: usize,
    pub checkpoints: Vec<usize>,
    pub feature_counts: Vec<usize>,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            n_experiments: 20,
            checkpoints: vec![1, 2, 4, 8],
            feature_counts: vec![1, 2, 3, 4, 5],
        }
    }
}

/// Input file locations. When this block is absent, the commands that
/// consume events generate the toy dataset in memory from the `toy` block
/// instead.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    /// Measured events CSV.
    pub data: PathBuf,
    /// Paired synthetic events CSV.
    pub synthetic: PathBuf,
    /// Background-model events CSV; optional.
    #[serde(default)]
    pub noise: Option<PathBuf>,
}

/// The full configuration file: shared blocks plus subcommand-specific
/// options. Every field is optional and unknown keys are rejected at every
/// level.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Toy generation settings. `generate` uses them directly; `unfold`,
    /// `ibu` and `compare` fall back to them when no `inputs` block is
    /// given; `benchmark` defaults to the multidimensional setup instead.
    pub toy: Option<ToyConfig>,
    /// Unfolding settings for `unfold` and `compare`.
    pub unfold: Option<UnfoldConfig>,
    /// When set, this classifier configuration is applied to every network
    /// role, overriding the per-role blocks inside `unfold`.
    pub network: Option<NetworkConfig>,
    pub binned: BinnedOptions,
    pub ensemble: EnsembleOptions,
    pub inputs: Option<InputPaths>,
    pub out_dir: Option<PathBuf>,
    /// Replaces the seed of every block when set; `--seed` overrides it.
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "unfold-kit",
    version,
    about = "Unbinned iterative detector unfolding with a binned baseline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// JSON configuration file; omitted fields use built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for replicate parallelism (0 = one per core).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Progress notes on stderr.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a toy dataset and write its event files.
    Generate(CommonArgs),
    /// Run the unbinned iterative unfolding on event files.
    Unfold(CommonArgs),
    /// Run the binned baseline: response estimation plus iterative Bayesian
    /// unfolding.
    Ibu(CommonArgs),
    /// Run the ensemble benchmark and write its report.
    Benchmark(BenchmarkArgs),
    /// Compare the binned limit of the iterative unfolding, the matrix
    /// baseline, and the neural unfolding on the same dataset.
    Compare(CommonArgs),
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Published-scale ensemble (100 replicates) instead of the desk-scale
    /// default.
    #[arg(long)]
    pub full: bool,
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Parse the process arguments, run, and report: returns the process exit
/// code, printing the machine-readable error object to stderr on failure.
pub fn real_main() -> i32 {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}

/// Exit code for an error: 2 configuration, 3 file handling, 4 algorithm.
pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        "config" => 2,
        "io" | "parse" | "serialization" => 3,
        _ => 4,
    }
}

/// The machine-readable form of an error, one JSON object per failure.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({
        "error": { "kind": e.kind(), "message": e.to_string() }
    })
    .to_string()
}

pub fn run_cli(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => cmd_generate(&Resolved::new(&args)?),
        Command::Unfold(args) => cmd_unfold(&Resolved::new(&args)?),
        Command::Ibu(args) => cmd_ibu(&Resolved::new(&args)?),
        Command::Benchmark(args) => {
            let mut resolved = Resolved::new(&args.common)?;
            if args.full {
                resolved.cfg.ensemble.n_experiments = 100;
            }
            cmd_benchmark(&resolved)
        }
        Command::Compare(args) => cmd_compare(&Resolved::new(&args)?),
    }
}

// ---------------------------------------------------------------------------
// Resolution of config + flags
// ---------------------------------------------------------------------------

/// A configuration with every flag and fallback applied.
pub struct Resolved {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub verbose: bool,
}

impl Resolved {
    pub fn new(args: &CommonArgs) -> Result<Resolved> {
        let cfg = match &args.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        let out_dir = args
            .out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let seed = args.seed.or(cfg.seed);
        let jobs = match args.jobs.or(cfg.jobs) {
            Some(j) => j,
            None => parse_threads_env(std::env::var(THREADS_ENV).ok().as_deref())?,
        };
        Ok(Resolved { cfg, out_dir, seed, jobs, verbose: args.verbose })
    }

    /// The toy block with the resolved seed applied, or `fallback` when the
    /// block is absent.
    fn toy(&self, fallback: ToyConfig) -> ToyConfig {
        let mut toy = self.cfg.toy.clone().unwrap_or(fallback);
        if let Some(s) = self.seed {
            toy.seed = s;
        }
        toy
    }

    /// The unfold block with the network override and resolved seed
    /// applied.
    fn unfold(&self) -> UnfoldConfig {
        let mut u = self.cfg.unfold.clone().unwrap_or_default();
        if let Some(net) = &self.cfg.network {
            u.detector_step = net.clone();
            u.efficiency_miss = net.clone();
            u.generator_step = net.clone();
            u.acceptance_miss = net.clone();
        }
        if let Some(s) = self.seed {
            u.seed = s;
        }
        u
    }

    fn ensure_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| io_error(&self.out_dir, e))
    }

    fn note(&self, message: &str) {
        if self.verbose {
            eprintln!("unfold-kit: {message}");
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))
}

/// Parse the `UNFOLD_KIT_THREADS` value; absent means the default (0 = one
/// worker per core).
pub fn parse_threads_env(value: Option<&str>) -> Result<usize> {
    match value {
        None => Ok(0),
        Some(s) => s.trim().parse::<usize>().map_err(|_| {
            Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got {s:?}"))
        }),
    }
}

/// An I/O error annotated with the path it concerns.
fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// The event samples a consuming command works on: read from the `inputs`
/// block when given, generated in memory from the toy block otherwise.
fn load_inputs(r: &Resolved) -> Result<(EventSet, Option<EventSet>, Vec<PairedEvent>)> {
    match &r.cfg.inputs {
        Some(paths) => {
            let data = io::read_events(&paths.data)?;
            let noise = match &paths.noise {
                Some(p) => {
                    let n = io::read_events(p)?;
                    (!n.is_empty()).then_some(n)
                }
                None => None,
            };
            let synthetic = io::read_pairs(&paths.synthetic)?;
            r.note(&format!(
                "read {} data events, {} noise events, {} synthetic pairs",
                data.n_events(),
                noise.as_ref().map_or(0, EventSet::n_events),
                synthetic.len()
            ));
            Ok((data, noise, synthetic))
        }
        None => {
            let toy = r.toy(ToyConfig::default());
            let ds = if toy.n_aux_smearings == 0 {
                generate_gaussian_1d(&toy)?
            } else {
                generate_gaussian_multidim(&toy, toy.n_aux_smearings)?
            };
            r.note(&format!(
                "generated toy dataset in memory: {} data events, {} noise events, {} synthetic pairs",
                ds.data.n_events(),
                ds.noise_mc.n_events(),
                ds.synthetic.len()
            ));
            let noise = (!ds.noise_mc.is_empty()).then_some(ds.noise_mc);
            Ok((ds.data, noise, ds.synthetic))
        }
    }
}

fn require_one_dimensional(data: &EventSet, synthetic: &[PairedEvent]) -> Result<()> {
    let (gen_dim, sim_dim) = dataset::paired_dims(synthetic)?;
    if data.dim() != 1 || gen_dim != 1 || sim_dim != 1 {
        return Err(Error::DimensionMismatch(format!(
            "binned commands need one-dimensional events, got data dim {} and synthetic dims {gen_dim}/{sim_dim}",
            data.dim()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

/// `generate`: write `data.csv`, `noise.csv`, `synthetic.csv`, `truth.csv`.
pub fn cmd_generate(r: &Resolved) -> Result<()> {
    let toy = r.toy(ToyConfig::default());
    toy.validate()?;
    let ds = if toy.n_aux_smearings == 0 {
        generate_gaussian_1d(&toy)?
    } else {
        generate_gaussian_multidim(&toy, toy.n_aux_smearings)?
    };
    r.ensure_out_dir()?;
    io::write_events(&r.out_dir.join("data.csv"), &ds.data)?;
    io::write_events(&r.out_dir.join("noise.csv"), &ds.noise_mc)?;
    io::write_pairs(&r.out_dir.join("synthetic.csv"), &ds.synthetic)?;
    io::write_events(&r.out_dir.join("truth.csv"), &ds.truth_holdout)?;
    r.note(&format!(
        "wrote {} data events, {} noise events, {} synthetic pairs, {} truth events to {}",
        ds.data.n_events(),
        ds.noise_mc.n_events(),
        ds.synthetic.len(),
        ds.truth_holdout.n_events(),
        r.out_dir.display()
    ));
    Ok(())
}

/// `unfold`: write `weights.csv` (per-event weight trajectories),
/// `unfolded.csv` (generator-level events at final weights), and
/// `diagnostics.json`.
pub fn cmd_unfold(r: &Resolved) -> Result<()> {
    let (data, noise, synthetic) = load_inputs(r)?;
    let cfg = r.unfold();
    r.note(&format!(
        "unfolding {} iterations over {} synthetic pairs",
        cfg.n_iterations,
        synthetic.len()
    ));
    let result = omnifold::run(&data, noise.as_ref(), &synthetic, &cfg)?;

    r.ensure_out_dir()?;
    let mut weights = Vec::new();
    result.write_weight_trajectories(&mut weights)?;
    fs::write(r.out_dir.join("weights.csv"), &weights)
        .map_err(|e| io_error(&r.out_dir.join("weights.csv"), e))?;
    io::write_events(&r.out_dir.join("unfolded.csv"), &result.unfolded)?;
    write_text(
        &r.out_dir.join("diagnostics.json"),
        &to_pretty_json(&result.diagnostics)?,
    )?;
    r.note(&format!(
        "wrote weights.csv, unfolded.csv, diagnostics.json to {}",
        r.out_dir.display()
    ));
    Ok(())
}

/// `ibu`: write `response.csv` (matrix with a header row of generator-bin
/// edges), `unfolded.csv` (histogram), and `ibu.json` (full result).
pub fn cmd_ibu(r: &Resolved) -> Result<()> {
    let (data, noise, synthetic) = load_inputs(r)?;
    require_one_dimensional(&data, &synthetic)?;
    let opts = &r.cfg.binned;
    opts.validate()?;
    let gen_edges = opts.gen_edges();
    let sim_edges = opts.sim_edges();

    let response = binned::estimate_response(&synthetic, &gen_edges, &sim_edges)?;
    let data_hist = weighted_hist(&data.column(0), data.weights(), &sim_edges)?;
    let noise_contents = match &noise {
        Some(n) => weighted_hist(&n.column(0), n.weights(), &sim_edges)?.contents,
        None => Vec::new(),
    };
    let result = binned::ibu(
        &response,
        &data_hist.contents,
        &noise_contents,
        None,
        opts.n_iterations,
    )?;

    r.ensure_out_dir()?;
    let mut matrix_csv = Vec::new();
    response.write_matrix_csv(&mut matrix_csv)?;
    fs::write(r.out_dir.join("response.csv"), &matrix_csv)
        .map_err(|e| io_error(&r.out_dir.join("response.csv"), e))?;
    let unfolded_hist = Histogram1D {
        sumw2: vec![0.0; result.unfolded.len()],
        contents: result.unfolded.clone(),
        edges: gen_edges,
        underflow: 0.0,
        overflow: 0.0,
    };
    io::write_histogram(&r.out_dir.join("unfolded.csv"), &unfolded_hist)?;
    write_text(&r.out_dir.join("ibu.json"), &to_pretty_json(&result)?)?;
    r.note(&format!(
        "wrote response.csv, unfolded.csv, ibu.json to {}",
        r.out_dir.display()
    ));
    Ok(())
}

/// `benchmark`: write `report.json` and `report.txt`.
pub fn cmd_benchmark(r: &Resolved) -> Result<()> {
    let toy = r.toy(ToyConfig::multidim_defaults());
    let spec = EnsembleSpec {
        toy,
        n_experiments: r.cfg.ensemble.n_experiments,
        checkpoints: r.cfg.ensemble.checkpoints.clone(),
        feature_counts: r.cfg.ensemble.feature_counts.clone(),
        jobs: r.jobs,
        network: r.cfg.network.clone().unwrap_or_default(),
        w_max: r.cfg.unfold.as_ref().map_or(100.0, |u| u.w_max),
        seed: r.seed.unwrap_or(0),
    };
    r.note(&format!(
        "ensemble of {} replicates, feature counts {:?}, checkpoints {:?}, jobs {}",
        spec.n_experiments, spec.feature_counts, spec.checkpoints, spec.jobs
    ));
    let report = experiments::run_table1(&spec)?;
    r.ensure_out_dir()?;
    write_text(&r.out_dir.join("report.json"), &to_pretty_json(&report)?)?;
    write_text(
        &r.out_dir.join("report.txt"),
        &experiments::render_report_text(&report),
    )?;
    r.note(&format!("wrote report.json, report.txt to {}", r.out_dir.display()));
    Ok(())
}

/// One row of the comparison report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareIteration {
    pub iteration: usize,
    /// Relative L1 distance between the exact binned limit of the iterative
    /// unfolding and the matrix baseline.
    pub l1_binned_vs_ibu: f64,
    /// Relative L1 distance between the neural unfolding (histogrammed on
    /// the generator axis) and the exact binned limit.
    pub l1_neural_vs_binned: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub gen_edges: Vec<f64>,
    pub sim_edges: Vec<f64>,
    pub n_iterations: usize,
    pub iterations: Vec<CompareIteration>,
    /// Final generator-level histograms of the three algorithms.
    pub unfolded_binned: Vec<f64>,
    pub unfolded_ibu: Vec<f64>,
    pub unfolded_neural: Vec<f64>,
    pub warnings: Vec<String>,
}

/// `compare`: run the exact binned limit, the matrix baseline, and the
/// neural unfolding on the same dataset; write `compare.json` and
/// `compare.txt` with per-iteration L1 distances.
pub fn cmd_compare(r: &Resolved) -> Result<()> {
    let (data, noise, synthetic) = load_inputs(r)?;
    require_one_dimensional(&data, &synthetic)?;
    let opts = &r.cfg.binned;
    opts.validate()?;
    let gen_edges = opts.gen_edges();
    let sim_edges = opts.sim_edges();
    let n_iterations = opts.n_iterations;

    let data_hist = weighted_hist(&data.column(0), data.weights(), &sim_edges)?;
    let noise_contents = match &noise {
        Some(n) => weighted_hist(&n.column(0), n.weights(), &sim_edges)?.contents,
        None => Vec::new(),
    };

    r.note("running exact binned limit and matrix baseline");
    let binned_run = omnifold::run_binned(
        &data_hist.contents,
        &noise_contents,
        &synthetic,
        &gen_edges,
        &sim_edges,
        n_iterations,
    )?;
    let response = binned::estimate_response(&synthetic, &gen_edges, &sim_edges)?;
    let ibu_out = binned::ibu(
        &response,
        &data_hist.contents,
        &noise_contents,
        None,
        n_iterations,
    )?;

    r.note(&format!("running neural unfolding, {n_iterations} iterations"));
    let mut ucfg = r.unfold();
    ucfg.n_iterations = n_iterations;
    ucfg.enable_background = noise.is_some();
    let neural = omnifold::run(&data, noise.as_ref(), &synthetic, &ucfg)?;

    let idx = PresenceIndex::build(&synthetic)?;
    let gen_col: Vec<f64> = idx
        .gen_present
        .iter()
        .map(|&i| synthetic[i].gen.as_ref().expect("gen present")[0])
        .collect();
    let neural_hist = |k: usize| -> Result<Vec<f64>> {
        let w: Vec<f64> = idx
            .gen_present
            .iter()
            .map(|&i| neural.states[k].w_push[i])
            .collect();
        Ok(weighted_hist(&gen_col, &w, &gen_edges)?.contents)
    };

    let mut iterations = Vec::new();
    for k in 0..n_iterations {
        iterations.push(CompareIteration {
            iteration: k + 1,
            l1_binned_vs_ibu: relative_l1(
                &binned_run.gen_hists[k],
                &ibu_out.unfolded_per_iteration[k],
            )?,
            l1_neural_vs_binned: relative_l1(&neural_hist(k)?, &binned_run.gen_hists[k])?,
        });
    }

    let mut warnings = binned_run.warnings.clone();
    warnings.extend(ibu_out.warnings.iter().cloned());
    let report = CompareReport {
        unfolded_binned: binned_run.gen_hists[n_iterations - 1].clone(),
        unfolded_ibu: ibu_out.unfolded.clone(),
        unfolded_neural: neural_hist(n_iterations - 1)?,
        gen_edges,
        sim_edges,
        n_iterations,
        iterations,
        warnings,
    };

    r.ensure_out_dir()?;
    write_text(&r.out_dir.join("compare.json"), &to_pretty_json(&report)?)?;
    write_text(&r.out_dir.join("compare.txt"), &render_compare_text(&report))?;
    r.note(&format!("wrote compare.json, compare.txt to {}", r.out_dir.display()));
    Ok(())
}

fn render_compare_text(report: &CompareReport) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Binned-limit vs matrix baseline vs neural unfolding, {} generator bins",
        report.gen_edges.len() - 1
    );
    for row in &report.iterations {
        let _ = writeln!(
            out,
            "iteration {}: binned vs matrix L1 = {:.3e}, neural vs binned L1 = {:.3e}",
            row.iteration, row.l1_binned_vs_ibu, row.l1_neural_vs_binned
        );
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

// Re-exported so integration tests can name the same seed stream the
// library uses.
pub use rng::derive_seed;
