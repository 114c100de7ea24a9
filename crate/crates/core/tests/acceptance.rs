//! Acceptance gate: the eight checks that pin the library to its published
//! behavior, at full scale and stated tolerances. Each test prints one
//! PASS/FAIL line (visible with `--nocapture`, or on failure).
//!
//! Runtime: the ensemble check dominates at roughly half an hour on one
//! desktop core; everything else together adds a few minutes.

use std::fmt::Write as _;
use std::process::Command;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, Uniform};
use statrs::distribution::{Continuous, Normal as StatNormal};
use tempfile::tempdir;

use unfold_kit::binned::{estimate_response, ibu};
use unfold_kit::classifier::{loss_gradient, train, weighted_bce_loss, NetworkConfig};
use unfold_kit::dataset::{generate_gaussian_1d, EventSet, PairedEvent, PresenceIndex, ToyConfig};
use unfold_kit::experiments::{run_figure1, run_table1, EnsembleSpec, Figure1Config};
use unfold_kit::omnifold::{run, run_binned, UnfoldConfig};
use unfold_kit::stats::{relative_l1, weighted_hist, weighted_mean};

/// Print the single verdict line for a criterion, then enforce it.
fn verdict(criterion: &str, ok: bool, detail: &str) {
    println!("{} — {criterion}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{criterion}: {detail}");
}

fn pair1(gen: Option<f64>, sim: Option<f64>, weight: f64) -> PairedEvent {
    PairedEvent {
        gen: gen.map(|g| vec![g]),
        sim: sim.map(|s| vec![s]),
        weight,
    }
}

/// Criterion 1: reduced ensemble of 20 replicates at 10^5 events. The
/// all-features cell recovers the truth mean, the single-feature cell shows
/// the prior bias, and iterating walks the single-feature mean upward.
#[test]
fn criterion_1_ensemble_means() {
    let mut wide = EnsembleSpec::new(0);
    wide.feature_counts = vec![5];
    wide.checkpoints = vec![1];
    wide.jobs = 1;
    let wide_report = run_table1(&wide).unwrap();
    let n5k1 = wide_report.cell(5, 1).unwrap().stats.mean;

    let mut deep = EnsembleSpec::new(0);
    deep.feature_counts = vec![1];
    deep.checkpoints = vec![1, 2, 4, 8];
    deep.jobs = 1;
    let deep_report = run_table1(&deep).unwrap();
    let n1: Vec<f64> = [1, 2, 4, 8]
        .iter()
        .map(|&k| deep_report.cell(1, k).unwrap().stats.mean)
        .collect();

    let wide_ok = (0.295..=0.305).contains(&n5k1);
    let bias_ok = (0.195..=0.240).contains(&n1[0]);
    let trend_ok = n1.windows(2).all(|w| w[1] > w[0]);

    let mut detail = String::new();
    let _ = write!(
        detail,
        "N=5@1it mean {n5k1:.4} in [0.295, 0.305]: {wide_ok}; N=1@1it mean {:.4} in [0.195, 0.240]: {bias_ok}; N=1 means over iterations 1,2,4,8: {:.4} / {:.4} / {:.4} / {:.4} strictly increasing: {trend_ok}",
        n1[0], n1[0], n1[1], n1[2], n1[3]
    );
    verdict("criterion 1, ensemble means", wide_ok && bias_ok && trend_ok, &detail);
}

/// Criterion 2: the full 1-D pipeline with 10% background and 10%/10%
/// one-sided losses at 10^5 events agrees with its references at the third
/// iteration and has stabilized by the fourth.
#[test]
fn criterion_2_pipeline_agreement() {
    let cfg = Figure1Config::new(0);
    assert_eq!(cfg.plot_iteration, 3);
    assert_eq!(cfg.n_iterations, 4);
    let bundle = run_figure1(&cfg).unwrap();
    let l1 = bundle.l1_next_iteration.expect("iteration 4 ran");

    let a = bundle.chi2_subtracted_vs_signal < 2.0;
    let b = bundle.chi2_detector < 2.0;
    let c = bundle.chi2_generator < 2.0;
    let d = l1 < 0.02;
    let detail = format!(
        "chi2/bin subtracted-vs-signal {:.3} < 2: {a}; detector {:.3} < 2: {b}; generator {:.3} < 2: {c}; L1(k=3, k=4) {:.4} < 0.02: {d}",
        bundle.chi2_subtracted_vs_signal, bundle.chi2_detector, bundle.chi2_generator, l1
    );
    verdict("criterion 2, pipeline agreement", a && b && c && d, &detail);
}

/// Criterion 3: the trained density ratio of Normal(0.2, 0.8) over
/// Normal(0, 1) tracks the analytic pdf ratio within 10% across the central
/// 90% quantile range shared by the two laws.
#[test]
fn criterion_3_classifier_calibration() {
    let n = 100_000;
    let mut rng = StdRng::seed_from_u64(300);
    let mut a = EventSet::new(1);
    let mut b = EventSet::new(1);
    let num_law = Normal::new(0.2, 0.8).unwrap();
    let den_law = Normal::new(0.0, 1.0).unwrap();
    for _ in 0..n {
        a.push(&[num_law.sample(&mut rng)], 1.0);
        b.push(&[den_law.sample(&mut rng)], 1.0);
    }
    let clf = train(&a, &b, &NetworkConfig::new(1)).unwrap();

    let num_pdf = StatNormal::new(0.2, 0.8).unwrap();
    let den_pdf = StatNormal::new(0.0, 1.0).unwrap();
    // Central 90% of N(0,1): [-1.645, 1.645]; of N(0.2, 0.8):
    // [-1.116, 1.516]. The shared range is the intersection.
    let (lo, hi) = (-1.116, 1.516);
    let mut worst: f64 = 0.0;
    let mut x = lo;
    while x <= hi {
        let want = num_pdf.pdf(x) / den_pdf.pdf(x);
        let got = clf.ratio_one(&[x]).unwrap();
        worst = worst.max((got - want).abs() / want);
        x += 0.02;
    }
    let ok = worst < 0.10;
    let detail = format!("worst relative error {worst:.4} < 0.10 on [{lo}, {hi}]");
    verdict("criterion 3, classifier calibration", ok, &detail);
}

/// Criterion 4: analytic gradients of the weighted cross-entropy match
/// central finite differences to better than 1e-4 relative, for every
/// parameter of at least 20 random small networks.
#[test]
fn criterion_4_gradient_check() {
    let cases: Vec<(usize, Vec<usize>)> = vec![
        (1, vec![3]),
        (1, vec![5, 3]),
        (2, vec![4]),
        (2, vec![3, 2]),
        (3, vec![4, 4]),
    ];
    let mut n_networks = 0;
    let mut worst: f64 = 0.0;
    for (case, (dim, hidden)) in cases.iter().enumerate() {
        for rep in 0..4_u64 {
            let seed = 400 + 10 * case as u64 + rep;
            let mut rng = StdRng::seed_from_u64(seed);
            let mut a = EventSet::new(*dim);
            let mut b = EventSet::new(*dim);
            for _ in 0..15 {
                let xa: Vec<f64> = (0..*dim).map(|_| rng.random_range(-1.5..1.5)).collect();
                let xb: Vec<f64> = (0..*dim).map(|_| rng.random_range(-1.5..1.5)).collect();
                a.push(&xa, rng.random_range(0.5..1.5));
                b.push(&xb, rng.random_range(0.5..1.5));
            }
            let cfg = NetworkConfig {
                input_dim: *dim,
                hidden_layers: hidden.clone(),
                epochs: 1,
                batch_size: 8,
                patience: 1,
                seed,
                ..NetworkConfig::new(*dim)
            };
            let mut clf = train(&a, &b, &cfg).unwrap();
            let params: Vec<f64> =
                clf.params_flat().iter().map(|_| rng.random_range(-0.8..0.8)).collect();
            clf.set_params_flat(&params).unwrap();
            let grad = loss_gradient(&clf, &a, &b).unwrap();
            for k in 0..params.len() {
                let h = 1e-5 * params[k].abs().max(1.0);
                let mut plus = params.clone();
                plus[k] += h;
                clf.set_params_flat(&plus).unwrap();
                let lp = weighted_bce_loss(&clf, &a, &b).unwrap();
                let mut minus = params.clone();
                minus[k] -= h;
                clf.set_params_flat(&minus).unwrap();
                let lm = weighted_bce_loss(&clf, &a, &b).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let rel = (fd - grad[k]).abs() / grad[k].abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
            n_networks += 1;
        }
    }
    let ok = worst < 1e-4 && n_networks >= 20;
    let detail =
        format!("worst relative error {worst:.2e} < 1e-4 over {n_networks} random networks");
    verdict("criterion 4, gradient check", ok, &detail);
}

/// Criterion 5: the 2-bin worked example converges to the linear-solve
/// answer, and the EM objective never decreases on 50 random instances.
#[test]
fn criterion_5_ibu_oracle() {
    // 80/20 migration between two bins, measured [60, 40]; the linear solve
    // gives [200/3, 100/3].
    let mut pairs = Vec::new();
    for _ in 0..80 {
        pairs.push(pair1(Some(0.25), Some(0.25), 1.0));
        pairs.push(pair1(Some(0.75), Some(0.75), 1.0));
    }
    for _ in 0..20 {
        pairs.push(pair1(Some(0.25), Some(0.75), 1.0));
        pairs.push(pair1(Some(0.75), Some(0.25), 1.0));
    }
    let edges = [0.0, 0.5, 1.0];
    let response = estimate_response(&pairs, &edges, &edges).unwrap();
    let result = ibu(&response, &[60.0, 40.0], &[], None, 1000).unwrap();
    let expected = [200.0 / 3.0, 100.0 / 3.0];
    let two_bin_err = result
        .unfolded
        .iter()
        .zip(&expected)
        .map(|(got, want)| ((got - want) / want).abs())
        .fold(0.0_f64, f64::max);

    let mut monotone = true;
    for seed in 0..50_u64 {
        let mut rng = StdRng::seed_from_u64(500 + seed);
        let n_bins = rng.random_range(2..6usize);
        let value = Uniform::new(0.0, n_bins as f64).unwrap();
        let n_pairs = rng.random_range(200..600usize);
        let pairs: Vec<PairedEvent> = (0..n_pairs)
            .map(|_| pair1(Some(value.sample(&mut rng)), Some(value.sample(&mut rng)), 1.0))
            .collect();
        let edges: Vec<f64> = (0..=n_bins).map(|i| i as f64).collect();
        let response = estimate_response(&pairs, &edges, &edges).unwrap();
        let data: Vec<f64> = (0..n_bins).map(|_| rng.random_range(1.0..100.0)).collect();
        let result = ibu(&response, &data, &[], None, 40).unwrap();
        if result.logliks.windows(2).any(|w| w[1] < w[0] - 1e-9) {
            monotone = false;
        }
    }
    let ok = two_bin_err < 1e-6 && monotone;
    let detail = format!(
        "2-bin relative error {two_bin_err:.2e} < 1e-6 after 1000 iterations; log-likelihood non-decreasing on 50 random instances: {monotone}"
    );
    verdict("criterion 5, matrix-baseline oracle", ok, &detail);
}

/// Criterion 6: the histogram-ratio mode of the iterative unfolding matches
/// the matrix baseline iterate by iterate, and the neural version lands
/// within 2% L1 of the histogram-ratio mode on the 20-bin toy.
#[test]
fn criterion_6_binned_equivalence() {
    let toy = ToyConfig {
        noise_fraction: 0.0,
        acceptance_loss: 0.0,
        efficiency_loss: 0.0,
        seed: 600,
        ..ToyConfig::default()
    };
    let ds = generate_gaussian_1d(&toy).unwrap();
    let edges: Vec<f64> = (0..=20).map(|i| -5.0 + 10.0 * i as f64 / 20.0).collect();
    let data_col: Vec<f64> = (0..ds.data.n_events()).map(|i| ds.data.row(i)[0]).collect();
    let data_hist = weighted_hist(&data_col, ds.data.weights(), &edges).unwrap();

    // Exact mode vs the matrix baseline, iterate by iterate.
    let binned = run_binned(&data_hist.contents, &[], &ds.synthetic, &edges, &edges, 3).unwrap();
    let response = estimate_response(&ds.synthetic, &edges, &edges).unwrap();
    let matrix = ibu(&response, &data_hist.contents, &[], None, 3).unwrap();
    let exact_l1 = (0..3)
        .map(|k| {
            relative_l1(&binned.gen_hists[k], &matrix.unfolded_per_iteration[k]).unwrap()
        })
        .fold(0.0_f64, f64::max);

    // Neural unfolding on the same dataset, compared at the third iterate.
    let mut cfg = UnfoldConfig::new(600);
    cfg.n_iterations = 3;
    cfg.enable_background = false;
    let result = run(&ds.data, None, &ds.synthetic, &cfg).unwrap();
    let idx = PresenceIndex::build(&ds.synthetic).unwrap();
    let gen_col: Vec<f64> = idx
        .gen_present
        .iter()
        .map(|&i| ds.synthetic[i].gen.as_ref().unwrap()[0])
        .collect();
    let w: Vec<f64> =
        idx.gen_present.iter().map(|&i| result.states[2].w_push[i]).collect();
    let neural_hist = weighted_hist(&gen_col, &w, &edges).unwrap();
    let neural_l1 = relative_l1(&neural_hist.contents, &binned.gen_hists[2]).unwrap();

    let ok = exact_l1 < 1e-6 && neural_l1 < 0.02;
    let detail = format!(
        "histogram-ratio vs matrix baseline, worst relative L1 over 3 iterations: {exact_l1:.2e} < 1e-6; neural vs histogram-ratio at iteration 3: {neural_l1:.4} < 0.02"
    );
    verdict("criterion 6, binned equivalence", ok, &detail);
}

/// Criterion 7: with the data drawn from the prior itself and a clean
/// detector, one iteration is a fixed point: the unfolded mean barely moves
/// and almost every weight stays near one.
#[test]
fn criterion_7_fixed_point() {
    let toy = ToyConfig {
        truth_mean: 0.0,
        truth_width: 1.0,
        noise_fraction: 0.0,
        acceptance_loss: 0.0,
        efficiency_loss: 0.0,
        seed: 700,
        ..ToyConfig::default()
    };
    let ds = generate_gaussian_1d(&toy).unwrap();
    let mut cfg = UnfoldConfig::new(700);
    cfg.n_iterations = 1;
    cfg.enable_background = false;
    let result = run(&ds.data, None, &ds.synthetic, &cfg).unwrap();

    let gens: Vec<f64> = ds.synthetic.iter().map(|p| p.gen.as_ref().unwrap()[0]).collect();
    let unit = vec![1.0; gens.len()];
    let before = weighted_mean(&gens, &unit).unwrap();
    let w = result.final_weights();
    let after = weighted_mean(&gens, w).unwrap();
    let shift = (after - before).abs();
    let inside = w.iter().filter(|w| (0.8..=1.25).contains(*w)).count();
    let frac = inside as f64 / w.len() as f64;

    let ok = shift < 0.01 && frac >= 0.99;
    let detail = format!(
        "unfolded mean moved {shift:.5} < 0.01; {:.2}% of weights in [0.8, 1.25] (needs 99%)",
        100.0 * frac
    );
    verdict("criterion 7, fixed point", ok, &detail);
}

/// Criterion 8: commands are reproducible byte for byte, and the benchmark
/// does not depend on the worker count.
#[test]
fn criterion_8_determinism() {
    let dir = tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(
        &cfg_path,
        r#"{
            "toy": {"n_events": 1500},
            "unfold": {"n_iterations": 2},
            "network": {"hidden_layers": [8, 8], "epochs": 5, "batch_size": 500, "patience": 3},
            "binned": {"n_iterations": 2}
        }"#,
    )
    .unwrap();
    let bench_path = dir.path().join("bench.json");
    std::fs::write(
        &bench_path,
        r#"{
            "toy": {"n_events": 800, "noise_fraction": 0, "acceptance_loss": 0, "efficiency_loss": 0},
            "network": {"hidden_layers": [8, 8], "epochs": 4, "batch_size": 400, "patience": 2},
            "ensemble": {"n_experiments": 2, "checkpoints": [1], "feature_counts": [1]}
        }"#,
    )
    .unwrap();

    let bin = env!("CARGO_BIN_EXE_unfold-kit");
    let run_to = |sub: &str, cfg: &std::path::Path, out: &std::path::Path, jobs: &str| {
        let status = Command::new(bin)
            .args([
                sub,
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--jobs",
                jobs,
            ])
            .env_remove("UNFOLD_KIT_THREADS")
            .status()
            .unwrap();
        assert!(status.success(), "{sub} failed");
    };
    let read_all = |out: &std::path::Path| {
        let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        entries.sort();
        entries
    };

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_to("compare", &cfg_path, &a, "1");
    run_to("compare", &cfg_path, &b, "1");
    let rerun_ok = read_all(&a) == read_all(&b);

    let (ja, jb) = (dir.path().join("j1"), dir.path().join("j4"));
    run_to("benchmark", &bench_path, &ja, "1");
    run_to("benchmark", &bench_path, &jb, "4");
    let jobs_ok = std::fs::read(ja.join("report.json")).unwrap()
        == std::fs::read(jb.join("report.json")).unwrap();

    let ok = rerun_ok && jobs_ok;
    let detail = format!(
        "re-run outputs byte-identical: {rerun_ok}; benchmark report identical at --jobs 1 and 4: {jobs_ok}"
    );
    verdict("criterion 8, determinism", ok, &detail);
}
