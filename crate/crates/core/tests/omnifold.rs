//! Contracts of the unbinned unfolding stages: exact bookkeeping without
//! imputation, normalization tracking, conditional-mean imputation against
//! binned oracles, clamping, the matched-sample fixed point, and
//! reproducibility of full runs.

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use unfold_kit::classifier::NetworkConfig;
use unfold_kit::dataset::{EventSet, PairedEvent};
use unfold_kit::omnifold::{
    pull, push, run, step1, subtract_background, step2, UnfoldConfig, UpdateRule,
};
use unfold_kit::stats::weighted_mean;

fn pair(gen: Option<f64>, sim: Option<f64>, weight: f64) -> PairedEvent {
    PairedEvent {
        gen: gen.map(|g| vec![g]),
        sim: sim.map(|s| vec![s]),
        weight,
    }
}

fn gaussian_set(mean: f64, sd: f64, weight: f64, n: usize, seed: u64) -> EventSet {
    let mut rng = StdRng::seed_from_u64(seed);
    let law = Normal::new(mean, sd).unwrap();
    let mut set = EventSet::new(1);
    for _ in 0..n {
        set.push(&[law.sample(&mut rng)], weight);
    }
    set
}

/// Fully matched pairs whose generator level follows the given law and whose
/// detector level adds independent smearing.
fn matched_pairs(mean: f64, sd: f64, smear: f64, n: usize, seed: u64) -> Vec<PairedEvent> {
    let mut rng = StdRng::seed_from_u64(seed);
    let gen_law = Normal::new(mean, sd).unwrap();
    let noise = Normal::new(0.0, smear).unwrap();
    (0..n)
        .map(|_| {
            let g = gen_law.sample(&mut rng);
            let s = if smear > 0.0 { g + noise.sample(&mut rng) } else { g };
            pair(Some(g), Some(s), 1.0)
        })
        .collect()
}

fn net(hidden: &[usize], epochs: usize) -> NetworkConfig {
    NetworkConfig {
        hidden_layers: hidden.to_vec(),
        epochs,
        batch_size: 1000,
        patience: 10,
        ..NetworkConfig::new(1)
    }
}

/// A trainer with enough optimizer steps to pin down a sharp conditional
/// mean on a mid-sized sample.
fn imputation_net() -> NetworkConfig {
    NetworkConfig {
        hidden_layers: vec![32, 32],
        epochs: 400,
        batch_size: 250,
        patience: 40,
        learning_rate: 2e-3,
        ..NetworkConfig::new(1)
    }
}

/// Without imputation, `pull` and `push` are pure bookkeeping and can be
/// checked exactly: multiplicative updates multiply, literal updates assign,
/// and events the stage cannot see keep their previous weight.
#[test]
fn pull_and_push_bookkeeping_without_imputation() {
    let pairs = vec![
        pair(Some(0.1), Some(0.2), 5.0),  // both sides
        pair(Some(0.4), None, 5.0),       // never reconstructed
        pair(None, Some(0.8), 5.0),       // no generator-level match
        pair(Some(-0.3), Some(0.0), 5.0), // both sides
    ];
    let r = vec![2.0, 100.0, 3.0, 0.5]; // index 1 is unseen by the detector
    let cfg = net(&[4], 5);

    // Pull distributes detector-level multipliers over the sim-present events.
    let (w, diag) = pull(&pairs, &r, &[5.0; 4], UpdateRule::Multiplicative, false, &cfg, 1)
        .unwrap();
    assert!(diag.is_none(), "no imputation requested");
    assert_eq!(w, vec![10.0, 5.0, 15.0, 2.5]);
    let (w, _) = pull(&pairs, &r, &[5.0; 4], UpdateRule::LiteralAssign, false, &cfg, 1).unwrap();
    assert_eq!(w, vec![2.0, 1.0, 3.0, 0.5]);

    // Push distributes generator-level multipliers over the gen-present events;
    // the pair with no generator-level side (index 2) keeps its weight.
    let r2 = vec![0.5, 2.0, 100.0, 4.0];
    let (w, diag) = push(&pairs, &r2, &[5.0; 4], UpdateRule::Multiplicative, false, &cfg, 1)
        .unwrap();
    assert!(diag.is_none());
    assert_eq!(w, vec![2.5, 10.0, 5.0, 20.0]);
    let (w, _) = push(&pairs, &r2, &[5.0; 4], UpdateRule::LiteralAssign, false, &cfg, 1).unwrap();
    assert_eq!(w, vec![0.5, 2.0, 1.0, 4.0]);
}

/// The multiplicative detector-level update conserves normalization: summing
/// the updated weights over the reconstructed synthetic events reproduces
/// the summed data weights, because the trained ratio carries the relative
/// total weight of the two classes.
#[test]
fn step1_tracks_the_data_normalization() {
    let data = gaussian_set(0.3, 1.0, 1.3, 15_000, 21);
    let pairs: Vec<PairedEvent> = matched_pairs(0.0, 1.0, 0.0, 18_000, 22)
        .into_iter()
        .map(|mut p| {
            p.weight = 0.9;
            p
        })
        .collect();
    let w_synth: Vec<f64> = pairs.iter().map(|p| p.weight).collect();
    let (r, _) = step1(
        &pairs,
        &w_synth,
        &data,
        data.weights(),
        UpdateRule::Multiplicative,
        &net(&[32, 32], 50),
        7,
    )
    .unwrap();
    let updated: f64 = w_synth.iter().zip(&r).map(|(w, r)| w * r).sum();
    let data_total: f64 = data.weights().iter().sum();
    let rel = (updated - data_total).abs() / data_total;
    assert!(
        rel < 0.02,
        "updated total {updated} vs data total {data_total} (rel {rel:.4})"
    );
}

/// Imputation for never-reconstructed events reproduces the conditional mean
/// of the detector-level multiplier given the generator-level features. With
/// two well-separated clusters carrying constant multipliers, the binned
/// conditional means are known exactly.
#[test]
fn pull_imputation_matches_binned_conditional_means() {
    let mut rng = StdRng::seed_from_u64(31);
    let left = Normal::new(-2.2, 0.35).unwrap();
    let right = Normal::new(2.2, 0.35).unwrap();
    let mut pairs = Vec::new();
    let mut r_step1 = Vec::new();
    for i in 0..16_000 {
        let g = if i % 2 == 0 { left.sample(&mut rng) } else { right.sample(&mut rng) };
        // A quarter of each cluster is never reconstructed (indices 0 and 5
        // modulo 8 cover both parities, hence both clusters).
        let present = !matches!(i % 8, 0 | 5);
        pairs.push(pair(Some(g), present.then_some(g), 1.0));
        // Multiplier depends on the generator side only: 2 on the left
        // cluster, 1/2 on the right. Absent events carry the neutral 1,
        // which pull must ignore.
        r_step1.push(if !present { 1.0 } else if g < 0.0 { 2.0 } else { 0.5 });
    }
    let w_synth = vec![1.0; pairs.len()];
    let (w_pull, diag) = pull(
        &pairs,
        &r_step1,
        &w_synth,
        UpdateRule::Multiplicative,
        true,
        &imputation_net(),
        5,
    )
    .unwrap();
    assert!(diag.is_some(), "imputation trained a network");

    let mut cluster_sum = [0.0_f64; 2];
    let mut cluster_n = [0usize; 2];
    let mut rels = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        if p.sim.is_some() {
            continue;
        }
        let g = p.gen.as_ref().unwrap()[0];
        let target = if g < 0.0 { 2.0 } else { 0.5 };
        rels.push((w_pull[i] - target).abs() / target);
        let c = usize::from(g >= 0.0);
        cluster_sum[c] += w_pull[i];
        cluster_n[c] += 1;
    }
    // Pointwise: the bulk of the imputed events sit on the conditional
    // mean; the trained function may soften in the thin tails, but never
    // wildly.
    rels.sort_by(f64::total_cmp);
    let p90 = rels[(rels.len() * 9) / 10];
    assert!(p90 < 0.12, "90th percentile relative error {p90}");
    assert!(*rels.last().unwrap() < 0.40, "worst relative error {}", rels.last().unwrap());
    for (c, target) in [2.0, 0.5].into_iter().enumerate() {
        assert!(cluster_n[c] > 300, "cluster {c} has only {} imputed events", cluster_n[c]);
        let mean = cluster_sum[c] / cluster_n[c] as f64;
        // The trained ratio f/(1-f) is convex in the classifier output, so
        // output fluctuations bias the imputed mean slightly upward; the
        // tolerance covers that inherent bias at this sample size.
        assert!(
            (mean - target).abs() / target < 0.08,
            "cluster {c}: imputed mean {mean} vs binned conditional mean {target}"
        );
    }
}

/// The mirrored imputation on the detector side: reconstructed events with
/// no generator-level match receive the conditional mean of the
/// generator-level multiplier given their detector-level features.
#[test]
fn push_imputation_matches_binned_conditional_means() {
    let mut rng = StdRng::seed_from_u64(37);
    let left = Normal::new(-2.2, 0.35).unwrap();
    let right = Normal::new(2.2, 0.35).unwrap();
    let mut pairs = Vec::new();
    let mut r_step2 = Vec::new();
    for i in 0..16_000 {
        let s = if i % 2 == 0 { left.sample(&mut rng) } else { right.sample(&mut rng) };
        let matched = !matches!(i % 8, 0 | 5);
        pairs.push(pair(matched.then_some(s), Some(s), 1.0));
        r_step2.push(if !matched { 1.0 } else if s < 0.0 { 3.0 } else { 0.25 });
    }
    let w_synth = vec![1.0; pairs.len()];
    let (w_push, diag) = push(
        &pairs,
        &r_step2,
        &w_synth,
        UpdateRule::Multiplicative,
        true,
        &imputation_net(),
        9,
    )
    .unwrap();
    assert!(diag.is_some(), "imputation trained a network");
    let mut cluster_sum = [0.0_f64; 2];
    let mut cluster_n = [0usize; 2];
    let mut rels = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        if p.gen.is_some() {
            continue;
        }
        let s = p.sim.as_ref().unwrap()[0];
        let target = if s < 0.0 { 3.0 } else { 0.25 };
        rels.push((w_push[i] - target).abs() / target);
        let c = usize::from(s >= 0.0);
        cluster_sum[c] += w_push[i];
        cluster_n[c] += 1;
    }
    // The multipliers span a 12x range here, so the transition region is
    // wider than in the pull test; the bulk still has to sit on the
    // conditional mean.
    rels.sort_by(f64::total_cmp);
    let p90 = rels[(rels.len() * 9) / 10];
    assert!(p90 < 0.15, "90th percentile relative error {p90}");
    assert!(*rels.last().unwrap() < 0.60, "worst relative error {}", rels.last().unwrap());
    for (c, target) in [3.0, 0.25].into_iter().enumerate() {
        assert!(cluster_n[c] > 300, "cluster {c} has only {} imputed events", cluster_n[c]);
        let mean = cluster_sum[c] / cluster_n[c] as f64;
        // The trained ratio f/(1-f) is convex in the classifier output, so
        // output fluctuations bias the imputed mean slightly upward; the
        // tolerance covers that inherent bias at this sample size.
        assert!(
            (mean - target).abs() / target < 0.08,
            "cluster {c}: imputed mean {mean} vs binned conditional mean {target}"
        );
    }
}

/// The generator-level multiplier is a function of the generator features:
/// events with byte-identical generator values receive byte-identical
/// multipliers, whatever their detector sides or pulled weights look like.
#[test]
fn step2_is_a_function_of_the_generator_features() {
    let mut rng = StdRng::seed_from_u64(41);
    let law = Normal::new(0.0, 1.0).unwrap();
    let distinct: Vec<f64> = (0..50).map(|_| law.sample(&mut rng)).collect();
    let mut pairs = Vec::new();
    let mut w_pull = Vec::new();
    for rep in 0..12 {
        for (k, &g) in distinct.iter().enumerate() {
            pairs.push(pair(Some(g), Some(g + law.sample(&mut rng)), 1.0));
            w_pull.push(1.0 + 0.4 * ((rep * 50 + k) as f64).sin());
        }
    }
    let w_synth = vec![1.0; pairs.len()];
    let (r2, _) = step2(
        &pairs,
        &w_pull,
        &w_synth,
        UpdateRule::Multiplicative,
        &net(&[8, 8], 10),
        3,
    )
    .unwrap();
    for (k, &g) in distinct.iter().enumerate() {
        let group: Vec<f64> = pairs
            .iter()
            .zip(&r2)
            .filter(|(p, _)| p.gen.as_ref().unwrap()[0] == g)
            .map(|(_, &r)| r)
            .collect();
        assert_eq!(group.len(), 12);
        for &r in &group[1..] {
            assert_eq!(r, group[0], "generator value {k} got two different multipliers");
        }
    }
}

/// Unfolding a sample against a statistically identical synthetic sample is
/// (approximately) a fixed point: one iteration leaves the unfolded mean
/// nearly unchanged and keeps almost all weights near one.
#[test]
fn matched_samples_are_a_fixed_point() {
    let data = gaussian_set(0.0, 1.0, 1.0, 20_000, 51);
    let pairs = matched_pairs(0.0, 1.0, 0.0, 20_000, 52);
    let mut cfg = UnfoldConfig::new(13);
    cfg.n_iterations = 1;
    cfg.enable_background = false;
    let shared = net(&[32, 32], 50);
    cfg.detector_step = shared.clone();
    cfg.efficiency_miss = shared.clone();
    cfg.generator_step = shared.clone();
    cfg.acceptance_miss = shared;
    let result = run(&data, None, &pairs, &cfg).unwrap();

    let gens: Vec<f64> = pairs.iter().map(|p| p.gen.as_ref().unwrap()[0]).collect();
    let unit = vec![1.0; gens.len()];
    let before = weighted_mean(&gens, &unit).unwrap();
    let w = result.final_weights();
    let after = weighted_mean(&gens, w).unwrap();
    assert!(
        (after - before).abs() < 0.02,
        "unfolded mean moved from {before} to {after}"
    );
    let inside = w.iter().filter(|w| (0.8..=1.25).contains(*w)).count();
    let frac = inside as f64 / w.len() as f64;
    assert!(frac >= 0.99, "only {frac:.4} of the weights stayed in [0.8, 1.25]");
}

/// A small `w_max` visibly clamps the pulled and pushed weights, and the
/// diagnostics count the clamped events.
#[test]
fn weight_clamp_is_applied_and_counted() {
    let data = gaussian_set(0.8, 1.0, 1.0, 12_000, 61);
    let pairs = matched_pairs(0.0, 1.0, 0.0, 12_000, 62);
    let mut cfg = UnfoldConfig::new(17);
    cfg.n_iterations = 1;
    cfg.enable_background = false;
    cfg.w_max = 1.02;
    let shared = net(&[32, 32], 30);
    cfg.detector_step = shared.clone();
    cfg.efficiency_miss = shared.clone();
    cfg.generator_step = shared.clone();
    cfg.acceptance_miss = shared;
    let result = run(&data, None, &pairs, &cfg).unwrap();
    let state = &result.states[0];
    for w in state.w_pull.iter().chain(&state.w_push) {
        assert!(
            (0.0..=cfg.w_max + 1e-12).contains(w),
            "weight {w} escaped the clamp"
        );
    }
    assert!(
        result.diagnostics.iterations[0].n_clamped > 0,
        "a mean shift of 0.8 must push some weights past 1.02"
    );
}

/// Background subtraction recovers the local signal purity: near the signal
/// core the data keep their weight, near the noise core they lose it, and
/// the subtracted total matches the signal total.
#[test]
fn background_subtraction_recovers_the_signal_purity() {
    let mut data = gaussian_set(1.2, 0.6, 1.0, 9_000, 71);
    let in_data_noise = gaussian_set(-1.5, 0.6, 1.0, 3_000, 72);
    for i in 0..in_data_noise.n_events() {
        data.push(in_data_noise.row(i), 1.0);
    }
    let noise_mc = gaussian_set(-1.5, 0.6, 1.0, 3_000, 73);
    let (weights, _) = subtract_background(&data, &noise_mc, &net(&[32, 32], 50), 23).unwrap();

    let total: f64 = weights.iter().sum();
    assert!(
        (total - 9_000.0).abs() / 9_000.0 < 0.05,
        "subtracted total {total} vs 9000 signal events"
    );
    let band_mean = |lo: f64, hi: f64| {
        let picked: Vec<f64> = (0..data.n_events())
            .filter(|&i| (lo..hi).contains(&data.row(i)[0]))
            .map(|i| weights[i])
            .collect();
        assert!(picked.len() > 100, "band [{lo}, {hi}) too thin: {}", picked.len());
        picked.iter().sum::<f64>() / picked.len() as f64
    };
    assert!(band_mean(1.0, 1.4) > 0.95, "signal core keeps its weight");
    assert!(band_mean(-1.7, -1.3) < 0.10, "noise core loses its weight");
}

/// Full runs are reproducible: the same configuration gives byte-identical
/// weight trajectories, and a different seed gives a different result.
#[test]
fn runs_are_deterministic_and_seed_sensitive() {
    let data = gaussian_set(0.2, 1.0, 1.0, 6_000, 81);
    let pairs = matched_pairs(0.0, 1.0, 0.5, 6_000, 82);
    let mut cfg = UnfoldConfig::new(29);
    cfg.n_iterations = 2;
    cfg.enable_background = false;
    let shared = net(&[16, 16], 15);
    cfg.detector_step = shared.clone();
    cfg.efficiency_miss = shared.clone();
    cfg.generator_step = shared.clone();
    cfg.acceptance_miss = shared;

    let a = run(&data, None, &pairs, &cfg).unwrap();
    let b = run(&data, None, &pairs, &cfg).unwrap();
    assert_eq!(a.states.len(), b.states.len());
    for (sa, sb) in a.states.iter().zip(&b.states) {
        assert_eq!(sa.w_step1, sb.w_step1);
        assert_eq!(sa.w_pull, sb.w_pull);
        assert_eq!(sa.w_step2, sb.w_step2);
        assert_eq!(sa.w_push, sb.w_push);
    }

    cfg.seed = 30;
    let c = run(&data, None, &pairs, &cfg).unwrap();
    assert_ne!(
        a.states.last().unwrap().w_push,
        c.states.last().unwrap().w_push,
        "a different seed must shuffle and initialize differently"
    );
}
