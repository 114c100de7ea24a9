//! Statistical and bookkeeping contracts of the toy generators, plus the
//! event CSV round trip.

use tempfile::tempdir;
use unfold_kit::dataset::{
    generate_gaussian_1d, generate_gaussian_1d_traced, generate_gaussian_multidim,
    generate_gaussian_multidim_traced, io, truncate_sim_features, EventSet, PresenceIndex,
    ToyConfig,
};
use unfold_kit::stats::sample_mean_std;

fn assert_sets_equal(a: &EventSet, b: &EventSet) {
    assert_eq!(a.dim(), b.dim());
    assert_eq!(a.n_events(), b.n_events());
    for i in 0..a.n_events() {
        assert_eq!(a.row(i), b.row(i), "row {i}");
        assert_eq!(a.weights()[i], b.weights()[i], "weight {i}");
    }
}

/// The truth reference sample averages to the configured truth mean within
/// sampling error (direct scalar oracle: mean/std of the draws themselves).
#[test]
fn truth_holdout_matches_configured_law() {
    let cfg = ToyConfig { n_events: 50_000, seed: 314, ..ToyConfig::default() };
    let ds = generate_gaussian_1d(&cfg).unwrap();
    let truth = ds.truth_holdout.column(0);
    let (mean, std) = sample_mean_std(&truth).unwrap();
    let se_mean = std / (truth.len() as f64).sqrt();
    assert!(
        (mean - cfg.truth_mean).abs() < 5.0 * se_mean,
        "truth mean {mean} vs {} (se {se_mean})",
        cfg.truth_mean
    );
    assert!(
        (std - cfg.truth_width).abs() < 0.02,
        "truth width {std} vs {}",
        cfg.truth_width
    );
}

/// Measured sample size is exact; the background admixture and the
/// background-model sample follow the configured fraction.
#[test]
fn background_composition_follows_the_fraction() {
    let cfg = ToyConfig { n_events: 40_000, seed: 7, ..ToyConfig::default() };
    let ds = generate_gaussian_1d_traced(&cfg).unwrap();
    assert_eq!(ds.data.n_events(), cfg.n_events);
    assert_eq!(
        ds.noise_mc.n_events(),
        (cfg.noise_fraction * cfg.n_events as f64).round() as usize
    );

    let prov = ds.provenance.as_ref().expect("traced run records provenance");
    let n_background = prov.data_is_background.iter().filter(|&&b| b).count();
    let expected = cfg.noise_fraction * cfg.n_events as f64;
    let binomial_sd = (cfg.n_events as f64 * cfg.noise_fraction * (1.0 - cfg.noise_fraction)).sqrt();
    assert!(
        (n_background as f64 - expected).abs() < 5.0 * binomial_sd,
        "background count {n_background} vs {expected}"
    );

    // The signal-only reference is exactly the non-background rows of data.
    assert_eq!(
        prov.data_signal.n_events() + n_background,
        ds.data.n_events()
    );
    let mut signal_row = 0;
    for i in 0..ds.data.n_events() {
        if !prov.data_is_background[i] {
            assert_eq!(ds.data.row(i), prov.data_signal.row(signal_row));
            signal_row += 1;
        }
    }
}

/// Acceptance/efficiency losses show up as one-sided pairs at the
/// configured rates; no pair is empty on both sides.
#[test]
fn presence_bookkeeping_matches_loss_rates() {
    let cfg = ToyConfig { n_events: 40_000, seed: 99, ..ToyConfig::default() };
    let ds = generate_gaussian_1d(&cfg).unwrap();
    let idx = PresenceIndex::build(&ds.synthetic).unwrap();
    let n = ds.synthetic.len() as f64;

    assert_eq!(idx.gen_present.len() + idx.gen_absent.len(), ds.synthetic.len());
    assert_eq!(idx.sim_present.len() + idx.sim_absent.len(), ds.synthetic.len());
    for p in &ds.synthetic {
        assert!(p.gen.is_some() || p.sim.is_some(), "no empty pairs");
    }

    // Among surviving pairs, each side is absent at roughly its loss rate
    // (redraws of doubly-lost candidates shift these by O(a*e), well inside
    // the statistical window).
    let sim_absent_rate = idx.sim_absent.len() as f64 / n;
    let gen_absent_rate = idx.gen_absent.len() as f64 / n;
    let sd = (0.1 * 0.9 / n).sqrt();
    assert!(
        (sim_absent_rate - cfg.efficiency_loss).abs() < 5.0 * sd + 0.015,
        "sim-absent rate {sim_absent_rate}"
    );
    assert!(
        (gen_absent_rate - cfg.acceptance_loss).abs() < 5.0 * sd + 0.015,
        "gen-absent rate {gen_absent_rate}"
    );
}

/// The recorded smearing trace reconstructs every detector-level value
/// exactly: the 1-D toy adds one draw, the multidimensional toy adds the
/// sum of all draws and exposes the first observed draws as extra columns.
#[test]
fn smearing_trace_reconstructs_detector_values() {
    let cfg = ToyConfig { n_events: 2_000, seed: 5, ..ToyConfig::default() };
    let ds = generate_gaussian_1d_traced(&cfg).unwrap();
    let prov = ds.provenance.as_ref().unwrap();
    let mut checked = 0;
    for (pair, draws) in ds.synthetic.iter().zip(&prov.synthetic_smears) {
        if let (Some(gen), Some(sim)) = (&pair.gen, &pair.sim) {
            assert_eq!(sim[0], gen[0] + draws[0]);
            checked += 1;
        }
    }
    assert!(checked > 1_000, "enough both-present pairs to be meaningful");

    let mcfg = ToyConfig { n_events: 2_000, seed: 5, ..ToyConfig::multidim_defaults() };
    let observed_aux = 2;
    let mds = generate_gaussian_multidim_traced(&mcfg, observed_aux).unwrap();
    let mprov = mds.provenance.as_ref().unwrap();
    for (pair, draws) in mds.synthetic.iter().zip(&mprov.synthetic_smears) {
        if let (Some(gen), Some(sim)) = (&pair.gen, &pair.sim) {
            let total: f64 = draws.iter().sum();
            assert_eq!(sim[0], gen[0] + total);
            for k in 0..observed_aux {
                assert_eq!(sim[1 + k], draws[k]);
            }
        }
    }
}

/// Observing fewer auxiliary features is exactly a column projection of
/// the wider dataset: generation draws the same randomness regardless of
/// how many draws are exposed.
#[test]
fn feature_truncation_equals_regenerating_with_fewer_features() {
    let cfg = ToyConfig { n_events: 3_000, seed: 21, ..ToyConfig::multidim_defaults() };
    let wide = generate_gaussian_multidim(&cfg, 4).unwrap();
    let narrow = generate_gaussian_multidim(&cfg, 2).unwrap();

    assert_sets_equal(&wide.data.first_columns(3).unwrap(), &narrow.data);
    assert_eq!(
        truncate_sim_features(&wide.synthetic, 3).unwrap(),
        narrow.synthetic
    );
    assert_sets_equal(&wide.truth_holdout, &narrow.truth_holdout);
}

/// Same seed, same bytes: the generator is fully deterministic.
#[test]
fn generation_is_deterministic() {
    let cfg = ToyConfig { n_events: 1_000, seed: 1234, ..ToyConfig::default() };
    let a = generate_gaussian_1d(&cfg).unwrap();
    let b = generate_gaussian_1d(&cfg).unwrap();
    assert_sets_equal(&a.data, &b.data);
    assert_eq!(a.synthetic, b.synthetic);

    let c = generate_gaussian_1d(&ToyConfig { seed: 1235, ..cfg }).unwrap();
    assert_ne!(a.data.row(0), c.data.row(0), "different seed, different draws");
}

/// Events and pairs survive the CSV round trip bit for bit (17 significant
/// digits shortest round-trip formatting).
#[test]
fn csv_round_trip_is_exact() {
    let cfg = ToyConfig { n_events: 500, seed: 8, ..ToyConfig::default() };
    let ds = generate_gaussian_1d(&cfg).unwrap();
    let dir = tempdir().unwrap();

    let events_path = dir.path().join("events.csv");
    io::write_events(&events_path, &ds.data).unwrap();
    assert_sets_equal(&io::read_events(&events_path).unwrap(), &ds.data);

    let pairs_path = dir.path().join("pairs.csv");
    io::write_pairs(&pairs_path, &ds.synthetic).unwrap();
    assert_eq!(io::read_pairs(&pairs_path).unwrap(), ds.synthetic);

    // Multidimensional pairs too (distinct gen/sim dims exercise the
    // header logic).
    let mcfg = ToyConfig { n_events: 300, seed: 9, ..ToyConfig::multidim_defaults() };
    let mds = generate_gaussian_multidim(&mcfg, 3).unwrap();
    let mpath = dir.path().join("mpairs.csv");
    io::write_pairs(&mpath, &mds.synthetic).unwrap();
    assert_eq!(io::read_pairs(&mpath).unwrap(), mds.synthetic);
}

/// Malformed files are rejected with the offending row and a parse error,
/// never silently skipped.
#[test]
fn malformed_csv_is_rejected_with_row_numbers() {
    let dir = tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        path
    };

    let cases: &[(&str, &str, &str)] = &[
        (
            "bad_float.csv",
            "event_id,weight,x0\n0,1.0,0.5\n1,1.0,oops\n",
            "row 3",
        ),
        (
            "short_row.csv",
            "event_id,weight,x0\n0,1.0\n",
            "fields",
        ),
        (
            "bad_header.csv",
            "event_id,weight,y0\n0,1.0,0.5\n",
            "x0",
        ),
    ];
    for (name, text, needle) in cases {
        let err = io::read_events(&write(name, text)).unwrap_err();
        assert_eq!(err.kind(), "parse", "{name}: {err}");
        assert!(err.to_string().contains(needle), "{name}: {err}");
    }

    // Pairs: presence flag must be 0/1 and absent sides must stay empty.
    let p = write(
        "bad_flag.csv",
        "event_id,weight,gen_present,g0,sim_present,s0\n0,1.0,2,0.5,1,0.5\n",
    );
    let err = io::read_pairs(&p).unwrap_err();
    assert_eq!(err.kind(), "parse");
    assert!(err.to_string().contains("presence flag"), "{err}");

    let p = write(
        "absent_with_value.csv",
        "event_id,weight,gen_present,g0,sim_present,s0\n0,1.0,0,0.5,1,0.5\n",
    );
    let err = io::read_pairs(&p).unwrap_err();
    assert_eq!(err.kind(), "parse");
    assert!(err.to_string().contains("must be empty"), "{err}");

    // Fully empty files are an empty-input error, not a panic.
    let p = write("empty.csv", "event_id,weight,x0\n");
    assert_eq!(io::read_events(&p).unwrap_err().kind(), "empty_input");
}

/// The multidimensional generator refuses configurations it does not
/// model, instead of silently ignoring them.
#[test]
fn multidim_rejects_unmodeled_effects() {
    let bad = ToyConfig { noise_fraction: 0.1, ..ToyConfig::multidim_defaults() };
    assert!(generate_gaussian_multidim(&bad, 2).is_err());

    let cfg = ToyConfig::multidim_defaults();
    assert!(
        generate_gaussian_multidim(&cfg, cfg.n_aux_smearings + 1).is_err(),
        "cannot observe more draws than recorded"
    );
}
