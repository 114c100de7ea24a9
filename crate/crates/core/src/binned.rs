//! Binned baseline: response-matrix estimation and iterative Bayesian
//! unfolding (Richardson-Lucy iterations with acceptance and efficiency
//! corrections).
//!
//! Conventions
//! -----------
//! * The response matrix `R` has shape `(n_sim, n_gen)`; column `i` is the
//!   conditional distribution of the reconstructed bin given generator bin
//!   `i`, estimated from pairs where both sides exist. Columns sum to one
//!   unless a generator bin is empty (then the column is zero and the bin is
//!   flagged).
//! * `efficiency[i]` is the weighted fraction of generator events in bin `i`
//!   that were reconstructed; `acceptance[j]` is the weighted fraction of
//!   reconstructed events in bin `j` that have a generator-level match.
//! * Pairs with a present side outside its axis range are dropped entirely
//!   (and counted), so the estimate describes the fiducial region only. The
//!   event-level binned unfolder uses the same rule, which keeps the two
//!   algorithms in exact agreement.
//!
//! The unfolding pipeline is: subtract the expected noise from the data,
//! clip at zero, multiply by acceptance, run Richardson-Lucy starting from
//! the matched generator histogram, and finally divide by efficiency.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::dataset::PairedEvent;
use crate::error::{Error, Result};
use crate::hist::validate_edges;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResponseMatrix {
    pub gen_edges: Vec<f64>,
    pub sim_edges: Vec<f64>,
    /// `(n_sim, n_gen)`, column-normalized over reconstructed bins.
    pub matrix: Array2<f64>,
    /// Per reconstructed bin: matched fraction of the measured sample.
    pub acceptance: Vec<f64>,
    /// Per generator bin: reconstructed fraction of the generated sample.
    pub efficiency: Vec<f64>,
    /// Weighted generator histogram of all (in-range) generator events.
    pub gen_prior: Vec<f64>,
    /// Weighted generator histogram of the matched events only
    /// (`efficiency * gen_prior`, accumulated exactly).
    pub matched_gen: Vec<f64>,
    /// Generator bins with no matched events; their response column is zero.
    pub empty_gen_bins: Vec<usize>,
    /// Pairs dropped because a present side fell outside its axis.
    pub n_out_of_range: usize,
}

impl ResponseMatrix {
    pub fn n_gen_bins(&self) -> usize {
        self.gen_edges.len() - 1
    }

    pub fn n_sim_bins(&self) -> usize {
        self.sim_edges.len() - 1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<ResponseMatrix> {
        let r: ResponseMatrix = serde_json::from_str(json)?;
        if r.matrix.dim() != (r.sim_edges.len() - 1, r.gen_edges.len() - 1) {
            return Err(Error::Serialization(format!(
                "response matrix shape {:?} does not match {} sim x {} gen bins",
                r.matrix.dim(),
                r.sim_edges.len() - 1,
                r.gen_edges.len() - 1
            )));
        }
        Ok(r)
    }

    /// Write the matrix as CSV: one row per reconstructed bin with its edges
    /// first, one column per generator bin.
    pub fn write_matrix_csv<W: Write>(&self, mut out: W) -> Result<()> {
        // First row carries the generator-bin edges; each matrix column i
        // covers [edge_i, edge_{i+1}).
        write!(out, "gen_edges")?;
        for e in &self.gen_edges {
            write!(out, ",{}", crate::dataset::io::fmt_f64(*e))?;
        }
        writeln!(out)?;
        write!(out, "sim_lo,sim_hi")?;
        for i in 0..self.n_gen_bins() {
            write!(out, ",gen{i}")?;
        }
        writeln!(out)?;
        for j in 0..self.n_sim_bins() {
            write!(
                out,
                "{},{}",
                crate::dataset::io::fmt_f64(self.sim_edges[j]),
                crate::dataset::io::fmt_f64(self.sim_edges[j + 1])
            )?;
            for i in 0..self.n_gen_bins() {
                write!(out, ",{}", crate::dataset::io::fmt_f64(self.matrix[(j, i)]))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<ResponseMatrix> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn find_bin(edges: &[f64], x: f64) -> Option<usize> {
    // right-open bins, last bin closed above — same rule as the histograms
    let n = edges.len() - 1;
    if x < edges[0] || x > edges[n] {
        return None;
    }
    if x == edges[n] {
        return Some(n - 1);
    }
    Some(edges.partition_point(|&e| e <= x) - 1)
}

/// Estimate a response matrix from a paired sample. Pair weights are used
/// as-is; one-sided pairs feed only the acceptance/efficiency estimates.
pub fn estimate_response(
    pairs: &[PairedEvent],
    gen_edges: &[f64],
    sim_edges: &[f64],
) -> Result<ResponseMatrix> {
    validate_edges(gen_edges)?;
    validate_edges(sim_edges)?;
    let (gen_dim, sim_dim) = crate::dataset::paired_dims(pairs)?;
    if gen_dim != 1 || sim_dim != 1 {
        return Err(Error::DimensionMismatch(format!(
            "binned unfolding needs one-dimensional events, got {gen_dim} generator-level and {sim_dim} detector-level features"
        )));
    }
    let n_gen = gen_edges.len() - 1;
    let n_sim = sim_edges.len() - 1;

    let mut counts = Array2::<f64>::zeros((n_sim, n_gen));
    let mut gen_all = vec![0.0; n_gen]; // T_i: every in-range generator event
    let mut sim_all = vec![0.0; n_sim]; // every in-range reconstructed event
    let mut n_out = 0usize;

    for p in pairs {
        let gb = match &p.gen {
            Some(g) => match find_bin(gen_edges, g[0]) {
                Some(b) => Some(b),
                None => {
                    n_out += 1;
                    continue;
                }
            },
            None => None,
        };
        let sb = match &p.sim {
            Some(s) => match find_bin(sim_edges, s[0]) {
                Some(b) => Some(b),
                None => {
                    n_out += 1;
                    continue;
                }
            },
            None => None,
        };
        if let Some(i) = gb {
            gen_all[i] += p.weight;
        }
        if let Some(j) = sb {
            sim_all[j] += p.weight;
        }
        if let (Some(i), Some(j)) = (gb, sb) {
            counts[(j, i)] += p.weight;
        }
    }

    let matched_gen: Vec<f64> = (0..n_gen).map(|i| counts.column(i).sum()).collect();
    let matched_sim: Vec<f64> = (0..n_sim).map(|j| counts.row(j).sum()).collect();

    let mut matrix = Array2::<f64>::zeros((n_sim, n_gen));
    let mut empty = Vec::new();
    for i in 0..n_gen {
        if matched_gen[i] > 0.0 {
            for j in 0..n_sim {
                matrix[(j, i)] = counts[(j, i)] / matched_gen[i];
            }
        } else {
            empty.push(i);
        }
    }

    let efficiency: Vec<f64> = (0..n_gen)
        .map(|i| if gen_all[i] > 0.0 { matched_gen[i] / gen_all[i] } else { 0.0 })
        .collect();
    let acceptance: Vec<f64> = (0..n_sim)
        .map(|j| if sim_all[j] > 0.0 { matched_sim[j] / sim_all[j] } else { 1.0 })
        .collect();

    Ok(ResponseMatrix {
        gen_edges: gen_edges.to_vec(),
        sim_edges: sim_edges.to_vec(),
        matrix,
        acceptance,
        efficiency,
        gen_prior: gen_all,
        matched_gen,
        empty_gen_bins: empty,
        n_out_of_range: n_out,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IbuResult {
    /// Final estimate of the generator distribution, efficiency-corrected.
    pub unfolded: Vec<f64>,
    /// Efficiency-corrected estimate after each iteration (`iterates[k] /
    /// efficiency`), one entry per iteration.
    pub unfolded_per_iteration: Vec<Vec<f64>>,
    /// Raw Richardson-Lucy iterates (matched-event scale), one per iteration.
    pub iterates: Vec<Vec<f64>>,
    /// The measured vector the iterations ran on: noise-subtracted, clipped
    /// at zero, multiplied by acceptance.
    pub measured_signal: Vec<f64>,
    /// Poisson log-likelihood of each iterate against `measured_signal`,
    /// starting with the prior (length `n_iterations + 1`). Empty if a zero
    /// prediction made it undefined at some point (see `warnings`).
    pub logliks: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Iterative Bayesian unfolding of a measured histogram.
///
/// `data` and `noise` are histograms over the response's reconstructed
/// binning; `noise` is the expected noise yield to subtract (pass an empty
/// slice for none). `prior` is an optional generator-level starting
/// distribution; the iterations run on the matched scale, so it is folded
/// with the efficiency first. The default is the response's own generator
/// prior, which makes the first iterate the classic one-step Bayesian
/// estimate.
pub fn ibu(
    response: &ResponseMatrix,
    data: &[f64],
    noise: &[f64],
    prior: Option<&[f64]>,
    n_iterations: usize,
) -> Result<IbuResult> {
    let n_gen = response.n_gen_bins();
    let n_sim = response.n_sim_bins();
    if data.len() != n_sim {
        return Err(Error::DimensionMismatch(format!(
            "data has {} bins, response expects {n_sim}",
            data.len()
        )));
    }
    if !noise.is_empty() && noise.len() != n_sim {
        return Err(Error::DimensionMismatch(format!(
            "noise has {} bins, response expects {n_sim}",
            noise.len()
        )));
    }
    if n_iterations == 0 {
        return Err(Error::Config("n_iterations must be at least 1".into()));
    }

    let mut warnings = Vec::new();
    let m: Vec<f64> = (0..n_sim)
        .map(|j| {
            let raw = data[j] - noise.get(j).copied().unwrap_or(0.0);
            raw.max(0.0) * response.acceptance[j]
        })
        .collect();
    if (0..n_sim).any(|j| data[j] - noise.get(j).copied().unwrap_or(0.0) < 0.0) {
        warnings.push("noise subtraction went negative in some bins; clipped to zero".into());
    }
    if !response.empty_gen_bins.is_empty() {
        warnings.push(format!(
            "{} generator bins have no matched events; their estimate is zero",
            response.empty_gen_bins.len()
        ));
    }

    let r = &response.matrix;
    let mut t = match prior {
        Some(p) => {
            if p.len() != n_gen {
                return Err(Error::DimensionMismatch(format!(
                    "prior has {} bins, response expects {n_gen}",
                    p.len()
                )));
            }
            if p.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
                return Err(Error::Config(
                    "prior bins must be finite and non-negative".into(),
                ));
            }
            (0..n_gen)
                .map(|i| p[i] * response.efficiency[i])
                .collect()
        }
        None => response.matched_gen.clone(),
    };
    let mut iterates = Vec::with_capacity(n_iterations);
    let mut logliks = Vec::with_capacity(n_iterations + 1);
    let mut logliks_ok = true;
    let record_loglik = |t: &[f64], logliks: &mut Vec<f64>, ok: &mut bool, warnings: &mut Vec<String>| {
        if !*ok {
            return;
        }
        match poisson_loglik(r, t, &m) {
            Ok(ll) => logliks.push(ll),
            Err(e) => {
                warnings.push(format!("log-likelihood undefined: {e}"));
                logliks.clear();
                *ok = false;
            }
        }
    };
    record_loglik(&t, &mut logliks, &mut logliks_ok, &mut warnings);

    let mut warned_zero_mu = false;
    for _ in 0..n_iterations {
        // mu_j = sum_i R_ji t_i
        let mut mu = vec![0.0; n_sim];
        for j in 0..n_sim {
            let mut s = 0.0;
            for i in 0..n_gen {
                s += r[(j, i)] * t[i];
            }
            mu[j] = s;
        }
        let mut t_new = vec![0.0; n_gen];
        for i in 0..n_gen {
            let mut s = 0.0;
            for j in 0..n_sim {
                if mu[j] > 0.0 {
                    s += r[(j, i)] * m[j] / mu[j];
                } else if m[j] > 0.0 && !warned_zero_mu {
                    warnings.push(format!(
                        "measured bin {j} has data but zero prediction; skipped in the update"
                    ));
                    warned_zero_mu = true;
                }
            }
            t_new[i] = t[i] * s;
        }
        t = t_new;
        record_loglik(&t, &mut logliks, &mut logliks_ok, &mut warnings);
        iterates.push(t.clone());
    }

    let correct = |t: &[f64]| -> Vec<f64> {
        (0..n_gen)
            .map(|i| {
                if response.efficiency[i] > 0.0 {
                    t[i] / response.efficiency[i]
                } else {
                    0.0
                }
            })
            .collect()
    };
    let unfolded_per_iteration: Vec<Vec<f64>> = iterates.iter().map(|t| correct(t)).collect();
    let unfolded = unfolded_per_iteration.last().expect("at least one iteration").clone();

    Ok(IbuResult {
        unfolded,
        unfolded_per_iteration,
        iterates,
        measured_signal: m,
        logliks,
        warnings,
    })
}

/// Poisson log-likelihood `sum_j (m_j ln mu_j - mu_j)` of a generator-level
/// estimate `t` against a measured histogram `m`, with `mu = R t`. Constant
/// terms (`ln m_j!`) are dropped. Errors if a populated measured bin has a
/// zero prediction.
pub fn poisson_loglik(matrix: &Array2<f64>, t: &[f64], m: &[f64]) -> Result<f64> {
    let (n_sim, n_gen) = matrix.dim();
    if t.len() != n_gen || m.len() != n_sim {
        return Err(Error::DimensionMismatch(format!(
            "t has {} entries and m has {}, matrix is {n_sim} x {n_gen}",
            t.len(),
            m.len()
        )));
    }
    let mut ll = 0.0;
    for j in 0..n_sim {
        let mut mu = 0.0;
        for i in 0..n_gen {
            mu += matrix[(j, i)] * t[i];
        }
        if mu > 0.0 {
            ll += m[j] * mu.ln() - mu;
        } else if m[j] > 0.0 {
            return Err(Error::Algorithm(format!(
                "zero predicted yield in populated measured bin {j}"
            )));
        }
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair(gen: Option<f64>, sim: Option<f64>, w: f64) -> PairedEvent {
        PairedEvent {
            gen: gen.map(|g| vec![g]),
            sim: sim.map(|s| vec![s]),
            weight: w,
        }
    }

    /// Hand-built sample: 2 gen bins x 2 sim bins over [0,2].
    fn small_sample() -> Vec<PairedEvent> {
        vec![
            // gen bin 0: 3 matched (2 stay, 1 migrates), 1 lost
            pair(Some(0.5), Some(0.4), 1.0),
            pair(Some(0.2), Some(0.8), 1.0),
            pair(Some(0.7), Some(1.5), 1.0),
            pair(Some(0.5), None, 1.0),
            // gen bin 1: 2 matched (both stay)
            pair(Some(1.5), Some(1.2), 1.0),
            pair(Some(1.1), Some(1.9), 1.0),
            // reconstructed-only event in sim bin 0
            pair(None, Some(0.3), 1.0),
        ]
    }

    #[test]
    fn response_accounting_matches_hand_counts() {
        let edges = [0.0, 1.0, 2.0];
        let r = estimate_response(&small_sample(), &edges, &edges).unwrap();
        // C = [[2, 0], [1, 2]] (rows = sim bins)
        assert_eq!(r.matrix[(0, 0)], 2.0 / 3.0);
        assert_eq!(r.matrix[(1, 0)], 1.0 / 3.0);
        assert_eq!(r.matrix[(0, 1)], 0.0);
        assert_eq!(r.matrix[(1, 1)], 1.0);
        assert_eq!(r.gen_prior, vec![4.0, 2.0]);
        assert_eq!(r.matched_gen, vec![3.0, 2.0]);
        assert_eq!(r.efficiency, vec![0.75, 1.0]);
        // sim bin 0: 3 reconstructed, 2 matched; sim bin 1: 3 of 3
        assert_eq!(r.acceptance, vec![2.0 / 3.0, 1.0]);
        assert_eq!(r.n_out_of_range, 0);
        assert!(r.empty_gen_bins.is_empty());
    }

    #[test]
    fn out_of_range_pairs_are_dropped_and_counted() {
        let edges = [0.0, 1.0, 2.0];
        let mut pairs = small_sample();
        pairs.push(pair(Some(5.0), Some(0.5), 1.0));
        pairs.push(pair(Some(0.5), Some(-3.0), 1.0));
        let r = estimate_response(&pairs, &edges, &edges).unwrap();
        assert_eq!(r.n_out_of_range, 2);
        assert_eq!(r.gen_prior, vec![4.0, 2.0]);
    }

    #[test]
    fn two_bin_fixed_point_is_exact() {
        // R = [[0.8, 0.2], [0.2, 0.8]], data = [60, 40]: the converged
        // estimate solves R t = m, so t = [200/3, 100/3].
        let pairs: Vec<PairedEvent> = [
            (0.5_f64, 0.5_f64, 80.0_f64),
            (0.5, 1.5, 20.0),
            (1.5, 0.5, 20.0),
            (1.5, 1.5, 80.0),
        ]
        .iter()
        .map(|&(g, s, w)| pair(Some(g), Some(s), w))
        .collect();
        let edges = [0.0, 1.0, 2.0];
        let r = estimate_response(&pairs, &edges, &edges).unwrap();
        let out = ibu(&r, &[60.0, 40.0], &[], None, 2000).unwrap();
        assert_abs_diff_eq!(out.unfolded[0], 200.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(out.unfolded[1], 100.0 / 3.0, epsilon = 1e-9);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn iterations_conserve_measured_mass() {
        let edges = [0.0, 1.0, 2.0];
        let r = estimate_response(&small_sample(), &edges, &edges).unwrap();
        let data = [10.0, 20.0];
        let out = ibu(&r, &data, &[], None, 5).unwrap();
        let m_total: f64 = out.measured_signal.iter().sum();
        for t in &out.iterates {
            assert_abs_diff_eq!(t.iter().sum::<f64>(), m_total, epsilon = 1e-10);
        }
    }

    #[test]
    fn noise_subtraction_clips_and_warns() {
        let edges = [0.0, 1.0, 2.0];
        let r = estimate_response(&small_sample(), &edges, &edges).unwrap();
        let out = ibu(&r, &[10.0, 5.0], &[2.0, 8.0], None, 3).unwrap();
        // bin 1 went negative -> clipped to zero before acceptance
        assert_eq!(out.measured_signal[1], 0.0);
        assert_abs_diff_eq!(out.measured_signal[0], 8.0 * (2.0 / 3.0), epsilon = 1e-12);
        assert!(out.warnings.iter().any(|w| w.contains("negative")));
    }

    #[test]
    fn loglik_rejects_zero_prediction_on_populated_bin() {
        let matrix = ndarray::array![[1.0, 0.0], [0.0, 0.0]];
        assert!(poisson_loglik(&matrix, &[1.0, 1.0], &[1.0, 1.0]).is_err());
        // mu = [1, 0], m = [1, 0]: ll = 1 ln 1 - 1 = -1, empty zero bin skipped
        let ll = poisson_loglik(&matrix, &[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(ll, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn matrix_csv_has_expected_shape() {
        let edges = [0.0, 1.0, 2.0];
        let r = estimate_response(&small_sample(), &edges, &edges).unwrap();
        let mut buf = Vec::new();
        r.write_matrix_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("gen_edges,0.0"));
        assert_eq!(lines[0].split(',').count(), 4, "two bins need three edges");
        assert!(lines[1].starts_with("sim_lo,sim_hi,gen0,gen1"));
    }

    #[test]
    fn json_roundtrip() {
        let edges = [0.0, 1.0, 2.0];
        let r = estimate_response(&small_sample(), &edges, &edges).unwrap();
        let back = ResponseMatrix::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(r.matrix, back.matrix);
        assert_eq!(r.acceptance, back.acceptance);
    }
}
