//! Weighted histograms.
//!
//! Bins are right-open `[lo, hi)`; a value equal to the last edge lands in
//! overflow. Every fill also accumulates the sum of squared weights per bin,
//! which is what the chi-square comparisons in [`crate::stats`] use as the
//! per-bin variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a value lands relative to a binning.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinLocation {
    Underflow,
    In(usize),
    Overflow,
}

/// One-dimensional weighted histogram with explicit edges.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Histogram1D {
    /// Bin edges, strictly increasing, length `n_bins + 1`.
    pub edges: Vec<f64>,
    /// Weighted bin contents.
    pub contents: Vec<f64>,
    /// Per-bin sum of squared weights.
    pub sumw2: Vec<f64>,
    pub underflow: f64,
    pub overflow: f64,
}

impl Histogram1D {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        validate_edges(&edges)?;
        let n = edges.len() - 1;
        Ok(Histogram1D {
            edges,
            contents: vec![0.0; n],
            sumw2: vec![0.0; n],
            underflow: 0.0,
            overflow: 0.0,
        })
    }

    /// `n` equal-width bins spanning `[lo, hi)`.
    pub fn with_uniform_bins(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "bad histogram range [{lo}, {hi})"
            )));
        }
        let w = (hi - lo) / n as f64;
        let mut edges: Vec<f64> = (0..n).map(|i| lo + w * i as f64).collect();
        edges.push(hi); // exact upper edge, no accumulated rounding
        Self::new(edges)
    }

    pub fn n_bins(&self) -> usize {
        self.contents.len()
    }

    pub fn find_bin(&self, x: f64) -> BinLocation {
        if x < self.edges[0] {
            return BinLocation::Underflow;
        }
        if x >= self.edges[self.edges.len() - 1] {
            return BinLocation::Overflow;
        }
        // first edge strictly greater than x, minus one
        let idx = self.edges.partition_point(|e| *e <= x) - 1;
        BinLocation::In(idx)
    }

    pub fn fill(&mut self, x: f64, w: f64) {
        match self.find_bin(x) {
            BinLocation::Underflow => self.underflow += w,
            BinLocation::Overflow => self.overflow += w,
            BinLocation::In(i) => {
                self.contents[i] += w;
                self.sumw2[i] += w * w;
            }
        }
    }

    /// Total in-range content.
    pub fn total(&self) -> f64 {
        self.contents.iter().sum()
    }

    /// Replace contents, keeping edges. `sumw2` is zeroed: the new contents
    /// are an estimate, not a sum of fills.
    pub fn with_contents(&self, contents: Vec<f64>) -> Result<Self> {
        if contents.len() != self.n_bins() {
            return Err(Error::DimensionMismatch(format!(
                "{} contents for {} bins",
                contents.len(),
                self.n_bins()
            )));
        }
        Ok(Histogram1D {
            edges: self.edges.clone(),
            sumw2: vec![0.0; contents.len()],
            contents,
            underflow: 0.0,
            overflow: 0.0,
        })
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }
}

/// N-dimensional weighted histogram with per-axis edges and a flat,
/// row-major content array (last axis fastest).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistogramNd {
    pub axes: Vec<Vec<f64>>,
    pub contents: Vec<f64>,
    pub sumw2: Vec<f64>,
    /// Weight of fills with any coordinate outside its axis range.
    pub out_of_range: f64,
}

impl HistogramNd {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Config("histogram needs at least one axis".into()));
        }
        for edges in &axes {
            validate_edges(edges)?;
        }
        let n: usize = axes.iter().map(|e| e.len() - 1).product();
        Ok(HistogramNd {
            axes,
            contents: vec![0.0; n],
            sumw2: vec![0.0; n],
            out_of_range: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    fn flat_index(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for (edges, &xi) in self.axes.iter().zip(x) {
            if xi < edges[0] || xi >= edges[edges.len() - 1] {
                return None;
            }
            let b = edges.partition_point(|e| *e <= xi) - 1;
            idx = idx * (edges.len() - 1) + b;
        }
        Some(idx)
    }

    pub fn fill(&mut self, x: &[f64], w: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}-dim fill into {}-dim histogram",
                x.len(),
                self.dim()
            )));
        }
        match self.flat_index(x) {
            Some(i) => {
                self.contents[i] += w;
                self.sumw2[i] += w * w;
            }
            None => self.out_of_range += w,
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.contents.iter().sum()
    }
}

pub fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::Config("need at least two bin edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::Config("bin edges must be finite".into()));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("bin edges must be strictly increasing".into()));
    }
    Ok(())
}
