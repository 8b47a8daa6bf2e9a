use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 256;
pub const DEFAULT_SMOOTHING: f64 = 1e-10;

/// Uniform histogram over [0, 1] with additive smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityHistogram {
    counts: Vec<u64>,
    epsilon: f64,
}

impl IntensityHistogram {
    pub fn new(n_bins: usize, epsilon: f64) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::Contract(format!("histogram needs at least 2 bins, got {n_bins}")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Contract(format!("smoothing epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            counts: vec![0; n_bins],
            epsilon,
        })
    }

    pub fn from_samples(samples: &[f64], n_bins: usize, epsilon: f64) -> Result<Self> {
        let mut h = Self::new(n_bins, epsilon)?;
        h.extend(samples);
        Ok(h)
    }

    pub fn from_counts(counts: Vec<u64>, epsilon: f64) -> Result<Self> {
        let mut h = Self::new(counts.len(), epsilon)?;
        h.counts = counts;
        Ok(h)
    }

    /// Adds samples; values are clamped into [0, 1], non-finite values skipped.
    pub fn extend(&mut self, samples: &[f64]) {
        let n = self.counts.len();
        for &v in samples {
            if v.is_finite() {
                let bin = ((v.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1);
                self.counts[bin] += 1;
            }
        }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn same_binning(&self, other: &Self) -> bool {
        self.counts.len() == other.counts.len() && self.epsilon == other.epsilon
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if !self.same_binning(other) {
            return Err(Error::Contract("cannot merge histograms with different binning".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Smoothed probabilities `(c_i + ε) / (N + nε)`.
    pub fn probs(&self) -> Vec<f64> {
        let denom = self.total() as f64 + self.epsilon * self.counts.len() as f64;
        self.counts.iter().map(|&c| (c as f64 + self.epsilon) / denom).collect()
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        let n = self.counts.len() as f64;
        (0..self.counts.len()).map(|i| (i as f64 + 0.5) / n).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bins_csv(path.as_ref(), &self.bin_centers(), &self.probs())
    }
}

/// `Σ p_i ln(p_i / q_i)` over smoothed probabilities, in nats.
pub fn kl_divergence(p: &IntensityHistogram, q: &IntensityHistogram) -> Result<f64> {
    if !p.same_binning(q) {
        return Err(Error::Contract(format!(
            "KL divergence needs identical binning ({} vs {} bins)",
            p.n_bins(),
            q.n_bins()
        )));
    }
    let kl = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(&pi, qi)| pi * (pi / qi).ln())
        .sum::<f64>();
    Ok(kl.max(0.0))
}

/// Histogram of signed differences `a_i - b_i` over [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub counts: Vec<u64>,
}

impl ErrorHistogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        2.0 / self.counts.len() as f64
    }

    pub fn bin_of(&self, diff: f64) -> usize {
        let n = self.counts.len();
        (((diff.clamp(-1.0, 1.0) + 1.0) / self.bin_width()) as usize).min(n - 1)
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.counts.len()).map(|i| -1.0 + w * (i as f64 + 0.5)).collect()
    }

    pub fn probs(&self) -> Vec<f64> {
        let total = self.counts.iter().sum::<u64>().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.counts.len() != other.counts.len() {
            return Err(Error::Contract("cannot merge error histograms with different binning".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bins_csv(path.as_ref(), &self.bin_centers(), &self.probs())
    }
}

/// Signed error histogram over positions where `mask` is set (all positions
/// when `None`). `n_bins` must be odd so that a bin is centered on zero.
pub fn error_histogram(a: &[f64], b: &[f64], mask: Option<&[bool]>, n_bins: usize) -> Result<ErrorHistogram> {
    if a.len() != b.len() || mask.is_some_and(|m| m.len() != a.len()) {
        return Err(Error::Contract("error histogram inputs must have equal shapes".into()));
    }
    if n_bins == 0 || n_bins.is_multiple_of(2) {
        return Err(Error::Contract(format!(
            "error histogram needs an odd bin count, got {n_bins}"
        )));
    }
    let mut h = ErrorHistogram {
        counts: vec![0; n_bins],
    };
    for i in 0..a.len() {
        if mask.is_none_or(|m| m[i]) {
            let bin = h.bin_of(a[i] - b[i]);
            h.counts[bin] += 1;
        }
    }
    Ok(h)
}

fn write_bins_csv(path: &Path, centers: &[f64], probs: &[f64]) -> Result<()> {
    let wrap = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(wrap)?);
    writeln!(w, "bin_center,prob").map_err(wrap)?;
    for (c, p) in centers.iter().zip(probs) {
        writeln!(w, "{c},{p}").map_err(wrap)?;
    }
    w.flush().map_err(wrap)
}
