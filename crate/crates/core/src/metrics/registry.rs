//! Scalar metrics behind a common trait, looked up by name.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::Image;

use super::histogram::{kl_divergence, IntensityHistogram};
use super::ssim::{ssim_with, SsimParams};
use super::wasserstein::wasserstein_1d;
use super::mse;

/// One generated/reference frame pair with its validity mask.
pub struct FramePair<'a> {
    pub generated: &'a Image,
    pub reference: &'a Image,
    pub mask: &'a [bool],
}

impl FramePair<'_> {
    pub fn generated_samples(&self) -> Vec<f64> {
        masked(self.generated, self.mask)
    }

    pub fn reference_samples(&self) -> Vec<f64> {
        masked(self.reference, self.mask)
    }
}

pub(crate) fn masked(img: &Image, mask: &[bool]) -> Vec<f64> {
    img.as_slice()
        .iter()
        .zip(mask)
        .filter_map(|(&v, &m)| m.then_some(v))
        .collect()
}

/// Intensity samples pooled across frames.
#[derive(Debug, Clone)]
pub struct Pool {
    pub samples: Vec<f64>,
    pub histogram: IntensityHistogram,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSettings {
    pub n_bins: usize,
    pub epsilon: f64,
    pub ssim: SsimParams,
}

pub trait Metric: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether the metric compares co-registered pixels (and so needs paired
    /// frames) rather than intensity distributions.
    fn needs_pairing(&self) -> bool;

    fn frame(&self, pair: &FramePair<'_>, settings: &MetricSettings) -> Result<f64>;

    /// Value over pooled intensities. `None` for metrics summarized as a mean
    /// over frames.
    fn pooled(&self, _generated: &Pool, _reference: &Pool) -> Result<Option<f64>> {
        Ok(None)
    }
}

pub struct MseMetric;

impl Metric for MseMetric {
    fn name(&self) -> &'static str {
        "mse"
    }

    fn needs_pairing(&self) -> bool {
        true
    }

    fn frame(&self, pair: &FramePair<'_>, _: &MetricSettings) -> Result<f64> {
        mse(pair.generated.as_slice(), pair.reference.as_slice(), Some(pair.mask))
    }
}

/// SSIM on images with empty pixels zeroed in both inputs.
pub struct SsimMetric;

impl Metric for SsimMetric {
    fn name(&self) -> &'static str {
        "ssim"
    }

    fn needs_pairing(&self) -> bool {
        true
    }

    fn frame(&self, pair: &FramePair<'_>, settings: &MetricSettings) -> Result<f64> {
        let zero_empty = |img: &Image| {
            let mut out = img.clone();
            for (v, &m) in out.as_mut_slice().iter_mut().zip(pair.mask) {
                if !m {
                    *v = 0.0;
                }
            }
            out
        };
        ssim_with(&zero_empty(pair.generated), &zero_empty(pair.reference), &settings.ssim)
    }
}

pub struct KlMetric;

impl Metric for KlMetric {
    fn name(&self) -> &'static str {
        "kl"
    }

    fn needs_pairing(&self) -> bool {
        false
    }

    fn frame(&self, pair: &FramePair<'_>, settings: &MetricSettings) -> Result<f64> {
        let p = IntensityHistogram::from_samples(&pair.generated_samples(), settings.n_bins, settings.epsilon)?;
        let q = IntensityHistogram::from_samples(&pair.reference_samples(), settings.n_bins, settings.epsilon)?;
        kl_divergence(&p, &q)
    }

    fn pooled(&self, generated: &Pool, reference: &Pool) -> Result<Option<f64>> {
        kl_divergence(&generated.histogram, &reference.histogram).map(Some)
    }
}

pub struct WassersteinMetric;

impl Metric for WassersteinMetric {
    fn name(&self) -> &'static str {
        "wasserstein"
    }

    fn needs_pairing(&self) -> bool {
        false
    }

    fn frame(&self, pair: &FramePair<'_>, _: &MetricSettings) -> Result<f64> {
        wasserstein_1d(&pair.generated_samples(), &pair.reference_samples())
    }

    fn pooled(&self, generated: &Pool, reference: &Pool) -> Result<Option<f64>> {
        wasserstein_1d(&generated.samples, &reference.samples).map(Some)
    }
}

pub struct MetricRegistry {
    metrics: BTreeMap<&'static str, Box<dyn Metric>>,
}

pub const DEFAULT_METRICS: [&str; 4] = ["mse", "ssim", "kl", "wasserstein"];

impl Default for MetricRegistry {
    fn default() -> Self {
        let mut reg = Self {
            metrics: BTreeMap::new(),
        };
        reg.register(Box::new(MseMetric));
        reg.register(Box::new(SsimMetric));
        reg.register(Box::new(KlMetric));
        reg.register(Box::new(WassersteinMetric));
        reg
    }
}

impl MetricRegistry {
    pub fn register(&mut self, metric: Box<dyn Metric>) {
        self.metrics.insert(metric.name(), metric);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Metric> {
        self.metrics.get(name).map(|m| m.as_ref()).ok_or_else(|| {
            Error::Contract(format!(
                "unknown metric `{name}` (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.metrics.keys().copied().collect()
    }

    /// Resolves names in the given order, rejecting unknown or repeated ones.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<&dyn Metric>> {
        let mut seen = Vec::new();
        let mut out = Vec::new();
        for name in names {
            let name = name.as_ref();
            if seen.contains(&name) {
                return Err(Error::Contract(format!("metric `{name}` listed twice")));
            }
            seen.push(name);
            out.push(self.get(name)?);
        }
        Ok(out)
    }
}
