//! Distribution and image-quality metrics for generated intensities.

mod evaluate;
mod histogram;
mod registry;
mod ssim;
mod wasserstein;

pub use evaluate::{
    evaluate_frames, evaluate_loaded, load_frames, EvalConfig, EvalMode, Frame, FrameMetrics, MetricReport,
    MetricSummary, PdfPair, FRAME_EXTENSION,
};
pub use histogram::{
    error_histogram, kl_divergence, ErrorHistogram, IntensityHistogram, DEFAULT_BINS, DEFAULT_SMOOTHING,
};
pub use registry::{
    FramePair, KlMetric, Metric, MetricRegistry, MetricSettings, MseMetric, Pool, SsimMetric, WassersteinMetric,
    DEFAULT_METRICS,
};
pub use ssim::{ssim, ssim_with, SsimParams};
pub use wasserstein::wasserstein_1d;

use crate::error::{Error, Result};

/// Mean squared difference over positions where `mask` is set.
pub fn mse(a: &[f64], b: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    if a.len() != b.len() || mask.is_some_and(|m| m.len() != a.len()) {
        return Err(Error::Contract(format!("mse shape mismatch: {} vs {}", a.len(), b.len())));
    }
    let (sum, n) = (0..a.len())
        .filter(|&i| mask.is_none_or(|m| m[i]))
        .fold((0.0, 0usize), |(s, n), i| {
            let d = a[i] - b[i];
            (s + d * d, n + 1)
        });
    if n == 0 {
        return Err(Error::Empty("mse has no valid positions".into()));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let a = [0.1, 0.5, 0.9];
        assert_eq!(mse(&a, &a, None).unwrap(), 0.0);
        assert_eq!(mse(&[0.0; 4], &[1.0; 4], None).unwrap(), 1.0);
        assert!((mse(&[0.2, 0.4], &[0.3, 0.1], None).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn mse_mask_and_errors() {
        assert_eq!(mse(&[0.0, 1.0], &[0.0, 0.0], Some(&[true, false])).unwrap(), 0.0);
        assert!(mse(&[0.0], &[0.0], Some(&[false])).is_err());
        assert!(mse(&[0.0], &[0.0, 1.0], None).is_err());
    }
}
