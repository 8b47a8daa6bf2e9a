use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::ImageContainer;
use crate::error::{Error, Result};
use crate::grid::Image;

use super::histogram::{error_histogram, ErrorHistogram, IntensityHistogram, DEFAULT_BINS, DEFAULT_SMOOTHING};
use super::registry::{masked, FramePair, Metric, MetricRegistry, MetricSettings, Pool, DEFAULT_METRICS};
use super::ssim::SsimParams;

pub const FRAME_EXTENSION: &str = "wxri";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Frames matched by file name; every metric available.
    #[default]
    Paired,
    /// Intensities pooled per side; distribution metrics only.
    Unpaired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub n_bins: usize,
    pub epsilon: f64,
    /// Odd bin count for the signed error histogram over [-1, 1].
    pub error_bins: usize,
    pub metrics: Vec<String>,
    pub ssim: SsimParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: EvalMode::Paired,
            n_bins: DEFAULT_BINS,
            epsilon: DEFAULT_SMOOTHING,
            error_bins: 201,
            metrics: DEFAULT_METRICS.iter().map(|s| s.to_string()).collect(),
            ssim: SsimParams::default(),
        }
    }
}

impl EvalConfig {
    fn settings(&self) -> MetricSettings {
        MetricSettings {
            n_bins: self.n_bins,
            epsilon: self.epsilon,
            ssim: self.ssim,
        }
    }
}

/// One intensity image as read from a container.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub name: String,
    pub intensity: Image,
    pub mask: Option<Vec<bool>>,
}

impl Frame {
    pub fn samples(&self) -> Vec<f64> {
        match &self.mask {
            Some(m) => masked(&self.intensity, m),
            None => self.intensity.as_slice().to_vec(),
        }
    }
}

/// Reads every `*.wxri` container in `dir`, sorted by file name.
pub fn load_frames(dir: impl AsRef<Path>) -> Result<Vec<Frame>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == FRAME_EXTENSION))
        .collect();
    paths.sort();
    paths
        .par_iter()
        .map(|path| {
            let c = ImageContainer::read(path)?;
            Ok(Frame {
                name: path.file_name().unwrap().to_string_lossy().into_owned(),
                intensity: c.intensity()?,
                mask: c.mask(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Headline value: pooled when the metric supports pooling, else the
    /// per-frame mean.
    pub value: f64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub name: String,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfPair {
    pub bin_centers: Vec<f64>,
    pub generated: Vec<f64>,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mode: EvalMode,
    pub n_frames_generated: usize,
    pub n_frames_reference: usize,
    pub n_samples_generated: usize,
    pub n_samples_reference: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub frames: Vec<FrameMetrics>,
    pub pdf: PdfPair,
    pub error_histogram: Option<ErrorHistogram>,
}

impl MetricReport {
    pub fn value(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|s| s.value)
    }

    /// Range checks on every reported value.
    pub fn check_invariants(&self) -> Result<()> {
        let check = |name: &str, v: f64| -> Result<()> {
            let ok = match name {
                "ssim" => (-1.0 - 1e-12..=1.0 + 1e-12).contains(&v),
                "mse" | "kl" | "wasserstein" => v >= 0.0,
                _ => v.is_finite(),
            };
            if ok {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} = {v} violates its range")))
            }
        };
        for (name, s) in &self.metrics {
            check(name, s.value)?;
            if let Some(m) = s.mean {
                check(name, m)?;
            }
        }
        for f in &self.frames {
            for (name, &v) in &f.values {
                check(name, v)?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    /// Aligned-column summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mode = match self.mode {
            EvalMode::Paired => "paired",
            EvalMode::Unpaired => "unpaired",
        };
        let _ = writeln!(
            s,
            "mode: {mode}  frames: {} generated / {} reference  samples: {} / {}",
            self.n_frames_generated, self.n_frames_reference, self.n_samples_generated, self.n_samples_reference
        );
        let _ = writeln!(s, "{:<12} {:>14} {:>14} {:>14}", "metric", "value", "frame mean", "frame std");
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        for (name, m) in &self.metrics {
            let _ = writeln!(s, "{:<12} {:>14.6} {:>14} {:>14}", name, m.value, fmt(m.mean), fmt(m.std));
        }
        s
    }

    pub fn write_pdf_csv(&self, generated: impl AsRef<Path>, reference: impl AsRef<Path>) -> Result<()> {
        write_prob_csv(generated.as_ref(), &self.pdf.bin_centers, &self.pdf.generated)?;
        write_prob_csv(reference.as_ref(), &self.pdf.bin_centers, &self.pdf.reference)
    }
}

fn write_prob_csv(path: &Path, centers: &[f64], probs: &[f64]) -> Result<()> {
    let mut s = String::from("bin_center,prob\n");
    for (c, p) in centers.iter().zip(probs) {
        let _ = writeln!(s, "{c},{p}");
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn pair_mask(generated: &Frame, reference: &Frame) -> Vec<bool> {
    let n = reference.intensity.len();
    match (&generated.mask, &reference.mask) {
        (Some(g), Some(r)) => g.iter().zip(r).map(|(a, b)| *a && *b).collect(),
        (Some(m), None) | (None, Some(m)) => m.clone(),
        (None, None) => vec![true; n],
    }
}

fn pool(frames: &[Frame], cfg: &EvalConfig) -> Result<Pool> {
    let parts: Vec<Vec<f64>> = frames.par_iter().map(Frame::samples).collect();
    let mut histogram = IntensityHistogram::new(cfg.n_bins, cfg.epsilon)?;
    let mut samples = Vec::with_capacity(parts.iter().map(Vec::len).sum());
    for p in parts {
        histogram.extend(&p);
        samples.extend(p);
    }
    Ok(Pool { samples, histogram })
}

pub fn evaluate_frames(
    generated_dir: impl AsRef<Path>,
    reference_dir: impl AsRef<Path>,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    let generated = load_frames(generated_dir)?;
    let reference = load_frames(reference_dir)?;
    evaluate_loaded(&generated, &reference, cfg)
}

pub fn evaluate_loaded(generated: &[Frame], reference: &[Frame], cfg: &EvalConfig) -> Result<MetricReport> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::Empty("evaluation needs at least one frame on each side".into()));
    }
    let registry = MetricRegistry::default();
    let selected = registry.select(&cfg.metrics)?;
    let settings = cfg.settings();

    let metrics: Vec<&dyn Metric> = match cfg.mode {
        EvalMode::Paired => selected,
        EvalMode::Unpaired => {
            let skipped: Vec<_> = selected.iter().filter(|m| m.needs_pairing()).map(|m| m.name()).collect();
            if !skipped.is_empty() {
                log::info!("unpaired evaluation skips {}", skipped.join(", "));
            }
            selected.into_iter().filter(|m| !m.needs_pairing()).collect()
        }
    };

    let gen_pool = pool(generated, cfg)?;
    let ref_pool = pool(reference, cfg)?;
    if gen_pool.samples.is_empty() || ref_pool.samples.is_empty() {
        return Err(Error::Empty("no valid intensity samples to compare".into()));
    }

    let mut frames = Vec::new();
    let mut error_hist = None;
    if cfg.mode == EvalMode::Paired {
        let gen_names: Vec<&str> = generated.iter().map(|f| f.name.as_str()).collect();
        let ref_names: Vec<&str> = reference.iter().map(|f| f.name.as_str()).collect();
        if gen_names != ref_names {
            return Err(Error::Contract(format!(
                "paired evaluation needs matching frame lists ({} generated vs {} reference, first difference at {:?})",
                gen_names.len(),
                ref_names.len(),
                gen_names.iter().zip(&ref_names).position(|(a, b)| a != b)
            )));
        }
        let per_frame: Vec<(FrameMetrics, ErrorHistogram)> = generated
            .par_iter()
            .zip(reference)
            .map(|(g, r)| {
                g.intensity.ensure_same_shape(&r.intensity, &g.name)?;
                let mask = pair_mask(g, r);
                let pair = FramePair {
                    generated: &g.intensity,
                    reference: &r.intensity,
                    mask: &mask,
                };
                let values = metrics
                    .iter()
                    .map(|m| Ok((m.name().to_string(), m.frame(&pair, &settings)?)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                let eh = error_histogram(
                    g.intensity.as_slice(),
                    r.intensity.as_slice(),
                    Some(&mask),
                    cfg.error_bins,
                )?;
                Ok((
                    FrameMetrics {
                        name: g.name.clone(),
                        values,
                    },
                    eh,
                ))
            })
            .collect::<Result<_>>()?;
        let mut merged: Option<ErrorHistogram> = None;
        for (fm, eh) in per_frame {
            match merged.as_mut() {
                Some(m) => m.merge(&eh)?,
                None => merged = Some(eh),
            }
            frames.push(fm);
        }
        error_hist = merged;
    }

    let mut summaries = BTreeMap::new();
    for m in &metrics {
        let per: Vec<f64> = frames.iter().map(|f| f.values[m.name()]).collect();
        let (mean, std) = if per.is_empty() {
            (None, None)
        } else {
            let (mu, sd) = mean_std(&per);
            (Some(mu), Some(sd))
        };
        let value = match m.pooled(&gen_pool, &ref_pool)? {
            Some(v) => v,
            None => mean.expect("paired metrics only run in paired mode"),
        };
        summaries.insert(m.name().to_string(), MetricSummary { value, mean, std });
    }

    let report = MetricReport {
        mode: cfg.mode,
        n_frames_generated: generated.len(),
        n_frames_reference: reference.len(),
        n_samples_generated: gen_pool.samples.len(),
        n_samples_reference: ref_pool.samples.len(),
        metrics: summaries,
        frames,
        pdf: PdfPair {
            bin_centers: gen_pool.histogram.bin_centers(),
            generated: gen_pool.histogram.probs(),
            reference: ref_pool.histogram.probs(),
        },
        error_histogram: error_hist,
    };
    report.check_invariants()?;
    Ok(report)
}
