//! Mean structural similarity with a Gaussian window, evaluated only where
//! the window fits entirely inside the image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn kernel(&self) -> Vec<f64> {
        let half = (self.window as f64 - 1.0) / 2.0;
        let taps: Vec<f64> = (0..self.window)
            .map(|i| {
                let x = i as f64 - half;
                (-x * x / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / sum).collect()
    }
}

/// Separable "valid" filtering: output is (H-w+1)×(W-w+1).
fn filter_valid(data: &[f64], height: usize, width: usize, kernel: &[f64]) -> Vec<f64> {
    let w = kernel.len();
    let (oh, ow) = (height - w + 1, width - w + 1);
    let mut horiz = vec![0.0; height * ow];
    for r in 0..height {
        let row = &data[r * width..(r + 1) * width];
        for c in 0..ow {
            horiz[r * ow + c] = kernel.iter().zip(&row[c..c + w]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..w).map(|k| kernel[k] * horiz[(r + k) * ow + c]).sum();
        }
    }
    out
}

pub fn ssim_with(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    a.ensure_same_shape(b, "ssim")?;
    let (h, w) = a.shape();
    if h < params.window || w < params.window {
        return Err(Error::Contract(format!(
            "ssim needs images of at least {0}x{0}, got {h}x{w}",
            params.window
        )));
    }
    let kernel = params.kernel();
    let (x, y) = (a.as_slice(), b.as_slice());
    let square = |v: &[f64]| v.iter().map(|t| t * t).collect::<Vec<_>>();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();

    let mu_x = filter_valid(x, h, w, &kernel);
    let mu_y = filter_valid(y, h, w, &kernel);
    let e_xx = filter_valid(&square(x), h, w, &kernel);
    let e_yy = filter_valid(&square(y), h, w, &kernel);
    let e_xy = filter_valid(&xy, h, w, &kernel);

    let (c1, c2) = (params.c1(), params.c2());
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with(a, b, &SsimParams::default())
}
