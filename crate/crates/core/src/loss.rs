//! Objective terms for physics-informed cycle-consistent training, as plain
//! functions over intensity images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Image;

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub cycle: f64,
    pub physics: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cycle: 10.0,
            physics: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("cycle", self.cycle), ("physics", self.physics)] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Domain(format!("{name} weight {w} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

fn masked_l1(a: &Image, b: &Image, mask: Option<&[bool]>, what: &str) -> Result<f64> {
    a.ensure_same_shape(b, what)?;
    if mask.is_some_and(|m| m.len() != a.len()) {
        return Err(Error::Contract(format!("{what}: mask length does not match image")));
    }
    let (x, y) = (a.as_slice(), b.as_slice());
    let (sum, n) = (0..x.len())
        .filter(|&i| mask.is_none_or(|m| m[i]))
        .fold((0.0, 0usize), |(s, n), i| (s + (x[i] - y[i]).abs(), n + 1));
    if n == 0 {
        return Err(Error::Empty(format!("{what}: mask selects no pixels")));
    }
    Ok(sum / n as f64)
}

/// Mean absolute deviation of generated intensities from the physics target
/// over valid pixels.
pub fn physics_loss(generated: &Image, target: &Image, mask: Option<&[bool]>) -> Result<f64> {
    masked_l1(generated, target, mask, "physics loss")
}

/// `mean|x - x_rec| + mean|y - y_rec|`.
pub fn cycle_loss(x: &Image, x_rec: &Image, y: &Image, y_rec: &Image) -> Result<f64> {
    Ok(masked_l1(x, x_rec, None, "cycle loss (x)")? + masked_l1(y, y_rec, None, "cycle loss (y)")?)
}

/// Masked variant of [`cycle_loss`]; each direction uses its own mask.
pub fn cycle_loss_masked(
    x: &Image,
    x_rec: &Image,
    x_mask: Option<&[bool]>,
    y: &Image,
    y_rec: &Image,
    y_mask: Option<&[bool]>,
) -> Result<f64> {
    Ok(masked_l1(x, x_rec, x_mask, "cycle loss (x)")? + masked_l1(y, y_rec, y_mask, "cycle loss (y)")?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversarialTerms {
    /// `-mean log D(real) - mean log(1 - D(fake))`.
    pub discriminator: f64,
    /// Non-saturating `-mean log D(fake)`.
    pub generator: f64,
}

pub fn adversarial_loss_terms(d_real: &[f64], d_fake: &[f64]) -> Result<AdversarialTerms> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Empty("adversarial loss needs non-empty batches".into()));
    }
    let clamp = |p: f64| p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&p| f(clamp(p))).sum::<f64>() / v.len() as f64;
    let real = mean(d_real, &|p| -p.ln());
    let fake_disc = mean(d_fake, &|p| -(1.0 - p).ln());
    let fake_gen = mean(d_fake, &|p| -p.ln());
    Ok(AdversarialTerms {
        discriminator: real + fake_disc,
        generator: fake_gen,
    })
}

/// `adv_s2r + adv_r2s + λ_cycle·cycle + λ_physics·physics`.
pub fn total_loss(adv_s2r: f64, adv_r2s: f64, cycle: f64, physics: f64, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    let parts = [adv_s2r, adv_r2s, cycle, physics];
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("loss components must be finite: {parts:?}")));
    }
    Ok(adv_s2r + adv_r2s + weights.cycle * cycle + weights.physics * physics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn img(v: &[f64]) -> Image {
        Image::from_vec(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn physics_loss_examples() {
        let t = img(&[0.1, 0.4, 0.7]);
        assert_eq!(physics_loss(&t, &t, None).unwrap(), 0.0);
        let shifted = t.map(|v| v + 0.1);
        assert!((physics_loss(&shifted, &t, None).unwrap() - 0.1).abs() < 1e-15);
        assert!(physics_loss(&t, &t, Some(&[false; 3])).is_err());
        assert!(physics_loss(&t, &img(&[0.0]), None).is_err());
    }

    #[test]
    fn cycle_loss_examples() {
        let x = img(&[0.2, 0.3]);
        let y = img(&[0.5, 0.9]);
        assert_eq!(cycle_loss(&x, &x, &y, &y).unwrap(), 0.0);
        let y_rec = y.map(|v| v + 0.25);
        assert!((cycle_loss(&x, &x, &y, &y_rec).unwrap() - 0.25).abs() < 1e-15);
        assert!(cycle_loss(&x, &img(&[0.1]), &y, &y).is_err());
    }

    #[test]
    fn adversarial_at_equilibrium() {
        let t = adversarial_loss_terms(&[0.5; 4], &[0.5; 4]).unwrap();
        assert!((t.discriminator - 2.0 * LN_2).abs() < 1e-15);
        assert!((t.generator - LN_2).abs() < 1e-15);
    }

    #[test]
    fn adversarial_clamping_bounds() {
        let perfect = adversarial_loss_terms(&[1.0], &[0.0]).unwrap();
        assert!(perfect.discriminator < 1e-6);
        let worst = adversarial_loss_terms(&[0.0], &[1.0]).unwrap();
        let bound = (1e7f64).ln();
        assert!(worst.discriminator <= 2.0 * bound + 1e-9);
        assert!(adversarial_loss_terms(&[0.0], &[0.0]).unwrap().generator <= bound + 1e-9);
        assert!(adversarial_loss_terms(&[], &[0.5]).is_err());
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.0, &w).unwrap(), 0.0);
        assert_eq!(total_loss(1.0, 1.0, 2.0, 3.0, &w).unwrap(), 52.0);
        let plain = LossWeights { physics: 0.0, ..w };
        assert_eq!(total_loss(1.0, 1.0, 2.0, 3.0, &plain).unwrap(), 22.0);
        assert!(total_loss(f64::NAN, 0.0, 0.0, 0.0, &w).is_err());
        assert!(total_loss(0.0, 0.0, 0.0, 0.0, &LossWeights { cycle: -1.0, physics: 1.0 }).is_err());
    }

    proptest! {
        #[test]
        fn physics_loss_is_lipschitz_per_pixel(
            values in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..64),
            idx in any::<prop::sample::Index>(),
            delta in -1.0f64..1.0,
        ) {
            let g: Vec<f64> = values.iter().map(|v| v.0).collect();
            let t: Vec<f64> = values.iter().map(|v| v.1).collect();
            let n = g.len();
            let base = physics_loss(&img(&g), &img(&t), None).unwrap();
            prop_assert!(base >= 0.0);
            let mut g2 = g.clone();
            g2[idx.index(n)] += delta;
            let moved = physics_loss(&img(&g2), &img(&t), None).unwrap();
            prop_assert!((moved - base).abs() <= delta.abs() / n as f64 + 1e-12);
        }

        #[test]
        fn physics_weight_scales_linearly(c in 0.0f64..50.0, phys in 0.0f64..5.0, cyc in 0.0f64..5.0) {
            let w = LossWeights { cycle: 10.0, physics: 1.0 };
            let scaled = LossWeights { physics: c, ..w };
            let a = total_loss(0.3, 0.4, cyc, phys, &w).unwrap() - total_loss(0.3, 0.4, cyc, 0.0, &w).unwrap();
            let b = total_loss(0.3, 0.4, cyc, phys, &scaled).unwrap() - total_loss(0.3, 0.4, cyc, 0.0, &scaled).unwrap();
            prop_assert!((b - c * a).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
