//! Precipitation models selectable by name.
//!
//! Each model supplies an exponential drop-size distribution `N(D) = N0·e^{-ΛD}`
//! for a given rate, a particle reflectivity for the backscatter surrogate, and
//! the extinction coefficient used for Beer–Lambert attenuation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{derive_alpha, Condition};

/// Exponential size distribution. `n0` in m⁻³·mm⁻¹, `lambda` in mm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropSizeDistribution {
    pub n0: f64,
    pub lambda: f64,
}

impl DropSizeDistribution {
    /// Particles per m³, `∫ N(D) dD = N0 / Λ`.
    pub fn number_density(&self) -> f64 {
        if self.n0 <= 0.0 {
            0.0
        } else {
            self.n0 / self.lambda
        }
    }

    /// Normalized diameter density `Λ e^{-ΛD}`.
    pub fn pdf(&self, diameter: f64) -> f64 {
        if diameter < 0.0 {
            0.0
        } else {
            self.lambda * (-self.lambda * diameter).exp()
        }
    }

    pub fn cdf(&self, diameter: f64) -> f64 {
        if diameter <= 0.0 {
            0.0
        } else {
            1.0 - (-self.lambda * diameter).exp()
        }
    }

    /// Inverse CDF evaluated at `1 - u`; `u` must lie in (0, 1).
    pub fn diameter_from_uniform(&self, u: f64) -> f64 {
        -u.ln() / self.lambda
    }
}

pub trait PrecipitationModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn condition(&self) -> Condition;

    fn size_distribution(&self, rate: f64) -> DropSizeDistribution;

    /// Dimensionless reflectivity of a reference-diameter particle at 1 m.
    fn particle_reflectivity(&self) -> f64;

    /// Extinction coefficient in 1/km.
    fn extinction(&self, rate: f64) -> Result<f64> {
        derive_alpha(rate)
    }
}

/// Marshall–Palmer rain: `N0 = 8000`, `Λ = 4.1·R^-0.21`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MarshallPalmerRain;

impl PrecipitationModel for MarshallPalmerRain {
    fn name(&self) -> &'static str {
        "rain"
    }

    fn condition(&self) -> Condition {
        Condition::Rain
    }

    fn size_distribution(&self, rate: f64) -> DropSizeDistribution {
        if rate <= 0.0 {
            return DropSizeDistribution { n0: 0.0, lambda: 4.1 };
        }
        DropSizeDistribution {
            n0: 8000.0,
            lambda: 4.1 * rate.powf(-0.21),
        }
    }

    fn particle_reflectivity(&self) -> f64 {
        0.02
    }
}

/// Gunn–Marshall snow with the rate read as melted-water equivalent:
/// `N0 = 3800·R^-0.87`, `Λ = 2.55·R^-0.48`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GunnMarshallSnow;

impl PrecipitationModel for GunnMarshallSnow {
    fn name(&self) -> &'static str {
        "snow"
    }

    fn condition(&self) -> Condition {
        Condition::Snow
    }

    fn size_distribution(&self, rate: f64) -> DropSizeDistribution {
        if rate <= 0.0 {
            return DropSizeDistribution { n0: 0.0, lambda: 2.55 };
        }
        DropSizeDistribution {
            n0: 3800.0 * rate.powf(-0.87),
            lambda: 2.55 * rate.powf(-0.48),
        }
    }

    fn particle_reflectivity(&self) -> f64 {
        0.01
    }
}

/// Name → model table.
pub struct PrecipitationRegistry {
    models: BTreeMap<&'static str, Box<dyn PrecipitationModel>>,
}

impl Default for PrecipitationRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(MarshallPalmerRain));
        reg.register(Box::new(GunnMarshallSnow));
        reg
    }
}

impl PrecipitationRegistry {
    pub fn empty() -> Self {
        Self { models: BTreeMap::new() }
    }

    /// Adds a model, replacing any existing one with the same name.
    pub fn register(&mut self, model: Box<dyn PrecipitationModel>) {
        self.models.insert(model.name(), model);
    }

    pub fn get(&self, name: &str) -> Result<&dyn PrecipitationModel> {
        self.models.get(name).map(|m| m.as_ref()).ok_or_else(|| {
            Error::Contract(format!(
                "unknown precipitation model `{name}` (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn for_condition(&self, condition: Condition) -> Result<&dyn PrecipitationModel> {
        match condition {
            Condition::Clear => Err(Error::Contract("clear weather has no precipitation model".into())),
            c => self.get(&c.to_string()),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.models.keys().copied().collect()
    }
}
