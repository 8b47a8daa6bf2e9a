//! Lambertian backscatter and two-way Beer–Lambert extinction.
//!
//! `I_phy = ρ·cos θ / R` and `I_AW = I_phy · exp(-2 ∫ α ds)`, with α in 1/km
//! and ranges in meters unless `range_unit_scale` says otherwise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Image;
use crate::io::PointCloud;
use crate::modalities::Modalities;
use crate::projection::RangeImageStack;

pub const DEFAULT_PRECIPITATION_RATE: f64 = 30.0;
/// Meters per kilometer: converts R (m) to the unit of α (1/km).
pub const DEFAULT_RANGE_UNIT_SCALE: f64 = 1000.0;
pub const DEFAULT_NOISE_THRESHOLD: f64 = 0.03;

const EXTINCTION_COEFF: f64 = 1.45;
const EXTINCTION_EXPONENT: f64 = 0.64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Clear,
    #[default]
    Rain,
    Snow,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Clear => "clear",
            Condition::Rain => "rain",
            Condition::Snow => "snow",
        })
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clear" => Ok(Condition::Clear),
            "rain" => Ok(Condition::Rain),
            "snow" => Ok(Condition::Snow),
            other => Err(Error::Contract(format!("unknown weather condition `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherParams {
    pub condition: Condition,
    /// Precipitation rate, mm/hr.
    pub rate: f64,
    /// Extinction coefficient override, 1/km. Derived from `rate` when unset.
    pub alpha: Option<f64>,
    pub range_unit_scale: f64,
    /// Detection floor on the normalized intensity scale.
    pub noise_threshold: f64,
    pub seed: u64,
}

impl Default for WeatherParams {
    fn default() -> Self {
        Self {
            condition: Condition::Rain,
            rate: DEFAULT_PRECIPITATION_RATE,
            alpha: None,
            range_unit_scale: DEFAULT_RANGE_UNIT_SCALE,
            noise_threshold: DEFAULT_NOISE_THRESHOLD,
            seed: 0,
        }
    }
}

impl WeatherParams {
    pub fn clear() -> Self {
        Self {
            condition: Condition::Clear,
            rate: 0.0,
            ..Default::default()
        }
    }

    pub fn rain(rate: f64) -> Self {
        Self {
            condition: Condition::Rain,
            rate,
            ..Default::default()
        }
    }

    pub fn snow(rate: f64) -> Self {
        Self {
            condition: Condition::Snow,
            rate,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return Err(Error::Domain(format!("precipitation rate {} must be >= 0", self.rate)));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::Domain(format!("extinction coefficient {a} must be >= 0")));
            }
        }
        if !(self.range_unit_scale > 0.0) || !self.range_unit_scale.is_finite() {
            return Err(Error::Domain(format!(
                "range unit scale {} must be positive",
                self.range_unit_scale
            )));
        }
        if !(self.noise_threshold >= 0.0) || !self.noise_threshold.is_finite() {
            return Err(Error::Domain(format!(
                "noise threshold {} must be >= 0",
                self.noise_threshold
            )));
        }
        Ok(())
    }

    /// Effective extinction coefficient in 1/km. Always 0 for clear weather.
    pub fn extinction(&self) -> Result<f64> {
        self.validate()?;
        match (self.condition, self.alpha) {
            (Condition::Clear, _) => Ok(0.0),
            (_, Some(a)) => Ok(a),
            (_, None) => derive_alpha(self.rate),
        }
    }
}

/// Lambertian return `ρ·cos θ / R`, floored at 0.
pub fn physics_intensity(reflectance: f64, incidence: f64, range: f64) -> Result<f64> {
    if !(range > 0.0) {
        return Err(Error::Domain(format!("range {range} must be positive")));
    }
    Ok((reflectance * incidence.cos() / range).max(0.0))
}

/// Extinction coefficient `1.45 · Rr^0.64` (1/km) for rate `Rr` in mm/hr.
pub fn derive_alpha(rate: f64) -> Result<f64> {
    if !(rate >= 0.0) {
        return Err(Error::Domain(format!("precipitation rate {rate} must be >= 0")));
    }
    if rate == 0.0 {
        return Ok(0.0);
    }
    Ok(EXTINCTION_COEFF * rate.powf(EXTINCTION_EXPONENT))
}

/// Two-way homogeneous attenuation `I · exp(-2 α R / scale)`.
pub fn attenuate(intensity: f64, alpha: f64, range: f64, range_unit_scale: f64) -> f64 {
    intensity * (-2.0 * alpha * range / range_unit_scale).exp()
}

/// One piece of a piecewise-constant extinction profile along a beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSegment {
    /// Path start, meters from the sensor.
    pub start: f64,
    pub end: f64,
    /// 1/km.
    pub alpha: f64,
}

impl AlphaSegment {
    pub fn new(start: f64, end: f64, alpha: f64) -> Self {
        Self { start, end, alpha }
    }
}

/// Optical depth `Σ α_j · len_j / scale` of a gap-free profile starting at 0.
pub fn optical_depth(profile: &[AlphaSegment], range_unit_scale: f64) -> Result<f64> {
    let Some(first) = profile.first() else {
        return Err(Error::Contract("extinction profile is empty".into()));
    };
    if first.start != 0.0 {
        return Err(Error::Contract(format!(
            "extinction profile must start at 0, starts at {}",
            first.start
        )));
    }
    let mut depth = 0.0;
    let mut cursor = 0.0;
    for (j, seg) in profile.iter().enumerate() {
        if seg.start != cursor {
            let kind = if seg.start > cursor { "gap" } else { "overlap" };
            return Err(Error::Contract(format!(
                "extinction profile {kind} at segment {j}: expected start {cursor}, got {}",
                seg.start
            )));
        }
        if !(seg.end > seg.start) {
            return Err(Error::Contract(format!("segment {j} has non-positive length")));
        }
        if !(seg.alpha >= 0.0) {
            return Err(Error::Domain(format!("segment {j} has negative extinction {}", seg.alpha)));
        }
        depth += seg.alpha * (seg.end - seg.start);
        cursor = seg.end;
    }
    Ok(depth / range_unit_scale)
}

/// Path-integrated attenuation. A single segment `[0, R]` reproduces
/// [`attenuate`] exactly.
pub fn attenuate_path(intensity: f64, profile: &[AlphaSegment], range_unit_scale: f64) -> Result<f64> {
    if let [only] = profile {
        optical_depth(profile, range_unit_scale)?;
        return Ok(attenuate(intensity, only.alpha, only.end, range_unit_scale));
    }
    Ok(intensity * (-2.0 * optical_depth(profile, range_unit_scale)?).exp())
}

/// Per-point physics target, max-normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsFrame {
    /// Attenuated intensities before normalization.
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Divisor applied to `raw`; 1 when the frame was all zero.
    pub max: f64,
}

/// Applies Lambertian backscatter and attenuation to aligned per-sample
/// arrays. Entries with `range <= 0` contribute 0.
pub fn physics_target(
    reflectance: &[f64],
    incidence: &[f64],
    range: &[f64],
    alpha: f64,
    range_unit_scale: f64,
) -> Result<PhysicsFrame> {
    if reflectance.len() != range.len() || incidence.len() != range.len() {
        return Err(Error::Contract("physics inputs must have equal lengths".into()));
    }
    let raw: Vec<f64> = (0..range.len())
        .map(|i| {
            if range[i] > 0.0 {
                let phy = physics_intensity(reflectance[i], incidence[i], range[i])?;
                Ok(attenuate(phy, alpha, range[i], range_unit_scale))
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<_>>()?;
    let (normalized, max) = normalize_by_max(&raw);
    Ok(PhysicsFrame { raw, normalized, max })
}

/// Divides by the maximum. An all-zero (or empty) input is returned unchanged
/// with a divisor of 1.
pub fn normalize_by_max(values: &[f64]) -> (Vec<f64>, f64) {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        (values.iter().map(|v| v / max).collect(), max)
    } else {
        if !values.is_empty() {
            log::warn!("physics frame is all zero, normalization skipped");
        }
        (values.to_vec(), 1.0)
    }
}

pub fn physics_target_frame(pc: &PointCloud, modalities: &Modalities, weather: &WeatherParams) -> Result<PhysicsFrame> {
    if modalities.len() != pc.len() {
        return Err(Error::Contract("modalities are not aligned with the cloud".into()));
    }
    physics_target(
        &modalities.reflectance,
        &modalities.incidence,
        &modalities.range,
        weather.extinction()?,
        weather.range_unit_scale,
    )
}

/// Physics target over the valid pixels of a range-image stack; empty pixels
/// stay 0.
pub fn physics_target_image(stack: &RangeImageStack, weather: &WeatherParams) -> Result<(Image, f64)> {
    let range: Vec<f64> = stack
        .range
        .as_slice()
        .iter()
        .zip(&stack.mask)
        .map(|(&r, &m)| if m { r } else { 0.0 })
        .collect();
    let frame = physics_target(
        stack.reflectance.as_slice(),
        stack.incidence.as_slice(),
        &range,
        weather.extinction()?,
        weather.range_unit_scale,
    )?;
    let img = Image::from_vec(stack.height(), stack.width(), frame.normalized)?;
    Ok((img, frame.max))
}
