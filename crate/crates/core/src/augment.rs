//! Monte Carlo geometric degradation: spurious returns from precipitation
//! particles and point drops below the detection floor.
//!
//! Every beam (input point) owns an independent ChaCha stream keyed by
//! `(seed, point index)`, so results do not depend on thread count.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{Point, PointCloud};
use crate::modalities::Modalities;
use crate::physics::{attenuate, normalize_by_max, physics_intensity, Condition, WeatherParams};
use crate::precipitation::{DropSizeDistribution, PrecipitationModel, PrecipitationRegistry};

/// Source of the clear-weather return that attenuation is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnModel {
    /// The point's own intensity (a simulator's clear-weather return).
    #[default]
    PointIntensity,
    /// Lambertian `ρ cos θ / R` from the modalities, max-normalized per frame.
    Lambertian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScattererModel {
    pub distribution: DropSizeDistribution,
    /// Full cone angle, radians.
    pub beam_divergence: f64,
    pub particle_reflectivity: f64,
    /// Diameter (mm) at which a particle at 1 m returns `particle_reflectivity`.
    pub reference_diameter: f64,
    pub max_particles_per_beam: usize,
    /// Blind zone in front of the sensor, meters; no particles are placed closer.
    pub min_range: f64,
    pub return_model: ReturnModel,
}

impl Default for ScattererModel {
    fn default() -> Self {
        Self::from_model(&crate::precipitation::MarshallPalmerRain, crate::physics::DEFAULT_PRECIPITATION_RATE)
    }
}

impl ScattererModel {
    pub fn from_model(model: &dyn PrecipitationModel, rate: f64) -> Self {
        Self {
            distribution: model.size_distribution(rate),
            beam_divergence: 3e-3,
            particle_reflectivity: model.particle_reflectivity(),
            reference_diameter: 1.0,
            max_particles_per_beam: 4096,
            min_range: 0.5,
            return_model: ReturnModel::PointIntensity,
        }
    }

    /// Preset for `weather.condition` from the default registry.
    pub fn for_weather(weather: &WeatherParams) -> Result<Self> {
        let registry = PrecipitationRegistry::default();
        Ok(Self::from_model(registry.for_condition(weather.condition)?, weather.rate))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.distribution;
        if !(d.n0 >= 0.0) || !(d.lambda > 0.0) || !d.lambda.is_finite() {
            return Err(Error::Domain(format!(
                "drop-size distribution needs N0 >= 0 and finite Λ > 0, got N0={} Λ={}",
                d.n0, d.lambda
            )));
        }
        if !(self.beam_divergence >= 0.0) || !(self.particle_reflectivity >= 0.0) || !(self.reference_diameter > 0.0) {
            return Err(Error::Domain("scatterer model parameters must be non-negative".into()));
        }
        if !(self.min_range >= 0.0) {
            return Err(Error::Domain(format!("min_range {} must be >= 0", self.min_range)));
        }
        Ok(())
    }

    /// Volume (m³) of the beam cone between `min_range` and `r_max`.
    pub fn beam_volume(&self, r_max: f64) -> f64 {
        if r_max <= self.min_range {
            return 0.0;
        }
        let t = (0.5 * self.beam_divergence).tan();
        std::f64::consts::PI * t * t * (r_max.powi(3) - self.min_range.powi(3)) / 3.0
    }

    pub fn expected_count(&self, r_max: f64) -> f64 {
        self.distribution.number_density() * self.beam_volume(r_max)
    }

    /// Backscatter surrogate `reflectivity · (D/D_ref)² / R_s²`.
    pub fn backscatter(&self, s: &Scatterer) -> f64 {
        let rel = s.diameter / self.reference_diameter;
        self.particle_reflectivity * rel * rel / (s.range * s.range)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    /// Meters along the beam.
    pub range: f64,
    /// Millimeters.
    pub diameter: f64,
}

/// Random stream owned by beam `index`.
pub fn beam_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Poisson number of particles in the beam cone up to `r_max`, ranges uniform
/// along the beam, diameters by inverse-CDF from the size distribution.
pub fn sample_scatterers<R: Rng + ?Sized>(r_max: f64, model: &ScattererModel, rng: &mut R) -> Vec<Scatterer> {
    let mean = model.expected_count(r_max);
    if !(mean > 0.0) {
        return Vec::new();
    }
    let count = Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0);
    let count = (count as usize).min(model.max_particles_per_beam);
    let span = r_max - model.min_range;
    (0..count)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            let v: f64 = rng.sample(Open01);
            Scatterer {
                range: model.min_range + span * u,
                diameter: model.distribution.diameter_from_uniform(v),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BeamOutcome {
    Kept,
    Dropped,
    /// Replaced by a particle return.
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub n_input: usize,
    /// Original returns lost, including those replaced by particle returns.
    pub n_dropped: usize,
    pub n_noise_added: usize,
    pub n_output: usize,
    pub drop_fraction: f64,
    pub seed: u64,
}

impl AugmentReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report is plain data")
    }
}

/// Degrades a clear-weather cloud for `weather`. Output points keep input
/// order; a beam yields at most one point (its own return or the strongest
/// particle return).
pub fn augment(
    pc: &PointCloud,
    modalities: &Modalities,
    weather: &WeatherParams,
    scatter: &ScattererModel,
) -> Result<(PointCloud, AugmentReport)> {
    let (cloud, outcomes) = augment_detailed(pc, modalities, weather, scatter)?;
    let n_noise = outcomes.iter().filter(|o| **o == BeamOutcome::Noise).count();
    let n_lost = outcomes.iter().filter(|o| **o != BeamOutcome::Kept).count();
    let report = AugmentReport {
        n_input: pc.len(),
        n_dropped: n_lost,
        n_noise_added: n_noise,
        n_output: cloud.len(),
        drop_fraction: if pc.is_empty() { 0.0 } else { n_lost as f64 / pc.len() as f64 },
        seed: weather.seed,
    };
    Ok((cloud, report))
}

/// As [`augment`], also returning the per-beam outcome in input order.
pub fn augment_detailed(
    pc: &PointCloud,
    modalities: &Modalities,
    weather: &WeatherParams,
    scatter: &ScattererModel,
) -> Result<(PointCloud, Vec<BeamOutcome>)> {
    if weather.condition == Condition::Clear {
        return Err(Error::Contract(
            "augment requires rain or snow; clear weather needs no degradation".into(),
        ));
    }
    if modalities.len() != pc.len() {
        return Err(Error::Contract("modalities are not aligned with the cloud".into()));
    }
    scatter.validate()?;
    let alpha = weather.extinction()?;
    if let Some(i) = modalities.range.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::Domain(format!("point {i} has zero range")));
    }

    let clear: Vec<f64> = match scatter.return_model {
        ReturnModel::PointIntensity => pc.intensities(),
        ReturnModel::Lambertian => {
            let raw = (0..pc.len())
                .map(|i| physics_intensity(modalities.reflectance[i], modalities.incidence[i], modalities.range[i]))
                .collect::<Result<Vec<_>>>()?;
            normalize_by_max(&raw).0
        }
    };

    let results: Vec<(Option<Point>, BeamOutcome)> = (0..pc.len())
        .into_par_iter()
        .map(|i| {
            let p = pc.points[i];
            let range = modalities.range[i];
            let object = attenuate(clear[i], alpha, range, weather.range_unit_scale);

            let mut rng = beam_stream(weather.seed, i as u64);
            let strongest = sample_scatterers(range, scatter, &mut rng)
                .into_iter()
                .map(|s| (scatter.backscatter(&s), s))
                .fold(None::<(f64, Scatterer)>, |best, cur| match best {
                    Some(b) if b.0 >= cur.0 => Some(b),
                    _ => Some(cur),
                });

            match strongest {
                Some((power, s)) if power > object && power > weather.noise_threshold => {
                    let t = s.range / range;
                    let noise = Point {
                        x: p.x * t,
                        y: p.y * t,
                        z: p.z * t,
                        intensity: power.min(1.0),
                        label: 0,
                    };
                    (Some(noise), BeamOutcome::Noise)
                }
                _ if object < weather.noise_threshold => (None, BeamOutcome::Dropped),
                _ => (Some(Point { intensity: object, ..p }), BeamOutcome::Kept),
            }
        })
        .collect();

    let mut points = Vec::with_capacity(results.len());
    let mut outcomes = Vec::with_capacity(results.len());
    for (p, o) in results {
        points.extend(p);
        outcomes.push(o);
    }
    Ok((
        PointCloud {
            points,
            frame_id: pc.frame_id.clone(),
        },
        outcomes,
    ))
}
