use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use wxlidar::augment::{ReturnModel, ScattererModel};
use wxlidar::loss::LossWeights;
use wxlidar::metrics::EvalConfig;
use wxlidar::modalities::DEFAULT_NEIGHBORS;
use wxlidar::scene::SceneConfig;
use wxlidar::{PointFormat, ProjectionConfig, WeatherParams};

/// Fields left unset keep the values derived from the weather condition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScatterConfig {
    pub beam_divergence: Option<f64>,
    pub particle_reflectivity: Option<f64>,
    pub reference_diameter: Option<f64>,
    pub max_particles_per_beam: Option<usize>,
    pub min_range: Option<f64>,
    pub return_model: Option<ReturnModel>,
}

impl ScatterConfig {
    pub fn resolve(&self, weather: &WeatherParams) -> wxlidar::Result<ScattererModel> {
        let mut m = ScattererModel::for_weather(weather)?;
        if let Some(v) = self.beam_divergence {
            m.beam_divergence = v;
        }
        if let Some(v) = self.particle_reflectivity {
            m.particle_reflectivity = v;
        }
        if let Some(v) = self.reference_diameter {
            m.reference_diameter = v;
        }
        if let Some(v) = self.max_particles_per_beam {
            m.max_particles_per_beam = v;
        }
        if let Some(v) = self.min_range {
            m.min_range = v;
        }
        if let Some(v) = self.return_model {
            m.return_model = v;
        }
        m.validate()?;
        Ok(m)
    }
}

/// Everything a run depends on. Loaded from `--config`, then overridden by flags.
/// A manifest written by a previous run is itself a valid config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub format: PointFormat,
    pub materials: Option<PathBuf>,
    pub neighbors: usize,
    pub projection: ProjectionConfig,
    pub weather: WeatherParams,
    pub scatter: ScatterConfig,
    pub eval: EvalConfig,
    pub loss: LossWeights,
    pub scene: SceneConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            format: PointFormat::default(),
            materials: None,
            neighbors: DEFAULT_NEIGHBORS,
            projection: ProjectionConfig::default(),
            weather: WeatherParams::default(),
            scatter: ScatterConfig::default(),
            eval: EvalConfig::default(),
            loss: LossWeights::default(),
            scene: SceneConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| wxlidar::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| crate::Usage(format!("{}: {e}", path.display())).into())
    }
}

#[derive(Debug, Serialize)]
pub struct RunInfo {
    pub subcommand: String,
    pub version: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    #[serde(flatten)]
    config: &'a RunConfig,
    run: &'a RunInfo,
}

pub fn write_manifest(out_dir: &Path, config: &RunConfig, run: &RunInfo) -> anyhow::Result<PathBuf> {
    let text = toml::to_string(&Manifest { config, run }).context("serializing manifest")?;
    let path = out_dir.join(format!("{}.manifest.toml", run.subcommand));
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// 64-bit FNV-1a, used to give each batch frame its own seed.
pub fn frame_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}
