//! Binary point-cloud records and the label → reflectance material table.
//!
//! Two packed little-endian layouts are supported:
//!
//! ```text
//! kitti_bin   | x:f32 | y:f32 | z:f32 | intensity:f32 |               16 B
//! labeled_bin | x:f32 | y:f32 | z:f32 | intensity:f32 | label:u32 |   20 B
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
    pub label: u32,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self {
            x,
            y,
            z,
            intensity,
            label: 0,
        }
    }

    pub fn with_label(mut self, label: u32) -> Self {
        self.label = label;
        self
    }

    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self {
            points,
            frame_id: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.intensity).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFormat {
    #[default]
    KittiBin,
    LabeledBin,
}

impl PointFormat {
    pub fn record_size(self) -> usize {
        match self {
            PointFormat::KittiBin => 16,
            PointFormat::LabeledBin => 20,
        }
    }
}

impl fmt::Display for PointFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointFormat::KittiBin => "kitti_bin",
            PointFormat::LabeledBin => "labeled_bin",
        })
    }
}

impl FromStr for PointFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kitti_bin" | "kitti" => Ok(PointFormat::KittiBin),
            "labeled_bin" | "labeled" => Ok(PointFormat::LabeledBin),
            other => Err(Error::Contract(format!("unknown point format `{other}`"))),
        }
    }
}

/// Outcome of decoding a record buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReadReport {
    pub n_points: usize,
    /// Records whose intensity lay outside [0, 1] and was clamped.
    pub n_clamped: usize,
}

pub fn decode_points(bytes: &[u8], format: PointFormat, path: &Path) -> Result<(Vec<Point>, ReadReport)> {
    let size = format.record_size();
    if !bytes.len().is_multiple_of(size) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "byte length {} is not a multiple of the {size}-byte {format} record",
                bytes.len()
            ),
        });
    }
    let f32_at = |rec: &[u8], i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap());

    let mut points = Vec::with_capacity(bytes.len() / size);
    let mut n_clamped = 0;
    for (index, rec) in bytes.chunks_exact(size).enumerate() {
        let (x, y, z, raw) = (f32_at(rec, 0), f32_at(rec, 1), f32_at(rec, 2), f32_at(rec, 3));
        if !(x.is_finite() && y.is_finite() && z.is_finite() && raw.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let intensity = raw.clamp(0.0, 1.0);
        if intensity != raw {
            n_clamped += 1;
        }
        let label = match format {
            PointFormat::KittiBin => 0,
            PointFormat::LabeledBin => u32::from_le_bytes(rec[16..20].try_into().unwrap()),
        };
        points.push(Point {
            x: x as f64,
            y: y as f64,
            z: z as f64,
            intensity: intensity as f64,
            label,
        });
    }
    let report = ReadReport {
        n_points: points.len(),
        n_clamped,
    };
    Ok((points, report))
}

/// Encodes points as packed records. Coordinates are narrowed to `f32`; values
/// that are already `f32`-representable round-trip exactly.
pub fn encode_points(points: &[Point], format: PointFormat) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * format.record_size());
    for p in points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if format == PointFormat::LabeledBin {
            out.extend_from_slice(&p.label.to_le_bytes());
        }
    }
    out
}

pub fn read_pointcloud(path: impl AsRef<Path>, format: PointFormat) -> Result<(PointCloud, ReadReport)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (points, report) = decode_points(&bytes, format, path)?;
    if report.n_clamped > 0 {
        log::warn!("{}: clamped intensity of {} records", path.display(), report.n_clamped);
    }
    let frame_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok((PointCloud { points, frame_id }, report))
}

pub fn write_pointcloud(pc: &PointCloud, path: impl AsRef<Path>, format: PointFormat) -> Result<()> {
    let path = path.as_ref();
    if let Some(index) = pc.points.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    std::fs::write(path, encode_points(&pc.points, format)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub reflectance: f64,
}

/// Semantic label → reflectance at the sensor wavelength. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    entries: BTreeMap<u32, Material>,
    default_reflectance: f64,
}

pub const DEFAULT_REFLECTANCE: f64 = 0.5;

const BUILTIN_TABLE: &str = include_str!("../data/materials_905nm.csv");

impl Default for MaterialTable {
    fn default() -> Self {
        Self::new(DEFAULT_REFLECTANCE)
    }
}

impl MaterialTable {
    pub fn new(default_reflectance: f64) -> Self {
        Self {
            entries: BTreeMap::new(),
            default_reflectance,
        }
    }

    /// The table shipped with the crate (`data/materials_905nm.csv`).
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TABLE, Path::new("<builtin>"), DEFAULT_REFLECTANCE)
            .expect("builtin material table is valid")
    }

    pub fn with_default(mut self, default_reflectance: f64) -> Self {
        self.default_reflectance = default_reflectance;
        self
    }

    pub fn insert(&mut self, label: u32, name: impl Into<String>, reflectance: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&reflectance) {
            return Err(Error::Domain(format!(
                "reflectance {reflectance} for label {label} outside [0, 1]"
            )));
        }
        self.entries.insert(
            label,
            Material {
                name: name.into(),
                reflectance,
            },
        );
        Ok(())
    }

    pub fn get(&self, label: u32) -> Option<&Material> {
        self.entries.get(&label)
    }

    pub fn reflectance(&self, label: u32) -> f64 {
        self.entries
            .get(&label)
            .map_or(self.default_reflectance, |m| m.reflectance)
    }

    pub fn default_reflectance(&self) -> f64 {
        self.default_reflectance
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &Material)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// Parses `label_id,material_name,reflectance` lines. `#` starts a comment.
    pub fn parse(text: &str, path: &Path, default_reflectance: f64) -> Result<Self> {
        let mut table = Self::new(default_reflectance);
        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [label, name, rho] = fields[..] else {
                return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
            };
            let label: u32 = label
                .parse()
                .map_err(|_| parse_err(format!("invalid label id `{label}`")))?;
            let rho: f64 = rho
                .parse()
                .map_err(|_| parse_err(format!("invalid reflectance `{rho}`")))?;
            if !(0.0..=1.0).contains(&rho) {
                return Err(parse_err(format!("reflectance {rho} outside [0, 1]")));
            }
            if table.entries.contains_key(&label) {
                log::warn!("{}:{line_no}: duplicate label {label}, last entry wins", path.display());
            }
            table.entries.insert(
                label,
                Material {
                    name: name.to_string(),
                    reflectance: rho,
                },
            );
        }
        Ok(table)
    }
}

pub fn load_material_table(path: impl AsRef<Path>) -> Result<MaterialTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MaterialTable::parse(&text, path, DEFAULT_REFLECTANCE)
}
