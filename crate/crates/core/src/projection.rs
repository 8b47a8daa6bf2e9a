//! Spherical (azimuth × elevation) projection of point clouds into range
//! images, and the inverse transfer of per-pixel intensities onto points.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Image;
use crate::io::PointCloud;
use crate::modalities::Modalities;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub width: usize,
    pub height: usize,
    /// Upper vertical field-of-view bound, degrees.
    pub fov_up: f64,
    /// Lower vertical field-of-view bound, degrees.
    pub fov_down: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            width: 2048,
            height: 64,
            fov_up: 3.0,
            fov_down: -25.0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Contract(format!(
                "projection grid must be at least 1x1, got {}x{}",
                self.height, self.width
            )));
        }
        if !(self.fov_up > self.fov_down) || !self.fov_up.is_finite() || !self.fov_down.is_finite() {
            return Err(Error::Contract(format!(
                "fov_up ({}) must exceed fov_down ({})",
                self.fov_up, self.fov_down
            )));
        }
        Ok(())
    }

    /// Pixel `(row, col)` for a point, or `None` when its range is zero.
    pub fn pixel_of(&self, xyz: [f64; 3]) -> Option<(usize, usize)> {
        let [x, y, z] = xyz;
        let range = (x * x + y * y + z * z).sqrt();
        if range <= 0.0 {
            return None;
        }
        let azimuth = y.atan2(x);
        let elevation = (z / range).clamp(-1.0, 1.0).asin();
        let up = self.fov_up.to_radians();
        let down = self.fov_down.to_radians();

        let col = (self.width as f64 * (0.5 * (1.0 - azimuth / PI))).floor();
        let row = (self.height as f64 * (up - elevation) / (up - down)).floor();
        let col = col.clamp(0.0, (self.width - 1) as f64) as usize;
        let row = row.clamp(0.0, (self.height - 1) as f64) as usize;
        Some((row, col))
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }
}

/// A point that lost its pixel to a nearer return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shadow {
    pub point: u32,
    pub pixel: u32,
}

/// Multi-channel range image with the bookkeeping needed to push values back
/// onto the source cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImageStack {
    pub config: ProjectionConfig,
    pub range: Image,
    pub incidence: Image,
    pub reflectance: Image,
    pub intensity: Image,
    pub mask: Vec<bool>,
    pub index_map: Vec<Option<u32>>,
    /// Sorted by point index.
    pub shadows: Vec<Shadow>,
    /// Additional named channels, e.g. the physics target.
    pub extra: BTreeMap<String, Image>,
}

impl RangeImageStack {
    pub fn empty(config: ProjectionConfig) -> Self {
        let (h, w) = (config.height, config.width);
        Self {
            config,
            range: Image::zeros(h, w),
            incidence: Image::zeros(h, w),
            reflectance: Image::zeros(h, w),
            intensity: Image::zeros(h, w),
            mask: vec![false; h * w],
            index_map: vec![None; h * w],
            shadows: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn height(&self) -> usize {
        self.config.height
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn mask_image(&self) -> Image {
        Image::from_vec(
            self.height(),
            self.width(),
            self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask length matches grid")
    }

    /// Looks up a channel by its container name.
    pub fn channel(&self, name: &str) -> Option<&Image> {
        match name {
            "range" => Some(&self.range),
            "incidence" => Some(&self.incidence),
            "reflectance" => Some(&self.reflectance),
            "intensity" => Some(&self.intensity),
            other => self.extra.get(other),
        }
    }
}

/// Projects a cloud with its per-point modalities onto the spherical grid.
///
/// On a pixel collision the smaller range wins and ties go to the lower point
/// index; losers are recorded in `shadows`.
pub fn project(pc: &PointCloud, modalities: &Modalities, cfg: &ProjectionConfig) -> Result<RangeImageStack> {
    cfg.validate()?;
    if modalities.len() != pc.len() {
        return Err(Error::Contract(format!(
            "modalities cover {} points but the cloud has {}",
            modalities.len(),
            pc.len()
        )));
    }
    if pc.len() > u32::MAX as usize {
        return Err(Error::Contract("cloud too large for a u32 index plane".into()));
    }

    let mut pixels = Vec::with_capacity(pc.len());
    for (i, p) in pc.points.iter().enumerate() {
        match cfg.pixel_of(p.xyz()) {
            Some((r, c)) => pixels.push(r * cfg.width + c),
            None => return Err(Error::Domain(format!("point {i} has zero range"))),
        }
    }

    let mut stack = RangeImageStack::empty(*cfg);
    let mut shadows = Vec::new();
    for (i, &px) in pixels.iter().enumerate() {
        let r = modalities.range[i];
        match stack.index_map[px] {
            None => stack.index_map[px] = Some(i as u32),
            Some(j) if r < modalities.range[j as usize] => {
                shadows.push(Shadow { point: j, pixel: px as u32 });
                stack.index_map[px] = Some(i as u32);
            }
            Some(_) => shadows.push(Shadow { point: i as u32, pixel: px as u32 }),
        }
    }
    shadows.sort_unstable_by_key(|s| s.point);
    stack.shadows = shadows;

    for px in 0..cfg.n_pixels() {
        if let Some(i) = stack.index_map[px] {
            let i = i as usize;
            stack.mask[px] = true;
            stack.range.as_mut_slice()[px] = modalities.range[i];
            stack.incidence.as_mut_slice()[px] = modalities.incidence[i];
            stack.reflectance.as_mut_slice()[px] = modalities.reflectance[i];
            stack.intensity.as_mut_slice()[px] = pc.points[i].intensity;
        }
    }
    Ok(stack)
}

/// Writes per-pixel generated intensities back onto the cloud that produced
/// `stack`. Shadowed points take the value of the pixel they fell into, so the
/// output keeps every input point. Geometry and labels are untouched.
pub fn back_project(stack: &RangeImageStack, generated: &Image, pc: &PointCloud) -> Result<PointCloud> {
    if generated.shape() != (stack.height(), stack.width()) {
        return Err(Error::Contract(format!(
            "generated grid {:?} does not match stack {}x{}",
            generated.shape(),
            stack.height(),
            stack.width()
        )));
    }
    let n = pc.len();
    let mut out = pc.clone();
    let grid = generated.as_slice();
    let mut assign = |point: usize, pixel: usize| -> Result<()> {
        let p = out
            .points
            .get_mut(point)
            .ok_or_else(|| Error::Contract(format!("stack references point {point} but cloud has {n}")))?;
        p.intensity = grid[pixel].clamp(0.0, 1.0);
        Ok(())
    };
    for (px, idx) in stack.index_map.iter().enumerate() {
        if let Some(i) = idx {
            assign(*i as usize, px)?;
        }
    }
    for s in &stack.shadows {
        assign(s.point as usize, s.pixel as usize)?;
    }
    Ok(out)
}
