//! On-disk container for range-image stacks and single-channel images.
//!
//! ```text
//! magic        4 B   "WXRI"
//! version      u32   1
//! width        u32
//! height       u32
//! fov_up       f64   degrees, NaN when unknown
//! fov_down     f64   degrees, NaN when unknown
//! n_channels   u32
//! names        n_channels × (u16 length, UTF-8 bytes)
//! has_index    u8    0 or 1
//! planes       n_channels × H×W f32, row-major
//! index plane  H×W u32 (0xFFFFFFFF = none)            if has_index
//! n_shadows    u32, then n_shadows × (point u32, pixel u32)   if has_index
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Image;
use crate::projection::{ProjectionConfig, RangeImageStack, Shadow};

pub const MAGIC: &[u8; 4] = b"WXRI";
pub const VERSION: u32 = 1;
pub const NO_INDEX: u32 = u32::MAX;

/// Channel names used by [`RangeImageStack`].
pub const STACK_CHANNELS: [&str; 5] = ["range", "incidence", "reflectance", "intensity", "mask"];
pub const PHYSICS_CHANNEL: &str = "physics_aw";

#[derive(Debug, Clone, PartialEq)]
pub struct ImageContainer {
    pub width: u32,
    pub height: u32,
    pub fov: Option<(f64, f64)>,
    pub channels: Vec<(String, Vec<f32>)>,
    pub index: Option<Vec<u32>>,
    pub shadows: Vec<Shadow>,
}

impl ImageContainer {
    pub fn single(name: &str, image: &Image) -> Self {
        Self {
            width: image.width() as u32,
            height: image.height() as u32,
            fov: None,
            channels: vec![(name.to_string(), to_f32(image))],
            index: None,
            shadows: Vec::new(),
        }
    }

    pub fn channel(&self, name: &str) -> Option<Image> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, data)| self.to_image(data))
    }

    fn to_image(&self, data: &[f32]) -> Image {
        Image::from_vec(
            self.height as usize,
            self.width as usize,
            data.iter().map(|&v| v as f64).collect(),
        )
        .expect("plane length checked on decode")
    }

    /// The intensity plane: the channel named `intensity`, or the only channel.
    pub fn intensity(&self) -> Result<Image> {
        if let Some(img) = self.channel("intensity") {
            return Ok(img);
        }
        match self.channels.as_slice() {
            [(_, data)] => Ok(self.to_image(data)),
            _ => Err(Error::Contract("container has no `intensity` channel".into())),
        }
    }

    pub fn mask(&self) -> Option<Vec<bool>> {
        self.channels
            .iter()
            .find(|(n, _)| n == "mask")
            .map(|(_, d)| d.iter().map(|&v| v > 0.5).collect())
    }

    pub fn encode(&self) -> Vec<u8> {
        let n_px = (self.width * self.height) as usize;
        let mut out = Vec::with_capacity(64 + self.channels.len() * n_px * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        let (up, down) = self.fov.unwrap_or((f64::NAN, f64::NAN));
        out.extend_from_slice(&up.to_le_bytes());
        out.extend_from_slice(&down.to_le_bytes());
        out.extend_from_slice(&(self.channels.len() as u32).to_le_bytes());
        for (name, _) in &self.channels {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        out.push(self.index.is_some() as u8);
        for (_, data) in &self.channels {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(index) = &self.index {
            for v in index {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&(self.shadows.len() as u32).to_le_bytes());
            for s in &self.shadows {
                out.extend_from_slice(&s.point.to_le_bytes());
                out.extend_from_slice(&s.pixel.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != MAGIC {
            return Err(r.err("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.err(&format!("unsupported version {version}")));
        }
        let width = r.u32()?;
        let height = r.u32()?;
        let up = r.f64()?;
        let down = r.f64()?;
        let fov = (!up.is_nan() && !down.is_nan()).then_some((up, down));
        let n_channels = r.u32()? as usize;
        let mut names = Vec::with_capacity(n_channels.min(64));
        for _ in 0..n_channels {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| r.err("channel name is not UTF-8"))?;
            names.push(name.to_string());
        }
        let has_index = match r.take(1)?[0] {
            0 => false,
            1 => true,
            _ => return Err(r.err("invalid index flag")),
        };
        let n_px = width as usize * height as usize;
        let mut channels = Vec::with_capacity(names.len());
        for name in names {
            let plane = r.take(n_px * 4)?;
            let data = plane
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            channels.push((name, data));
        }
        let (index, shadows) = if has_index {
            let plane = r.take(n_px * 4)?;
            let index = plane
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let n_shadows = r.u32()? as usize;
            let mut shadows = Vec::with_capacity(n_shadows.min(1 << 20));
            for _ in 0..n_shadows {
                let point = r.u32()?;
                let pixel = r.u32()?;
                if pixel as usize >= n_px {
                    return Err(r.err(&format!("shadow pixel {pixel} outside grid")));
                }
                shadows.push(Shadow { point, pixel });
            }
            (Some(index), shadows)
        } else {
            (None, Vec::new())
        };
        if r.pos != bytes.len() {
            return Err(r.err(&format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            width,
            height,
            fov,
            channels,
            index,
            shadows,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

fn to_f32(image: &Image) -> Vec<f32> {
    image.as_slice().iter().map(|&v| v as f32).collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, message: &str) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            message: format!("{message} (at byte {})", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err(&format!("truncated, wanted {n} more bytes of {}", self.bytes.len()))),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl From<&RangeImageStack> for ImageContainer {
    fn from(stack: &RangeImageStack) -> Self {
        let mut channels = vec![
            ("range".to_string(), to_f32(&stack.range)),
            ("incidence".to_string(), to_f32(&stack.incidence)),
            ("reflectance".to_string(), to_f32(&stack.reflectance)),
            ("intensity".to_string(), to_f32(&stack.intensity)),
            ("mask".to_string(), to_f32(&stack.mask_image())),
        ];
        for (name, img) in &stack.extra {
            channels.push((name.clone(), to_f32(img)));
        }
        Self {
            width: stack.width() as u32,
            height: stack.height() as u32,
            fov: Some((stack.config.fov_up, stack.config.fov_down)),
            channels,
            index: Some(stack.index_map.iter().map(|i| i.unwrap_or(NO_INDEX)).collect()),
            shadows: stack.shadows.clone(),
        }
    }
}

impl TryFrom<&ImageContainer> for RangeImageStack {
    type Error = Error;

    fn try_from(c: &ImageContainer) -> Result<Self> {
        let missing = |what: &str| Error::Contract(format!("container is not a range-image stack: missing {what}"));
        let (fov_up, fov_down) = c.fov.ok_or_else(|| missing("field of view"))?;
        let index = c.index.as_ref().ok_or_else(|| missing("index plane"))?;
        let config = ProjectionConfig {
            width: c.width as usize,
            height: c.height as usize,
            fov_up,
            fov_down,
        };
        let get = |name: &str| c.channel(name).ok_or_else(|| missing(name));
        let mask = c.mask().ok_or_else(|| missing("mask"))?;
        let index_map: Vec<Option<u32>> = index.iter().map(|&i| (i != NO_INDEX).then_some(i)).collect();
        if mask.iter().zip(&index_map).any(|(m, i)| *m != i.is_some()) {
            return Err(Error::Contract("mask and index plane disagree".into()));
        }
        let extra: BTreeMap<String, Image> = c
            .channels
            .iter()
            .filter(|(n, _)| !STACK_CHANNELS.contains(&n.as_str()))
            .map(|(n, d)| (n.clone(), c.to_image(d)))
            .collect();
        Ok(RangeImageStack {
            config,
            range: get("range")?,
            incidence: get("incidence")?,
            reflectance: get("reflectance")?,
            intensity: get("intensity")?,
            mask,
            index_map,
            shadows: c.shadows.clone(),
            extra,
        })
    }
}

pub fn write_stack(stack: &RangeImageStack, path: impl AsRef<Path>) -> Result<()> {
    ImageContainer::from(stack).write(path)
}

pub fn read_stack(path: impl AsRef<Path>) -> Result<RangeImageStack> {
    RangeImageStack::try_from(&ImageContainer::read(path)?)
}

/// Linear min/max scaling of one channel to an 8-bit grayscale PNG. Returns
/// the `(min, max)` used for the scaling.
pub fn export_png(image: &Image, path: impl AsRef<Path>) -> Result<(f64, f64)> {
    let (min, max) = image
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (min, max) = if min.is_finite() { (min, max) } else { (0.0, 0.0) };
    let span = if max > min { max - min } else { 1.0 };
    let pixels: Vec<u8> = image
        .as_slice()
        .iter()
        .map(|&v| (((v - min) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let img = image::GrayImage::from_raw(image.width() as u32, image.height() as u32, pixels)
        .expect("buffer sized from image shape");
    img.save(path.as_ref())?;
    Ok((min, max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{Point, PointCloud};
    use crate::modalities::Modalities;
    use crate::projection::project;

    fn sample_stack() -> RangeImageStack {
        let pc = PointCloud::new(vec![
            Point::new(5.0, 0.0, 0.0, 0.25),
            Point::new(3.0, 0.0, 0.0, 0.75),
            Point::new(0.0, 4.0, -1.0, 0.5),
        ]);
        let m = Modalities::from_parts(pc.points.iter().map(|p| p.range()).collect(), vec![0.5; 3], vec![0.25; 3]);
        let cfg = ProjectionConfig {
            width: 32,
            height: 8,
            ..Default::default()
        };
        project(&pc, &m, &cfg).unwrap()
    }

    #[test]
    fn stack_survives_container() {
        let mut stack = sample_stack();
        stack.extra.insert(PHYSICS_CHANNEL.into(), stack.range.map(|r| r / 10.0));
        let bytes = ImageContainer::from(&stack).encode();
        let back = RangeImageStack::try_from(&ImageContainer::decode(&bytes, Path::new("s")).unwrap()).unwrap();
        assert_eq!(back.index_map, stack.index_map);
        assert_eq!(back.shadows, stack.shadows);
        assert_eq!(back.mask, stack.mask);
        assert_eq!(back.intensity, stack.intensity);
        assert_eq!(ImageContainer::from(&back).encode(), bytes);
    }

    #[test]
    fn index_plane_uses_sentinel() {
        let stack = sample_stack();
        let c = ImageContainer::from(&stack);
        let index = c.index.unwrap();
        assert_eq!(index.iter().filter(|&&i| i != NO_INDEX).count(), stack.n_valid());
    }

    #[test]
    fn single_channel_round_trip() {
        let img = Image::from_fn(3, 5, |r, c| (r * 5 + c) as f64 / 16.0);
        let c = ImageContainer::single("generated", &img);
        let back = ImageContainer::decode(&c.encode(), Path::new("g")).unwrap();
        assert_eq!(back.intensity().unwrap(), img);
        assert!(back.mask().is_none());
        assert!(RangeImageStack::try_from(&back).is_err());
    }

    #[test]
    fn truncated_and_corrupt_inputs_fail() {
        let bytes = ImageContainer::from(&sample_stack()).encode();
        assert!(ImageContainer::decode(&bytes[..bytes.len() - 1], Path::new("t")).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ImageContainer::decode(&bad, Path::new("t")).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(ImageContainer::decode(&long, Path::new("t")).is_err());
    }

    #[test]
    fn png_export_scales_linearly() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(2, 2, |r, c| (r * 2 + c) as f64);
        let (lo, hi) = export_png(&img, dir.path().join("x.png")).unwrap();
        assert_eq!((lo, hi), (0.0, 3.0));
        let png = image::open(dir.path().join("x.png")).unwrap().to_luma8();
        assert_eq!(png.get_pixel(0, 0).0[0], 0);
        assert_eq!(png.get_pixel(1, 1).0[0], 255);
    }
}
