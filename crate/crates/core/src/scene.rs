//! Procedural street scenes scanned by a simulated spinning LiDAR.
//!
//! The scene holds a ground plane, parked cars, buildings, poles and a
//! surrounding vegetation wall, so every beam returns. Beams are laid out one
//! per ring × azimuth step with sub-step jitter, and each return carries the
//! clear-weather Lambertian intensity (max-normalized per frame) computed from
//! the analytic surface normal.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{MaterialTable, Point, PointCloud};
use crate::physics::{normalize_by_max, physics_intensity};

pub const LABEL_CAR: u32 = 10;
pub const LABEL_ROAD: u32 = 40;
pub const LABEL_SIDEWALK: u32 = 48;
pub const LABEL_BUILDING: u32 = 50;
pub const LABEL_VEGETATION: u32 = 70;
pub const LABEL_TERRAIN: u32 = 72;
pub const LABEL_POLE: u32 = 80;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub rings: usize,
    pub azimuth_steps: usize,
    /// Degrees.
    pub fov_up: f64,
    pub fov_down: f64,
    pub sensor_height: f64,
    pub n_cars: usize,
    pub n_buildings: usize,
    pub n_poles: usize,
    /// Radius of the enclosing vegetation wall, meters.
    pub wall_radius: f64,
    /// Beam jitter as a fraction of the angular step, in [0, 0.5).
    pub jitter: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            rings: 64,
            azimuth_steps: 157,
            fov_up: 3.0,
            fov_down: -25.0,
            sensor_height: 1.73,
            n_cars: 8,
            n_buildings: 4,
            n_poles: 10,
            wall_radius: 60.0,
            jitter: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    t: f64,
    normal: [f64; 3],
    label: u32,
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Ground { z: f64 },
    Aabb { min: [f64; 3], max: [f64; 3], label: u32 },
    Pole { cx: f64, cy: f64, radius: f64, z0: f64, z1: f64 },
    Wall { radius: f64 },
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Shape {
    fn intersect(&self, d: [f64; 3]) -> Option<Hit> {
        match *self {
            Shape::Ground { z } => {
                if d[2] >= 0.0 {
                    return None;
                }
                let t = z / d[2];
                let (x, y) = (t * d[0], t * d[1]);
                let label = match y.abs() {
                    a if a < 6.0 => LABEL_ROAD,
                    a if a < 9.0 => LABEL_SIDEWALK,
                    _ => LABEL_TERRAIN,
                };
                let _ = x;
                Some(Hit {
                    t,
                    normal: [0.0, 0.0, 1.0],
                    label,
                })
            }
            Shape::Aabb { min, max, label } => {
                let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
                let mut axis = 0;
                let mut sign = 0.0;
                for a in 0..3 {
                    if d[a].abs() < 1e-15 {
                        if 0.0 < min[a] || 0.0 > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let (mut near, mut far) = (min[a] / d[a], max[a] / d[a]);
                    let mut s = -1.0;
                    if near > far {
                        std::mem::swap(&mut near, &mut far);
                        s = 1.0;
                    }
                    if near > t0 {
                        t0 = near;
                        axis = a;
                        sign = s;
                    }
                    t1 = t1.min(far);
                    if t0 > t1 {
                        return None;
                    }
                }
                if t0 <= 0.0 {
                    return None;
                }
                let mut normal = [0.0; 3];
                normal[axis] = sign;
                Some(Hit { t: t0, normal, label })
            }
            Shape::Pole { cx, cy, radius, z0, z1 } => {
                let a = d[0] * d[0] + d[1] * d[1];
                if a < 1e-15 {
                    return None;
                }
                let b = -2.0 * (d[0] * cx + d[1] * cy);
                let c = cx * cx + cy * cy - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let t = (-b - disc.sqrt()) / (2.0 * a);
                let z = t * d[2];
                if t <= 0.0 || z < z0 || z > z1 {
                    return None;
                }
                let (nx, ny) = ((t * d[0] - cx) / radius, (t * d[1] - cy) / radius);
                Some(Hit {
                    t,
                    normal: [nx, ny, 0.0],
                    label: LABEL_POLE,
                })
            }
            Shape::Wall { radius } => {
                let a = (d[0] * d[0] + d[1] * d[1]).sqrt();
                if a < 1e-15 {
                    return None;
                }
                let t = radius / a;
                Some(Hit {
                    t,
                    normal: [-d[0] / a, -d[1] / a, 0.0],
                    label: LABEL_VEGETATION,
                })
            }
        }
    }
}

fn build_shapes(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Vec<Shape> {
    let ground = -cfg.sensor_height;
    let mut shapes = vec![Shape::Ground { z: ground }, Shape::Wall { radius: cfg.wall_radius }];
    let reach = cfg.wall_radius * 0.8;
    for _ in 0..cfg.n_cars {
        let x = rng.random_range(4.0..reach) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let y = rng.random_range(-5.0..5.0);
        let (hl, hw) = if rng.random_bool(0.5) { (2.25, 0.9) } else { (0.9, 2.25) };
        shapes.push(Shape::Aabb {
            min: [x - hl, y - hw, ground],
            max: [x + hl, y + hw, ground + 1.5],
            label: LABEL_CAR,
        });
    }
    for _ in 0..cfg.n_buildings {
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let x = rng.random_range(-reach..reach);
        let y = side * rng.random_range(12.0..20.0);
        let len = rng.random_range(8.0..20.0);
        shapes.push(Shape::Aabb {
            min: [x - len / 2.0, y - 4.0, ground],
            max: [x + len / 2.0, y + 4.0, ground + rng.random_range(6.0..15.0)],
            label: LABEL_BUILDING,
        });
    }
    for _ in 0..cfg.n_poles {
        let ang = rng.random_range(-PI..PI);
        let r = rng.random_range(5.0..reach);
        shapes.push(Shape::Pole {
            cx: r * ang.cos(),
            cy: r * ang.sin(),
            radius: 0.15,
            z0: ground,
            z1: ground + 6.0,
        });
    }
    shapes
}

/// Scans a random scene. Every beam hits a surface, so the cloud has exactly
/// `rings × azimuth_steps` points.
pub fn generate_scene(cfg: &SceneConfig, table: &MaterialTable, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = build_shapes(cfg, &mut rng);
    let up = cfg.fov_up.to_radians();
    let down = cfg.fov_down.to_radians();
    let ring_step = (up - down) / cfg.rings as f64;
    let az_step = 2.0 * PI / cfg.azimuth_steps as f64;

    let mut points = Vec::with_capacity(cfg.rings * cfg.azimuth_steps);
    let mut raw = Vec::with_capacity(points.capacity());
    for ring in 0..cfg.rings {
        for step in 0..cfg.azimuth_steps {
            let elevation = up - (ring as f64 + 0.5 + rng.random_range(-cfg.jitter..=cfg.jitter)) * ring_step;
            let azimuth = PI - (step as f64 + 0.5 + rng.random_range(-cfg.jitter..=cfg.jitter)) * az_step;
            let d = [
                elevation.cos() * azimuth.cos(),
                elevation.cos() * azimuth.sin(),
                elevation.sin(),
            ];
            let hit = shapes
                .iter()
                .filter_map(|s| s.intersect(d))
                .min_by(|a, b| a.t.total_cmp(&b.t))
                .expect("the enclosing wall catches every beam");
            let p = Point::new(hit.t * d[0], hit.t * d[1], hit.t * d[2], 0.0).with_label(hit.label);
            let cos = (-dot(d, hit.normal)).clamp(0.0, 1.0);
            raw.push(physics_intensity(table.reflectance(hit.label), cos.acos(), hit.t).unwrap_or(0.0));
            points.push(p);
        }
    }
    let (norm, _) = normalize_by_max(&raw);
    for (p, v) in points.iter_mut().zip(norm) {
        p.intensity = v;
    }
    PointCloud {
        points,
        frame_id: format!("scene_{seed:06}"),
    }
}
