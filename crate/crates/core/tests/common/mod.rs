//! Fixtures and independent reference implementations shared by the
//! integration and acceptance targets.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wxlidar::modalities::Modalities;
use wxlidar::{Image, Point, PointCloud, ProjectionConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in a spherical shell, elevations inside the default field of view.
pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut r = rng(seed);
    let cfg = ProjectionConfig::default();
    let (lo, hi) = (cfg.fov_down.to_radians(), cfg.fov_up.to_radians());
    let points = (0..n)
        .map(|_| {
            let range = r.random_range(1.0..80.0);
            let az = r.random_range(-PI..PI);
            let el = r.random_range(lo..hi);
            Point::new(
                range * el.cos() * az.cos(),
                range * el.cos() * az.sin(),
                range * el.sin(),
                r.random_range(0.0..1.0),
            )
            .with_label(r.random_range(0..100))
        })
        .collect();
    PointCloud::new(points)
}

pub fn random_modalities(pc: &PointCloud, seed: u64) -> Modalities {
    let mut r = rng(seed);
    let range = pc.points.iter().map(|p| p.range()).collect();
    let incidence = (0..pc.len()).map(|_| r.random_range(0.0..PI / 2.0)).collect();
    let reflectance = (0..pc.len()).map(|_| r.random_range(0.0..1.0)).collect();
    Modalities::from_parts(range, incidence, reflectance)
}

pub fn random_image(h: usize, w: usize, r: &mut impl Rng) -> Image {
    Image::from_fn(h, w, |_, _| r.random_range(0.0..1.0))
}

/// Pixel of a point, computed from elevation via atan2 rather than asin.
pub fn pixel_oracle(p: &Point, cfg: &ProjectionConfig) -> (usize, usize) {
    let az = p.y.atan2(p.x);
    let el = p.z.atan2(p.x.hypot(p.y));
    let (up, down) = (cfg.fov_up * PI / 180.0, cfg.fov_down * PI / 180.0);
    let u = cfg.width as f64 * (1.0 - az / PI) / 2.0;
    let v = cfg.height as f64 * (up - el) / (up - down);
    let col = (u.floor().max(0.0) as usize).min(cfg.width - 1);
    let row = (v.floor().max(0.0) as usize).min(cfg.height - 1);
    (row, col)
}

/// Mean SSIM evaluated window by window with explicit weighted moments.
pub fn ssim_direct(a: &Image, b: &Image) -> f64 {
    let (win, sigma) = (11usize, 1.5f64);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let half = (win as f64 - 1.0) / 2.0;
    let mut weights = vec![0.0; win * win];
    for i in 0..win {
        for j in 0..win {
            let (di, dj) = (i as f64 - half, j as f64 - half);
            weights[i * win + j] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let (h, w) = a.shape();
    let mut acc = 0.0;
    let mut count = 0;
    for r0 in 0..=h - win {
        for c0 in 0..=w - win {
            let cell = |k: usize| (r0 + k / win, c0 + k % win);
            let (mut mx, mut my) = (0.0, 0.0);
            for (k, wk) in weights.iter().enumerate() {
                let (r, c) = cell(k);
                mx += wk * a.get(r, c);
                my += wk * b.get(r, c);
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for (k, wk) in weights.iter().enumerate() {
                let (r, c) = cell(k);
                let (dx, dy) = (a.get(r, c) - mx, b.get(r, c) - my);
                vx += wk * dx * dx;
                vy += wk * dy * dy;
                cov += wk * dx * dy;
            }
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}

/// W1 for equal-size samples: mean absolute difference of order statistics.
pub fn wasserstein_sorted(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64
}

/// Optical depth of a piecewise-constant profile by trapezoid quadrature,
/// `steps` sub-intervals per segment.
pub fn optical_depth_trapezoid(edges: &[f64], alphas: &[f64], scale: f64, steps: usize) -> f64 {
    let mut depth = 0.0;
    for (j, &alpha) in alphas.iter().enumerate() {
        let (a, b) = (edges[j], edges[j + 1]);
        let h = (b - a) / steps as f64;
        let f = |_r: f64| alpha;
        let mut s = 0.5 * (f(a) + f(b));
        for k in 1..steps {
            s += f(a + k as f64 * h);
        }
        depth += s * h;
    }
    depth / scale
}

/// Fibonacci lattice on a sphere.
pub fn sphere_cloud(n: usize, center: [f64; 3], radius: f64) -> PointCloud {
    let golden = PI * (3.0 - 5f64.sqrt());
    let points = (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            Point::new(
                center[0] + radius * r * t.cos(),
                center[1] + radius * y,
                center[2] + radius * r * t.sin(),
                0.5,
            )
        })
        .collect();
    PointCloud::new(points)
}

/// Jittered grid on the plane `z = height`.
pub fn plane_cloud(side: usize, spacing: f64, height: f64, seed: u64) -> PointCloud {
    let mut r = rng(seed);
    let offset = side as f64 * spacing / 2.0;
    let points = (0..side * side)
        .map(|k| {
            let (i, j) = ((k / side) as f64, (k % side) as f64);
            let jx = r.random_range(-0.2..0.2) * spacing;
            let jy = r.random_range(-0.2..0.2) * spacing;
            Point::new(i * spacing - offset + jx, j * spacing - offset + jy, height, 0.5)
        })
        .collect();
    PointCloud::new(points)
}

pub fn max_deviation(normals: &[[f64; 3]], expected: impl Fn(usize) -> [f64; 3]) -> f64 {
    normals
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let e = expected(i);
            ((n[0] - e[0]).powi(2) + (n[1] - e[1]).powi(2) + (n[2] - e[2]).powi(2)).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Outward radial unit vector, flipped to face a sensor at the origin.
pub fn radial_facing_sensor(p: &Point, center: [f64; 3]) -> [f64; 3] {
    let d = [p.x - center[0], p.y - center[1], p.z - center[2]];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let u = [d[0] / n, d[1] / n, d[2] / n];
    if u[0] * p.x + u[1] * p.y + u[2] * p.z > 0.0 {
        [-u[0], -u[1], -u[2]]
    } else {
        u
    }
}
