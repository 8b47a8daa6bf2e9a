mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::distr::Open01;
use rand::Rng;
use wxlidar::augment::{beam_stream, sample_scatterers, ScattererModel};
use wxlidar::metrics::{kl_divergence, ssim, wasserstein_1d, IntensityHistogram};
use wxlidar::modalities::estimate_normals;
use wxlidar::physics::{attenuate, attenuate_path, AlphaSegment};
use wxlidar::precipitation::{DropSizeDistribution, MarshallPalmerRain, PrecipitationModel};
use wxlidar::projection::{back_project, project};
use wxlidar::{Image, ProjectionConfig};

use common::*;

#[test]
fn piecewise_attenuation_matches_quadrature() {
    let mut r = rng(11);
    for _ in 0..5 {
        let mut edges = vec![0.0];
        for _ in 0..10 {
            edges.push(edges.last().unwrap() + r.random_range(0.5..15.0));
        }
        let alphas: Vec<f64> = (0..10).map(|_| r.random_range(0.0..40.0)).collect();
        let profile: Vec<AlphaSegment> =
            (0..10).map(|j| AlphaSegment::new(edges[j], edges[j + 1], alphas[j])).collect();
        let depth = optical_depth_trapezoid(&edges, &alphas, 1000.0, 100_000);
        let expected = 0.8 * (-2.0 * depth).exp();
        let got = attenuate_path(0.8, &profile, 1000.0).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-9);
    }
}

#[test]
fn uniform_profile_reduces_to_closed_form() {
    let split = [
        AlphaSegment::new(0.0, 12.5, 7.0),
        AlphaSegment::new(12.5, 40.0, 7.0),
    ];
    assert_relative_eq!(
        attenuate_path(0.6, &split, 1000.0).unwrap(),
        attenuate(0.6, 7.0, 40.0, 1000.0),
        max_relative = 1e-14
    );
}

#[test]
fn sphere_normals_are_radial() {
    for (center, radius) in [([0.0, 0.0, 0.0], 10.0), ([1.0, 0.5, -0.5], 8.0)] {
        let pc = sphere_cloud(50_000, center, radius);
        let normals = estimate_normals(&pc, 10).unwrap();
        let dev = max_deviation(&normals, |i| radial_facing_sensor(&pc.points[i], center));
        assert!(dev < 1e-2, "sphere at {center:?}: deviation {dev}");
    }
}

#[test]
fn ceiling_plane_normals_point_down() {
    let pc = plane_cloud(60, 0.5, 5.0, 3);
    let normals = estimate_normals(&pc, 10).unwrap();
    assert!(max_deviation(&normals, |_| [0.0, 0.0, -1.0]) < 1e-3);
}

/// Chi-square statistic over `bins` equiprobable cells of `cdf`.
fn chi_square(samples: &[f64], cdf: impl Fn(f64) -> f64, bins: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    for &s in samples {
        counts[((cdf(s) * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = samples.len() as f64 / bins as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

// 99.9th percentile of chi-square with 19 degrees of freedom.
const CHI2_19_999: f64 = 43.82;

#[test]
fn inverse_cdf_diameters_follow_the_distribution() {
    let dsd = MarshallPalmerRain.size_distribution(30.0);
    let mut r = rng(5);
    let draws: Vec<f64> = (0..1_000_000)
        .map(|_| dsd.diameter_from_uniform(r.sample::<f64, _>(Open01)))
        .collect();
    let stat = chi_square(&draws, |d| dsd.cdf(d), 20);
    assert!(stat < CHI2_19_999, "chi2 = {stat}");
}

#[test]
fn sampled_scatterers_match_size_and_range_laws() {
    let model = ScattererModel::default();
    let r_max = 40.0;
    let (mut diameters, mut ranges) = (Vec::new(), Vec::new());
    let mut beam = 0;
    while diameters.len() < 1_000_000 {
        let mut rng = beam_stream(99, beam);
        for s in sample_scatterers(r_max, &model, &mut rng) {
            diameters.push(s.diameter);
            ranges.push(s.range);
        }
        beam += 1;
    }
    let dsd: DropSizeDistribution = model.distribution;
    assert!(chi_square(&diameters, |d| dsd.cdf(d), 20) < CHI2_19_999);
    let lo = model.min_range;
    assert!(chi_square(&ranges, |x| (x - lo) / (r_max - lo), 20) < CHI2_19_999);
    let mean_count = diameters.len() as f64 / beam as f64;
    assert_relative_eq!(mean_count, model.expected_count(r_max), max_relative = 0.02);
}

#[test]
fn ssim_matches_direct_window_formula() {
    let mut r = rng(21);
    for _ in 0..20 {
        let a = random_image(16, 16, &mut r);
        let b = random_image(16, 16, &mut r);
        assert!((ssim(&a, &b).unwrap() - ssim_direct(&a, &b)).abs() < 1e-6);
    }
    let a = random_image(24, 40, &mut r);
    let b = a.map(|v| 0.7 * v + 0.1);
    assert!((ssim(&a, &b).unwrap() - ssim_direct(&a, &b)).abs() < 1e-6);
}

#[test]
fn wasserstein_matches_sorted_differences() {
    let mut r = rng(31);
    for _ in 0..200 {
        let n = r.random_range(1..=1000);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| r.random::<f64>().powi(2)).collect();
        assert!((wasserstein_1d(&a, &b).unwrap() - wasserstein_sorted(&a, &b)).abs() < 1e-12);
    }
}

#[test]
fn back_projection_matches_reprojection_oracle() {
    let cfg = ProjectionConfig::default();
    let pc = random_cloud(10_000, 8);
    let mods = random_modalities(&pc, 9);
    let stack = project(&pc, &mods, &cfg).unwrap();
    let generated = random_image(cfg.height, cfg.width, &mut rng(10));
    let out = back_project(&stack, &generated, &pc).unwrap();
    assert_eq!(out.len(), pc.len());
    for (p, q) in pc.points.iter().zip(&out.points) {
        let (row, col) = pixel_oracle(p, &cfg);
        assert_eq!(q.intensity, generated.get(row, col));
        assert_eq!((q.x, q.y, q.z, q.label), (p.x, p.y, p.z, p.label));
    }
    // The winner of every pixel is the nearest point that maps to it.
    let mut nearest = vec![f64::INFINITY; cfg.n_pixels()];
    for p in &pc.points {
        let (row, col) = pixel_oracle(p, &cfg);
        let k = row * cfg.width + col;
        nearest[k] = nearest[k].min(p.range());
    }
    for (k, slot) in stack.index_map.iter().enumerate() {
        match slot {
            Some(i) => assert_eq!(pc.points[*i as usize].range(), nearest[k]),
            None => assert!(nearest[k].is_infinite()),
        }
    }
}

#[test]
fn back_projection_clamps_out_of_range_values() {
    let cfg = ProjectionConfig::default();
    let pc = random_cloud(200, 1);
    let stack = project(&pc, &random_modalities(&pc, 2), &cfg).unwrap();
    let wild = Image::from_fn(cfg.height, cfg.width, |r, c| if (r + c) % 2 == 0 { -3.0 } else { 4.0 });
    let out = back_project(&stack, &wild, &pc).unwrap();
    assert!(out.points.iter().all(|p| p.intensity == 0.0 || p.intensity == 1.0));
}

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1..60)
}

proptest! {
    #[test]
    fn wasserstein_is_a_metric(a in samples(), b in samples(), c in samples()) {
        let ab = wasserstein_1d(&a, &b).unwrap();
        let ba = wasserstein_1d(&b, &a).unwrap();
        let bc = wasserstein_1d(&b, &c).unwrap();
        let ac = wasserstein_1d(&a, &c).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!(wasserstein_1d(&a, &a).unwrap() <= 1e-12);
    }

    #[test]
    fn wasserstein_shift_equals_offset(a in samples(), shift in -2.0f64..2.0) {
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        prop_assert!((wasserstein_1d(&a, &b).unwrap() - shift.abs()).abs() < 1e-9);
    }

    #[test]
    fn kl_is_non_negative_and_zero_on_self(
        p in prop::collection::vec(0.0f64..1.0, 1..300),
        q in prop::collection::vec(0.0f64..1.0, 1..300),
    ) {
        let hp = IntensityHistogram::from_samples(&p, 32, 1e-10).unwrap();
        let hq = IntensityHistogram::from_samples(&q, 32, 1e-10).unwrap();
        prop_assert!(kl_divergence(&hp, &hq).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&hp, &hp).unwrap() <= 1e-12);
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(seed in 0u64..1000) {
        let mut r = rng(seed);
        let a = random_image(16, 20, &mut r);
        let b = random_image(16, 20, &mut r);
        let ab = ssim(&a, &b).unwrap();
        prop_assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }
}
