use std::f64::consts::PI;

use ndarray::{Array2, Array3, Axis};
use proptest::prelude::*;
use xpct::metrics::{line_profile, mtf_from_disk, otsu_threshold, segmented_area, Curve, ProfileLine, Roi, OTSU_BINS};
use xpct::pipeline::default_report_config;
use xpct::simulate::{analytic_projections, build_phantom, paper_geometry, PhantomSpec, SIC_DELTA};
use xpct::tomo::{reconstruct_delta, Sinogram};

const N: usize = 48;
const CENTER: (f64, f64) = (23.7, 24.2);
const RADIUS_PX: f64 = 12.0;

/// Disk of unit value sampled at pixel centres, optionally blurred by a
/// Gaussian of `sigma` pixels (edge modelled by the normal CDF).
fn disk(sigma: f64) -> Array2<f64> {
    Array2::from_shape_fn((N, N), |(i, j)| {
        let d = ((i as f64 - CENTER.0).powi(2) + (j as f64 - CENTER.1).powi(2)).sqrt();
        if sigma == 0.0 {
            f64::from(u8::from(d < RADIUS_PX))
        } else {
            0.5 * erfc((d - RADIUS_PX) / (sigma * std::f64::consts::SQRT_2))
        }
    })
}

/// Complementary error function (Numerical Recipes erfcc, |error| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806 + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

fn mtf(image: &Array2<f64>) -> Curve {
    mtf_from_disk(image.view(), CENTER, RADIUS_PX * 1e-6, 1e-6).unwrap()
}

/// Samples up to half the Nyquist frequency (cycles per pixel <= 0.25).
fn low_band(curve: &Curve) -> impl Iterator<Item = (f64, f64)> + '_ {
    curve
        .coordinate
        .iter()
        .map(|f| f * 1e-6)
        .zip(curve.value.iter().copied())
        .filter(|(f, _)| *f <= 0.25 + 1e-12)
}

#[test]
fn sharp_disk_has_flat_mtf() {
    let curve = mtf(&disk(0.0));
    assert_eq!(curve.value[0], 1.0);
    let last = curve.coordinate.last().unwrap() * 1e-6;
    assert!((last - 0.5).abs() < 1e-12, "curve ends at {last} cycles/px");
    for (f, m) in low_band(&curve) {
        assert!(m >= 0.95, "MTF({f}) = {m}");
    }
}

#[test]
fn gaussian_blur_matches_analytic_mtf() {
    let sigma = 1.0;
    let curve = mtf(&disk(sigma));
    for (f, m) in low_band(&curve) {
        let expected = (-2.0 * PI * PI * sigma * sigma * f * f).exp();
        assert!((m - expected).abs() < 0.05, "MTF({f}) = {m}, expected {expected}");
    }
}

#[test]
fn more_blur_lowers_the_mtf() {
    let (sharp, soft) = (mtf(&disk(0.5)), mtf(&disk(1.5)));
    for ((f, a), b) in sharp.coordinate.iter().zip(&sharp.value).zip(&soft.value) {
        assert!(b <= a, "at {f}: σ=1.5 gives {b} above σ=0.5 {a}");
    }
}

#[test]
fn rendered_disk_area_is_within_a_pixel_ring() {
    let pitch = 0.1e-6;
    let r = 4e-6;
    let n = 100;
    let image = Array2::from_shape_fn((n, n), |(i, j)| {
        let (x, y) = ((j as f64 + 0.5 - 50.0) * pitch, (i as f64 + 0.5 - 50.0) * pitch);
        f64::from(u8::from(x * x + y * y <= r * r))
    });
    let roi = Roi::full(&image.view());
    let threshold = otsu_threshold(image.view(), &roi).unwrap();
    let area = segmented_area(image.view(), &roi, threshold, pitch).unwrap();
    let exact = PI * r * r;
    assert!((area - exact).abs() <= 2.0 * PI * r * pitch, "{area} vs {exact}");
}

#[test]
fn truth_areas_are_close_to_published_values() {
    let spec = PhantomSpec::single_material();
    let geometry = paper_geometry();
    let (delta, _) = build_phantom(&spec).unwrap();
    let truth = delta.downsample(2).unwrap();
    let config = default_report_config(&spec, &geometry).unwrap();
    let pitch = geometry.pixel_pitch;
    for ((circle, sphere), published) in config.circles.iter().zip(&spec.spheres).zip([51.2, 114.4, 80.3]) {
        let image = truth.data.index_axis(Axis(0), circle.slice);
        let threshold = otsu_threshold(image, &circle.roi).unwrap();
        let area = segmented_area(image, &circle.roi, threshold, pitch).unwrap() * 1e12;
        let ring = 2.0 * PI * sphere.radius * pitch * 1e12;
        assert!((area - published).abs() <= ring, "area {area} vs {published} (ring {ring})");
    }
}

#[test]
fn profile_crosses_a_reconstructed_sphere() {
    let spec = PhantomSpec::single_material();
    let geometry = paper_geometry();
    let mut phase = Array3::zeros((geometry.n_views(), geometry.n_u, geometry.n_v));
    for (mut dst, &angle) in phase.axis_iter_mut(Axis(0)).zip(&geometry.angles) {
        dst.assign(&analytic_projections(&spec, angle, &geometry, 3).phase);
    }
    let sino = Sinogram::new(phase, geometry.angles.clone(), geometry.pixel_pitch).unwrap();
    let volume = reconstruct_delta(&sino, geometry.wavelength, false).unwrap();
    let config = default_report_config(&spec, &geometry).unwrap();
    let (slice, line) = config.profile.unwrap();
    let circle = &config.circles[config.mtf_circle.unwrap()];
    let ProfileLine::Row(row) = line else {
        panic!("expected a row profile")
    };
    assert_eq!(row, circle.center.0.round() as usize);

    let image = volume.data.index_axis(Axis(0), slice);
    let profile = line_profile(image, line, 0..geometry.n_v, geometry.pixel_pitch).unwrap();
    let pitch = geometry.pixel_pitch;
    let r_px = circle.radius / pitch;
    let dy = row as f64 - circle.center.0;
    let half_chord = (r_px * r_px - dy * dy).sqrt();
    let mut plateau = 0;
    for (j, v) in profile.value.iter().enumerate() {
        let dx = (j as f64 - circle.center.1).abs();
        if dx < half_chord - 2.0 {
            plateau += 1;
            assert!((v / SIC_DELTA - 1.0).abs() < 0.05, "plateau at {j}: {v}");
        }
    }
    assert!(plateau >= 10);
    // left of the sphere the row crosses nothing else
    let left_edge = (circle.center.1 - half_chord - 3.0) as usize;
    for v in &profile.value[..left_edge] {
        assert!(v.abs() < 0.05 * SIC_DELTA, "background {v}");
    }
}

fn random_image(seed: u64, offset: f64) -> Array2<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((24, 24), || {
        let class = f64::from(u8::from(rng.random_bool(0.4)));
        class * 3.0 + rng.random_range(-1.0..1.0) + offset
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn area_never_grows_with_threshold(seed in any::<u64>(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let image = random_image(seed, 0.0);
        let roi = Roi::full(&image.view());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let area_lo = segmented_area(image.view(), &roi, lo, 1.0).unwrap();
        let area_hi = segmented_area(image.view(), &roi, hi, 1.0).unwrap();
        prop_assert!(area_hi <= area_lo);
    }

    #[test]
    fn threshold_follows_a_shift(seed in any::<u64>(), shift in -100.0f64..100.0) {
        let base = random_image(seed, 0.0);
        let moved = random_image(seed, shift);
        let roi = Roi::full(&base.view());
        let (lo, hi) = base.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        let width = (hi - lo) / OTSU_BINS as f64;
        let t0 = otsu_threshold(base.view(), &roi).unwrap();
        let t1 = otsu_threshold(moved.view(), &roi).unwrap();
        prop_assert!((t1 - t0 - shift).abs() <= width, "{t0} + {shift} vs {t1}");
    }
}
