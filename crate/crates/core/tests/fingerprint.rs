mod common;

use aerotrack::fingerprint::{fit_model, hz_test, mahalanobis, noise_mask, CubeParams, FitOptions, NoiseFingerprintModel};
use aerotrack::{CubeId, Frame, RawPoint};
use common::*;

#[test]
fn mahalanobis_matches_gauss_jordan_quadratic_form() {
    let worst = mahalanobis_worst(0x5A4A, 1000);
    assert!(worst < 1e-9, "worst relative error {worst:e}");
}

#[test]
fn unmodeled_cube_has_no_distance() {
    let params = CubeParams::new(CubeId([0, 0, 0]), [0.0; 5], [1.0; 5], [0.0; 5], diag(1.0), 10, false, None, 1e-6).unwrap();
    assert_eq!(mahalanobis(&RawPoint::from_array([0.0; 9]), &params), None);
}

#[test]
fn non_symmetric_covariance_rejected() {
    let mut s = diag(1.0);
    s[0][1] = 0.3;
    assert!(CubeParams::new(CubeId([0, 0, 0]), [0.0; 5], [1.0; 5], [0.0; 5], s, 10, true, None, 1e-6).is_err());
}

fn diag(v: f64) -> [[f64; 5]; 5] {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { v } else { 0.0 }))
}

#[test]
fn threshold_is_the_requested_percentile() {
    let mut r = rng(0x9E7C);
    let cubes = gaussian_cubes(&mut r, 30);
    let train = clutter_frames(&mut r, &cubes, 40, 0, 5);
    let model = fit_model(&train, clutter_grid(), FitOptions::with_k(80.0)).unwrap();
    assert!(model.modeled_cubes() >= 25);
    let pooled: Vec<bool> = train.iter().flat_map(|f| modeled_mask(&model, f)).collect();
    let frac = pooled.iter().filter(|m| **m).count() as f64 / pooled.len() as f64;
    assert!((frac - 0.80).abs() < 0.005, "training removal {frac}");
}

#[test]
fn held_out_clutter_removed_at_k_and_offset_points_kept() {
    let (removal, kept) = held_out_percentile(0x80);
    assert!((removal - 0.80).abs() <= 0.03, "held-out removal {removal}");
    assert!(kept >= 0.98, "offset points kept {kept}");
}

#[test]
fn k_controls_removal_monotonically() {
    let mut r = rng(3);
    let cubes = gaussian_cubes(&mut r, 20);
    let train = clutter_frames(&mut r, &cubes, 100, 0, 5);
    let test = clutter_frames(&mut r, &cubes, 30, 100, 5);
    let removal = |k: f64| {
        let m = fit_model(&train, clutter_grid(), FitOptions::with_k(k)).unwrap();
        removal_in_modeled(&m, &test)
    };
    let fracs: Vec<f64> = [50.0, 70.0, 80.0, 90.0].into_iter().map(removal).collect();
    assert!(fracs.windows(2).all(|w| w[0] < w[1]), "{fracs:?}");
    for (f, k) in fracs.iter().zip([0.5, 0.7, 0.8, 0.9]) {
        assert!((f - k).abs() < 0.04, "k {k}: {f}");
    }
}

#[test]
fn points_outside_modeled_cubes_are_kept() {
    let mut r = rng(11);
    let cubes = gaussian_cubes(&mut r, 5);
    let train = clutter_frames(&mut r, &cubes, 30, 0, 5);
    let model = fit_model(&train, clutter_grid(), FitOptions::default()).unwrap();
    // Same signal as a clutter cube, but in an empty cube and outside the volume.
    let mut a = clutter_point(&mut r, &cubes[0], 0.0);
    a.x = 380.0;
    a.y = 180.0;
    let mut b = a;
    b.x = 5000.0;
    assert_eq!(noise_mask(&model, &Frame::new(0, vec![a, b])), vec![false, false]);
}

#[test]
fn hz_calibrated_and_powerful() {
    let (acc, rej) = hz_rates(0x42, 200, 400);
    assert!((acc - 0.95).abs() <= 0.04, "acceptance {acc}");
    assert!(rej >= 0.99, "uniform rejection {rej}");
}

#[test]
fn hz_untestable_below_dimension_plus_two() {
    let s = vec![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
    assert!(hz_test(&s, 0.05).p_value().is_none());
    assert!(!hz_test(&s, 0.05).is_gaussian());
}

#[test]
fn model_json_round_trip() {
    let mut r = rng(21);
    let cubes = gaussian_cubes(&mut r, 4);
    let model = fit_model(&clutter_frames(&mut r, &cubes, 20, 0, 5), clutter_grid(), FitOptions::default()).unwrap();
    let text = serde_json::to_string(&model).unwrap();
    let back: NoiseFingerprintModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, model);
}
