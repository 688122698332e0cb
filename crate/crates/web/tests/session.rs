use aerotrack::sim::PointLabel;
use aerotrack_web::Session;

#[test]
fn frame_fit_track() {
    let mut s = Session::new(2024).unwrap();
    assert_eq!(s.frame_count(), 1000);

    let raw = s.frame(10);
    assert!(raw.points.iter().all(|p| p.kept));
    assert!(raw.points.iter().any(|p| p.label == PointLabel::Uav));

    let fit = s.fit(80.0, 300).unwrap();
    assert_eq!(fit.calibration_frames, 300);
    assert!(fit.modeled_cubes > 0 && fit.modeled_cubes <= fit.cubes);
    let filtered = s.frame(10);
    assert_eq!(filtered.points.len(), raw.points.len());
    let clutter = raw.points.iter().filter(|p| p.label != PointLabel::Uav).count();
    assert!(filtered.removed_clutter as f64 > 0.3 * clutter as f64);
    assert!(filtered.removed_uav <= 1);

    let t = s.track(200).unwrap();
    assert_eq!(t.frames, 200);
    assert!(!t.truth.is_empty() && t.truth.len() <= 8);
    assert!(t.f1 > 0.5, "F1 {}", t.f1);
    assert!(t.tracks.iter().all(|tr| !tr.points.is_empty()));
}

#[test]
fn out_of_range_frame_is_clamped() {
    let s = Session::new(1).unwrap();
    assert_eq!(s.frame(5000).index, 999);
}
