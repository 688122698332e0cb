use std::collections::HashSet;

use aerotrack::io::{parse_jsonl, to_jsonl_string};
use aerotrack::sim::{build_scene, GroundTruthFrame, PointLabel, SceneSpec, SignalDist};
use aerotrack::Frame;

fn short(frames: u64) -> SceneSpec {
    let mut s = SceneSpec::benchmark_a();
    s.frames = frames;
    s
}

#[test]
fn frames_are_pure_functions_of_seed_and_index() {
    let a = build_scene(&short(300)).unwrap();
    let b = build_scene(&short(300)).unwrap();
    assert_eq!(a.digest(), b.digest());
    for k in [0, 17, 299] {
        assert_eq!(a.generate_frame(k), b.generate_frame(k));
    }
    let forward: Vec<_> = (100..110).map(|k| a.generate_frame(k)).collect();
    let backward: Vec<_> = (100..110).rev().map(|k| a.generate_frame(k)).collect();
    assert!(forward.iter().eq(backward.iter().rev()));

    let mut other = short(300);
    other.seed += 1;
    let c = build_scene(&other).unwrap();
    assert_ne!(c.digest(), a.digest());
    assert_ne!(c.generate_frame(5).0, a.generate_frame(5).0);
}

#[test]
fn benchmark_statistics() {
    let scene = build_scene(&SceneSpec::benchmark_a()).unwrap();
    assert_eq!(scene.frame_count(), 1000);
    assert_eq!(scene.flights.len(), 8);
    let shapes: HashSet<&str> = scene.spec.paths.iter().map(|p| p.shape.as_str()).collect();
    assert_eq!(shapes.len(), 8);
    assert_eq!(scene.ghosts.len(), 30);
    let mixtures = scene.clutter.iter().filter(|c| matches!(c.signal, SignalDist::Mixture { .. })).count();
    let frac = mixtures as f64 / scene.clutter.len() as f64;
    assert!((frac - 0.25).abs() < 0.02, "non-Gaussian cube fraction {frac}");

    let (mut uav, mut noise) = (0usize, 0usize);
    for (f, gt) in scene.frames() {
        assert_eq!(f.points.len(), gt.labels.len());
        assert_eq!(f.index, gt.frame_index);
        for l in &gt.labels {
            match l {
                PointLabel::Uav => uav += 1,
                _ => noise += 1,
            }
        }
        let detected = gt.uavs.iter().filter(|u| u.detected).count();
        assert_eq!(detected, gt.labels.iter().filter(|l| **l == PointLabel::Uav).count());
    }
    let ratio = noise as f64 / uav as f64;
    assert!((ratio - 174.0).abs() / 174.0 < 0.1, "noise ratio {ratio:.1}");
}

#[test]
fn target_free_scene_has_no_uavs() {
    let spec = SceneSpec::benchmark_a().target_free(9);
    let scene = build_scene(&spec).unwrap();
    for k in (0..spec.frames).step_by(97) {
        let (_, gt) = scene.generate_frame(k);
        assert!(gt.uavs.is_empty());
        assert!(!gt.labels.contains(&PointLabel::Uav));
    }
    // Same site: clutter cubes are unchanged.
    let base = build_scene(&SceneSpec::benchmark_a()).unwrap();
    assert_eq!(base.clutter, scene.clutter);
}

#[test]
fn streams_round_trip_through_jsonl() {
    let scene = build_scene(&short(20)).unwrap();
    let (frames, truth): (Vec<Frame>, Vec<GroundTruthFrame>) = scene.frames().unzip();
    let back: Vec<Frame> = parse_jsonl(&to_jsonl_string(&frames)).unwrap();
    assert_eq!(back, frames);
    let back: Vec<GroundTruthFrame> = parse_jsonl(&to_jsonl_string(&truth)).unwrap();
    assert_eq!(back, truth);
}

#[test]
fn spec_round_trips_through_toml() {
    let spec = SceneSpec::benchmark_a();
    let text = toml::to_string(&spec).unwrap();
    let back: SceneSpec = toml::from_str(&text).unwrap();
    assert_eq!(back, spec);
}

#[test]
fn invalid_specs_rejected() {
    let mut s = SceneSpec::benchmark_a();
    s.frame_interval_s = 0.0;
    assert!(build_scene(&s).is_err());
    let mut s = SceneSpec::benchmark_a();
    s.paths[0].shape = "spiral".into();
    assert!(build_scene(&s).is_err());
}
