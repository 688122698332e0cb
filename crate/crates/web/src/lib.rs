//! Browser demo. Three operations on one simulated scene:
//! draw a frame, fit the noise fingerprint and filter, track a span of frames.
//!
//! Everything crosses the JS boundary as JSON strings. The logic lives in
//! [`Session`] so it can be tested natively; [`Demo`] is the thin wrapper.

use aerotrack::classifier::{bundled, classify_track, TrajFormer, VerificationPolicy};
use aerotrack::eval::{trajectory_metrics, PipelineConfig};
use aerotrack::fingerprint::{filter_frame, fit_model, FitOptions, NoiseFingerprintModel};
use aerotrack::object::{cluster, DiscriminationRule, ObjectLayer};
use aerotrack::sim::{build_scene, PointLabel, Scene};
use aerotrack::tracker::{Track, TrackStatus, TrackVerifier, Tracker};
use aerotrack::{Frame, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Serialize)]
pub struct PointView {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub label: PointLabel,
    /// False when the fingerprint removes the point.
    pub kept: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameView {
    pub index: u64,
    pub points: Vec<PointView>,
    pub truth: Vec<[f64; 3]>,
    pub removed_clutter: usize,
    pub removed_uav: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub k: f64,
    pub calibration_frames: usize,
    pub modeled_cubes: usize,
    pub cubes: usize,
    pub tau_sim: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackView {
    pub id: u64,
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackSummary {
    pub frames: u64,
    pub tracks: Vec<TrackView>,
    pub truth: Vec<TrackView>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub e_loc: Option<f64>,
    pub rejected: usize,
}

struct Verifier<'a> {
    model: &'a TrajFormer,
    policy: VerificationPolicy,
}

impl TrackVerifier for Verifier<'_> {
    fn review(&self, track: &mut Track) {
        classify_track(self.model, track, &self.policy);
    }
}

pub struct Session {
    cfg: PipelineConfig,
    scene: Scene,
    classifier: TrajFormer,
    model: Option<NoiseFingerprintModel>,
}

impl Session {
    pub fn new(seed: u64) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.scene.seed = seed;
        let scene = build_scene(&cfg.scene)?;
        Ok(Self {
            cfg,
            scene,
            classifier: bundled()?,
            model: None,
        })
    }

    pub fn frame_count(&self) -> u64 {
        self.scene.frame_count()
    }

    pub fn fit(&mut self, k: f64, calibration_frames: usize) -> Result<FitSummary> {
        self.cfg.fit = FitOptions { k, ..self.cfg.fit };
        self.cfg.calibration_frames = calibration_frames.max(1);
        let cal = build_scene(&self.cfg.calibration_scene())?;
        let frames: Vec<Frame> = cal.frames().map(|(f, _)| f).collect();
        let model = fit_model(&frames, self.cfg.scene.grid, self.cfg.fit)?;
        let summary = FitSummary {
            k,
            calibration_frames: frames.len(),
            modeled_cubes: model.modeled_cubes(),
            cubes: model.cubes.len(),
            tau_sim: model.tau_sim,
        };
        self.model = Some(model);
        Ok(summary)
    }

    pub fn frame(&self, index: u64) -> FrameView {
        let (frame, gt) = self.scene.generate_frame(index.min(self.frame_count().saturating_sub(1)));
        let mut view = FrameView {
            index: frame.index,
            points: Vec::with_capacity(frame.points.len()),
            truth: gt.uav_positions(),
            removed_clutter: 0,
            removed_uav: 0,
        };
        for (p, &label) in frame.points.iter().zip(&gt.labels) {
            let kept = self.model.as_ref().is_none_or(|m| !m.is_noise(p));
            if !kept {
                match label {
                    PointLabel::Uav => view.removed_uav += 1,
                    _ => view.removed_clutter += 1,
                }
            }
            view.points.push(PointView { x: p.x, y: p.y, z: p.z, label, kept });
        }
        view
    }

    /// Run every layer over the first `frames` frames. Without a fitted
    /// model the fingerprint stage is skipped.
    pub fn track(&self, frames: u64) -> Result<TrackSummary> {
        let frames = frames.min(self.frame_count());
        let mut obj_cfg = self.cfg.confidence;
        obj_cfg.rule = DiscriminationRule::Conjunction;
        let mut layer = ObjectLayer::new(obj_cfg)?;
        let mut tracker = Tracker::new(self.cfg.imm.clone())?;
        let verifier = Verifier { model: &self.classifier, policy: self.cfg.verification };

        let mut tracks: Vec<TrackView> = Vec::new();
        let mut truth: Vec<TrackView> = Vec::new();
        let (mut outputs, mut truth_pos) = (Vec::new(), Vec::new());
        for k in 0..frames {
            let (frame, gt) = self.scene.generate_frame(k);
            let filtered = match &self.model {
                Some(m) => filter_frame(m, &frame).kept,
                None => frame,
            };
            let forwarded: Vec<_> = layer.step(cluster(&filtered, &self.cfg.cluster)).into_iter().filter(|o| o.kept).collect();
            let out = tracker.step_with(&forwarded, k, Some(&verifier));
            for o in &out {
                push_point(&mut tracks, o.id, o.position());
            }
            for u in &gt.uavs {
                push_point(&mut truth, u.id, u.pos);
            }
            outputs.push(out.iter().map(|o| o.position()).collect());
            truth_pos.push(gt.uav_positions());
        }
        let m = trajectory_metrics(&outputs, &truth_pos);
        Ok(TrackSummary {
            frames,
            tracks,
            truth,
            precision: m.precision(),
            recall: m.recall(),
            f1: m.f1(),
            e_loc: m.e_loc(),
            rejected: tracker.tracks().iter().filter(|t| t.status == TrackStatus::Rejected).count(),
        })
    }
}

fn push_point(list: &mut Vec<TrackView>, id: u64, p: [f64; 3]) {
    match list.iter_mut().find(|t| t.id == id) {
        Some(t) => t.points.push(p),
        None => list.push(TrackView { id, points: vec![p] }),
    }
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> std::result::Result<String, JsError> {
    serde_json::to_string(v).map_err(js_err)
}

#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> std::result::Result<Demo, JsError> {
        Ok(Demo { inner: Session::new(seed).map_err(js_err)? })
    }

    #[wasm_bindgen(js_name = frameCount)]
    pub fn frame_count(&self) -> u64 {
        self.inner.frame_count()
    }

    pub fn fit(&mut self, k: f64, calibration_frames: usize) -> std::result::Result<String, JsError> {
        to_json(&self.inner.fit(k, calibration_frames).map_err(js_err)?)
    }

    pub fn frame(&self, index: u64) -> std::result::Result<String, JsError> {
        to_json(&self.inner.frame(index))
    }

    pub fn track(&self, frames: u64) -> std::result::Result<String, JsError> {
        to_json(&self.inner.track(frames).map_err(js_err)?)
    }
}
