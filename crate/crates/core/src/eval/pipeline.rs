//! End-to-end orchestration: simulate, filter, cluster, discriminate, track,
//! verify and score.

use std::cell::Cell;
use std::collections::{BTreeSet, VecDeque};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::metrics::{ObjectMetrics, PointMetrics, TrajectoryMetrics};
use crate::classifier::{classify_track, TrajFormer, VerificationPolicy};
use crate::error::{Error, Result};
use crate::fingerprint::{filter_frame, fit_model, update_model, FitOptions, NoiseFingerprintModel, UpdatePolicy};
use crate::object::{cluster, ClusterConfig, ConfidenceConfig, DetectedObject, DiscriminationRule, ObjectLayer};
use crate::sim::{build_scene, GroundTruthFrame, SceneSpec};
use crate::tracker::{ImmConfig, Track, TrackRecord, TrackStatus, TrackVerifier, Tracker};
use crate::types::{Frame, TrackedUav};

/// Which filtering stages run. The tracker always runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stages {
    pub fingerprint: bool,
    /// Forward only objects with `C_s >= tau_s`.
    pub spatial_confidence: bool,
    /// Additionally require velocity confidence (conjunction rule).
    pub velocity_confidence: bool,
    pub classifier: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self::full()
    }
}

impl Stages {
    pub const fn basic() -> Self {
        Self {
            fingerprint: false,
            spatial_confidence: false,
            velocity_confidence: false,
            classifier: false,
        }
    }

    pub const fn full() -> Self {
        Self {
            fingerprint: true,
            spatial_confidence: true,
            velocity_confidence: true,
            classifier: true,
        }
    }

    /// The five cumulative configurations, in order.
    pub fn ladder() -> [(&'static str, Stages); 5] {
        let b = Self::basic();
        let fp = Stages { fingerprint: true, ..b };
        let cs = Stages { spatial_confidence: true, ..fp };
        let cv = Stages { velocity_confidence: true, ..cs };
        let cl = Stages { classifier: true, ..cv };
        [
            ("basic", b),
            ("+fingerprint", fp),
            ("+spatial", cs),
            ("+velocity", cv),
            ("+classifier", cl),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.velocity_confidence && !self.spatial_confidence {
            return Err(Error::InvalidConfig(
                "velocity confidence is only available together with spatial confidence".into(),
            ));
        }
        Ok(())
    }
}

/// Everything needed for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub scene: SceneSpec,
    pub stages: Stages,
    pub fit: FitOptions,
    /// Frames of the target-free calibration recording used for fitting.
    pub calibration_frames: usize,
    /// Salt that derives the calibration recording from the scene.
    pub calibration_salt: u64,
    pub update: UpdatePolicy,
    pub cluster: ClusterConfig,
    pub confidence: ConfidenceConfig,
    pub imm: ImmConfig,
    pub verification: VerificationPolicy,
    /// Classifier weights; the bundled weights are used when unset.
    pub weights_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec::benchmark_a(),
            stages: Stages::full(),
            fit: FitOptions::default(),
            calibration_frames: 700,
            calibration_salt: 0xCA11B,
            update: UpdatePolicy::default(),
            cluster: ClusterConfig::default(),
            confidence: ConfidenceConfig::default(),
            imm: ImmConfig::default(),
            verification: VerificationPolicy::default(),
            weights_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.stages.validate()?;
        self.fit.validate()?;
        self.update.validate()?;
        self.cluster.validate()?;
        self.confidence.validate()?;
        self.imm.validate()?;
        if self.calibration_frames == 0 {
            return Err(Error::InvalidConfig("calibration needs at least one frame".into()));
        }
        Ok(())
    }

    /// The noise-only recording the fingerprint model is fitted on.
    pub fn calibration_scene(&self) -> SceneSpec {
        let mut s = self.scene.target_free(self.calibration_salt);
        s.frames = self.calibration_frames as u64;
        s
    }

    /// Confidence settings implied by the stage switches.
    fn object_config(&self) -> ConfidenceConfig {
        let mut c = self.confidence;
        c.rule = if self.stages.velocity_confidence {
            DiscriminationRule::Conjunction
        } else {
            DiscriminationRule::SpatialOnly
        };
        c
    }

    pub fn load_classifier(&self) -> Result<TrajFormer> {
        match &self.weights_path {
            Some(p) => TrajFormer::load(p),
            None => crate::classifier::bundled(),
        }
    }
}

/// Fit the fingerprint model on the calibration recording.
pub fn fit_calibration(cfg: &PipelineConfig) -> Result<NoiseFingerprintModel> {
    let scene = build_scene(&cfg.calibration_scene())?;
    let frames: Vec<Frame> = scene.frames().map(|(f, _)| f).collect();
    fit_model(&frames, cfg.scene.grid, cfg.fit)
}

/// Pre-built models; missing ones are derived from the configuration.
#[derive(Debug, Clone, Default)]
pub struct PipelineInputs {
    pub model: Option<NoiseFingerprintModel>,
    pub classifier: Option<TrajFormer>,
}

/// Wall-clock seconds per stage, summed over frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub fit_s: f64,
    pub simulate_s: f64,
    pub fingerprint_s: f64,
    pub cluster_s: f64,
    pub object_s: f64,
    pub track_s: f64,
    pub classify_s: f64,
    pub metrics_s: f64,
    /// Wall time of the frame loop.
    pub total_s: f64,
}

impl StageTimings {
    /// Sum of the per-frame stages, comparable with `total_s`.
    pub fn accounted_s(&self) -> f64 {
        self.simulate_s
            + self.fingerprint_s
            + self.cluster_s
            + self.object_s
            + self.track_s
            + self.classify_s
            + self.metrics_s
    }
}

/// Deterministic part of a run's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub root_seed: u64,
    pub scene_digest: String,
    pub stages: Stages,
    pub frames: u64,
    pub points: PointMetrics,
    pub f_u: Option<f64>,
    pub f_n: Option<f64>,
    /// Clusters of the unfiltered frames.
    pub raw_objects: ObjectMetrics,
    /// Objects forwarded to the tracker.
    pub objects: ObjectMetrics,
    pub trajectory: TrajectoryMetrics,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub e_loc: Option<f64>,
    pub fp_frame_rate: f64,
    /// Distinct track ids ever reported.
    pub reported_tracks: usize,
    /// Tracks rejected by the classifier.
    pub rejected_tracks: usize,
    pub quarantined_tracks: usize,
    pub model_updates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metrics: MetricsReport,
    pub timings: StageTimings,
}

/// Everything produced for one frame, handed to an observer.
pub struct FrameArtifacts<'a> {
    pub frame_index: u64,
    pub raw: &'a Frame,
    pub filtered: &'a Frame,
    pub objects: &'a [DetectedObject],
    pub outputs: &'a [TrackedUav],
    pub tracker: &'a Tracker,
    pub gt: &'a GroundTruthFrame,
}

impl FrameArtifacts<'_> {
    /// Track stream records for this frame.
    pub fn track_records(&self) -> Vec<TrackRecord> {
        self.tracker.records(self.frame_index)
    }
}

struct TimedVerifier<'a> {
    model: &'a TrajFormer,
    policy: VerificationPolicy,
    spent: Cell<Duration>,
    rejected: Cell<usize>,
}

impl TrackVerifier for TimedVerifier<'_> {
    fn review(&self, track: &mut Track) {
        let t = Instant::now();
        let before = track.status;
        classify_track(self.model, track, &self.policy);
        if before != TrackStatus::Rejected && track.status == TrackStatus::Rejected {
            self.rejected.set(self.rejected.get() + 1);
        }
        self.spent.set(self.spent.get() + t.elapsed());
    }
}

struct Lap(Instant);

impl Lap {
    /// Seconds since the previous call.
    fn next(&mut self) -> f64 {
        let now = Instant::now();
        let d = (now - self.0).as_secs_f64();
        self.0 = now;
        d
    }
}

pub type Observer<'a> = &'a mut dyn FnMut(&FrameArtifacts);

/// Run on the scene described by `cfg.scene`.
pub fn run_pipeline(cfg: &PipelineConfig, inputs: PipelineInputs, observer: Option<Observer>) -> Result<RunReport> {
    cfg.validate()?;
    let scene = build_scene(&cfg.scene)?;
    let frames = (0..scene.frame_count()).map(|i| scene.generate_frame(i));
    run_stream(cfg, inputs, frames, format!("{:016x}", scene.digest()), observer)
}

/// Run on an arbitrary stream of frames with ground truth.
pub fn run_stream<I>(
    cfg: &PipelineConfig,
    inputs: PipelineInputs,
    frames: I,
    scene_digest: String,
    mut observer: Option<Observer>,
) -> Result<RunReport>
where
    I: Iterator<Item = (Frame, GroundTruthFrame)>,
{
    cfg.validate()?;
    let mut timings = StageTimings::default();
    let t_fit = Instant::now();
    let mut model = if cfg.stages.fingerprint {
        Some(match inputs.model {
            Some(m) => m,
            None => fit_calibration(cfg)?,
        })
    } else {
        None
    };
    let classifier = if cfg.stages.classifier {
        Some(match inputs.classifier {
            Some(c) => c,
            None => cfg.load_classifier()?,
        })
    } else {
        None
    };
    timings.fit_s = t_fit.elapsed().as_secs_f64();

    let obj_cfg = cfg.object_config();
    let mut objects_layer = ObjectLayer::new(obj_cfg)?;
    let mut tracker = Tracker::new(cfg.imm.clone())?;
    let verifier = classifier.as_ref().map(|m| TimedVerifier {
        model: m,
        policy: cfg.verification,
        spent: Cell::new(Duration::ZERO),
        rejected: Cell::new(0),
    });
    let filter_objects = cfg.stages.spatial_confidence;

    let mut points = PointMetrics::default();
    let mut raw_objects = ObjectMetrics::default();
    let mut fwd_objects = ObjectMetrics::default();
    let mut traj = TrajectoryMetrics::default();
    let mut reported = BTreeSet::new();
    let mut recent: VecDeque<(Frame, Vec<[f64; 3]>)> = VecDeque::new();
    let mut since_update = 0u64;
    let mut model_updates = 0;
    let mut n_frames = 0u64;

    let loop_start = Instant::now();
    let mut frames = frames;
    loop {
        let t = Instant::now();
        let Some((frame, gt)) = frames.next() else {
            timings.simulate_s += t.elapsed().as_secs_f64();
            break;
        };
        let mut lap = Lap(t);
        timings.simulate_s += lap.next();
        n_frames += 1;

        let filtered = match &model {
            Some(m) => filter_frame(m, &frame).kept,
            None => frame.clone(),
        };
        timings.fingerprint_s += lap.next();

        let clustered = cluster(&filtered, &cfg.cluster);
        timings.cluster_s += lap.next();

        let judged = objects_layer.step(clustered);
        let forwarded: Vec<DetectedObject> = if filter_objects {
            judged.iter().filter(|o| o.kept).cloned().collect()
        } else {
            judged.clone()
        };
        timings.object_s += lap.next();

        let classify_before = verifier.as_ref().map_or(Duration::ZERO, |v| v.spent.get());
        let outputs = tracker.step_with(
            &forwarded,
            frame.index,
            verifier.as_ref().map(|v| v as &dyn TrackVerifier),
        );
        let classify_spent = verifier.as_ref().map_or(Duration::ZERO, |v| v.spent.get()) - classify_before;
        let step_s = lap.next();
        timings.classify_s += classify_spent.as_secs_f64();
        timings.track_s += step_s - classify_spent.as_secs_f64();

        let truth = gt.uav_positions();
        points.merge(&PointMetrics::from_frames(&frame, &filtered, &gt));
        let raw_pos: Vec<[f64; 3]> = cluster(&frame, &cfg.cluster).iter().map(|o| o.centroid).collect();
        raw_objects.merge(&ObjectMetrics::from_frame(&raw_pos, &truth));
        let fwd_pos: Vec<[f64; 3]> = forwarded.iter().map(|o| o.centroid).collect();
        fwd_objects.merge(&ObjectMetrics::from_frame(&fwd_pos, &truth));
        let out_pos: Vec<[f64; 3]> = outputs.iter().map(TrackedUav::position).collect();
        traj.add_frame(&out_pos, &truth);
        reported.extend(outputs.iter().map(|o| o.id));

        if let Some(obs) = observer.as_mut() {
            obs(&FrameArtifacts {
                frame_index: frame.index,
                raw: &frame,
                filtered: &filtered,
                objects: &judged,
                outputs: &outputs,
                tracker: &tracker,
                gt: &gt,
            });
        }

        if let Some(m) = model.as_mut() {
            let confirmed: Vec<[f64; 3]> = tracker
                .tracks()
                .iter()
                .filter(|t| t.is_reportable())
                .map(Track::position)
                .collect();
            recent.push_back((frame, confirmed));
            if recent.len() > cfg.update.window_frames {
                recent.pop_front();
            }
            since_update += 1;
            if since_update >= cfg.update.interval_frames {
                let (fs, ps): (Vec<Frame>, Vec<Vec<[f64; 3]>>) = recent.iter().cloned().unzip();
                if let Ok(new_model) = update_model(m, &fs, &ps, &cfg.update) {
                    *m = new_model;
                    model_updates += 1;
                }
                since_update = 0;
            }
        }
        timings.metrics_s += lap.next();
    }
    timings.total_s = loop_start.elapsed().as_secs_f64();

    let metrics = MetricsReport {
        root_seed: cfg.scene.seed,
        scene_digest,
        stages: cfg.stages,
        frames: n_frames,
        points,
        f_u: points.f_u(),
        f_n: points.f_n(),
        raw_objects,
        objects: fwd_objects,
        precision: traj.precision(),
        recall: traj.recall(),
        f1: traj.f1(),
        e_loc: traj.e_loc(),
        fp_frame_rate: traj.fp_frame_rate(),
        trajectory: traj,
        reported_tracks: reported.len(),
        rejected_tracks: verifier.as_ref().map_or(0, |v| v.rejected.get()),
        quarantined_tracks: tracker.quarantined(),
        model_updates,
    };
    Ok(RunReport { metrics, timings })
}

/// One rung of the ablation ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationStep {
    pub name: String,
    pub report: RunReport,
}

/// Run the five cumulative stage configurations, sharing one fitted model
/// and one classifier.
pub fn ablation_ladder(cfg: &PipelineConfig, inputs: PipelineInputs) -> Result<Vec<AblationStep>> {
    cfg.validate()?;
    let model = match inputs.model {
        Some(m) => m,
        None => fit_calibration(cfg)?,
    };
    let classifier = match inputs.classifier {
        Some(c) => c,
        None => cfg.load_classifier()?,
    };
    let mut out = Vec::new();
    for (name, stages) in Stages::ladder() {
        let mut c = cfg.clone();
        c.stages = stages;
        let report = run_pipeline(
            &c,
            PipelineInputs {
                model: Some(model.clone()),
                classifier: Some(classifier.clone()),
            },
            None,
        )?;
        out.push(AblationStep {
            name: name.to_string(),
            report,
        });
    }
    Ok(out)
}
