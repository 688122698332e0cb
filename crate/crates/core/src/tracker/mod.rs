//! IMM-UKF multi-target tracking with L-frame confirmation.
//!
//! Each track runs a CV and a CTRV unscented filter on
//! `S = [x, y, z, phi, theta, v, omega]`, blended by IMM model probabilities.
//! Measurements are object centroids. A candidate becomes confirmed after
//! `confirm_hits` consecutive associations and is deleted after
//! `max_misses` consecutive misses.

pub mod imm;
pub mod motion;
pub mod ukf;

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assign::{distance_matrix, gated_assignment};
use crate::error::{Error, Result};
use crate::object::DetectedObject;
use crate::types::{TrackedUav, FRAME_INTERVAL_S};
use imm::{ImmFilter, ImmState};
use motion::{polar_velocity, velocity, Ctrv, Cv, ProcessNoise, State, OMEGA, PHI, SPEED, THETA};
use ukf::{Gaussian, UtParams};

/// Filter and lifecycle parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImmConfig {
    /// Model order is `[CV, CTRV]`.
    pub transition: [[f64; 2]; 2],
    pub cv_noise: ProcessNoise,
    pub ctrv_noise: ProcessNoise,
    /// Position measurement covariance in m^2.
    pub measurement_noise: [[f64; 3]; 3],
    pub ut: UtParams,
    /// Consecutive misses that delete a track.
    pub max_misses: u32,
    /// Consecutive hits that confirm a candidate (L).
    pub confirm_hits: u32,
    /// Observations kept per track (W).
    pub history_len: usize,
    pub gate_m: f64,
    pub frame_interval_s: f64,
    /// Spawn standard deviations for position, angles, speed and turn rate.
    pub init_std: InitStd,
    /// Re-initialise the velocity from the first two observations.
    pub two_point_init: bool,
    /// Also report confirmed tracks during frames in which they went
    /// unassociated, at their predicted position.
    pub emit_coasting: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitStd {
    pub position_m: f64,
    pub angle_rad: f64,
    pub speed_mps: f64,
    pub turn_rate_rps: f64,
}

impl Default for InitStd {
    fn default() -> Self {
        Self {
            position_m: 10.0,
            angle_rad: 0.5,
            speed_mps: 10.0,
            turn_rate_rps: 0.1,
        }
    }
}

impl Default for ImmConfig {
    fn default() -> Self {
        Self {
            transition: [[0.95, 0.05], [0.05, 0.95]],
            cv_noise: ProcessNoise::cv(),
            ctrv_noise: ProcessNoise::ctrv(),
            measurement_noise: [[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]],
            ut: UtParams::default(),
            max_misses: 3,
            confirm_hits: 6,
            history_len: 6,
            gate_m: 15.0,
            frame_interval_s: FRAME_INTERVAL_S,
            init_std: InitStd::default(),
            two_point_init: true,
            emit_coasting: true,
        }
    }
}

impl ImmConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.cv_noise.is_valid() || !self.ctrv_noise.is_valid() {
            return Err(Error::InvalidConfig("process noise intensities must be positive".into()));
        }
        if self.confirm_hits == 0 || self.max_misses == 0 || self.history_len == 0 {
            return Err(Error::InvalidConfig("lifecycle counts must be positive".into()));
        }
        if !(self.gate_m > 0.0 && self.frame_interval_s > 0.0) {
            return Err(Error::InvalidConfig("gate and frame interval must be positive".into()));
        }
        self.filter().map(|_| ())
    }

    /// The CV + CTRV filter bank described by this configuration.
    pub fn filter(&self) -> Result<ImmFilter> {
        let t = DMatrix::from_fn(2, 2, |r, c| self.transition[r][c]);
        let r = DMatrix::from_fn(3, 3, |i, j| self.measurement_noise[i][j]);
        ImmFilter::new(vec![Box::new(Cv(self.cv_noise)), Box::new(Ctrv(self.ctrv_noise))], t, r, self.ut)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Candidate,
    Confirmed,
    Verified,
    /// Confirmed but failed verification; kept alive so its detections do
    /// not respawn candidates, never reported.
    Rejected,
}

/// One target hypothesis.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub state: ImmState,
    pub status: TrackStatus,
    pub consecutive_hits: u32,
    pub consecutive_misses: u32,
    /// Most recent observations, oldest first.
    pub history: VecDeque<[f64; 9]>,
    /// Frame index of each history entry.
    pub history_frames: VecDeque<u64>,
    pub created_frame: u64,
    pub last_frame: u64,
    /// Whether the track was associated in the latest step.
    pub hit_this_frame: bool,
    /// Frame index at which the track was confirmed.
    pub confirmed_frame: Option<u64>,
    pub verify_streak: u32,
    pub reject_streak: u32,
    pub total_hits: u32,
    /// Key of the object associated in the latest step.
    pub object_key: Option<u64>,
    /// Combined estimate after the latest step.
    pub estimate: Gaussian,
}

impl Track {
    pub fn position(&self) -> [f64; 3] {
        let m = &self.estimate.mean;
        [m[0], m[1], m[2]]
    }

    pub fn velocity(&self) -> [f64; 3] {
        velocity(&mean_state(&self.estimate))
    }

    pub fn speed(&self) -> f64 {
        self.estimate.mean[SPEED].abs()
    }

    pub fn is_reportable(&self) -> bool {
        matches!(self.status, TrackStatus::Confirmed | TrackStatus::Verified)
    }

    pub fn to_output(&self) -> TrackedUav {
        let p = self.position();
        let v = self.velocity();
        TrackedUav {
            x: p[0],
            y: p[1],
            z: p[2],
            vx: v[0],
            vy: v[1],
            vz: v[2],
            id: self.id,
        }
    }
}

fn mean_state(g: &Gaussian) -> State {
    std::array::from_fn(|i| g.mean[i])
}

/// Per-frame hook that may change the status of confirmed tracks.
pub trait TrackVerifier {
    /// Called once per frame for each confirmed or verified track that was
    /// associated in that frame and has a full observation history.
    fn review(&self, track: &mut Track);
}

/// One record of the track output stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    #[serde(rename = "t")]
    pub frame_index: u64,
    pub id: u64,
    pub status: TrackStatus,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    /// `[CV, CTRV]` model probabilities.
    pub mu: Vec<f64>,
    /// Whether the track is part of the reported output for this frame.
    pub reported: bool,
}

/// Multi-target tracker for one stream.
#[derive(Debug)]
pub struct Tracker {
    pub cfg: ImmConfig,
    filter: ImmFilter,
    tracks: Vec<Track>,
    next_id: u64,
    quarantined: usize,
    require_verified: bool,
}

impl Tracker {
    pub fn new(cfg: ImmConfig) -> Result<Self> {
        cfg.validate()?;
        let filter = cfg.filter()?;
        Ok(Self {
            cfg,
            filter,
            tracks: Vec::new(),
            next_id: 1,
            quarantined: 0,
            require_verified: false,
        })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn filter(&self) -> &ImmFilter {
        &self.filter
    }

    /// Tracks dropped after a numerical failure.
    pub fn quarantined(&self) -> usize {
        self.quarantined
    }

    /// One frame without verification: confirmed tracks are reported.
    pub fn step(&mut self, objects: &[DetectedObject], frame_index: u64) -> Vec<TrackedUav> {
        self.step_with(objects, frame_index, None)
    }

    /// One frame. With a verifier only verified tracks are reported.
    pub fn step_with(
        &mut self,
        objects: &[DetectedObject],
        frame_index: u64,
        verifier: Option<&dyn TrackVerifier>,
    ) -> Vec<TrackedUav> {
        self.require_verified = verifier.is_some();
        let cfg = self.cfg.clone();

        // Predict.
        let mut predictions = Vec::with_capacity(self.tracks.len());
        let mut failed = Vec::new();
        for (i, t) in self.tracks.iter().enumerate() {
            let gap = frame_index.saturating_sub(t.last_frame).max(1);
            match self.filter.predict(&t.state, cfg.frame_interval_s * gap as f64) {
                Ok(p) => predictions.push(Some(p)),
                Err(_) => {
                    predictions.push(None);
                    failed.push(i);
                }
            }
        }

        // Associate predicted positions with object centroids.
        let predicted_pos: Vec<[f64; 3]> = predictions
            .iter()
            .map(|p| match p {
                Some(p) => {
                    let g = self.filter.combined(&p.estimates, &p.probs);
                    [g.mean[0], g.mean[1], g.mean[2]]
                }
                None => [f64::NAN; 3],
            })
            .collect();
        let centroids: Vec<[f64; 3]> = objects.iter().map(|o| o.centroid).collect();
        let cost = distance_matrix(&predicted_pos, &centroids);
        let matching = gated_assignment(&cost, centroids.len(), cfg.gate_m);
        let mut object_of = vec![None; self.tracks.len()];
        for &(r, c) in &matching.pairs {
            object_of[r] = Some(c);
        }

        // Update or coast.
        for (i, (t, pred)) in self.tracks.iter_mut().zip(predictions).enumerate() {
            let Some(pred) = pred else { continue };
            t.last_frame = frame_index;
            match object_of[i] {
                Some(c) => {
                    let obj = &objects[c];
                    let z = DVector::from_row_slice(&obj.centroid);
                    match self.filter.update(&pred, &z) {
                        Ok(state) => {
                            t.state = state;
                            t.hit_this_frame = true;
                            t.consecutive_hits += 1;
                            t.consecutive_misses = 0;
                            t.total_hits += 1;
                            t.object_key = Some(obj.key);
                            if t.history.len() == cfg.history_len {
                                t.history.pop_front();
                                t.history_frames.pop_front();
                            }
                            t.history.push_back(obj.observation());
                            t.history_frames.push_back(frame_index);
                            if cfg.two_point_init && t.total_hits == 2 {
                                reinit_velocity(t, &self.filter, &cfg, frame_index);
                            }
                        }
                        Err(_) => failed.push(i),
                    }
                }
                None => {
                    t.state = pred.coast();
                    t.hit_this_frame = false;
                    t.consecutive_hits = 0;
                    t.consecutive_misses += 1;
                    t.object_key = None;
                }
            }
            t.estimate = self.filter.combined(&t.state.estimates, &t.state.probs);
        }

        // Lifecycle.
        failed.sort_unstable();
        failed.dedup();
        self.quarantined += failed.len();
        let mut idx = 0;
        self.tracks.retain(|t| {
            let keep = failed.binary_search(&idx).is_err() && t.consecutive_misses < cfg.max_misses;
            idx += 1;
            keep
        });
        for c in matching.unmatched_cols {
            let t = self.spawn(&objects[c], frame_index);
            self.tracks.push(t);
        }
        for t in &mut self.tracks {
            if t.status == TrackStatus::Candidate && t.consecutive_hits >= cfg.confirm_hits {
                t.status = TrackStatus::Confirmed;
                t.confirmed_frame = Some(frame_index);
            }
        }
        if let Some(v) = verifier {
            for t in &mut self.tracks {
                if t.hit_this_frame
                    && matches!(t.status, TrackStatus::Confirmed | TrackStatus::Verified)
                    && t.history.len() >= cfg.history_len
                {
                    v.review(t);
                }
            }
        }
        self.outputs()
    }

    fn is_reported(&self, t: &Track) -> bool {
        let status_ok = if self.require_verified {
            t.status == TrackStatus::Verified
        } else {
            t.is_reportable()
        };
        status_ok && (t.hit_this_frame || self.cfg.emit_coasting)
    }

    /// Reported tracks after the latest step.
    pub fn outputs(&self) -> Vec<TrackedUav> {
        self.tracks
            .iter()
            .filter(|t| self.is_reported(t))
            .map(Track::to_output)
            .collect()
    }

    /// Stream records for every live non-candidate track.
    pub fn records(&self, frame_index: u64) -> Vec<TrackRecord> {
        self.tracks
            .iter()
            .filter(|t| t.status != TrackStatus::Candidate)
            .map(|t| {
                let o = t.to_output();
                TrackRecord {
                    frame_index,
                    id: t.id,
                    status: t.status,
                    x: o.x,
                    y: o.y,
                    z: o.z,
                    vx: o.vx,
                    vy: o.vy,
                    vz: o.vz,
                    mu: t.state.probs.clone(),
                    reported: self.is_reported(t),
                }
            })
            .collect()
    }

    fn spawn(&mut self, obj: &DetectedObject, frame_index: u64) -> Track {
        let c = obj.centroid;
        let (phi, theta, _) = polar_velocity(c);
        let s = &self.cfg.init_std;
        let mean = DVector::from_row_slice(&[c[0], c[1], c[2], phi, theta, 0.0, 0.0]);
        let d = [
            s.position_m,
            s.position_m,
            s.position_m,
            s.angle_rad,
            s.angle_rad,
            s.speed_mps,
            s.turn_rate_rps,
        ];
        let cov = DMatrix::from_diagonal(&DVector::from_iterator(7, d.iter().map(|v| v * v)));
        let g = Gaussian { mean, cov };
        let id = self.next_id;
        self.next_id += 1;
        let mut history = VecDeque::with_capacity(self.cfg.history_len);
        history.push_back(obj.observation());
        let mut history_frames = VecDeque::with_capacity(self.cfg.history_len);
        history_frames.push_back(frame_index);
        Track {
            id,
            state: self.filter.init(g.clone()),
            status: TrackStatus::Candidate,
            consecutive_hits: 1,
            consecutive_misses: 0,
            history,
            history_frames,
            created_frame: frame_index,
            last_frame: frame_index,
            hit_this_frame: true,
            confirmed_frame: None,
            verify_streak: 0,
            reject_streak: 0,
            total_hits: 1,
            object_key: Some(obj.key),
            estimate: g,
        }
    }
}

/// Replace the velocity part of every model estimate with the two-point
/// difference of the first two observations.
fn reinit_velocity(t: &mut Track, filter: &ImmFilter, cfg: &ImmConfig, frame_index: u64) {
    let n = t.history.len();
    if n < 2 {
        return;
    }
    let a = t.history[n - 2];
    let b = t.history[n - 1];
    let gap = frame_index.saturating_sub(t.created_frame).max(1) as f64;
    let dt = gap * cfg.frame_interval_s;
    let vel = [(b[0] - a[0]) / dt, (b[1] - a[1]) / dt, (b[2] - a[2]) / dt];
    let (phi, theta, v) = polar_velocity(vel);
    let r = &cfg.measurement_noise;
    let r_mean = (r[0][0] + r[1][1] + r[2][2]) / 3.0;
    let sv = (2.0 * r_mean).sqrt() / dt;
    let vh = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt();
    let s_phi = if vh > 0.0 { (sv / vh).min(std::f64::consts::PI) } else { std::f64::consts::PI };
    let s_theta = if v > 0.0 { (sv / v).min(std::f64::consts::FRAC_PI_2) } else { std::f64::consts::FRAC_PI_2 };
    for g in &mut t.state.estimates {
        let mut cov = DMatrix::zeros(7, 7);
        for i in 0..3 {
            for j in 0..3 {
                cov[(i, j)] = r[i][j];
            }
        }
        cov[(PHI, PHI)] = s_phi * s_phi;
        cov[(THETA, THETA)] = s_theta * s_theta;
        cov[(SPEED, SPEED)] = sv * sv;
        cov[(OMEGA, OMEGA)] = cfg.init_std.turn_rate_rps.powi(2);
        g.mean = DVector::from_row_slice(&[b[0], b[1], b[2], phi, theta, v, 0.0]);
        g.cov = cov;
    }
    let _ = filter;
}
