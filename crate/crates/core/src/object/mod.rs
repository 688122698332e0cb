//! Object-level filtering: clustering, frame-to-frame association and
//! spatial/velocity confidences.
//!
//! Each object carries two exponentially decayed scores,
//! `C_s = gamma_s (C_s' + I_s)` and `C_v = gamma_v (C_v' + I_v)`, where the
//! primed values belong to the object it was matched to in the previous
//! frame. `I_s` is 1 for a match and `I_v` tests that the displacement-based
//! radial velocity agrees with the measured Doppler.

mod cluster;

pub use cluster::{cluster_indices, cluster_labels, ClusterConfig};

use serde::{Deserialize, Serialize};

use crate::assign::{distance_matrix, gated_assignment};
use crate::error::{Error, Result};
use crate::types::{norm3, Frame, RawPoint, FRAME_INTERVAL_S};

/// A cluster of points from one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub key: u64,
    pub frame_index: u64,
    pub centroid: [f64; 3],
    pub mean_doppler: f64,
    /// Mean signal metrics of the members, `[snr, scr, nl, sp, rp]`.
    pub mean_signal: [f64; 5],
    pub point_count: usize,
    #[serde(skip)]
    pub members: Vec<RawPoint>,
    pub c_s: f64,
    pub c_v: f64,
    pub last_matched_frame: Option<u64>,
    pub kept: bool,
}

impl DetectedObject {
    /// Build an unassociated object from its member points.
    pub fn from_points(frame_index: u64, members: Vec<RawPoint>) -> Self {
        assert!(!members.is_empty(), "an object needs at least one point");
        let n = members.len() as f64;
        let mut c = [0.0; 3];
        let mut vd = 0.0;
        let mut s = [0.0; 5];
        for p in &members {
            c[0] += p.x;
            c[1] += p.y;
            c[2] += p.z;
            vd += p.vd;
            for (acc, v) in s.iter_mut().zip(p.signal_vector().0) {
                *acc += v;
            }
        }
        Self {
            key: 0,
            frame_index,
            centroid: [c[0] / n, c[1] / n, c[2] / n],
            mean_doppler: vd / n,
            mean_signal: s.map(|v| v / n),
            point_count: members.len(),
            members,
            c_s: 0.0,
            c_v: 0.0,
            last_matched_frame: None,
            kept: true,
        }
    }

    /// The 9-component observation `(x, y, z, v_d, snr, scr, nl, sp, rp)`.
    pub fn observation(&self) -> [f64; 9] {
        let c = self.centroid;
        let s = self.mean_signal;
        [c[0], c[1], c[2], self.mean_doppler, s[0], s[1], s[2], s[3], s[4]]
    }
}

/// Cluster a frame into objects, ordered by their first member point.
pub fn cluster(frame: &Frame, cfg: &ClusterConfig) -> Vec<DetectedObject> {
    cluster_indices(&frame.points, cfg)
        .into_iter()
        .map(|idx| {
            DetectedObject::from_points(frame.index, idx.into_iter().map(|i| frame.points[i]).collect())
        })
        .collect()
}

/// Discrimination rule applied after confidences are updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminationRule {
    /// Drop iff `C_s < tau_s`.
    SpatialOnly,
    /// Drop iff `C_s < tau_s` and `C_v < tau_v`.
    Conjunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfidenceConfig {
    pub gamma_s: f64,
    pub gamma_v: f64,
    pub gate_m: f64,
    pub tau_c1: f64,
    pub tau_c2: f64,
    pub tau_s: f64,
    pub tau_v: f64,
    /// Speeds below this magnitude count as radially static.
    pub eps_v: f64,
    pub c_init: f64,
    pub frame_interval_s: f64,
    /// Frames an unmatched object stays available for association, its
    /// confidences decaying with `I = 0`. Zero disables coasting. A coasted
    /// object is gated around its position extrapolated by its last
    /// per-frame displacement.
    pub max_coast_frames: u64,
    pub rule: DiscriminationRule,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        Self {
            gamma_s: 0.9,
            gamma_v: 0.9,
            gate_m: 15.0,
            tau_c1: 2.0,
            tau_c2: 2.0,
            tau_s: 1.7,
            tau_v: 1.1,
            eps_v: 0.1,
            c_init: 0.0,
            frame_interval_s: FRAME_INTERVAL_S,
            max_coast_frames: 3,
            rule: DiscriminationRule::Conjunction,
        }
    }
}

impl ConfidenceConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |g: f64| (0.0..=1.0).contains(&g);
        let pos = [
            self.gate_m,
            self.tau_c1,
            self.tau_c2,
            self.tau_s,
            self.tau_v,
            self.eps_v,
            self.frame_interval_s,
        ];
        if !unit(self.gamma_s) || !unit(self.gamma_v) || pos.iter().any(|v| !(*v > 0.0)) || !(self.c_init >= 0.0) {
            return Err(Error::InvalidConfig(
                "confidence config needs gamma in [0, 1] and positive thresholds".into(),
            ));
        }
        Ok(())
    }
}

/// Line-of-sight velocity implied by a displacement:
/// `((curr - prev) / dt) . curr / |curr|`.
pub fn radial_velocity(curr: [f64; 3], prev: [f64; 3], dt: f64) -> Result<f64> {
    let r = norm3(curr);
    if r == 0.0 {
        return Err(Error::UndefinedDirection);
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig("dt must be positive".into()));
    }
    let v = [(curr[0] - prev[0]) / dt, (curr[1] - prev[1]) / dt, (curr[2] - prev[2]) / dt];
    Ok((v[0] * curr[0] + v[1] * curr[1] + v[2] * curr[2]) / r)
}

/// Velocity consistency indicator `I_v`.
///
/// Requires `|v_r - v_d| < tau_c1`. The sign and ratio clauses work on
/// magnitudes: both below `eps_v` passes, exactly one below fails, otherwise
/// the signs must agree and `max/min < tau_c2`.
pub fn velocity_consistent(v_r: f64, v_d: f64, cfg: &ConfidenceConfig) -> bool {
    if !((v_r - v_d).abs() < cfg.tau_c1) {
        return false;
    }
    let (ar, ad) = (v_r.abs(), v_d.abs());
    match (ar < cfg.eps_v, ad < cfg.eps_v) {
        (true, true) => true,
        (true, false) | (false, true) => false,
        (false, false) => v_r.signum() == v_d.signum() && ar.max(ad) / ar.min(ad) < cfg.tau_c2,
    }
}

/// One step of `C = gamma (C' + I)`.
pub fn confidence_step(prev: f64, indicator: bool, gamma: f64) -> f64 {
    gamma * (prev + if indicator { 1.0 } else { 0.0 })
}

/// Whether an object survives discrimination. Ties keep.
pub fn keep_object(c_s: f64, c_v: f64, cfg: &ConfidenceConfig) -> bool {
    match cfg.rule {
        DiscriminationRule::SpatialOnly => c_s >= cfg.tau_s,
        DiscriminationRule::Conjunction => !(c_s < cfg.tau_s && c_v < cfg.tau_v),
    }
}

/// Split objects by [`keep_object`], setting their `kept` flag.
pub fn discriminate(
    objects: Vec<DetectedObject>,
    cfg: &ConfidenceConfig,
) -> (Vec<DetectedObject>, Vec<DetectedObject>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for mut o in objects {
        o.kept = keep_object(o.c_s, o.c_v, cfg);
        if o.kept {
            kept.push(o);
        } else {
            dropped.push(o);
        }
    }
    (kept, dropped)
}

#[derive(Debug, Clone)]
struct Remembered {
    obj: DetectedObject,
    /// Frames since the object was last observed.
    age: u64,
    /// Displacement per frame at the last match, used to extrapolate
    /// coasted objects.
    step: [f64; 3],
}

impl Remembered {
    /// Expected position one frame before now.
    fn anchor(&self) -> [f64; 3] {
        let k = self.age.saturating_sub(1) as f64;
        let c = self.obj.centroid;
        [c[0] + k * self.step[0], c[1] + k * self.step[1], c[2] + k * self.step[2]]
    }
}

/// Cross-frame confidence bookkeeping for one stream.
#[derive(Debug, Clone)]
pub struct ObjectLayer {
    pub cfg: ConfidenceConfig,
    memory: Vec<Remembered>,
    next_key: u64,
}

impl ObjectLayer {
    pub fn new(cfg: ConfidenceConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            memory: Vec::new(),
            next_key: 1,
        })
    }

    /// Associate `current` with remembered objects, update confidences and
    /// apply the discrimination rule. Returns every current object with
    /// `kept` set.
    pub fn step(&mut self, mut current: Vec<DetectedObject>) -> Vec<DetectedObject> {
        let cfg = self.cfg;
        let prev_pos: Vec<[f64; 3]> = self.memory.iter().map(Remembered::anchor).collect();
        let curr_pos: Vec<[f64; 3]> = current.iter().map(|o| o.centroid).collect();
        let cost = distance_matrix(&prev_pos, &curr_pos);
        let matching = gated_assignment(&cost, curr_pos.len(), cfg.gate_m);

        let mut prev_of: Vec<Option<usize>> = vec![None; current.len()];
        for &(r, c) in &matching.pairs {
            prev_of[c] = Some(r);
        }
        for (o, prev) in current.iter_mut().zip(&prev_of) {
            match prev {
                Some(r) => {
                    let m = &self.memory[*r];
                    let dt = cfg.frame_interval_s * m.age as f64;
                    let i_v = radial_velocity(o.centroid, m.obj.centroid, dt)
                        .map(|v_r| velocity_consistent(v_r, o.mean_doppler, &cfg))
                        .unwrap_or(false);
                    o.key = m.obj.key;
                    o.c_s = confidence_step(m.obj.c_s, true, cfg.gamma_s);
                    o.c_v = confidence_step(m.obj.c_v, i_v, cfg.gamma_v);
                    o.last_matched_frame = Some(o.frame_index);
                }
                None => {
                    o.key = self.next_key;
                    self.next_key += 1;
                    o.c_s = confidence_step(cfg.c_init, false, cfg.gamma_s);
                    o.c_v = confidence_step(cfg.c_init, false, cfg.gamma_v);
                    o.last_matched_frame = None;
                }
            }
            o.kept = keep_object(o.c_s, o.c_v, &cfg);
        }

        let mut next: Vec<Remembered> = Vec::with_capacity(current.len() + matching.unmatched_rows.len());
        for r in &matching.unmatched_rows {
            let m = &self.memory[*r];
            if m.age <= cfg.max_coast_frames {
                let mut obj = m.obj.clone();
                obj.members.clear();
                obj.c_s = confidence_step(obj.c_s, false, cfg.gamma_s);
                obj.c_v = confidence_step(obj.c_v, false, cfg.gamma_v);
                next.push(Remembered { obj, age: m.age + 1, step: m.step });
            }
        }
        for (o, prev) in current.iter().zip(&prev_of) {
            let step = match prev {
                Some(r) => {
                    let m = &self.memory[*r];
                    let k = m.age as f64;
                    let (c, p) = (o.centroid, m.obj.centroid);
                    [(c[0] - p[0]) / k, (c[1] - p[1]) / k, (c[2] - p[2]) / k]
                }
                None => [0.0; 3],
            };
            let mut obj = o.clone();
            obj.members.clear();
            next.push(Remembered { obj, age: 1, step });
        }
        self.memory = next;
        current
    }

    /// Number of objects remembered for the next association.
    pub fn remembered(&self) -> usize {
        self.memory.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(frame: u64, pos: [f64; 3], vd: f64) -> DetectedObject {
        DetectedObject::from_points(
            frame,
            vec![RawPoint::from_array([pos[0], pos[1], pos[2], vd, 0.0, 0.0, 0.0, 0.0, 0.0])],
        )
    }

    #[test]
    fn radial_velocity_examples() {
        let v = radial_velocity([100.0, 0.0, 0.0], [90.0, 0.0, 0.0], 0.64).unwrap();
        assert!((v - 15.625).abs() < 1e-12);
        let t = radial_velocity([100.0, 1.0, 0.0], [100.0, 0.0, 0.0], 0.64).unwrap();
        assert!((t - 1.0 / 0.64 / (100.0f64 * 100.0 + 1.0).sqrt()).abs() < 1e-12);
        assert!(t.abs() < 0.02);
        assert_eq!(radial_velocity([5.0, 5.0, 5.0], [5.0, 5.0, 5.0], 0.64).unwrap(), 0.0);
        assert!(matches!(radial_velocity([0.0; 3], [1.0; 3], 0.64), Err(Error::UndefinedDirection)));
    }

    #[test]
    fn velocity_rule_examples() {
        let cfg = ConfidenceConfig::default();
        assert!(velocity_consistent(15.625, 15.0, &cfg));
        assert!(!velocity_consistent(3.0, -3.0, &cfg));
        assert!(velocity_consistent(0.05, 0.02, &cfg));
        assert!(!velocity_consistent(0.05, 0.5, &cfg));
        assert!(!velocity_consistent(1.0, 2.5, &cfg));
    }

    #[test]
    fn discriminate_examples() {
        let cfg = ConfidenceConfig::default();
        assert!(keep_object(2.0, 0.1, &cfg));
        assert!(!keep_object(1.0, 1.0, &cfg));
        assert!(keep_object(1.7, 0.5, &cfg));
        assert!(keep_object(1.2, 1.1, &cfg));
        let spatial = ConfidenceConfig {
            rule: DiscriminationRule::SpatialOnly,
            ..cfg
        };
        assert!(!keep_object(1.2, 1.5, &spatial));
    }

    #[test]
    fn first_crossing_at_second_match() {
        let mut layer = ObjectLayer::new(ConfidenceConfig::default()).unwrap();
        let mut cs = Vec::new();
        for f in 0..3 {
            let out = layer.step(vec![obj(f, [100.0 + 6.4 * f as f64, 0.0, 50.0], 10.0 * 100.0 / (100.0f64.powi(2) + 2500.0).sqrt())]);
            cs.push(out[0].c_s);
        }
        assert_eq!(cs[0], 0.0);
        assert!((cs[1] - 0.9).abs() < 1e-12);
        assert!((cs[2] - 1.71).abs() < 1e-12);
    }

    #[test]
    fn keys_persist_through_matches() {
        let mut layer = ObjectLayer::new(ConfidenceConfig::default()).unwrap();
        let a = layer.step(vec![obj(0, [200.0, 0.0, 50.0], 0.0)]);
        let b = layer.step(vec![obj(1, [201.0, 0.0, 50.0], 0.0), obj(1, [400.0, 0.0, 50.0], 0.0)]);
        assert_eq!(a[0].key, b[0].key);
        assert_ne!(b[1].key, b[0].key);
        assert_eq!(b[1].c_s, 0.0);
    }

    #[test]
    fn coasting_decays_and_expires() {
        let cfg = ConfidenceConfig {
            max_coast_frames: 2,
            ..ConfidenceConfig::default()
        };
        let mut layer = ObjectLayer::new(cfg).unwrap();
        for f in 0..3 {
            layer.step(vec![obj(f, [300.0, 0.0, 50.0], 0.0)]);
        }
        layer.step(Vec::new());
        layer.step(Vec::new());
        let out = layer.step(vec![obj(5, [300.0, 0.0, 50.0], 0.0)]);
        // 1.71 -> 1.539 (miss) -> 1.3851 (miss) -> 0.9 * (1.3851 + 1)
        assert!((out[0].c_s - 0.9 * (1.71 * 0.81 + 1.0)).abs() < 1e-12);
        layer.step(Vec::new());
        layer.step(Vec::new());
        layer.step(Vec::new());
        assert_eq!(layer.remembered(), 0);
    }
}
