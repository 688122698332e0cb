//! Point-, object- and trajectory-level scores against ground truth.

use serde::{Deserialize, Serialize};

use crate::sim::GroundTruthFrame;
use crate::types::{dist3, norm3, Frame};

/// Points within this distance of a ground-truth UAV count as UAV points,
/// and detections within it can match a UAV.
pub const MATCH_RADIUS_M: f64 = 10.0;

/// Range bucket width and count: `[0, 100), ..., [900, 1000]`.
pub const BUCKET_WIDTH_M: f64 = 100.0;
pub const BUCKETS: usize = 10;

/// `true` for points within [`MATCH_RADIUS_M`] of any ground-truth UAV.
pub fn label_points(frame: &Frame, gt: &GroundTruthFrame) -> Vec<bool> {
    let uavs = gt.uav_positions();
    frame
        .points
        .iter()
        .map(|p| uavs.iter().any(|u| dist3(p.position(), *u) <= MATCH_RADIUS_M))
        .collect()
}

/// Counts before and after point filtering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub c_u: u64,
    pub c_n: u64,
    pub c_u_after: u64,
    pub c_n_after: u64,
}

impl PointMetrics {
    pub fn from_frames(before: &Frame, after: &Frame, gt: &GroundTruthFrame) -> Self {
        let count = |f: &Frame| {
            let l = label_points(f, gt);
            let u = l.iter().filter(|b| **b).count() as u64;
            (u, l.len() as u64 - u)
        };
        let (c_u, c_n) = count(before);
        let (c_u_after, c_n_after) = count(after);
        Self {
            c_u,
            c_n,
            c_u_after,
            c_n_after,
        }
    }

    pub fn merge(&mut self, o: &Self) {
        self.c_u += o.c_u;
        self.c_n += o.c_n;
        self.c_u_after += o.c_u_after;
        self.c_n_after += o.c_n_after;
    }

    /// Fraction of UAV points removed; `None` without UAV points.
    pub fn f_u(&self) -> Option<f64> {
        (self.c_u > 0).then(|| (self.c_u - self.c_u_after.min(self.c_u)) as f64 / self.c_u as f64)
    }

    /// Fraction of noise points removed; `None` without noise points.
    pub fn f_n(&self) -> Option<f64> {
        (self.c_n > 0).then(|| (self.c_n - self.c_n_after.min(self.c_n)) as f64 / self.c_n as f64)
    }
}

/// One-to-one matching by ascending distance; pairs farther than `gate`
/// are never made. Returns `(detection, truth, distance)`.
pub fn greedy_match(dets: &[[f64; 3]], truth: &[[f64; 3]], gate: f64) -> Vec<(usize, usize, f64)> {
    let mut cand = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let dist = dist3(*d, *t);
            if dist <= gate {
                cand.push((dist, i, j));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; dets.len()];
    let mut used_t = vec![false; truth.len()];
    let mut out = Vec::new();
    for (dist, i, j) in cand {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            out.push((i, j, dist));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub frames: u64,
}

impl ObjectMetrics {
    pub fn from_frame(objects: &[[f64; 3]], truth: &[[f64; 3]]) -> Self {
        let tp = greedy_match(objects, truth, MATCH_RADIUS_M).len() as u64;
        Self {
            tp,
            fp: objects.len() as u64 - tp,
            fn_: truth.len() as u64 - tp,
            frames: 1,
        }
    }

    pub fn merge(&mut self, o: &Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.frames += o.frames;
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// False objects per frame.
    pub fn false_per_frame(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.fp as f64 / self.frames as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Sum of matched distances, metres.
    pub error_sum: f64,
}

impl Counts {
    fn merge(&mut self, o: &Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.error_sum += o.error_sum;
    }

    pub fn precision(&self) -> f64 {
        let d = self.tp + self.fp;
        if d == 0 {
            0.0
        } else {
            self.tp as f64 / d as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let d = self.tp + self.fn_;
        if d == 0 {
            0.0
        } else {
            self.tp as f64 / d as f64
        }
    }

    /// Harmonic mean of precision and recall, 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Mean matched distance; `None` without matches.
    pub fn e_loc(&self) -> Option<f64> {
        (self.tp > 0).then(|| self.error_sum / self.tp as f64)
    }
}

/// Trajectory-level score with per-range breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub total: Counts,
    /// Bucketed by ground-truth range for TP/FN and by output range for FP.
    pub buckets: Vec<Counts>,
    /// Frames with at least one unmatched output.
    pub fp_frames: u64,
    pub frames: u64,
}

impl Default for TrajectoryMetrics {
    fn default() -> Self {
        Self {
            total: Counts::default(),
            buckets: vec![Counts::default(); BUCKETS],
            fp_frames: 0,
            frames: 0,
        }
    }
}

fn bucket(p: [f64; 3]) -> usize {
    ((norm3(p) / BUCKET_WIDTH_M) as usize).min(BUCKETS - 1)
}

impl TrajectoryMetrics {
    pub fn add_frame(&mut self, outputs: &[[f64; 3]], truth: &[[f64; 3]]) {
        let m = greedy_match(outputs, truth, MATCH_RADIUS_M);
        let mut out_used = vec![false; outputs.len()];
        let mut gt_used = vec![false; truth.len()];
        for &(i, j, d) in &m {
            out_used[i] = true;
            gt_used[j] = true;
            let c = Counts { tp: 1, fp: 0, fn_: 0, error_sum: d };
            self.total.merge(&c);
            self.buckets[bucket(truth[j])].merge(&c);
        }
        let mut any_fp = false;
        for (i, used) in out_used.iter().enumerate() {
            if !used {
                any_fp = true;
                let c = Counts { fp: 1, ..Counts::default() };
                self.total.merge(&c);
                self.buckets[bucket(outputs[i])].merge(&c);
            }
        }
        for (j, used) in gt_used.iter().enumerate() {
            if !used {
                let c = Counts { fn_: 1, ..Counts::default() };
                self.total.merge(&c);
                self.buckets[bucket(truth[j])].merge(&c);
            }
        }
        self.frames += 1;
        self.fp_frames += any_fp as u64;
    }

    pub fn merge(&mut self, o: &Self) {
        self.total.merge(&o.total);
        for (a, b) in self.buckets.iter_mut().zip(&o.buckets) {
            a.merge(b);
        }
        self.fp_frames += o.fp_frames;
        self.frames += o.frames;
    }

    pub fn precision(&self) -> f64 {
        self.total.precision()
    }
    pub fn recall(&self) -> f64 {
        self.total.recall()
    }
    pub fn f1(&self) -> f64 {
        self.total.f1()
    }
    pub fn e_loc(&self) -> Option<f64> {
        self.total.e_loc()
    }

    /// Fraction of frames with a false output.
    pub fn fp_frame_rate(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.fp_frames as f64 / self.frames as f64
        }
    }
}

/// Score a whole output stream; `outputs[k]` and `truth[k]` belong to the
/// same frame.
pub fn trajectory_metrics(outputs: &[Vec<[f64; 3]>], truth: &[Vec<[f64; 3]>]) -> TrajectoryMetrics {
    let mut m = TrajectoryMetrics::default();
    for (o, t) in outputs.iter().zip(truth) {
        m.add_frame(o, t);
    }
    m
}
