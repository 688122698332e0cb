//! Labelled observation windows for classifier training.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::metrics::MATCH_RADIUS_M;
use super::pipeline::{run_pipeline, FrameArtifacts, PipelineConfig, PipelineInputs};
use crate::error::{Error, Result};
use crate::fingerprint::NoiseFingerprintModel;
use crate::types::dist3;

/// One window of a confirmed track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub window: Vec<[f64; 9]>,
    /// True when at least half of the observations lie within the match
    /// radius of a ground-truth UAV of their frame.
    pub label: bool,
    /// Group identifier for case-wise splits: scene seed and segment.
    pub case: String,
    pub frame: u64,
    pub track: u64,
    /// Frame index of each observation.
    #[serde(default)]
    pub frames: Vec<u64>,
}

/// Run `cfg` without the classifier and collect one window per frame for
/// every associated confirmed track with a full history. Windows are
/// grouped into cases by `segment_frames`-long segments of the scene.
pub fn collect_windows(
    cfg: &PipelineConfig,
    model: Option<NoiseFingerprintModel>,
    segment_frames: u64,
) -> Result<Vec<LabeledWindow>> {
    let mut cfg = cfg.clone();
    cfg.stages.classifier = false;
    let l = cfg.imm.history_len;
    let keep_frames = (l as u64 + cfg.imm.max_misses as u64) * 4 + 8;
    let seed = cfg.scene.seed;
    let mut truth: VecDeque<(u64, Vec<[f64; 3]>)> = VecDeque::new();
    let mut out = Vec::new();
    let mut observer = |a: &FrameArtifacts| {
        truth.push_back((a.frame_index, a.gt.uav_positions()));
        while truth.len() as u64 > keep_frames {
            truth.pop_front();
        }
        let lookup: HashMap<u64, &Vec<[f64; 3]>> = truth.iter().map(|(f, p)| (*f, p)).collect();
        for t in a.tracker.tracks() {
            if !(t.is_reportable() && t.hit_this_frame && t.history.len() >= l) {
                continue;
            }
            let matched = t
                .history
                .iter()
                .zip(&t.history_frames)
                .filter(|(o, f)| {
                    lookup
                        .get(f)
                        .is_some_and(|ps| ps.iter().any(|p| dist3([o[0], o[1], o[2]], *p) <= MATCH_RADIUS_M))
                })
                .count();
            out.push(LabeledWindow {
                window: t.history.iter().copied().collect(),
                label: 2 * matched >= l,
                case: format!("{seed}:{}", a.frame_index / segment_frames.max(1)),
                frame: a.frame_index,
                track: t.id,
                frames: t.history_frames.iter().copied().collect(),
            });
        }
    };
    run_pipeline(&cfg, PipelineInputs { model, classifier: None }, Some(&mut observer))?;
    if out.is_empty() {
        return Err(Error::EmptyInput("no confirmed tracks"));
    }
    Ok(out)
}
