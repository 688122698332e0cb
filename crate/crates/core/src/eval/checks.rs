//! Threshold checks on run reports, shared by the CLI `--check` mode and
//! the acceptance suite.

use serde::{Deserialize, Serialize};

use super::pipeline::{AblationStep, MetricsReport, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub min_f1: f64,
    /// Localisation error bound as a multiple of the measurement sigma.
    pub max_e_loc_sigmas: f64,
    pub max_fp_frame_rate: f64,
    pub min_fps: f64,
    pub min_false_object_reduction: f64,
    pub min_object_recall: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_f1: 0.90,
            max_e_loc_sigmas: 2.0,
            max_fp_frame_rate: 0.02,
            min_fps: 25.0,
            min_false_object_reduction: 0.90,
            min_object_recall: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Relative reduction of false objects per frame from raw clustering to
/// the forwarded objects.
pub fn false_object_reduction(m: &MetricsReport) -> f64 {
    let raw = m.raw_objects.false_per_frame();
    if raw == 0.0 {
        return 1.0;
    }
    1.0 - m.objects.false_per_frame() / raw
}

/// Checks for a run on a scene with targets.
pub fn target_checks(r: &RunReport, sigma_m: f64, th: &Thresholds) -> Vec<Check> {
    let m = &r.metrics;
    let e = m.e_loc.unwrap_or(f64::INFINITY);
    let fps = m.frames as f64 / r.timings.total_s.max(1e-9);
    vec![
        Check::new("f1", m.f1 >= th.min_f1, format!("F1 {:.4} (min {})", m.f1, th.min_f1)),
        Check::new(
            "e_loc",
            e <= th.max_e_loc_sigmas * sigma_m,
            format!("E_loc {:.3} m (max {:.3} m)", e, th.max_e_loc_sigmas * sigma_m),
        ),
        Check::new("throughput", fps >= th.min_fps, format!("{fps:.1} frames/s (min {})", th.min_fps)),
    ]
}

/// Checks for the object layer of a run.
pub fn object_checks(m: &MetricsReport, th: &Thresholds) -> Vec<Check> {
    let red = false_object_reduction(m);
    let rec = m.objects.recall().unwrap_or(0.0);
    vec![
        Check::new(
            "false_object_reduction",
            red >= th.min_false_object_reduction,
            format!(
                "{:.2} -> {:.3} false objects/frame, reduction {:.4} (min {})",
                m.raw_objects.false_per_frame(),
                m.objects.false_per_frame(),
                red,
                th.min_false_object_reduction
            ),
        ),
        Check::new(
            "object_recall",
            rec >= th.min_object_recall,
            format!("object recall {rec:.4} (min {})", th.min_object_recall),
        ),
    ]
}

/// Checks for a run on a target-free scene.
pub fn target_free_checks(r: &RunReport, th: &Thresholds) -> Vec<Check> {
    let rate = r.metrics.fp_frame_rate;
    vec![Check::new(
        "target_free_fp_rate",
        rate <= th.max_fp_frame_rate,
        format!("{:.4} of frames with a false output (max {})", rate, th.max_fp_frame_rate),
    )]
}

/// F1 must strictly increase along the ladder.
pub fn ladder_checks(steps: &[AblationStep]) -> Vec<Check> {
    let f1: Vec<f64> = steps.iter().map(|s| s.report.metrics.f1).collect();
    let increasing = f1.windows(2).all(|w| w[1] > w[0]);
    let detail = steps
        .iter()
        .map(|s| format!("{} {:.4}", s.name, s.report.metrics.f1))
        .collect::<Vec<_>>()
        .join(", ");
    vec![Check::new("ladder_monotone", increasing, detail)]
}
