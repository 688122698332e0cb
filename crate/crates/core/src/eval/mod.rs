//! Metrics and end-to-end runs.

pub mod checks;
pub mod dataset;
pub mod metrics;
pub mod pipeline;

pub use checks::{Check, Thresholds};
pub use dataset::{collect_windows, LabeledWindow};
pub use metrics::{
    greedy_match, label_points, trajectory_metrics, ObjectMetrics, PointMetrics, TrajectoryMetrics,
    MATCH_RADIUS_M,
};
pub use pipeline::{
    ablation_ladder, fit_calibration, run_pipeline, run_stream, AblationStep, FrameArtifacts, MetricsReport,
    PipelineConfig, PipelineInputs, RunReport, StageTimings, Stages,
};
