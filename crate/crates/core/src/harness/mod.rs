//! Timing, stream segmentation and experiment running.

mod experiment;
mod segment;
mod timing;

pub use experiment::{
    load_scenes, reconstruct_coded, reconstruct_image_only, reconstruct_ours, resolve_schedule,
    run_experiment, tau_sweep, write_sweep_csv, EventModel, ExperimentConfig, MethodResult,
    Methods, NamedScene, OptimizationSummary, Report, ReportRow, SceneSource, ScheduleSource,
    SweepPoint, TrainingSuite, REPORT_SPEC_VERSION,
};
pub use segment::{segment_stream, segment_stream_with, CycleStacks, SegmentParams, Segmentation};
pub use timing::TimingConfig;
