//! Window-level metrics, evaluation reports, the gain sweep and the latency
//! benchmark.

mod latency;
mod metrics;
mod report;
mod sweep;

pub use latency::{
    benchmark_audio, latency_benchmark, linear_fit, time_load, ClipClassifier, DurationTiming, LatencyReport, LinearFit,
};
pub use metrics::{
    average_precision, confusion_and_accuracy, mean_average_precision, pr_curve, precision_recall_at_threshold,
    thresholds, MapResult, PrPoint,
};
pub use report::{EvalReport, LabelMetrics};
pub use sweep::{evaluate_clips, gain_sweep_eval, score_clips, GainPoint, WindowScores, DEFAULT_GAINS_DB};
