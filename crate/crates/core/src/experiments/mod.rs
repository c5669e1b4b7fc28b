//! Monte-Carlo harness: instance generation, cross-validation, support
//! metrics, bound coverage and the sample-size sweep.

pub mod cv;
pub mod design;
pub mod dominant;
pub mod example1;
pub mod metrics;
pub mod sweep;

pub use cv::{cross_validate_lambda, cross_validate_prepared, lambda_max, CvData, CvResult, CvSettings, LambdaGrid};
pub use dominant::{dominant_property_rate, DominantConfig, DominantRate, DominantReport};
pub use design::{generate_instance, generate_instance_with, CovarianceSpec, SignalSpec};
pub use metrics::{mean_ci, support_metrics, MeanCi};
pub use sweep::{
    aggregate, run_sweep, run_sweep_with_jobs, write_aggregate_csv, write_tables_csv, write_trials_csv, AggregateRow,
    BoundStatus, ExperimentConfig, MethodSpec, TrialReport,
};
pub use example1::{verify_example1, write_coverage_csv, Example1Config, Example1Report};
