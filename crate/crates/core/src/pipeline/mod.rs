//! End-to-end trials, sweeps and result files.

mod config;
mod dataset;
mod metrics;
mod ns;
mod results;
mod sweep;
mod trial;

pub use config::{ExperimentConfig, MetricsConfig, PredictorKind, SweepAxes, SPEC_VERSION};
pub use dataset::training_set;
pub use metrics::{frechet_gauss, mse, psnr, FRECHET_JITTER};
pub use ns::{ns_for_cbr, NsTable};
pub use results::{
    aggregate_path, float_repr, metadata, opt_float_repr, read_json, read_rows_csv, write_aggregates_csv,
    write_json, write_results, write_rows_csv, Metadata, OutputFormat, ResultsFile, AGGREGATE_COLUMNS,
    ROW_COLUMNS,
};
pub use sweep::{aggregate, sweep, AggregateRow, SweepOutput};
pub use trial::{Axis, RunResult, SweepPoint, TrialContext, TrialOutcome};
