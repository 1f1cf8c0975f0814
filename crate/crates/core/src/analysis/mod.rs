//! Multi-run evaluation: power series per trace, per-index mean and IQR
//! across repeated runs, workload-versus-idle comparison, randomized run
//! plans and plot output.

mod aggregate;
mod compare;
mod load;
mod plot;
mod schedule;
mod series;

use thiserror::Error;

use crate::trace::{SummaryError, TraceError};

pub use aggregate::{aggregate, quantile, AggregateCurve};
pub use compare::{compare, ComparisonReport, Peak};
pub use load::{load_runs, summarize_conditions, ConditionSummary, RunSet};
pub use plot::{data_path_for, emit_plot, read_plot_data, PlotCurve, PlotFiles};
pub use schedule::{randomized_schedule, PlannedRun};
pub use series::{power_series, PowerSeries};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    File {
        path: std::path::PathBuf,
        #[source]
        source: Box<AnalysisError>,
    },
    #[error("need at least {need} runs, got {got}")]
    TooFewRuns { need: usize, got: usize },
    #[error("runs use different sampling intervals ({0} ms and {1} ms)")]
    MixedIntervals(u64, u64),
    #[error("run {0} has no power samples")]
    EmptySeries(String),
    #[error("{run}: invalid power {watts} W at index {index}")]
    InvalidPower { run: String, index: usize, watts: f64 },
    #[error("no conditions to schedule")]
    NoConditions,
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("nothing to plot")]
    NothingToPlot,
    #[error("plot data: {0}")]
    PlotData(String),
    #[error("condition {0:?} not found")]
    UnknownCondition(String),
}
