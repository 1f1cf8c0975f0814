//! Command-wrapping energy profiler.
//!
//! A session polls every available hardware probe at a fixed interval while a
//! wrapped command runs and streams the readings to a CSV trace with a uniform
//! column layout on every platform. The [`analysis`] module turns collections
//! of traces into mean/IQR power curves for workload versus idle comparisons.

pub mod analysis;
pub mod cli;
pub mod probes;
pub mod runner;
pub mod sampler;
pub mod timing;
pub mod trace;

pub use probes::{
    counter_delta_joules, detect_probes, MetricDescriptor, MetricKind, Probe,
    ProbeCapabilities, RawCounterReading,
};
pub use sampler::{run_session, Sample, SamplerConfig};
pub use trace::{RunSummary, Trace};

/// Version string recorded in trace metadata.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
