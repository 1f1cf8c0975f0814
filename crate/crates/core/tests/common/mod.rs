#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use wattrace::probes::session_schema;
use wattrace::probes::simulated::{ProfileSpec, SimulatedProbe};
use wattrace::sampler::{run_session, SamplerConfig};
use wattrace::timing::{ManualClock, StopSignal};
use wattrace::trace::SessionMeta;
use wattrace::{Probe, Trace};

pub const EPOCH_MS: u64 = 1_700_000_000_000;

/// A deterministic session on virtual time: sampled every `interval_ms`
/// from 0 until `duration_ms`, with the closing off-grid sample.
pub fn simulated_trace(spec: &ProfileSpec, duration_ms: u64, interval_ms: u64) -> Trace {
    let clock = Arc::new(ManualClock::stopping_at(EPOCH_MS, Duration::from_millis(duration_ms)));
    let mut probes: Vec<Box<dyn Probe>> = vec![Box::new(SimulatedProbe::new(spec.clone(), clock.clone()).unwrap())];
    let schema = session_schema(&probes);
    let config = SamplerConfig::new(interval_ms, schema.clone()).unwrap();
    let mut rows = Vec::new();
    run_session(&config, &mut probes, clock.as_ref(), &StopSignal::new(), &mut rows).unwrap();
    Trace {
        meta: SessionMeta {
            interval_ms: Some(interval_ms),
            ..SessionMeta::default()
        },
        schema,
        rows,
    }
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_wattrace")
}
