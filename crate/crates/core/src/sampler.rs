//! Fixed-interval sampling loop.
//!
//! Tick `k` targets `start + k * interval`; a slow read delays only its own
//! tick. Deadlines that are already past when a tick finishes are skipped
//! rather than back-filled, which shows up as a larger `delta_ms`.

use std::collections::HashSet;
use std::io;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

use crate::probes::{read_cell, MetricDescriptor, Probe};
use crate::timing::{Clock, StopKind, StopSignal};

pub const DEFAULT_INTERVAL_MS: u64 = 100;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("interval must be at least 1 ms")]
    ZeroInterval,
    #[error("duplicate metric {0} in session schema")]
    DuplicateMetric(String),
    #[error("no probe provides metric {0}")]
    MissingMetric(String),
    #[error("writing sample")]
    Sink(#[from] io::Error),
    #[error("sampling thread panicked")]
    Panicked,
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub interval: Duration,
    /// Session schema; its order is the column order for the whole session.
    pub metrics: Vec<MetricDescriptor>,
    /// Take one extra off-grid sample when the session finishes so the tail
    /// of the last interval is not lost.
    pub final_sample: bool,
}

impl SamplerConfig {
    pub fn new(interval_ms: u64, metrics: Vec<MetricDescriptor>) -> Result<Self, SamplerError> {
        if interval_ms == 0 {
            return Err(SamplerError::ZeroInterval);
        }
        let mut seen = HashSet::new();
        if let Some(dup) = metrics.iter().find(|m| !seen.insert(m.name.as_str())) {
            return Err(SamplerError::DuplicateMetric(dup.name.clone()));
        }
        Ok(Self {
            interval: Duration::from_millis(interval_ms),
            metrics,
            final_sample: true,
        })
    }

    pub fn without_final_sample(mut self) -> Self {
        self.final_sample = false;
        self
    }

    pub fn interval_ms(&self) -> u64 {
        self.interval.as_millis() as u64
    }
}

/// One row of a trace. `values` is aligned with the session schema; a failed
/// read is `None`, never zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub delta_ms: f64,
    pub time_ms: u64,
    pub values: Vec<Option<f64>>,
}

/// Destination for samples as they are taken.
pub trait SampleSink {
    fn accept(&mut self, sample: &Sample) -> io::Result<()>;
}

impl SampleSink for Vec<Sample> {
    fn accept(&mut self, sample: &Sample) -> io::Result<()> {
        self.push(sample.clone());
        Ok(())
    }
}

impl<S: SampleSink + ?Sized> SampleSink for Box<S> {
    fn accept(&mut self, sample: &Sample) -> io::Result<()> {
        (**self).accept(sample)
    }
}

/// Forwards every sample to both sinks.
pub struct Tee<A, B>(pub A, pub B);

impl<A: SampleSink, B: SampleSink> SampleSink for Tee<A, B> {
    fn accept(&mut self, sample: &Sample) -> io::Result<()> {
        self.0.accept(sample)?;
        self.1.accept(sample)
    }
}

impl<S: SampleSink> SampleSink for Option<S> {
    fn accept(&mut self, sample: &Sample) -> io::Result<()> {
        match self {
            Some(s) => s.accept(sample),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionStats {
    pub samples: usize,
    /// Grid ticks skipped because the previous tick overran them.
    pub missed_ticks: usize,
    pub failed_reads: usize,
    /// Mean of |actual - ideal| over on-grid ticks.
    pub mean_lateness: Duration,
    pub max_lateness: Duration,
}

struct Route {
    probe: usize,
    metric: MetricDescriptor,
}

fn build_routes(config: &SamplerConfig, probes: &[Box<dyn Probe>]) -> Result<Vec<Route>, SamplerError> {
    config
        .metrics
        .iter()
        .map(|m| {
            probes
                .iter()
                .position(|p| p.capabilities().contains(&m.name))
                .map(|probe| Route {
                    probe,
                    metric: m.clone(),
                })
                .ok_or_else(|| SamplerError::MissingMetric(m.name.clone()))
        })
        .collect()
}

struct Ticker<'a> {
    routes: Vec<Route>,
    probes: &'a mut [Box<dyn Probe>],
    clock: &'a dyn Clock,
    prev: Option<(Duration, u64)>,
    warned: Vec<bool>,
    stats: SessionStats,
}

impl Ticker<'_> {
    fn take(&mut self, at: Duration) -> Option<Sample> {
        let time_ms = self.clock.epoch_base_ms() + at.as_millis() as u64;
        let delta_ms = match self.prev {
            Some((_, prev_ms)) if time_ms <= prev_ms => return None,
            Some((prev_at, _)) => (at - prev_at).as_secs_f64() * 1000.0,
            None => 0.0,
        };
        for p in self.probes.iter_mut() {
            p.begin_tick();
        }
        let mut values = Vec::with_capacity(self.routes.len());
        for (i, route) in self.routes.iter().enumerate() {
            match read_cell(self.probes[route.probe].as_mut(), &route.metric) {
                Ok(v) => values.push(Some(v)),
                Err(e) => {
                    self.stats.failed_reads += 1;
                    if !self.warned[i] {
                        log::warn!("{}: read failed, leaving cells empty: {e}", route.metric.name);
                        self.warned[i] = true;
                    }
                    values.push(None);
                }
            }
        }
        self.prev = Some((at, time_ms));
        self.stats.samples += 1;
        Some(Sample {
            delta_ms,
            time_ms,
            values,
        })
    }
}

/// Samples every metric in `config` until `stop` fires (or the clock ends the
/// session). The first sample is taken immediately.
pub fn run_session(
    config: &SamplerConfig,
    probes: &mut [Box<dyn Probe>],
    clock: &dyn Clock,
    stop: &StopSignal,
    sink: &mut dyn SampleSink,
) -> Result<SessionStats, SamplerError> {
    run_session_with(config, probes, clock, stop, sink, || {})
}

fn run_session_with(
    config: &SamplerConfig,
    probes: &mut [Box<dyn Probe>],
    clock: &dyn Clock,
    stop: &StopSignal,
    sink: &mut dyn SampleSink,
    on_first: impl FnOnce(),
) -> Result<SessionStats, SamplerError> {
    if config.interval.is_zero() {
        return Err(SamplerError::ZeroInterval);
    }
    let routes = build_routes(config, probes)?;
    let warned = vec![false; routes.len()];
    let mut t = Ticker {
        routes,
        probes,
        clock,
        prev: None,
        warned,
        stats: SessionStats::default(),
    };
    let interval = config.interval;
    let mut total_lateness = Duration::ZERO;
    let mut on_grid = 0u32;
    let mut ideal = Duration::ZERO;
    let mut on_first = Some(on_first);

    loop {
        let now = clock.elapsed();
        let late = now.saturating_sub(ideal);
        total_lateness += late;
        t.stats.max_lateness = t.stats.max_lateness.max(late);
        on_grid += 1;
        if let Some(sample) = t.take(now) {
            sink.accept(&sample)?;
        }
        if let Some(f) = on_first.take() {
            f();
        }

        let after = clock.elapsed();
        let next_k = (after.as_nanos() / interval.as_nanos()) as u32 + 1;
        let ideal_k = (ideal.as_nanos() / interval.as_nanos()) as u32;
        t.stats.missed_ticks += (next_k - ideal_k - 1) as usize;
        ideal = interval * next_k;

        match clock.wait_until(ideal, stop) {
            None => continue,
            Some(StopKind::Abort) => break,
            Some(StopKind::Finish) => {
                if config.final_sample {
                    if let Some(sample) = t.take(clock.elapsed()) {
                        sink.accept(&sample)?;
                    }
                }
                break;
            }
        }
    }
    t.stats.mean_lateness = total_lateness / on_grid.max(1);
    Ok(t.stats)
}

/// A session running on its own thread.
pub struct SessionHandle<S> {
    stop: StopSignal,
    thread: JoinHandle<(Result<SessionStats, SamplerError>, S)>,
}

impl<S: SampleSink + Send + 'static> SessionHandle<S> {
    /// Starts sampling on a new thread and returns once the first sample has
    /// been handed to `sink` (or the session failed to start).
    pub fn spawn(
        config: SamplerConfig,
        mut probes: Vec<Box<dyn Probe>>,
        clock: Arc<dyn Clock>,
        mut sink: S,
    ) -> Self {
        let stop = StopSignal::new();
        let thread_stop = stop.clone();
        let (started_tx, started_rx) = mpsc::channel();
        let thread = thread::Builder::new()
            .name("sampler".into())
            .spawn(move || {
                let result = run_session_with(&config, &mut probes, clock.as_ref(), &thread_stop, &mut sink, || {
                    let _ = started_tx.send(());
                });
                (result, sink)
            })
            .expect("spawning sampler thread");
        // An Err here means the thread exited before sampling; join reports why.
        let _ = started_rx.recv();
        Self { stop, thread }
    }

    pub fn stop_signal(&self) -> StopSignal {
        self.stop.clone()
    }

    pub fn stop(&self, kind: StopKind) {
        self.stop.fire(kind);
    }

    pub fn join(self) -> (Result<SessionStats, SamplerError>, Option<S>) {
        match self.thread.join() {
            Ok((result, sink)) => (result, Some(sink)),
            Err(_) => (Err(SamplerError::Panicked), None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::simulated::{ProfileSpec, SimulatedProbe};
    use crate::probes::session_schema;
    use crate::timing::{ManualClock, SystemClock};

    fn sim(clock: Arc<dyn Clock>, watts: f64) -> Vec<Box<dyn Probe>> {
        vec![Box::new(SimulatedProbe::new(ProfileSpec::constant(watts), clock).unwrap())]
    }

    fn manual_session(stop_at_ms: u64, interval_ms: u64, final_sample: bool) -> Vec<Sample> {
        let clock = Arc::new(ManualClock::stopping_at(1_700_000_000_000, Duration::from_millis(stop_at_ms)));
        let mut probes = sim(clock.clone(), 10.0);
        let mut config = SamplerConfig::new(interval_ms, session_schema(&probes)).unwrap();
        config.final_sample = final_sample;
        let mut rows = Vec::new();
        run_session(&config, &mut probes, clock.as_ref(), &StopSignal::new(), &mut rows).unwrap();
        rows
    }

    #[test]
    fn eleven_grid_samples_in_1050_ms() {
        let rows = manual_session(1050, 100, false);
        assert_eq!(rows.len(), 11);
        assert_eq!(rows[0].time_ms, 1_700_000_000_000);
        assert_eq!(rows[10].time_ms, 1_700_000_001_000);
        // The final off-grid sample adds one more row at the stop time.
        let rows = manual_session(1050, 100, true);
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[11].time_ms, 1_700_000_001_050);
        assert_eq!(rows[11].delta_ms, 50.0);
    }

    #[test]
    fn stop_before_first_interval_gives_one_grid_sample() {
        let rows = manual_session(40, 100, false);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].delta_ms, 0.0);
    }

    #[test]
    fn stop_signal_already_fired() {
        let clock = Arc::new(SystemClock::start());
        let mut probes = sim(clock.clone(), 1.0);
        let config = SamplerConfig::new(100, session_schema(&probes)).unwrap().without_final_sample();
        let stop = StopSignal::new();
        stop.fire(StopKind::Finish);
        let mut rows = Vec::new();
        run_session(&config, &mut probes, clock.as_ref(), &stop, &mut rows).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn constant_power_cells_step_by_one_joule() {
        let rows = manual_session(2000, 100, true);
        let energy: Vec<f64> = rows.iter().map(|r| r.values[0].unwrap()).collect();
        for w in energy.windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() < 1e-5, "{w:?}");
        }
        for w in rows.windows(2) {
            assert_eq!(w[1].delta_ms, (w[1].time_ms - w[0].time_ms) as f64);
        }
    }

    #[test]
    fn schema_stability_and_absent_cells() {
        struct Flaky(crate::probes::ProbeCapabilities, u32);
        impl Probe for Flaky {
            fn name(&self) -> &str {
                "flaky"
            }
            fn capabilities(&self) -> &crate::probes::ProbeCapabilities {
                &self.0
            }
            fn read_gauge(&mut self, _: &MetricDescriptor) -> Result<f64, crate::probes::ProbeError> {
                self.1 += 1;
                if self.1.is_multiple_of(2) {
                    Err(crate::probes::ProbeError::Unavailable("flaky".into()))
                } else {
                    Ok(1.0)
                }
            }
        }
        use crate::probes::{CpuVendor, Domain, Platform, ProbeCapabilities, Unit};
        let mut caps = ProbeCapabilities::new(Platform::Simulated, CpuVendor::Other);
        caps.metrics.push(MetricDescriptor::gauge("X_USAGE", Unit::Percent, Domain::System).unwrap());
        let clock = Arc::new(ManualClock::stopping_at(0, Duration::from_millis(500)));
        let mut probes: Vec<Box<dyn Probe>> = vec![Box::new(Flaky(caps, 0))];
        probes.extend(sim(clock.clone(), 1.0));
        let config = SamplerConfig::new(100, session_schema(&probes)).unwrap();
        let mut rows = Vec::new();
        let stats = run_session(&config, &mut probes, clock.as_ref(), &StopSignal::new(), &mut rows).unwrap();
        assert!(rows.iter().all(|r| r.values.len() == 3));
        assert!(rows.iter().any(|r| r.values[2].is_none()));
        assert!(rows.iter().any(|r| r.values[2] == Some(1.0)));
        assert_eq!(stats.failed_reads, rows.iter().filter(|r| r.values[2].is_none()).count());
    }

    #[test]
    fn missing_metric_rejected_up_front() {
        let clock = Arc::new(ManualClock::new(0));
        let mut probes = sim(clock.clone(), 1.0);
        let m = MetricDescriptor::power("GPU0_POWER", crate::probes::Domain::Gpu(0)).unwrap();
        let config = SamplerConfig::new(100, vec![m]).unwrap();
        let err = run_session(&config, &mut probes, clock.as_ref(), &StopSignal::new(), &mut Vec::new()).unwrap_err();
        assert!(matches!(err, SamplerError::MissingMetric(_)));
    }

    #[test]
    fn config_validation() {
        assert!(matches!(SamplerConfig::new(0, vec![]), Err(SamplerError::ZeroInterval)));
        let m = MetricDescriptor::power("A", crate::probes::Domain::System).unwrap();
        assert!(matches!(
            SamplerConfig::new(10, vec![m.clone(), m]),
            Err(SamplerError::DuplicateMetric(_))
        ));
    }

    #[test]
    fn handle_runs_in_background_and_stops() {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock::start());
        let probes = sim(clock.clone(), 5.0);
        let config = SamplerConfig::new(20, session_schema(&probes)).unwrap();
        let handle = SessionHandle::spawn(config, probes, clock, Vec::<Sample>::new());
        thread::sleep(Duration::from_millis(210));
        handle.stop(StopKind::Finish);
        let (stats, rows) = handle.join();
        let stats = stats.unwrap();
        let rows = rows.unwrap();
        assert_eq!(stats.samples, rows.len());
        assert!((9..=14).contains(&rows.len()), "{}", rows.len());
        assert!(rows.windows(2).all(|w| w[1].time_ms > w[0].time_ms));
    }

    #[test]
    fn abort_skips_final_sample() {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock::start());
        let probes = sim(clock.clone(), 5.0);
        let config = SamplerConfig::new(1000, session_schema(&probes)).unwrap();
        let handle = SessionHandle::spawn(config, probes, clock, Vec::<Sample>::new());
        thread::sleep(Duration::from_millis(5));
        handle.stop(StopKind::Abort);
        let (_, rows) = handle.join();
        assert_eq!(rows.unwrap().len(), 1);
    }
}
