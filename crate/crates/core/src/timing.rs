//! Session clocks and the one-shot stop signal shared by the sampler and the
//! command runner.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

/// How a session was asked to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopKind {
    /// Normal end: the sampler takes one last off-grid sample.
    Finish,
    /// The session never really started (e.g. the command failed to spawn);
    /// no further rows are written.
    Abort,
}

/// One-shot stop flag. Cloning shares the same underlying flag; only the first
/// call to [`StopSignal::fire`] has any effect.
#[derive(Debug, Clone, Default)]
pub struct StopSignal {
    inner: Arc<(Mutex<Option<StopKind>>, Condvar)>,
}

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the flag. Returns `false` when it had already been set.
    pub fn fire(&self, kind: StopKind) -> bool {
        let (lock, cvar) = &*self.inner;
        let mut state = lock.lock().unwrap_or_else(|e| e.into_inner());
        if state.is_some() {
            return false;
        }
        *state = Some(kind);
        cvar.notify_all();
        true
    }

    pub fn get(&self) -> Option<StopKind> {
        *self.inner.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Blocks until the flag is set or `deadline` passes.
    fn wait_until_instant(&self, deadline: Instant) -> Option<StopKind> {
        let (lock, cvar) = &*self.inner;
        let mut state = lock.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if let Some(kind) = *state {
                return Some(kind);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            state = cvar
                .wait_timeout(state, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}

/// Time source for a measurement session.
///
/// `elapsed` is monotonic and starts at zero when the clock is created. The
/// wall-clock anchor is captured once so that `Time` cells stay strictly
/// increasing even if the system clock is adjusted mid-session.
pub trait Clock: Send + Sync {
    fn elapsed(&self) -> Duration;

    /// Unix epoch milliseconds corresponding to `elapsed() == 0`.
    fn epoch_base_ms(&self) -> u64;

    /// Waits until `deadline` (measured on this clock) or until the session
    /// is stopped. Returns `None` when the deadline was reached first.
    fn wait_until(&self, deadline: Duration, stop: &StopSignal) -> Option<StopKind>;
}

/// Real time, backed by [`Instant`].
#[derive(Debug, Clone)]
pub struct SystemClock {
    start: Instant,
    epoch_base_ms: u64,
}

impl SystemClock {
    pub fn start() -> Self {
        let epoch_base_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self {
            start: Instant::now(),
            epoch_base_ms,
        }
    }
}

impl Clock for SystemClock {
    fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }

    fn epoch_base_ms(&self) -> u64 {
        self.epoch_base_ms
    }

    fn wait_until(&self, deadline: Duration, stop: &StopSignal) -> Option<StopKind> {
        stop.wait_until_instant(self.start + deadline)
    }
}

/// Virtual time for deterministic sessions: waiting jumps straight to the
/// deadline, and the session finishes once `stop_at` is reached.
#[derive(Debug)]
pub struct ManualClock {
    now_ns: AtomicU64,
    stop_at: Option<Duration>,
    epoch_base_ms: u64,
}

impl ManualClock {
    pub fn new(epoch_base_ms: u64) -> Self {
        Self {
            now_ns: AtomicU64::new(0),
            stop_at: None,
            epoch_base_ms,
        }
    }

    /// A clock whose sessions end at `stop_at`.
    pub fn stopping_at(epoch_base_ms: u64, stop_at: Duration) -> Self {
        Self {
            stop_at: Some(stop_at),
            ..Self::new(epoch_base_ms)
        }
    }

    pub fn set(&self, t: Duration) {
        self.now_ns.store(t.as_nanos() as u64, Ordering::SeqCst);
    }

    pub fn advance(&self, dt: Duration) {
        self.now_ns.fetch_add(dt.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn elapsed(&self) -> Duration {
        Duration::from_nanos(self.now_ns.load(Ordering::SeqCst))
    }

    fn epoch_base_ms(&self) -> u64 {
        self.epoch_base_ms
    }

    fn wait_until(&self, deadline: Duration, stop: &StopSignal) -> Option<StopKind> {
        if let Some(kind) = stop.get() {
            return Some(kind);
        }
        match self.stop_at {
            Some(end) if deadline >= end => {
                self.set(end.max(self.elapsed()));
                Some(StopKind::Finish)
            }
            _ => {
                if deadline > self.elapsed() {
                    self.set(deadline);
                }
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_signal_fires_once() {
        let stop = StopSignal::new();
        assert!(stop.fire(StopKind::Finish));
        assert!(!stop.fire(StopKind::Abort));
        assert_eq!(stop.get(), Some(StopKind::Finish));
    }

    #[test]
    fn system_clock_wait_returns_early_on_stop() {
        let clock = SystemClock::start();
        let stop = StopSignal::new();
        let remote = stop.clone();
        let t = std::thread::spawn(move || {
            std::thread::sleep(Duration::from_millis(20));
            remote.fire(StopKind::Finish);
        });
        let got = clock.wait_until(Duration::from_secs(30), &stop);
        t.join().unwrap();
        assert_eq!(got, Some(StopKind::Finish));
        assert!(clock.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn system_clock_reaches_deadline() {
        let clock = SystemClock::start();
        let stop = StopSignal::new();
        assert_eq!(clock.wait_until(Duration::from_millis(15), &stop), None);
        assert!(clock.elapsed() >= Duration::from_millis(15));
    }

    #[test]
    fn manual_clock_jumps_and_stops() {
        let clock = ManualClock::stopping_at(0, Duration::from_millis(250));
        let stop = StopSignal::new();
        assert_eq!(clock.wait_until(Duration::from_millis(100), &stop), None);
        assert_eq!(clock.elapsed(), Duration::from_millis(100));
        assert_eq!(
            clock.wait_until(Duration::from_millis(300), &stop),
            Some(StopKind::Finish)
        );
        assert_eq!(clock.elapsed(), Duration::from_millis(250));
    }
}
