//! Deterministic power source for unprivileged runs and tests.
//!
//! A [`Profile`] describes power over session time; the probe exposes it both
//! as a wrapping energy counter (the exact integral, encoded like a RAPL
//! register) and as instantaneous power, so the two are consistent by
//! construction.
//!
//! Profile specs as accepted on the command line:
//!
//! ```text
//! constant:<watts>
//! step:<switch_s>:<before_w>:<after_w>
//! sine:<base_w>:<amplitude_w>:<period_s>
//! playback:<path>                 # CSV of `seconds,watts` points
//! ```
//!
//! optionally followed by `@key=value,...` with keys `unit` (joules per
//! count, default 1e-6), `width` (counter bits, default 32), `noise` (σ in
//! watts) and `seed`.

use std::f64::consts::TAU;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use super::capability::{CpuVendor, Platform, ProbeCapabilities};
use super::counter::{width_mask, RawCounterReading};
use super::metric::{CounterSpec, Domain, MetricDescriptor};
use super::{Probe, ProbeError};
use crate::timing::Clock;

pub const DEFAULT_UNIT_JOULES: f64 = 1e-6;
pub const DEFAULT_WIDTH_BITS: u32 = 32;
/// Noise is piecewise constant over buckets of this length.
pub const NOISE_BUCKET: Duration = Duration::from_millis(100);

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("empty profile spec")]
    Empty,
    #[error("unknown profile kind {0:?} (expected constant, step, sine or playback)")]
    UnknownKind(String),
    #[error("profile {kind} expects {expected} parameters, got {got}")]
    Arity {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid number {0:?}")]
    Number(String),
    #[error("{0}")]
    Invalid(String),
    #[error("playback line {line}: {message}")]
    Playback { line: usize, message: String },
    #[error("reading playback file {path}: {message}")]
    PlaybackFile { path: String, message: String },
}

/// Power as a function of time since session start.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant { watts: f64 },
    Step { switch_s: f64, before: f64, after: f64 },
    Sinusoid { base: f64, amplitude: f64, period_s: f64 },
    /// Piecewise-linear through `(seconds, watts)` points; held flat outside
    /// the covered range. Repeated times encode jumps.
    Playback { points: Vec<(f64, f64)>, cumulative: Vec<f64> },
}

impl Profile {
    pub fn playback(points: Vec<(f64, f64)>) -> Result<Self, ProfileError> {
        if points.is_empty() {
            return Err(ProfileError::Invalid("playback needs at least one point".into()));
        }
        for w in points.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(ProfileError::Invalid("playback times must be non-decreasing".into()));
            }
        }
        if let Some(&(t, w)) = points.iter().find(|(t, w)| !t.is_finite() || !w.is_finite() || *w < 0.0 || *t < 0.0) {
            return Err(ProfileError::Invalid(format!("bad playback point ({t}, {w})")));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = points[0].0 * points[0].1;
        cumulative.push(acc);
        for w in points.windows(2) {
            acc += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
            cumulative.push(acc);
        }
        Ok(Profile::Playback { points, cumulative })
    }

    fn validate(&self) -> Result<(), ProfileError> {
        let bad = |m: &str| Err(ProfileError::Invalid(m.to_string()));
        match *self {
            Profile::Constant { watts } if !(watts.is_finite() && watts >= 0.0) => bad("power must be finite and >= 0"),
            Profile::Step { switch_s, before, after }
                if !(switch_s.is_finite() && switch_s >= 0.0)
                    || !(before.is_finite() && before >= 0.0)
                    || !(after.is_finite() && after >= 0.0) =>
            {
                bad("step needs switch >= 0 and non-negative finite powers")
            }
            Profile::Sinusoid { base, amplitude, period_s } => {
                if !(period_s.is_finite() && period_s > 0.0) {
                    bad("sine period must be positive")
                } else if !(base.is_finite() && amplitude.is_finite()) || amplitude.abs() > base {
                    bad("sine needs |amplitude| <= base so power stays non-negative")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn power_at(&self, t: f64) -> f64 {
        match self {
            Profile::Constant { watts } => *watts,
            Profile::Step { switch_s, before, after } => {
                if t < *switch_s {
                    *before
                } else {
                    *after
                }
            }
            Profile::Sinusoid { base, amplitude, period_s } => base + amplitude * (TAU * t / period_s).sin(),
            Profile::Playback { points, .. } => {
                let i = points.partition_point(|p| p.0 <= t);
                if i == 0 {
                    points[0].1
                } else if i == points.len() {
                    points[i - 1].1
                } else {
                    let (t0, w0) = points[i - 1];
                    let (t1, w1) = points[i];
                    w0 + (w1 - w0) * (t - t0) / (t1 - t0)
                }
            }
        }
    }

    /// Joules from 0 to `t`.
    pub fn energy_until(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match self {
            Profile::Constant { watts } => watts * t,
            Profile::Step { switch_s, before, after } => {
                before * t.min(*switch_s) + after * (t - switch_s).max(0.0)
            }
            Profile::Sinusoid { base, amplitude, period_s } => {
                base * t + amplitude * period_s / TAU * (1.0 - (TAU * t / period_s).cos())
            }
            Profile::Playback { points, cumulative } => {
                let i = points.partition_point(|p| p.0 <= t);
                if i == 0 {
                    points[0].1 * t
                } else if i == points.len() {
                    cumulative[i - 1] + points[i - 1].1 * (t - points[i - 1].0)
                } else {
                    let (t0, w0) = points[i - 1];
                    let wt = self.power_at(t);
                    cumulative[i - 1] + 0.5 * (w0 + wt) * (t - t0)
                }
            }
        }
    }
}

/// Parses `seconds,watts` lines. Blank lines, `#` comments and a
/// non-numeric header line are skipped.
pub fn parse_playback(text: &str) -> Result<Vec<(f64, f64)>, ProfileError> {
    let mut points = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| ProfileError::Playback { line: n + 1, message };
        let mut fields = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err("expected two comma-separated fields".into()));
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(t), Ok(w)) => points.push((t, w)),
            _ if points.is_empty() && a.parse::<f64>().is_err() => continue,
            _ => return Err(err(format!("not a number pair: {line:?}"))),
        }
    }
    Ok(points)
}

/// Everything needed to build a simulated probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSpec {
    pub profile: Profile,
    pub unit_joules: f64,
    pub width_bits: u32,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl ProfileSpec {
    pub fn new(profile: Profile) -> Self {
        Self {
            profile,
            unit_joules: DEFAULT_UNIT_JOULES,
            width_bits: DEFAULT_WIDTH_BITS,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn constant(watts: f64) -> Self {
        Self::new(Profile::Constant { watts })
    }

    pub fn with_counter(mut self, unit_joules: f64, width_bits: u32) -> Self {
        self.unit_joules = unit_joules;
        self.width_bits = width_bits;
        self
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        self.profile.validate()?;
        CounterSpec::new(self.width_bits, self.unit_joules).map_err(|e| ProfileError::Invalid(e.to_string()))?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(ProfileError::Invalid("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

fn number(s: &str) -> Result<f64, ProfileError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ProfileError::Number(s.to_string()))
}

impl FromStr for ProfileSpec {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ProfileError::Empty);
        }
        let (body, options) = match s.rsplit_once('@') {
            Some((b, o)) => (b, Some(o)),
            None => (s, None),
        };
        let (kind, rest) = body.split_once(':').unwrap_or((body, ""));
        let params: Vec<&str> = if rest.is_empty() { Vec::new() } else { rest.split(':').collect() };
        let arity = |kind: &'static str, expected: usize| {
            if params.len() == expected {
                Ok(())
            } else {
                Err(ProfileError::Arity {
                    kind,
                    expected,
                    got: params.len(),
                })
            }
        };
        let profile = match kind {
            "constant" => {
                arity("constant", 1)?;
                Profile::Constant { watts: number(params[0])? }
            }
            "step" => {
                arity("step", 3)?;
                Profile::Step {
                    switch_s: number(params[0])?,
                    before: number(params[1])?,
                    after: number(params[2])?,
                }
            }
            "sine" | "sinusoid" => {
                arity("sine", 3)?;
                Profile::Sinusoid {
                    base: number(params[0])?,
                    amplitude: number(params[1])?,
                    period_s: number(params[2])?,
                }
            }
            "playback" => {
                if rest.is_empty() {
                    return Err(ProfileError::Arity {
                        kind: "playback",
                        expected: 1,
                        got: 0,
                    });
                }
                let text = std::fs::read_to_string(rest).map_err(|e| ProfileError::PlaybackFile {
                    path: rest.to_string(),
                    message: e.to_string(),
                })?;
                Profile::playback(parse_playback(&text)?)?
            }
            other => return Err(ProfileError::UnknownKind(other.to_string())),
        };
        let mut spec = ProfileSpec::new(profile);
        for opt in options.into_iter().flat_map(|o| o.split(',')).filter(|o| !o.is_empty()) {
            let (key, value) = opt
                .split_once('=')
                .ok_or_else(|| ProfileError::Invalid(format!("option {opt:?} is not key=value")))?;
            match key.trim() {
                "unit" => spec.unit_joules = number(value)?,
                "width" => {
                    spec.width_bits = value
                        .trim()
                        .parse()
                        .map_err(|_| ProfileError::Number(value.to_string()))?
                }
                "noise" => spec.noise_sigma = number(value)?,
                "seed" => spec.seed = value.trim().parse().map_err(|_| ProfileError::Number(value.to_string()))?,
                other => return Err(ProfileError::Invalid(format!("unknown option {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Seeded Gaussian noise, constant within each [`NOISE_BUCKET`], with a
/// running integral so the counter stays exact.
#[derive(Debug)]
struct NoiseTrack {
    dist: Normal<f64>,
    rng: ChaCha8Rng,
    values: Vec<f64>,
    prefix: Vec<f64>,
}

impl NoiseTrack {
    fn new(sigma: f64, seed: u64) -> Self {
        Self {
            dist: Normal::new(0.0, sigma).expect("sigma validated"),
            rng: ChaCha8Rng::seed_from_u64(seed),
            values: Vec::new(),
            prefix: vec![0.0],
        }
    }

    fn ensure(&mut self, bucket: usize) {
        let width = NOISE_BUCKET.as_secs_f64();
        while self.values.len() <= bucket {
            let v = self.dist.sample(&mut self.rng);
            let last = *self.prefix.last().unwrap();
            self.values.push(v);
            self.prefix.push(last + v * width);
        }
    }

    fn bucket_of(t: f64) -> usize {
        (t.max(0.0) / NOISE_BUCKET.as_secs_f64()).floor() as usize
    }

    fn power_at(&mut self, t: f64) -> f64 {
        let b = Self::bucket_of(t);
        self.ensure(b);
        self.values[b]
    }

    fn energy_until(&mut self, t: f64) -> f64 {
        let t = t.max(0.0);
        let b = Self::bucket_of(t);
        self.ensure(b);
        self.prefix[b] + self.values[b] * (t - b as f64 * NOISE_BUCKET.as_secs_f64())
    }
}

/// Power and energy of a profile plus optional noise.
#[derive(Debug)]
pub struct SimulatedSource {
    profile: Profile,
    noise: Option<NoiseTrack>,
}

impl SimulatedSource {
    pub fn new(spec: &ProfileSpec) -> Self {
        Self {
            profile: spec.profile.clone(),
            noise: (spec.noise_sigma > 0.0).then(|| NoiseTrack::new(spec.noise_sigma, spec.seed)),
        }
    }

    pub fn power_at(&mut self, t: f64) -> f64 {
        self.profile.power_at(t) + self.noise.as_mut().map_or(0.0, |n| n.power_at(t))
    }

    pub fn energy_until(&mut self, t: f64) -> f64 {
        self.profile.energy_until(t) + self.noise.as_mut().map_or(0.0, |n| n.energy_until(t))
    }
}

pub struct SimulatedProbe {
    source: SimulatedSource,
    counter: CounterSpec,
    clock: Arc<dyn Clock>,
    caps: ProbeCapabilities,
}

pub const SIM_ENERGY: &str = "PACKAGE_ENERGY";
pub const SIM_POWER: &str = "PACKAGE_POWER";

impl SimulatedProbe {
    pub fn new(spec: ProfileSpec, clock: Arc<dyn Clock>) -> Result<Self, ProfileError> {
        spec.validate()?;
        let counter = CounterSpec::new(spec.width_bits, spec.unit_joules)
            .map_err(|e| ProfileError::Invalid(e.to_string()))?;
        let mut caps = ProbeCapabilities::new(Platform::Simulated, CpuVendor::Other);
        caps.metrics = vec![
            MetricDescriptor::energy(SIM_ENERGY, Domain::Package, counter).expect("valid name"),
            MetricDescriptor::power(SIM_POWER, Domain::Package).expect("valid name"),
        ];
        Ok(Self {
            source: SimulatedSource::new(&spec),
            counter,
            clock,
            caps,
        })
    }

    fn now(&self) -> (f64, u64) {
        let t = self.clock.elapsed();
        (t.as_secs_f64(), t.as_nanos() as u64)
    }
}

impl Probe for SimulatedProbe {
    fn name(&self) -> &str {
        "simulated"
    }

    fn capabilities(&self) -> &ProbeCapabilities {
        &self.caps
    }

    fn read_counter(&mut self, metric: &MetricDescriptor) -> Result<RawCounterReading, ProbeError> {
        if metric.name != SIM_ENERGY {
            return Err(ProbeError::UnsupportedMetric(metric.name.clone()));
        }
        let (t, ts) = self.now();
        let joules = self.source.energy_until(t).max(0.0);
        let units = (joules / self.counter.unit_joules).floor();
        // u64 casts saturate, then the mask applies the hardware wrap.
        let raw = (units as u64) & width_mask(self.counter.width_bits);
        Ok(RawCounterReading::new(raw, self.counter.width_bits, self.counter.unit_joules, ts)?)
    }

    fn read_power_watts(&mut self, metric: &MetricDescriptor) -> Result<f64, ProbeError> {
        if metric.name != SIM_POWER {
            return Err(ProbeError::UnsupportedMetric(metric.name.clone()));
        }
        let (t, _) = self.now();
        Ok(self.source.power_at(t).max(0.0))
    }
}
