use std::fmt;

use thiserror::Error;

use crate::probes::{counter_delta_joules, CounterError, Domain, MetricDescriptor, MetricKind, RawCounterReading};

use super::Trace;

#[derive(Debug, Error, PartialEq)]
pub enum SummaryError {
    #[error("no energy or power column; the trace only has usage gauges")]
    NoEnergyColumn,
    #[error("need at least 2 rows to summarize, got {0}")]
    TooFewRows(usize),
    #[error("{0}: fewer than 2 readings")]
    TooFewReadings(String),
    #[error("{0} is not an energy or power column")]
    NotEnergy(String),
    #[error("no column named {0}")]
    UnknownMetric(String),
    #[error("{name} decreases from {prev} J to {next} J and has no wrap parameters")]
    Decreasing { name: String, prev: f64, next: f64 },
    #[error("trace spans zero time")]
    ZeroDuration,
    #[error(transparent)]
    Counter(#[from] CounterError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub duration_s: f64,
    pub total_energy_j: f64,
    pub avg_power_w: f64,
    pub sample_count: usize,
    /// Metric name(s) integrated; several package or GPU columns are summed
    /// and joined with `+`.
    pub energy_source: String,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Energy consumption in joules: {:.4} for {:.3} sec of execution ({:.4} W average, {} samples, source {})",
            self.total_energy_j, self.duration_s, self.avg_power_w, self.sample_count, self.energy_source
        )
    }
}

/// Columns a summary integrates, in priority order.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergySource {
    PackageEnergy(Vec<usize>),
    SystemPower(usize),
    PackagePower(Vec<usize>),
    Gpu(Vec<usize>),
}

impl EnergySource {
    pub fn columns(&self) -> &[usize] {
        match self {
            EnergySource::SystemPower(i) => std::slice::from_ref(i),
            EnergySource::PackageEnergy(v) | EnergySource::PackagePower(v) | EnergySource::Gpu(v) => v,
        }
    }
}

/// Picks the columns that best represent whole-run energy: package energy
/// counters, then system power, then package power, then GPU power/energy.
pub fn select_energy_source(schema: &[MetricDescriptor]) -> Option<EnergySource> {
    let find = |pred: &dyn Fn(&MetricDescriptor) -> bool| -> Vec<usize> {
        schema.iter().enumerate().filter(|(_, m)| pred(m)).map(|(i, _)| i).collect()
    };
    let package_energy = find(&|m| m.domain == Domain::Package && m.kind == MetricKind::CumulativeEnergy);
    if !package_energy.is_empty() {
        return Some(EnergySource::PackageEnergy(package_energy));
    }
    let system = find(&|m| m.domain == Domain::System && m.kind != MetricKind::Gauge);
    if let Some(&i) = system.first() {
        return Some(EnergySource::SystemPower(i));
    }
    let package_power = find(&|m| m.domain == Domain::Package && m.kind == MetricKind::InstantaneousPower);
    if !package_power.is_empty() {
        return Some(EnergySource::PackagePower(package_power));
    }
    // One column per GPU; prefer counters over power where a GPU has both.
    let mut gpus: Vec<(u32, usize, bool)> = schema
        .iter()
        .enumerate()
        .filter_map(|(i, m)| match (m.domain, m.kind) {
            (Domain::Gpu(g), MetricKind::CumulativeEnergy) => Some((g, i, false)),
            (Domain::Gpu(g), MetricKind::InstantaneousPower) => Some((g, i, true)),
            _ => None,
        })
        .collect();
    gpus.sort_by_key(|&(g, _, is_power)| (g, is_power));
    gpus.dedup_by_key(|&mut (g, _, _)| g);
    if !gpus.is_empty() {
        return Some(EnergySource::Gpu(gpus.into_iter().map(|(_, i, _)| i).collect()));
    }
    None
}

fn cumulative_delta(metric: &MetricDescriptor, prev: f64, next: f64) -> Result<f64, SummaryError> {
    match metric.counter {
        Some(spec) => {
            let a = RawCounterReading::from_joules(prev, spec, 0)?;
            let b = RawCounterReading::from_joules(next, spec, 0)?;
            Ok(counter_delta_joules(&a, &b)?)
        }
        None if next >= prev => Ok(next - prev),
        None => Err(SummaryError::Decreasing {
            name: metric.name.clone(),
            prev,
            next,
        }),
    }
}

/// Energy in joules spent in each interval between consecutive rows of one
/// column; element `k` covers rows `k..=k+1`.
///
/// Counter columns are differenced with wrap handling; power columns use the
/// trapezoid rule. Absent cells are bridged: the energy across a gap is
/// spread over its intervals in proportion to their length (power is
/// interpolated linearly). Intervals before the first or after the last
/// reading are `None`.
pub fn interval_energies(trace: &Trace, column: usize) -> Result<Vec<Option<f64>>, SummaryError> {
    let metric = &trace.schema[column];
    if metric.kind == MetricKind::Gauge {
        return Err(SummaryError::NotEnergy(metric.name.clone()));
    }
    let n = trace.rows.len();
    let mut out = vec![None; n.saturating_sub(1)];
    let present: Vec<(usize, f64)> = trace
        .column(column)
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    if present.len() < 2 {
        return Err(SummaryError::TooFewReadings(metric.name.clone()));
    }
    let dt = |k: usize| trace.rows[k + 1].delta_ms / 1000.0;
    for pair in present.windows(2) {
        let ((a, va), (b, vb)) = (pair[0], pair[1]);
        let span: f64 = (a..b).map(dt).sum();
        match metric.kind {
            MetricKind::CumulativeEnergy => {
                let e = cumulative_delta(metric, va, vb)?;
                for (k, slot) in out.iter_mut().enumerate().take(b).skip(a) {
                    let share = if span > 0.0 { dt(k) / span } else { 1.0 / (b - a) as f64 };
                    *slot = Some(e * share);
                }
            }
            MetricKind::InstantaneousPower => {
                let mut elapsed = 0.0;
                let at = |t: f64| if span > 0.0 { va + (vb - va) * t / span } else { va };
                for (k, slot) in out.iter_mut().enumerate().take(b).skip(a) {
                    let d = dt(k);
                    *slot = Some((at(elapsed) + at(elapsed + d)) / 2.0 * d);
                    elapsed += d;
                }
            }
            MetricKind::Gauge => unreachable!(),
        }
    }
    Ok(out)
}

pub fn summarize(trace: &Trace) -> Result<RunSummary, SummaryError> {
    if trace.rows.len() < 2 {
        return Err(SummaryError::TooFewRows(trace.rows.len()));
    }
    let source = select_energy_source(&trace.schema).ok_or(SummaryError::NoEnergyColumn)?;
    summarize_columns(trace, source.columns())
}

/// Summary over explicitly named energy or power columns, summed.
pub fn summarize_metrics(trace: &Trace, names: &[&str]) -> Result<RunSummary, SummaryError> {
    if trace.rows.len() < 2 {
        return Err(SummaryError::TooFewRows(trace.rows.len()));
    }
    let columns = names
        .iter()
        .map(|n| trace.metric_index(n).ok_or_else(|| SummaryError::UnknownMetric(n.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    summarize_columns(trace, &columns)
}

fn summarize_columns(trace: &Trace, columns: &[usize]) -> Result<RunSummary, SummaryError> {
    let mut total = 0.0;
    for &c in columns {
        total += interval_energies(trace, c)?.into_iter().flatten().sum::<f64>();
    }
    let duration_s = trace.duration_s();
    if duration_s <= 0.0 {
        return Err(SummaryError::ZeroDuration);
    }
    Ok(RunSummary {
        duration_s,
        total_energy_j: total,
        avg_power_w: total / duration_s,
        sample_count: trace.rows.len(),
        energy_source: columns
            .iter()
            .map(|&c| trace.schema[c].name.as_str())
            .collect::<Vec<_>>()
            .join("+"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::{CounterSpec, Unit};
    use crate::sampler::Sample;
    use crate::trace::SessionMeta;

    fn trace(schema: Vec<MetricDescriptor>, times: &[u64], cols: &[&[Option<f64>]]) -> Trace {
        let rows = times
            .iter()
            .enumerate()
            .map(|(i, &t)| Sample {
                delta_ms: if i == 0 { 0.0 } else { (t - times[i - 1]) as f64 },
                time_ms: t,
                values: cols.iter().map(|c| c[i]).collect(),
            })
            .collect();
        Trace {
            meta: SessionMeta::default(),
            schema,
            rows,
        }
    }

    fn pkg(bits: u32, unit: f64) -> MetricDescriptor {
        MetricDescriptor::energy("PACKAGE_ENERGY", Domain::Package, CounterSpec::new(bits, unit).unwrap()).unwrap()
    }

    #[test]
    fn cumulative_differences() {
        let t = trace(
            vec![pkg(64, 1e-6)],
            &[0, 100, 200],
            &[&[Some(100.0), Some(100.5), Some(101.2)]],
        );
        let s = summarize(&t).unwrap();
        assert!((s.total_energy_j - 1.2).abs() < 1e-9);
        assert_eq!(s.duration_s, 0.2);
        assert!((s.avg_power_w - 6.0).abs() < 1e-9);
        assert_eq!(s.energy_source, "PACKAGE_ENERGY");
    }

    #[test]
    fn constant_power_rectangle() {
        let times: Vec<u64> = (0..=100).map(|i| i * 100).collect();
        let col: Vec<Option<f64>> = times.iter().map(|_| Some(10.0)).collect();
        let t = trace(vec![MetricDescriptor::power("SYSTEM_POWER", Domain::System).unwrap()], &times, &[&col]);
        let s = summarize(&t).unwrap();
        assert!((s.total_energy_j - 100.0).abs() < 1e-9);
    }

    #[test]
    fn single_wrap_matches_unwrapped_total() {
        // 16-bit counter at 1 mJ/count: wraps at 65.536 J.
        let unit = 1e-3;
        let raws: [u64; 4] = [65_000, 65_500, 300, 900];
        let unwrapped = (65_500 - 65_000) + (65_536 - 65_500 + 300) + 600;
        let cells: Vec<Option<f64>> = raws.iter().map(|&r| Some(r as f64 * unit)).collect();
        let t = trace(vec![pkg(16, unit)], &[0, 100, 200, 300], &[&cells]);
        let s = summarize(&t).unwrap();
        assert_eq!(s.total_energy_j, unwrapped as f64 * unit);
    }

    #[test]
    fn gaps_are_bridged() {
        let t = trace(
            vec![pkg(64, 1e-6)],
            &[0, 100, 300, 400],
            &[&[Some(0.0), None, Some(3.0), Some(4.0)]],
        );
        let e = interval_energies(&t, 0).unwrap();
        assert_eq!(e.len(), 3);
        assert!((e[0].unwrap() - 1.0).abs() < 1e-9);
        assert!((e[1].unwrap() - 2.0).abs() < 1e-9);
        assert!((e[2].unwrap() - 1.0).abs() < 1e-9);
        let t = trace(
            vec![pkg(64, 1e-6)],
            &[0, 100, 200],
            &[&[None, Some(1.0), Some(2.0)]],
        );
        assert_eq!(interval_energies(&t, 0).unwrap()[0], None);
    }

    #[test]
    fn source_priority() {
        let sys = MetricDescriptor::power("SYSTEM_POWER", Domain::System).unwrap();
        let gpu = MetricDescriptor::power("GPU0_POWER", Domain::Gpu(0)).unwrap();
        let usage = MetricDescriptor::gauge("CPU_USAGE_0", Unit::Percent, Domain::Core(0)).unwrap();
        assert_eq!(
            select_energy_source(&[gpu.clone(), sys.clone(), pkg(32, 1.0)]),
            Some(EnergySource::PackageEnergy(vec![2]))
        );
        assert_eq!(select_energy_source(&[gpu.clone(), sys]), Some(EnergySource::SystemPower(1)));
        assert_eq!(select_energy_source(&[usage.clone(), gpu]), Some(EnergySource::Gpu(vec![1])));
        assert_eq!(select_energy_source(&[usage]), None);
    }

    #[test]
    fn errors() {
        let usage = MetricDescriptor::gauge("CPU_USAGE_0", Unit::Percent, Domain::Core(0)).unwrap();
        let t = trace(vec![usage], &[0, 100], &[&[Some(1.0), Some(2.0)]]);
        assert_eq!(summarize(&t), Err(SummaryError::NoEnergyColumn));
        let t = trace(vec![pkg(32, 1.0)], &[0], &[&[Some(1.0)]]);
        assert_eq!(summarize(&t), Err(SummaryError::TooFewRows(1)));
        let mut m = pkg(32, 1.0);
        m.counter = None;
        let t = trace(vec![m], &[0, 100], &[&[Some(2.0), Some(1.0)]]);
        assert!(matches!(summarize(&t), Err(SummaryError::Decreasing { .. })));
    }
}
