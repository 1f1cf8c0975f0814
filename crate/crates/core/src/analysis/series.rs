use crate::probes::MetricKind;
use crate::trace::{interval_energies, select_energy_source, SummaryError, Trace};

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    pub run_id: String,
    /// One value per sample index.
    pub watts: Vec<f64>,
    pub interval_ms: u64,
}

/// Nominal interval: the recorded one, else the median row spacing.
fn interval_ms(trace: &Trace) -> u64 {
    if let Some(i) = trace.meta.interval_ms {
        return i;
    }
    let mut deltas: Vec<f64> = trace.rows.iter().skip(1).map(|r| r.delta_ms).collect();
    if deltas.is_empty() {
        return 0;
    }
    deltas.sort_by(f64::total_cmp);
    deltas[deltas.len() / 2].round() as u64
}

/// Converts a trace to watts per sample index using the same column choice
/// as the run summary.
///
/// Counter sources are differenced, so the series has one value per interval
/// and the first sample (which has no preceding interval) is dropped. Power
/// sources are copied as sampled; absent cells are filled by linear
/// interpolation and leading or trailing absences are dropped.
pub fn power_series(trace: &Trace, run_id: impl Into<String>) -> Result<PowerSeries, AnalysisError> {
    let run_id = run_id.into();
    let source = select_energy_source(&trace.schema).ok_or(SummaryError::NoEnergyColumn)?;
    let cols = source.columns();
    let all_power = cols
        .iter()
        .all(|&c| trace.schema[c].kind == MetricKind::InstantaneousPower);

    let watts: Vec<f64> = if all_power {
        let mut total: Vec<Option<f64>> = vec![Some(0.0); trace.rows.len()];
        for &c in cols {
            let filled = interpolate(&trace.column(c).collect::<Vec<_>>());
            for (t, v) in total.iter_mut().zip(filled) {
                *t = t.zip(v).map(|(a, b)| a + b);
            }
        }
        total.into_iter().flatten().collect()
    } else {
        let mut energy: Vec<Option<f64>> = vec![Some(0.0); trace.rows.len().saturating_sub(1)];
        for &c in cols {
            for (e, v) in energy.iter_mut().zip(interval_energies(trace, c)?) {
                *e = e.zip(v).map(|(a, b)| a + b);
            }
        }
        energy
            .iter()
            .enumerate()
            .filter_map(|(k, e)| e.map(|e| e / (trace.rows[k + 1].delta_ms / 1000.0)))
            .collect()
    };

    if watts.is_empty() {
        return Err(AnalysisError::EmptySeries(run_id));
    }
    if let Some((index, &w)) = watts.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
        return Err(AnalysisError::InvalidPower {
            run: run_id,
            index,
            watts: w,
        });
    }
    Ok(PowerSeries {
        run_id,
        watts,
        interval_ms: interval_ms(trace),
    })
}

fn interpolate(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut out = values.to_vec();
    let present: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    for pair in present.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (values[a].unwrap(), values[b].unwrap());
        for (k, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            *slot = Some(va + (vb - va) * (k - a) as f64 / (b - a) as f64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::{CounterSpec, Domain, MetricDescriptor};
    use crate::sampler::Sample;
    use crate::trace::SessionMeta;

    fn trace(m: MetricDescriptor, values: &[Option<f64>]) -> Trace {
        Trace {
            meta: SessionMeta::default(),
            schema: vec![m],
            rows: values
                .iter()
                .enumerate()
                .map(|(i, v)| Sample {
                    delta_ms: if i == 0 { 0.0 } else { 100.0 },
                    time_ms: 100 * i as u64,
                    values: vec![*v],
                })
                .collect(),
        }
    }

    #[test]
    fn differenced_series_drops_leading_sample() {
        let m = MetricDescriptor::energy("PACKAGE_ENERGY", Domain::Package, CounterSpec::new(32, 1e-6).unwrap()).unwrap();
        let s = power_series(&trace(m, &[Some(0.0), Some(1.0), Some(2.0)]), "r").unwrap();
        assert_eq!(s.watts.len(), 2);
        for w in &s.watts {
            assert!((w - 10.0).abs() < 1e-9);
        }
        assert_eq!(s.interval_ms, 100);
    }

    #[test]
    fn power_column_is_copied() {
        let m = MetricDescriptor::power("SYSTEM_POWER", Domain::System).unwrap();
        let s = power_series(&trace(m, &[Some(3.5), Some(4.25), Some(1.0)]), "r").unwrap();
        assert_eq!(s.watts, vec![3.5, 4.25, 1.0]);
        let m = MetricDescriptor::power("SYSTEM_POWER", Domain::System).unwrap();
        let s = power_series(&trace(m, &[None, Some(2.0), None, Some(4.0), None]), "r").unwrap();
        assert_eq!(s.watts, vec![2.0, 3.0, 4.0]);
    }
}
