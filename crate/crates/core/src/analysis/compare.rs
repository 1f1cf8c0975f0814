use std::fmt;

use super::{AggregateCurve, AnalysisError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub watts: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// Workload mean minus idle mean, per sample index.
    pub difference_w: Vec<f64>,
    /// Integral of `difference_w` over the common length.
    pub energy_difference_j: f64,
    pub workload_peak: Peak,
    pub idle_peak: Peak,
    pub interval_ms: u64,
}

fn peak(mean: &[f64]) -> Peak {
    // First index wins on ties.
    mean.iter()
        .enumerate()
        .fold(Peak { index: 0, watts: f64::NEG_INFINITY }, |best, (i, &w)| {
            if w > best.watts {
                Peak { index: i, watts: w }
            } else {
                best
            }
        })
}

pub fn compare(workload: &AggregateCurve, idle: &AggregateCurve) -> Result<ComparisonReport, AnalysisError> {
    if workload.interval_ms != idle.interval_ms {
        return Err(AnalysisError::MixedIntervals(workload.interval_ms, idle.interval_ms));
    }
    let n = workload.len().min(idle.len());
    let difference_w: Vec<f64> = (0..n).map(|i| workload.mean[i] - idle.mean[i]).collect();
    let dt = workload.interval_ms as f64 / 1000.0;
    Ok(ComparisonReport {
        energy_difference_j: difference_w.iter().sum::<f64>() * dt,
        difference_w,
        workload_peak: peak(&workload.mean),
        idle_peak: peak(&idle.mean),
        interval_ms: workload.interval_ms,
    })
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.difference_w.len();
        let mean_diff = if n == 0 { 0.0 } else { self.difference_w.iter().sum::<f64>() / n as f64 };
        writeln!(f, "indices compared:      {n} ({} ms each)", self.interval_ms)?;
        writeln!(f, "mean power difference: {mean_diff:.4} W")?;
        writeln!(f, "energy difference:     {:.4} J", self.energy_difference_j)?;
        writeln!(
            f,
            "workload peak:         {:.4} W at index {}",
            self.workload_peak.watts, self.workload_peak.index
        )?;
        write!(
            f,
            "baseline peak:         {:.4} W at index {}",
            self.idle_peak.watts, self.idle_peak.index
        )
    }
}
