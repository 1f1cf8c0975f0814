use super::{AnalysisError, PowerSeries};

/// Per-index statistics across runs, truncated to the shortest run.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub mean: Vec<f64>,
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
    pub n_runs: usize,
    pub interval_ms: u64,
}

impl AggregateCurve {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Quantile of sorted data by linear interpolation between order
/// statistics: position `h = (n - 1) p`, value
/// `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.
/// This is the default of R (type 7) and NumPy.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn aggregate(runs: &[PowerSeries]) -> Result<AggregateCurve, AnalysisError> {
    if runs.len() < 2 {
        return Err(AnalysisError::TooFewRuns {
            need: 2,
            got: runs.len(),
        });
    }
    let interval_ms = runs[0].interval_ms;
    if let Some(r) = runs.iter().find(|r| r.interval_ms != interval_ms) {
        return Err(AnalysisError::MixedIntervals(interval_ms, r.interval_ms));
    }
    let length = runs.iter().map(|r| r.watts.len()).min().unwrap_or(0);
    let mut curve = AggregateCurve {
        mean: Vec::with_capacity(length),
        q1: Vec::with_capacity(length),
        q3: Vec::with_capacity(length),
        n_runs: runs.len(),
        interval_ms,
    };
    let mut column = Vec::with_capacity(runs.len());
    for i in 0..length {
        column.clear();
        column.extend(runs.iter().map(|r| r.watts[i]));
        // Sorting first makes the mean independent of run order down to the
        // last bit.
        column.sort_by(f64::total_cmp);
        curve.mean.push(column.iter().sum::<f64>() / column.len() as f64);
        curve.q1.push(quantile(&column, 0.25));
        curve.q3.push(quantile(&column, 0.75));
    }
    Ok(curve)
}
