use std::fmt;
use std::fs;
use std::path::Path;

use crate::trace::{read_csv, summarize, Trace};

use super::AnalysisError;

/// All runs of one condition, read from `<root>/<condition>/*.csv`.
#[derive(Debug, Clone)]
pub struct RunSet {
    pub condition: String,
    /// `(run id, trace)`, where the id is the file stem.
    pub runs: Vec<(String, Trace)>,
}

fn with_path(path: &Path, e: impl Into<AnalysisError>) -> AnalysisError {
    AnalysisError::File {
        path: path.to_path_buf(),
        source: Box::new(e.into()),
    }
}

/// Loads every condition directory under `root`, sorted by name. Files other
/// than `*.csv` are ignored.
pub fn load_runs(root: &Path) -> Result<Vec<RunSet>, AnalysisError> {
    let mut sets = Vec::new();
    let mut dirs: Vec<_> = fs::read_dir(root)
        .map_err(|e| with_path(root, e))?
        .filter_map(Result::ok)
        .filter(|e| e.path().is_dir())
        .collect();
    dirs.sort_by_key(|e| e.file_name());
    for dir in dirs {
        let mut files: Vec<_> = fs::read_dir(dir.path())
            .map_err(|e| with_path(&dir.path(), e))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        let mut runs = Vec::with_capacity(files.len());
        for f in files {
            let trace = read_csv(&f).map_err(|e| with_path(&f, e))?;
            let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            runs.push((id, trace));
        }
        if !runs.is_empty() {
            sets.push(RunSet {
                condition: dir.file_name().to_string_lossy().into_owned(),
                runs,
            });
        }
    }
    Ok(sets)
}

/// Per-condition table row over the run summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub condition: String,
    pub runs: usize,
    pub mean_energy_j: f64,
    /// Sample standard deviation; zero for a single run.
    pub std_energy_j: f64,
    pub mean_power_w: f64,
    pub mean_duration_s: f64,
}

pub fn summarize_conditions(sets: &[RunSet]) -> Result<Vec<ConditionSummary>, AnalysisError> {
    sets.iter()
        .map(|set| {
            let sums = set
                .runs
                .iter()
                .map(|(id, t)| {
                    summarize(t).map_err(|e| AnalysisError::File {
                        path: format!("{}/{id}", set.condition).into(),
                        source: Box::new(e.into()),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let n = sums.len() as f64;
            let mean = |f: &dyn Fn(&crate::trace::RunSummary) -> f64| sums.iter().map(f).sum::<f64>() / n;
            let mean_energy_j = mean(&|s| s.total_energy_j);
            let std_energy_j = if sums.len() > 1 {
                (sums.iter().map(|s| (s.total_energy_j - mean_energy_j).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Ok(ConditionSummary {
                condition: set.condition.clone(),
                runs: sums.len(),
                mean_energy_j,
                std_energy_j,
                mean_power_w: mean(&|s| s.avg_power_w),
                mean_duration_s: mean(&|s| s.duration_s),
            })
        })
        .collect()
}

impl fmt::Display for ConditionSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<16} {:>4} {:>12.4} {:>10.4} {:>10.4} {:>10.3}",
            self.condition, self.runs, self.mean_energy_j, self.std_energy_j, self.mean_power_w, self.mean_duration_s
        )
    }
}

impl ConditionSummary {
    pub const HEADER: &'static str = "condition        runs     energy J      std J    power W   duration s";
}
