use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::experiment::{Algorithm, ExperimentSpec, SweepAxis};
use super::trial::{run_trial, TrialRecord};

/// Aggregate over the trials of one algorithm at one sweep value; one row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis: SweepAxis,
    pub algo: Algorithm,
    pub sweep_value: f64,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// Root mean square of the position errors of the successful trials.
    pub rmse_m: f64,
    pub median_m: f64,
    pub support_rate: f64,
    pub mean_delta_err: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub results_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub timings_csv: PathBuf,
}

/// Every trial of `spec`, sorted by run id and then algorithm.
pub fn run_trials(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let items: Vec<(f64, u64)> = spec
        .experiment
        .sweep_values
        .iter()
        .flat_map(|&v| (0..spec.experiment.trials as u64).map(move |i| (v, i)))
        .collect();
    let batches: Vec<Result<Vec<TrialRecord>>> = if spec.experiment.parallel {
        items.par_iter().map(|&(v, i)| run_trial(spec, v, i)).collect()
    } else {
        items.iter().map(|&(v, i)| run_trial(spec, v, i)).collect()
    };
    let mut records = Vec::new();
    for batch in batches {
        records.extend(batch?);
    }
    records.sort_by_key(|r| (r.run_id, r.algo));
    Ok(records)
}

/// Runs the experiment and writes `results.csv`, `summary.csv` and `timings.csv`.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepReport> {
    let dir = &spec.experiment.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let records = run_trials(spec)?;
    let summary = summarize(spec.experiment.sweep_axis, &records);
    let results_csv = dir.join("results.csv");
    let summary_csv = dir.join("summary.csv");
    let timings_csv = dir.join("timings.csv");
    write_rows(&results_csv, &records)?;
    write_rows(&summary_csv, &summary)?;
    write_timings(&timings_csv, &records)?;
    Ok(SweepReport {
        records,
        summary,
        results_csv,
        summary_csv,
        timings_csv,
    })
}

pub fn rmse(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Groups by algorithm and sweep value, in order of first appearance of the value.
pub fn summarize(axis: SweepAxis, records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut values: Vec<f64> = Vec::new();
    for r in records {
        if !values.iter().any(|v| v.to_bits() == r.sweep_value.to_bits()) {
            values.push(r.sweep_value);
        }
    }
    let mut rows = Vec::new();
    for algo in Algorithm::ALL {
        for &value in &values {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.algo == algo && r.sweep_value.to_bits() == value.to_bits())
                .collect();
            if group.is_empty() {
                continue;
            }
            let ok: Vec<f64> = group
                .iter()
                .filter(|r| !r.failed && r.pos_error_m.is_finite())
                .map(|r| r.pos_error_m)
                .collect();
            let failures = group.len() - ok.len();
            rows.push(SummaryRow {
                axis,
                algo,
                sweep_value: value,
                trials: group.len(),
                failures,
                failure_rate: failures as f64 / group.len() as f64,
                rmse_m: rmse(&ok),
                median_m: median(&ok),
                support_rate: group.iter().filter(|r| r.support_correct).count() as f64 / group.len() as f64,
                mean_delta_err: mean(group.iter().map(|r| r.delta_err).filter(|x| x.is_finite())),
                mean_iterations: mean(group.iter().map(|r| r.iterations as f64)),
            });
        }
    }
    rows
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_timings(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["run_id", "algo", "wall_ms"]).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.write_record([r.run_id.to_string(), r.algo.name().to_string(), format!("{:.3}", r.wall_ms)])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn read_results(path: &Path) -> Result<Vec<TrialRecord>> {
    read_rows(path)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    read_rows(path)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}
