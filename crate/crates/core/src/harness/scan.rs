//! One-dimensional sensitivity scans around a fixed configuration.
//!
//! Every grid point reuses the same per-repeat seeds, so differences between
//! rows reflect the scanned value and not the data realization.

use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::seeds::{self, Purpose};
use super::{hyperparameter_fitness, mean_std, ExperimentConfig, Protocol};
use crate::error::{Error, Result};
use crate::parallel::Executor;
use crate::reservoir::Hyperparameters;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub value: f64,
    /// Penalized test MSE per repeat.
    pub mse: Vec<f64>,
}

impl ScanRow {
    pub fn mean(&self) -> f64 {
        mean_std(&self.mse).0
    }

    pub fn median(&self) -> f64 {
        let mut v = self.mse.clone();
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        if v.len() % 2 == 1 {
            v[m]
        } else {
            0.5 * (v[m - 1] + v[m])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub parameter: String,
    pub repeats: usize,
    pub rows: Vec<ScanRow>,
}

impl ScanTable {
    /// Row with the lowest mean; earlier rows win ties.
    pub fn argmin(&self) -> Option<&ScanRow> {
        self.rows.iter().min_by(|a, b| a.mean().total_cmp(&b.mean()))
    }

    /// `#`-commented metadata, a header, then one line per grid value with
    /// summary columns followed by the raw samples.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# parameter={}", self.parameter);
        let _ = writeln!(out, "# repeats={}", self.repeats);
        out.push_str("value,mean,std,median");
        for i in 0..self.repeats {
            let _ = write!(out, ",mse_{i}");
        }
        out.push('\n');
        for row in &self.rows {
            let (m, s) = if row.mse.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&row.mse) };
            let med = if row.mse.is_empty() { f64::NAN } else { row.median() };
            let _ = write!(out, "{:e},{:e},{:e},{:e}", row.value, m, s, med);
            for v in &row.mse {
                let _ = write!(out, ",{v:e}");
            }
            out.push('\n');
        }
        out
    }
}

fn repeat_seeds(master: u64, repeats: usize) -> Result<Vec<u64>> {
    (0..repeats)
        .map(|r| seeds::derive(master, Purpose::Scan, 0, 0, r as u64))
        .collect()
}

fn run_grid<F>(parameter: &str, grid: &[f64], repeats: usize, master: u64, exec: &Executor, eval: F) -> Result<ScanTable>
where
    F: Fn(f64, u64) -> f64 + Sync + Send,
{
    let seeds = repeat_seeds(master, repeats)?;
    let jobs: Vec<(usize, f64, u64)> = grid
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| seeds.iter().map(move |&s| (i, v, s)))
        .collect();
    let values = exec.map(&jobs, |&(_, v, s)| eval(v, s));
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, &value)| ScanRow {
            value,
            mse: values[i * repeats..(i + 1) * repeats].to_vec(),
        })
        .collect();
    Ok(ScanTable {
        parameter: parameter.to_string(),
        repeats,
        rows,
    })
}

/// Scores `base` with one hyperparameter replaced by each grid value.
pub fn scan_parameter(
    base: &Hyperparameters,
    parameter: &str,
    grid: &[f64],
    cfg: &ExperimentConfig,
    repeats: usize,
    exec: &Executor,
) -> Result<ScanTable> {
    Hyperparameters::index_of(parameter)?;
    for &v in grid {
        base.with(parameter, v)?.validate()?;
    }
    let protocol = cfg.protocol();
    run_grid(parameter, grid, repeats, cfg.seed, exec, |v, s| {
        let hp = base.with(parameter, v).expect("name checked");
        hyperparameter_fitness(&hp, &protocol, s)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthKind {
    Washout,
    Train,
}

impl LengthKind {
    pub fn name(self) -> &'static str {
        match self {
            LengthKind::Washout => "washout",
            LengthKind::Train => "train",
        }
    }
}

impl FromStr for LengthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "washout" => Ok(LengthKind::Washout),
            "train" => Ok(LengthKind::Train),
            other => Err(Error::InvalidArgument(format!(
                "unknown length `{other}`; valid: washout, train"
            ))),
        }
    }
}

/// Scores `base` with the washout or training length set to each grid value.
/// A washout of zero is allowed; a training length of zero is not.
pub fn scan_lengths(
    base: &Hyperparameters,
    which: LengthKind,
    grid: &[usize],
    cfg: &ExperimentConfig,
    repeats: usize,
    exec: &Executor,
) -> Result<ScanTable> {
    base.validate()?;
    if which == LengthKind::Train && grid.contains(&0) {
        return Err(Error::InvalidArgument("training length must be >= 1".into()));
    }
    let protocol = cfg.protocol();
    let values: Vec<f64> = grid.iter().map(|&g| g as f64).collect();
    run_grid(which.name(), &values, repeats, cfg.seed, exec, |v, s| {
        let mut p: Protocol = protocol;
        match which {
            LengthKind::Washout => p.washout = v as usize,
            LengthKind::Train => p.train = v as usize,
        }
        hyperparameter_fitness(base, &p, s)
    })
}
