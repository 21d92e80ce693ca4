//! Trace CSV, JSON-lines summaries and the final report table.

use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrialResult;
use crate::cmaes::GenerationRecord;
use crate::error::{Error, Result};
use crate::metrics::WelchTest;
use crate::reservoir::TopologyKind;

pub fn trace_csv(trial: &TrialResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# trial={}", trial.trial);
    let _ = writeln!(out, "# seed={}", trial.seeds.master);
    let _ = writeln!(out, "# topology={} n={}", trial.topology.kind, trial.topology.n);
    let _ = writeln!(out, "# task={}", trial.task.name());
    out.push_str(GenerationRecord::CSV_HEADER);
    out.push('\n');
    for r in &trial.trace {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// One JSON object per line, in trial order.
pub fn write_summaries(path: &Path, trials: &[TrialResult]) -> Result<()> {
    let mut text = String::new();
    for t in trials {
        text.push_str(&t.to_json_line()?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_summaries(path: &Path) -> Result<Vec<TrialResult>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// One cell of the report: the reported trial of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub topology: TopologyKind,
    pub neurons: usize,
    pub task: String,
    pub feedback: bool,
    pub mean: f64,
    pub std: f64,
    pub mean_original: Option<f64>,
    pub samples: Vec<f64>,
}

impl ReportEntry {
    pub fn from_trial(t: &TrialResult) -> Self {
        ReportEntry {
            topology: t.topology.kind,
            neurons: t.topology.n,
            task: t.task.name(),
            feedback: t.feedback,
            mean: t.mean_mse,
            std: t.std_mse,
            mean_original: t.mean_original_mse,
            samples: t.reevaluation_mse.clone(),
        }
    }

    pub fn row_label(&self) -> String {
        let fb = if self.feedback { ", feedback" } else { "" };
        format!("{} (n={}{fb})", self.topology, self.neurons)
    }
}

fn push_unique(v: &mut Vec<String>, s: String) {
    if !v.contains(&s) {
        v.push(s);
    }
}

/// Topology-by-task table of `mean ± std` test MSE. Mackey-Glass columns are
/// followed by the original-domain mean.
pub fn render_report(entries: &[ReportEntry]) -> String {
    let mut sorted: Vec<&ReportEntry> = entries.iter().collect();
    sorted.sort_by_key(|e| (TopologyKind::ALL.iter().position(|k| *k == e.topology), e.neurons, !e.feedback));
    let mut rows = Vec::new();
    let mut tasks = Vec::new();
    for e in &sorted {
        push_unique(&mut rows, e.row_label());
        push_unique(&mut tasks, e.task.clone());
    }
    let with_original: Vec<bool> = tasks
        .iter()
        .map(|t| entries.iter().any(|e| &e.task == t && e.mean_original.is_some()))
        .collect();

    let mut header = vec!["topology".to_string()];
    for (t, &orig) in tasks.iter().zip(&with_original) {
        header.push(format!("{t} MSE"));
        if orig {
            header.push(format!("{t} MSE (original)"));
        }
    }
    let mut table = vec![header];
    for label in &rows {
        let mut line = vec![label.clone()];
        for (t, &orig) in tasks.iter().zip(&with_original) {
            let cell = sorted.iter().find(|e| &e.row_label() == label && &e.task == t);
            line.push(cell.map_or("-".into(), |e| format!("{:.3e} ± {:.2e}", e.mean, e.std)));
            if orig {
                line.push(
                    cell.and_then(|e| e.mean_original)
                        .map_or("-".into(), |m| format!("{m:.3e}")),
                );
            }
        }
        table.push(line);
    }
    render_markdown(&table)
}

fn render_markdown(table: &[Vec<String>]) -> String {
    let cols = table[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        out.push('|');
        for (cell, w) in row.iter().zip(&widths) {
            let pad = w - cell.chars().count();
            let _ = write!(out, " {cell}{} |", " ".repeat(pad));
        }
        out.push('\n');
        if i == 0 {
            out.push('|');
            for w in &widths {
                let _ = write!(out, "{}|", "-".repeat(w + 2));
            }
            out.push('\n');
        }
    }
    out
}

/// Matrix of two-sided Welch p-values; undefined entries print as `-`.
pub fn render_welch_matrix(labels: &[String], matrix: &[Vec<Option<WelchTest>>]) -> String {
    let mut table = vec![std::iter::once("p-value".to_string()).chain(labels.iter().cloned()).collect::<Vec<_>>()];
    for (label, row) in labels.iter().zip(matrix) {
        let mut line = vec![label.clone()];
        line.extend(row.iter().map(|c| c.map_or("-".into(), |w| format!("{:.3e}", w.p))));
        table.push(line);
    }
    render_markdown(&table)
}
