//! Accuracy scoring per question-type cell and the majority-answer baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetError};
use crate::model::qtype_step;

/// Fixed report columns: `(kb_related, qtype)`.
pub const COLUMNS: [(bool, u8); 12] = [
    (false, 0),
    (false, 1),
    (false, 2),
    (false, 3),
    (false, 4),
    (false, 5),
    (false, 6),
    (true, 2),
    (true, 3),
    (true, 4),
    (true, 5),
    (true, 6),
];

pub fn normalize_answer(a: &str) -> String {
    a.trim().to_lowercase()
}

/// Most frequent training answer per qtype; ties go to the smallest answer.
pub fn qtype_baseline(train: &Dataset) -> BTreeMap<u8, String> {
    let mut counts: BTreeMap<u8, BTreeMap<String, usize>> = BTreeMap::new();
    for p in &train.pairs {
        *counts.entry(p.qtype).or_default().entry(normalize_answer(&p.answer)).or_default() += 1;
    }
    counts
        .into_iter()
        .filter_map(|(q, answers)| {
            // max_by_key keeps the last maximum, so iterate answers in reverse order
            answers.into_iter().rev().max_by_key(|(_, c)| *c).map(|(a, _)| (q, a))
        })
        .collect()
}

/// Predictions of a per-qtype constant answer table for every pair of `d`.
pub fn baseline_predictions(baseline: &BTreeMap<u8, String>, d: &Dataset) -> BTreeMap<String, String> {
    d.pairs
        .iter()
        .filter_map(|p| baseline.get(&p.qtype).map(|a| (p.id.clone(), a.clone())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answer: String,
}

pub fn read_predictions<R: BufRead>(r: R, path: &Path) -> Result<BTreeMap<String, String>, DatasetError> {
    let mut out = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line).map_err(|e| DatasetError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(p.id, p.answer);
    }
    Ok(out)
}

pub fn predictions_to_jsonl(preds: &BTreeMap<String, String>) -> String {
    preds
        .iter()
        .map(|(id, answer)| {
            serde_json::to_string(&Prediction {
                id: id.clone(),
                answer: answer.clone(),
            })
            .expect("predictions serialize")
                + "\n"
        })
        .collect()
}

fn percent(correct: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| (correct as f64 * 10_000.0 / total as f64).round() / 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub kb_related: bool,
    pub step: u8,
    pub qtype: u8,
    pub correct: usize,
    pub total: usize,
    /// Percentage rounded to two decimals; absent for empty cells.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub cells: Vec<Cell>,
    pub correct: usize,
    pub total: usize,
    pub missing: usize,
    /// Correct over all samples.
    pub overall: Option<f64>,
    /// Mean of the non-empty cell accuracies.
    pub cell_mean: Option<f64>,
}

/// Exact-match accuracy of `preds` (id to answer) against `gold`. Missing
/// predictions count as wrong and are also counted in `missing`.
pub fn score_predictions(preds: &BTreeMap<String, String>, gold: &Dataset) -> AccuracyReport {
    let mut tally: BTreeMap<(bool, u8, u8), (usize, usize)> = COLUMNS
        .iter()
        .map(|&(kb, q)| ((kb, qtype_step(q).unwrap_or(0), q), (0, 0)))
        .collect();
    let mut missing = 0;
    for p in &gold.pairs {
        let e = tally.entry((p.kb_related, p.step, p.qtype)).or_default();
        e.1 += 1;
        match preds.get(&p.id) {
            Some(a) if normalize_answer(a) == normalize_answer(&p.answer) => e.0 += 1,
            Some(_) => {}
            None => missing += 1,
        }
    }
    let mut keys: Vec<(bool, u8, u8)> = COLUMNS.iter().map(|&(kb, q)| (kb, qtype_step(q).unwrap_or(0), q)).collect();
    let fixed: BTreeSet<(bool, u8, u8)> = keys.iter().copied().collect();
    keys.extend(tally.keys().filter(|k| !fixed.contains(k)).copied());
    let cells: Vec<Cell> = keys
        .iter()
        .map(|&(kb_related, step, qtype)| {
            let (correct, total) = tally[&(kb_related, step, qtype)];
            Cell {
                kb_related,
                step,
                qtype,
                correct,
                total,
                accuracy: percent(correct, total),
            }
        })
        .collect();
    let correct = cells.iter().map(|c| c.correct).sum();
    let total = cells.iter().map(|c| c.total).sum();
    let filled: Vec<f64> = cells.iter().filter(|c| c.total > 0).map(|c| c.correct as f64 / c.total as f64).collect();
    AccuracyReport {
        overall: percent(correct, total),
        cell_mean: (!filled.is_empty()).then(|| (filled.iter().sum::<f64>() / filled.len() as f64 * 10_000.0).round() / 100.0),
        cells,
        correct,
        total,
        missing,
    }
}

fn fmt_pct(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
}

impl AccuracyReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<15} {:>4} {:>5} {:>8} {:>7} {:>8}\n", "group", "step", "qtype", "correct", "total", "accuracy");
        for c in &self.cells {
            let group = if c.kb_related { "kb-related" } else { "kb-not-related" };
            writeln!(
                out,
                "{group:<15} {:>4} {:>5} {:>8} {:>7} {:>8}",
                c.step,
                c.qtype,
                c.correct,
                c.total,
                fmt_pct(c.accuracy)
            )
            .unwrap();
        }
        writeln!(out, "{:<15} {:>4} {:>5} {:>8} {:>7} {:>8}", "overall", "", "", self.correct, self.total, fmt_pct(self.overall)).unwrap();
        writeln!(out, "{:<15} {:>4} {:>5} {:>8} {:>7} {:>8}", "cell mean", "", "", "", "", fmt_pct(self.cell_mean)).unwrap();
        writeln!(out, "missing predictions: {}", self.missing).unwrap();
        out
    }
}
