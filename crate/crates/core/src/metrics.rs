//! Boundary detection scores: tolerance-matched precision, recall and F1,
//! plus the R-value, which penalizes over-segmentation.
//!
//! Matching is one-to-one and greedy in time order. Counts are summed over
//! utterances before any ratio is taken.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::Segmentation;

/// Default matching tolerance in seconds.
pub const DEFAULT_TOLERANCE: f64 = 0.020;

// Absorbs representation error in `frame * shift` products so that a
// difference of exactly one tolerance still counts as a hit.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TolerancePolicy {
    pub tolerance: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy { tolerance: DEFAULT_TOLERANCE }
    }
}

fn check_sorted(x: &[f64]) -> Result<()> {
    if x.windows(2).any(|w| !(w[0] <= w[1])) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::UnsortedBoundaries);
    }
    Ok(())
}

/// Number of one-to-one matches within `tol` seconds. A pair within
/// tolerance is taken immediately; otherwise the earlier time is skipped.
pub fn match_boundaries(pred: &[f64], reference: &[f64], tol: f64) -> Result<usize> {
    check_sorted(pred)?;
    check_sorted(reference)?;
    let (mut i, mut j, mut hits) = (0, 0, 0);
    while i < pred.len() && j < reference.len() {
        if (pred[i] - reference[j]).abs() <= tol + TIME_EPS {
            hits += 1;
            i += 1;
            j += 1;
        } else if pred[i] < reference[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(hits)
}

fn check_counts(hits: usize, n_pred: usize, n_ref: usize) -> Result<()> {
    if hits > n_pred.min(n_ref) {
        return Err(Error::InconsistentCounts { hits, n_pred, n_ref });
    }
    Ok(())
}

/// `(P, R, F1)` as fractions. An empty denominator yields 1 only when both
/// lists are empty; F1 is 0 when `P + R = 0`.
pub fn precision_recall_f1(hits: usize, n_pred: usize, n_ref: usize) -> Result<(f64, f64, f64)> {
    check_counts(hits, n_pred, n_ref)?;
    let both_empty = n_pred == 0 && n_ref == 0;
    let ratio = |d: usize| if d == 0 { if both_empty { 1.0 } else { 0.0 } } else { hits as f64 / d as f64 };
    let p = ratio(n_pred);
    let r = ratio(n_ref);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok((p, r, f1))
}

fn r_value_with_os(recall: f64, os: f64) -> f64 {
    let r1 = ((1.0 - recall).powi(2) + os * os).sqrt();
    let r2 = (-os + recall - 1.0) / std::f64::consts::SQRT_2;
    1.0 - (r1.abs() + r2.abs()) / 2.0
}

/// R-value from fractional precision and recall, with `OS = R/P - 1`.
pub fn r_value(precision: f64, recall: f64) -> Result<f64> {
    if precision == 0.0 {
        return Err(Error::ZeroPrecision);
    }
    Ok(r_value_with_os(recall, recall / precision - 1.0))
}

/// Scores in fractions; `Display` and the CSV row print percentages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub os: f64,
    pub r_value: f64,
    pub hits: usize,
    pub n_pred: usize,
    pub n_ref: usize,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "precision,recall,f1,os,r_value,hits,n_pred,n_ref";

    /// Derives every score from the counts. OS is `n_pred / n_ref - 1`, which
    /// equals `R/P - 1` whenever both are defined and stays finite at `P = 0`.
    pub fn from_counts(hits: usize, n_pred: usize, n_ref: usize) -> Result<Self> {
        let (precision, recall, f1) = precision_recall_f1(hits, n_pred, n_ref)?;
        let os = match (n_pred, n_ref) {
            (0, 0) => 0.0,
            (p, 0) => p as f64,
            (p, r) => p as f64 / r as f64 - 1.0,
        };
        Ok(EvalReport { precision, recall, f1, os, r_value: r_value_with_os(recall, os), hits, n_pred, n_ref })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.2},{:.2},{:.2},{:.2},{:.2},{},{},{}",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1,
            100.0 * self.os,
            100.0 * self.r_value,
            self.hits,
            self.n_pred,
            self.n_ref
        )
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "P {:.2}  R {:.2}  F1 {:.2}  OS {:.2}  R-value {:.2}  ({} hits, {} predicted, {} reference)",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1,
            100.0 * self.os,
            100.0 * self.r_value,
            self.hits,
            self.n_pred,
            self.n_ref
        )
    }
}

/// Micro-averaged report over utterances given boundary times in seconds.
/// Both maps must have the same keys.
pub fn evaluate_times(
    predictions: &BTreeMap<String, Vec<f64>>,
    references: &BTreeMap<String, Vec<f64>>,
    policy: TolerancePolicy,
) -> Result<EvalReport> {
    if let Some(k) = predictions.keys().find(|k| !references.contains_key(*k)) {
        return Err(Error::KeyMismatch(format!("`{k}` has no reference")));
    }
    if let Some(k) = references.keys().find(|k| !predictions.contains_key(*k)) {
        return Err(Error::KeyMismatch(format!("`{k}` has no prediction")));
    }
    let (mut hits, mut n_pred, mut n_ref) = (0, 0, 0);
    for (key, pred) in predictions {
        let reference = &references[key];
        hits += match_boundaries(pred, reference, policy.tolerance)?;
        n_pred += pred.len();
        n_ref += reference.len();
    }
    EvalReport::from_counts(hits, n_pred, n_ref)
}

/// [`evaluate_times`] on frame segmentations, converted with `frame_shift`.
pub fn evaluate_corpus(
    predictions: &BTreeMap<String, Segmentation>,
    references: &BTreeMap<String, Segmentation>,
    frame_shift: f64,
    policy: TolerancePolicy,
) -> Result<EvalReport> {
    let times = |m: &BTreeMap<String, Segmentation>| -> BTreeMap<String, Vec<f64>> {
        m.iter().map(|(k, s)| (k.clone(), s.times(frame_shift))).collect()
    };
    evaluate_times(&times(predictions), &times(references), policy)
}
