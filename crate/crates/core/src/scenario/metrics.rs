//! Evaluation metrics: the lower-triangular accuracy matrix, backward
//! transfer, and the binarized healthy-vs-unhealthy F1 score.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::nn::{MultiHeadMlp, TaskId};
use crate::scalar::Scalar;

/// `a[n][q]` = test accuracy on mission n after learning q missions
/// (0-based, defined for n <= q). Entries stay `None` where a mission could
/// not be evaluated (e.g. its head was never created).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    entries: Vec<Vec<Option<f64>>>,
}

impl AccuracyMatrix {
    pub fn new(missions: usize) -> Self {
        Self { entries: vec![vec![None; missions]; missions] }
    }

    pub fn missions(&self) -> usize {
        self.entries.len()
    }

    pub fn set(&mut self, mission: usize, after: usize, accuracy: f64) -> Result<()> {
        if mission > after || after >= self.missions() {
            return Err(Error::invalid_input(format!(
                "entry ({mission}, {after}) is outside the lower triangle"
            )));
        }
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::invalid_input("accuracy must lie in [0, 1]"));
        }
        if mission == after && self.entries[mission][after].is_some() {
            return Err(Error::invalid_input(format!(
                "diagonal entry {mission} is written once and never rewritten"
            )));
        }
        self.entries[mission][after] = Some(accuracy);
        Ok(())
    }

    pub fn get(&self, mission: usize, after: usize) -> Option<f64> {
        self.entries.get(mission).and_then(|row| row.get(after).copied().flatten())
    }

    /// Accuracies after learning all `q` missions (the final column).
    pub fn final_column(&self, q: usize) -> Vec<Option<f64>> {
        (0..q).map(|n| self.get(n, q - 1)).collect()
    }

    /// Mean of the present entries in column `q - 1`.
    pub fn acc_avg(&self, q: usize) -> Option<f64> {
        let col: Vec<f64> = self.final_column(q).into_iter().flatten().collect();
        if col.is_empty() {
            None
        } else {
            Some(col.iter().sum::<f64>() / col.len() as f64)
        }
    }
}

/// Backward transfer after `q` missions (1-based count):
/// BWT = (1/(q-1)) * sum_{n=1}^{q-1} (a_n^q - a_n^n).
pub fn compute_bwt(matrix: &AccuracyMatrix, q: usize) -> Result<f64> {
    if q < 2 {
        return Err(Error::invalid_input("BWT needs at least two learned missions"));
    }
    let mut total = 0.0;
    for n in 0..q - 1 {
        let a_nq = matrix.get(n, q - 1).ok_or_else(|| {
            Error::invalid_input(format!("missing accuracy entry a[{n}][{}]", q - 1))
        })?;
        let a_nn = matrix
            .get(n, n)
            .ok_or_else(|| Error::invalid_input(format!("missing diagonal entry a[{n}][{n}]")))?;
        total += a_nq - a_nn;
    }
    Ok(total / (q - 1) as f64)
}

/// Per-class confusion counts keyed by (actual, predicted) local class ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: BTreeMap<(u32, u32), usize>,
}

impl Confusion {
    pub fn record(&mut self, actual: u32, predicted: u32) {
        *self.counts.entry((actual, predicted)).or_insert(0) += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn correct(&self) -> usize {
        self.counts
            .iter()
            .filter(|((a, p), _)| a == p)
            .map(|(_, &c)| c)
            .sum()
    }
}

/// Accuracy plus confusion counts of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub accuracy: f64,
    pub confusion: Confusion,
}

/// Scores `test` at `head` with argmax predictions. Labels are mapped to
/// head-local indices by subtracting `class_offset`; a label that maps
/// outside the head's current width can never be predicted and counts as
/// wrong (this is what collapses naive fine-tuning to zero on old missions
/// after class expansion).
pub fn evaluate<F: Scalar>(
    model: &MultiHeadMlp<F>,
    head: TaskId,
    test: &TabularDataset<F>,
    class_offset: u32,
) -> Result<EvalOutcome> {
    if test.is_empty() {
        return Err(Error::invalid_input("cannot evaluate on an empty test set"));
    }
    let probs = model.forward(test.features().view(), head)?;
    let mut confusion = Confusion::default();
    let mut correct = 0usize;
    for (i, &label) in test.labels().iter().enumerate() {
        if label < class_offset {
            return Err(Error::invalid_input(format!(
                "label {label} is below the class offset {class_offset}"
            )));
        }
        let actual = label - class_offset;
        let row = probs.row(i);
        let mut predicted = 0usize;
        for (k, &p) in row.iter().enumerate() {
            if p > row[predicted] {
                predicted = k;
            }
        }
        let predicted = predicted as u32;
        if predicted == actual {
            correct += 1;
        }
        confusion.record(actual, predicted);
    }
    Ok(EvalOutcome { accuracy: correct as f64 / test.n_rows() as f64, confusion })
}

/// Binarized F1 for one mission: positive = any class other than the healthy
/// one. With no positives anywhere (TP = FP = FN = 0) the score is defined
/// as 1.
pub fn binary_f1(confusion: &Confusion, healthy_local: u32) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&(actual, predicted), &count) in &confusion.counts {
        let actual_pos = actual != healthy_local;
        let predicted_pos = predicted != healthy_local;
        match (actual_pos, predicted_pos) {
            (true, true) => tp += count,
            (false, true) => fp += count,
            (true, false) => fn_ += count,
            (false, false) => {}
        }
    }
    if tp == 0 && fp == 0 && fn_ == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
}

/// Mean binarized F1 across missions; `healthy` gives each mission's healthy
/// local class id.
pub fn compute_avg_f1(confusions: &[Confusion], healthy: &[u32]) -> Result<f64> {
    if confusions.is_empty() || confusions.len() != healthy.len() {
        return Err(Error::invalid_input("one healthy class id per mission confusion"));
    }
    let total: f64 = confusions
        .iter()
        .zip(healthy)
        .map(|(c, &h)| binary_f1(c, h))
        .sum();
    Ok(total / confusions.len() as f64)
}
