//! Data preservation: keep, per class, the training instances whose average
//! training loss is at or above the class's p-th percentile. High-loss
//! instances are the ones the model found informative, so they make the
//! strongest exemplars.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LossLedger;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreservationConfig {
    /// Percentile p of the per-class average-loss distribution; instances at
    /// or above the threshold are preserved (p = 70 keeps the top 30%).
    pub percentile: f64,
}

impl Default for PreservationConfig {
    fn default() -> Self {
        Self { percentile: 70.0 }
    }
}

impl PreservationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(Error::invalid_input("percentile must lie strictly between 0 and 100"));
        }
        Ok(())
    }
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p/100 * n)` of
/// the ascending sort. The epsilon guards against `p/100 * n` landing a hair
/// above an integer in floating point.
fn nearest_rank_threshold<F: Scalar>(sorted_ascending: &[F], percentile: f64) -> F {
    let n = sorted_ascending.len();
    let rank = (percentile / 100.0 * n as f64 - 1e-9).ceil() as usize;
    sorted_ascending[rank.clamp(1, n) - 1]
}

/// Selects the preserved subset from one mission's training data.
///
/// Average loss is `ledger.accumulated / epochs`. For each class `l` in
/// `classes` (in the given order), the threshold `t_l` is the p-th
/// percentile of that class's averages and every instance with average
/// `>= t_l` is kept, in stable row order. The output concatenates the
/// per-class picks class by class.
pub fn preserve_data<F: Scalar>(
    ledger: &LossLedger<F>,
    features: &Array2<F>,
    labels: &[u32],
    percentile: f64,
    classes: &[u32],
) -> Result<(Array2<F>, Vec<u32>)> {
    PreservationConfig { percentile }.validate()?;
    if ledger.len() != features.nrows() || labels.len() != features.nrows() {
        return Err(Error::invalid_input(format!(
            "ledger has {} slots for {} rows / {} labels",
            ledger.len(),
            features.nrows(),
            labels.len()
        )));
    }
    if let Some(orphan) = labels.iter().find(|l| !classes.contains(l)) {
        return Err(Error::invalid_input(format!(
            "label {orphan} present in the training data but absent from the class list"
        )));
    }
    let averages = ledger.averages()?;

    let mut keep: Vec<usize> = Vec::new();
    for &class in classes {
        let members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut class_averages: Vec<F> = members.iter().map(|&i| averages[i]).collect();
        class_averages.sort_by(|a, b| a.partial_cmp(b).expect("finite losses"));
        let threshold = nearest_rank_threshold(&class_averages, percentile);
        keep.extend(members.into_iter().filter(|&i| averages[i] >= threshold));
    }

    let rows = features.select(Axis(0), &keep);
    let kept_labels = keep.iter().map(|&i| labels[i]).collect();
    Ok((rows, kept_labels))
}
