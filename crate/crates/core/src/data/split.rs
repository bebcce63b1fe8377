//! Stratified time split: per source entity, the first fraction of rows (in
//! file order) becomes training data, the next slice validation, the rest
//! test. No shuffling — order is time.

use super::TabularDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.70, 0.10, 0.20);

/// Train/validation/test views of one mission's data.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset<F: Scalar> {
    pub train: TabularDataset<F>,
    pub validation: TabularDataset<F>,
    pub test: TabularDataset<F>,
    pub split_fractions: (f64, f64, f64),
}

/// Splits `data` per entity into time-ordered train/validation/test blocks.
///
/// Validation and test take `floor(fraction * n)` rows each; the remainder
/// goes to train. Rows without an entity column are treated as one entity.
pub fn stratified_time_split<F: Scalar>(
    data: &TabularDataset<F>,
    fractions: (f64, f64, f64),
) -> Result<SplitDataset<F>> {
    let (f_tr, f_val, f_te) = fractions;
    if f_tr <= 0.0 || f_val <= 0.0 || f_te <= 0.0 {
        return Err(Error::invalid_input("split fractions must be positive"));
    }
    if (f_tr + f_val + f_te - 1.0).abs() > 1e-9 {
        return Err(Error::invalid_input("split fractions must sum to 1"));
    }

    // Entities in order of first appearance; rows stay in file order inside
    // each entity.
    let mut order: Vec<u32> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    match data.entities() {
        Some(entities) => {
            for (row, &e) in entities.iter().enumerate() {
                match order.iter().position(|&o| o == e) {
                    Some(pos) => groups[pos].push(row),
                    None => {
                        order.push(e);
                        groups.push(vec![row]);
                    }
                }
            }
        }
        None => {
            order.push(0);
            groups.push((0..data.n_rows()).collect());
        }
    }

    let mut train_rows = Vec::new();
    let mut val_rows = Vec::new();
    let mut test_rows = Vec::new();
    for (entity, rows) in order.iter().zip(&groups) {
        let n = rows.len();
        if n < 3 {
            return Err(Error::invalid_input(format!(
                "entity {entity} has only {n} row(s); at least 3 are required to split"
            )));
        }
        let n_val = (f_val * n as f64).floor() as usize;
        let n_te = (f_te * n as f64).floor() as usize;
        let n_tr = n - n_val - n_te;
        train_rows.extend_from_slice(&rows[..n_tr]);
        val_rows.extend_from_slice(&rows[n_tr..n_tr + n_val]);
        test_rows.extend_from_slice(&rows[n_tr + n_val..]);
    }

    Ok(SplitDataset {
        train: data.select_rows(&train_rows)?,
        validation: data.select_rows(&val_rows)?,
        test: data.select_rows(&test_rows)?,
        split_fractions: fractions,
    })
}
