//! Min-max normalization. Fitted per feature on training data; the stored
//! state is reused verbatim on validation/test data, so later missions may
//! legitimately land outside [0, 1] — that out-of-range signal is the
//! distribution shift and is deliberately not clipped.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-feature minimum and maximum captured at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationState<F> {
    pub min: Vec<F>,
    pub max: Vec<F>,
}

impl<F: Scalar> NormalizationState<F> {
    pub fn n_features(&self) -> usize {
        self.min.len()
    }
}

/// Fits min/max on `data` and returns the rescaled dataset plus the state.
///
/// Each feature maps to (x - min) / (max - min); a constant feature maps to
/// zero everywhere (0/0 is defined as 0: the feature carries no information).
pub fn normalize_fit_apply<F: Scalar>(
    data: &TabularDataset<F>,
) -> Result<(TabularDataset<F>, NormalizationState<F>)> {
    if data.is_empty() {
        return Err(Error::invalid_input("cannot fit normalization on an empty dataset"));
    }
    let d = data.n_features();
    let mut min = vec![F::infinity(); d];
    let mut max = vec![F::neg_infinity(); d];
    for row in data.features().rows() {
        for (j, &v) in row.iter().enumerate() {
            if v < min[j] {
                min[j] = v;
            }
            if v > max[j] {
                max[j] = v;
            }
        }
    }
    let state = NormalizationState { min, max };
    let out = normalize_apply(&state, data)?;
    Ok((out, state))
}

/// Applies a previously fitted state. Out-of-range inputs produce values
/// outside [0, 1]; no clipping is performed.
pub fn normalize_apply<F: Scalar>(
    state: &NormalizationState<F>,
    data: &TabularDataset<F>,
) -> Result<TabularDataset<F>> {
    if data.n_features() != state.n_features() {
        return Err(Error::invalid_input(format!(
            "normalization state has {} features, data has {}",
            state.n_features(),
            data.n_features()
        )));
    }
    let mut features = Array2::<F>::zeros(data.features().raw_dim());
    let range: Array1<F> = state
        .min
        .iter()
        .zip(&state.max)
        .map(|(&lo, &hi)| hi - lo)
        .collect();
    for (i, row) in data.features().rows().into_iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            features[[i, j]] = if range[j] == F::zero() {
                F::zero()
            } else {
                (v - state.min[j]) / range[j]
            };
        }
    }
    data.with_features(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn column(values: &[f64]) -> TabularDataset<f64> {
        let n = values.len();
        let features = Array2::from_shape_vec((n, 1), values.to_vec()).unwrap();
        TabularDataset::new(features, vec![0; n]).unwrap()
    }

    #[test]
    fn affine_map_endpoints() {
        let (out, state) = normalize_fit_apply(&column(&[2.0, 4.0, 6.0])).unwrap();
        assert_eq!(out.features().column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(state.min[0], 2.0);
        assert_eq!(state.max[0], 6.0);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let (out, _) = normalize_fit_apply(&column(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(out.features().column(0).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn reused_state_does_not_clip() {
        // Fit on [0, 1]; applying to 2 must give 2.0 (not clipped to 1).
        let (_, state) = normalize_fit_apply(&column(&[0.0, 1.0])).unwrap();
        let out = normalize_apply(&state, &column(&[2.0])).unwrap();
        assert_eq!(out.features()[[0, 0]], 2.0);
    }

    #[test]
    fn empty_dataset_is_invalid() {
        let d = TabularDataset::new(Array2::<f64>::zeros((0, 2)), vec![]).unwrap();
        assert!(matches!(
            normalize_fit_apply(&d),
            Err(crate::error::Error::InvalidInput(_))
        ));
    }

    #[test]
    fn idempotent_on_normalized_data() {
        let data: TabularDataset<f64> =
            TabularDataset::new(array![[1.0, -3.0], [4.0, 0.5], [2.0, 9.0]], vec![0, 1, 0])
                .unwrap();
        let (once, state) = normalize_fit_apply(&data).unwrap();
        // Re-applying the identity state of the normalized data changes nothing.
        let (twice, _) = normalize_fit_apply(&once).unwrap();
        for (a, b) in once.features().iter().zip(twice.features().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // And the fitted state covers the raw extrema.
        assert_eq!(state.max[1], 9.0);
    }
}
