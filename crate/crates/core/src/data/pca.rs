//! Principal component analysis by eigendecomposition of the covariance of
//! standardized features. Standardization (zero mean, unit variance,
//! zero-variance features passed through as zeros) happens only while
//! fitting; projection itself is `components . (x - mean)`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::scalar::Scalar;

/// A fitted projection onto the top-K principal axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection<F> {
    /// Per-feature mean of the fitting data, length D.
    pub mean: Vec<F>,
    /// K x D matrix whose rows are orthonormal principal axes, by descending
    /// eigenvalue.
    pub components: Vec<Vec<F>>,
    /// Eigenvalues matching `components`, non-increasing.
    pub explained_eigenvalues: Vec<F>,
}

impl<F: Scalar> PcaProjection<F> {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn input_width(&self) -> usize {
        self.mean.len()
    }

    fn components_matrix(&self) -> Array2<F> {
        let k = self.n_components();
        let d = self.input_width();
        let mut m = Array2::<F>::zeros((k, d));
        for (i, row) in self.components.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        m
    }
}

/// Fits the top-k principal axes of `data`.
pub fn pca_fit<F: Scalar>(data: &TabularDataset<F>, k: usize) -> Result<PcaProjection<F>> {
    let n = data.n_rows();
    let d = data.n_features();
    if k == 0 || k > d || k > n {
        return Err(Error::invalid_input(format!(
            "k = {k} out of range for {n} rows x {d} features"
        )));
    }

    let nf = F::cast(n as f64);
    let mut mean = Array1::<F>::zeros(d);
    for row in data.features().rows() {
        mean = mean + row;
    }
    mean.mapv_inplace(|v| v / nf);

    let mut var = Array1::<F>::zeros(d);
    for row in data.features().rows() {
        for j in 0..d {
            let c = row[j] - mean[j];
            var[j] += c * c;
        }
    }
    var.mapv_inplace(|v| v / nf);
    let std: Array1<F> = var.mapv(|v| v.sqrt());

    // Standardized design matrix; zero-variance features become all-zero
    // columns and end up in the trailing eigenvectors.
    let mut z = Array2::<F>::zeros((n, d));
    for (i, row) in data.features().rows().into_iter().enumerate() {
        for j in 0..d {
            z[[i, j]] = if std[j] == F::zero() {
                F::zero()
            } else {
                (row[j] - mean[j]) / std[j]
            };
        }
    }

    let cov = z.t().dot(&z).mapv(|v| v / nf);
    let (eigenvalues, eigenvectors) = symmetric_eigen(&cov)?;

    let components = (0..k)
        .map(|i| eigenvectors.row(i).to_vec())
        .collect::<Vec<_>>();
    let explained = (0..k).map(|i| eigenvalues[i]).collect::<Vec<_>>();
    Ok(PcaProjection {
        mean: mean.to_vec(),
        components,
        explained_eigenvalues: explained,
    })
}

/// Projects `data` onto the fitted axes: row -> components . (row - mean).
pub fn pca_project<F: Scalar>(
    proj: &PcaProjection<F>,
    data: &TabularDataset<F>,
) -> Result<TabularDataset<F>> {
    if data.n_features() != proj.input_width() {
        return Err(Error::invalid_input(format!(
            "projection expects {} features, data has {}",
            proj.input_width(),
            data.n_features()
        )));
    }
    let mean = Array1::from_vec(proj.mean.clone());
    let comp = proj.components_matrix();
    let centered = data.features() - &mean.broadcast((data.n_rows(), proj.input_width())).unwrap();
    let projected = centered.dot(&comp.t());
    data.with_features(projected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;


    fn dataset(features: Array2<f64>) -> TabularDataset<f64> {
        let n = features.nrows();
        TabularDataset::new(features, vec![0; n]).unwrap()
    }

    #[test]
    fn perfectly_correlated_line_gives_diagonal_axis() {
        let d = dataset(array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]);
        let p = pca_fit(&d, 1).unwrap();
        let c = &p.components[0];
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        // Parallel to (1,1)/sqrt(2) up to sign.
        assert!((c[0].abs() - inv_sqrt2).abs() < 1e-9);
        assert!((c[1].abs() - inv_sqrt2).abs() < 1e-9);
        assert!((c[0] - c[1]).abs() < 1e-9);
    }

    #[test]
    fn isotropic_data_has_unit_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut features = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            features[[i, 0]] = f64::standard_normal(&mut rng);
            features[[i, 1]] = f64::standard_normal(&mut rng);
        }
        let p = pca_fit(&dataset(features), 2).unwrap();
        for &ev in &p.explained_eigenvalues {
            assert!(ev > 0.9 && ev < 1.1, "eigenvalue {ev} outside (0.9, 1.1)");
        }
    }

    #[test]
    fn full_rank_round_trip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut features = Array2::<f64>::zeros((40, 5));
        for v in features.iter_mut() {
            *v = f64::standard_normal(&mut rng) * 2.0 + 0.5;
        }
        let d = dataset(features.clone());
        let p = pca_fit(&d, 5).unwrap();
        let projected = pca_project(&p, &d).unwrap();
        // x ~= mean + components^T . projected
        for i in 0..d.n_rows() {
            for j in 0..5 {
                let mut rebuilt = p.mean[j];
                for k in 0..5 {
                    rebuilt += p.components[k][j] * projected.features()[[i, k]];
                }
                assert!(
                    (rebuilt - features[[i, j]]).abs() < 1e-8,
                    "row {i} col {j}: {rebuilt} vs {}",
                    features[[i, j]]
                );
            }
        }
    }

    #[test]
    fn projection_of_mean_is_zero_and_axes_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut features = Array2::<f64>::zeros((30, 4));
        for (idx, v) in features.iter_mut().enumerate() {
            // Uneven scales to exercise standardization.
            let scale = 10f64.powi((idx % 4) as i32);
            *v = f64::standard_normal(&mut rng) * scale;
        }
        let d = dataset(features);
        let p = pca_fit(&d, 4).unwrap();
        // Orthonormal rows within 1e-8 regardless of input scale.
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..4).map(|j| p.components[a][j] * p.components[b][j]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8);
            }
        }
        // Eigenvalues non-increasing.
        for w in p.explained_eigenvalues.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
        // x = mean projects to the zero vector.
        let mean_row =
            TabularDataset::new(Array2::from_shape_vec((1, 4), p.mean.clone()).unwrap(), vec![0])
                .unwrap();
        let z = pca_project(&p, &mean_row).unwrap();
        for &v in z.features().iter() {
            assert!(v.abs() < 1e-12);
        }
        // x = mean + c * component_0 projects to (c, 0, 0, 0).
        let c = 2.5;
        let shifted: Vec<f64> = (0..4).map(|j| p.mean[j] + c * p.components[0][j]).collect();
        let row = TabularDataset::new(Array2::from_shape_vec((1, 4), shifted).unwrap(), vec![0])
            .unwrap();
        let z = pca_project(&p, &row).unwrap();
        assert!((z.features()[[0, 0]] - c).abs() < 1e-9);
        for k in 1..4 {
            assert!(z.features()[[0, k]].abs() < 1e-9);
        }
    }

    #[test]
    fn k_out_of_range_is_invalid() {
        let d = dataset(array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(pca_fit(&d, 0).is_err());
        assert!(pca_fit(&d, 3).is_err());
    }

    #[test]
    fn dimension_mismatch_on_project() {
        let d = dataset(array![[1.0, 2.0], [3.0, 4.0], [0.0, 1.0]]);
        let p = pca_fit(&d, 2).unwrap();
        let other = dataset(array![[1.0, 2.0, 3.0]]);
        assert!(pca_project(&p, &other).is_err());
    }
}
