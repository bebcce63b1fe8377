//! Versioned JSON persistence for density models.
//!
//! ```json
//! {"version": 1, "kind": "gmm", "d": 10,
//!  "weights": [...], "means": [[...], ...], "covariances": [[[...]]]}
//! {"version": 1, "kind": "kde", "d": 10, "bandwidth": 0.15,
//!  "centers": [[...], ...]}
//! ```
//!
//! A KDE checkpoint embeds the full training matrix as kernel centers; if
//! the training rows are sensitive, persist only GMM models.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DensityModel, GmmModel, KdeModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Params {
    Gmm {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
    },
    Kde {
        bandwidth: f64,
        centers: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct DensityFile {
    version: u32,
    d: usize,
    #[serde(flatten)]
    params: Params,
}

fn matrix_to_rows<F: Scalar>(m: &Array2<F>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect()
}

fn rows_to_matrix<F: Scalar>(rows: &[Vec<f64>], cols: usize) -> Result<Array2<F>> {
    let mut out = Array2::<F>::zeros((rows.len(), cols));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::format(format!(
                "row {i} has {} entries, expected {cols}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = F::cast(v);
        }
    }
    Ok(out)
}

fn to_file<F: Scalar>(model: &DensityModel<F>) -> DensityFile {
    let params = match model {
        DensityModel::Gmm(g) => Params::Gmm {
            weights: g.weights.iter().map(|v| v.as_f64()).collect(),
            means: matrix_to_rows(&g.means),
            covariances: g.covariances.iter().map(matrix_to_rows).collect(),
        },
        DensityModel::Kde(k) => Params::Kde {
            bandwidth: k.bandwidth.as_f64(),
            centers: matrix_to_rows(&k.centers),
        },
    };
    DensityFile { version: VERSION, d: model.dims(), params }
}

/// Density model as an embeddable JSON value (used by replay-source files).
pub(crate) fn density_to_value<F: Scalar>(model: &DensityModel<F>) -> Result<serde_json::Value> {
    serde_json::to_value(to_file(model)).map_err(|e| Error::format(e.to_string()))
}

/// Inverse of [`density_to_value`].
pub(crate) fn density_from_value<F: Scalar>(value: &serde_json::Value) -> Result<DensityModel<F>> {
    let file: DensityFile = serde_json::from_value(value.clone())
        .map_err(|e| Error::format(format!("unreadable embedded density: {e}")))?;
    from_file(file)
}

pub fn save_density<F: Scalar>(model: &DensityModel<F>, path: impl AsRef<Path>) -> Result<()> {
    let json =
        serde_json::to_string(&to_file(model)).map_err(|e| Error::format(e.to_string()))?;
    fs::write(path.as_ref(), json)?;
    Ok(())
}

pub fn load_density<F: Scalar>(path: impl AsRef<Path>) -> Result<DensityModel<F>> {
    let bytes = fs::read(path.as_ref())?;
    let file: DensityFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::format(format!("unreadable density checkpoint: {e}")))?;
    from_file(file)
}

fn from_file<F: Scalar>(file: DensityFile) -> Result<DensityModel<F>> {
    if file.version != VERSION {
        return Err(Error::format(format!(
            "unsupported density checkpoint version {} (expected {VERSION})",
            file.version
        )));
    }
    match file.params {
        Params::Gmm { weights, means, covariances } => {
            let c = weights.len();
            if means.len() != c || covariances.len() != c {
                return Err(Error::format("component counts disagree across fields"));
            }
            let means = rows_to_matrix::<F>(&means, file.d)?;
            let covariances = covariances
                .iter()
                .map(|rows| {
                    if rows.len() != file.d {
                        return Err(Error::format("covariance is not D x D"));
                    }
                    rows_to_matrix::<F>(rows, file.d)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DensityModel::Gmm(GmmModel {
                weights: weights.into_iter().map(F::cast).collect(),
                means,
                covariances,
            }))
        }
        Params::Kde { bandwidth, centers } => {
            let centers = rows_to_matrix::<F>(&centers, file.d)?;
            Ok(DensityModel::Kde(KdeModel::new(F::cast(bandwidth), centers)?))
        }
    }
}
