//! Density models for generative replay: a Gaussian mixture fitted by EM, a
//! Gaussian-kernel KDE, and the two-sample Kolmogorov-Smirnov statistic that
//! arbitrates between them.

mod checkpoint;
mod gmm;
mod kde;
mod ks;

pub use checkpoint::{load_density, save_density};
pub(crate) use checkpoint::{density_from_value, density_to_value};
pub use gmm::{gmm_fit_em, gmm_fit_em_traced, gmm_sample, gmm_score, gmm_select_and_fit, GmmModel};
pub use kde::{kde_log_likelihood, kde_sample, kde_select_and_fit, KdeModel};
pub use ks::{ks_two_sample, KsReport};

use ndarray::Array2;

use crate::error::Result;
use crate::scalar::Scalar;

/// Either fitted density, ready to sample. Note that a KDE model retains the
/// full training matrix as kernel centers, so persisting one embeds training
/// rows; only the GMM variant stores a data-free parameter summary.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityModel<F: Scalar> {
    Gmm(GmmModel<F>),
    Kde(KdeModel<F>),
}

impl<F: Scalar> DensityModel<F> {
    pub fn dims(&self) -> usize {
        match self {
            DensityModel::Gmm(m) => m.dims(),
            DensityModel::Kde(m) => m.dims(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            DensityModel::Gmm(_) => "gmm",
            DensityModel::Kde(_) => "kde",
        }
    }

    /// Draws `count` rows; deterministic under `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Array2<F>> {
        match self {
            DensityModel::Gmm(m) => gmm_sample(m, count, seed),
            DensityModel::Kde(m) => Ok(kde_sample(m, count, seed)),
        }
    }
}
