//! Kernel density estimation with an isotropic Gaussian kernel N(0, h^2 I)
//! and a single scalar bandwidth selected on held-out data.

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::Scalar;

/// Bandwidth grid step; candidates are {0.05, 0.10, ..., h_max} inclusive.
pub const BANDWIDTH_STEP: f64 = 0.05;

/// A fitted KDE: the retained training rows and the kernel bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel<F: Scalar> {
    pub bandwidth: F,
    /// N x D matrix of kernel centers (the training data itself).
    pub centers: Array2<F>,
}

impl<F: Scalar> KdeModel<F> {
    pub fn new(bandwidth: F, centers: Array2<F>) -> Result<Self> {
        if !(bandwidth > F::zero()) {
            return Err(Error::invalid_input("bandwidth must be positive"));
        }
        if centers.nrows() == 0 {
            return Err(Error::invalid_input("KDE needs at least one center"));
        }
        Ok(Self { bandwidth, centers })
    }

    pub fn dims(&self) -> usize {
        self.centers.ncols()
    }
}

/// Total log-likelihood of `x` under the estimate:
/// sum over queries of ln[(1/N) sum_i N(q - x_i | 0, h^2 I)], log-sum-exp
/// stabilized.
pub fn kde_log_likelihood<F: Scalar>(model: &KdeModel<F>, x: &Array2<F>) -> Result<F> {
    if x.ncols() != model.dims() {
        return Err(Error::invalid_input(format!(
            "query width {} does not match centers width {}",
            x.ncols(),
            model.dims()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid_input("query matrix must be non-empty"));
    }
    let d = model.dims();
    let n = model.centers.nrows();
    let h2 = model.bandwidth * model.bandwidth;
    let half = F::cast(0.5);
    let log_norm = F::cast(n as f64).ln()
        + F::cast(d as f64) * half * (F::cast(2.0 * std::f64::consts::PI) * h2).ln();

    let mut total = F::zero();
    let mut exponents = Array1::<F>::zeros(n);
    for q in x.rows() {
        for (i, c) in model.centers.rows().into_iter().enumerate() {
            let sq: F = q
                .iter()
                .zip(c.iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            exponents[i] = -half * sq / h2;
        }
        let max = exponents.iter().copied().fold(F::neg_infinity(), F::max);
        let sum: F = exponents.iter().map(|&e| (e - max).exp()).sum();
        total += max + sum.ln() - log_norm;
    }
    Ok(total)
}

/// Sweeps the bandwidth grid and keeps the candidate maximizing the total
/// log-likelihood of `x_val` under the KDE of `x_train`; smallest h on ties.
pub fn kde_select_and_fit<F: Scalar>(
    x_train: &Array2<F>,
    x_val: &Array2<F>,
    h_max: f64,
) -> Result<KdeModel<F>> {
    if x_train.nrows() == 0 || x_val.nrows() == 0 {
        return Err(Error::invalid_input("train and validation data must be non-empty"));
    }
    if h_max < BANDWIDTH_STEP {
        return Err(Error::invalid_input(format!(
            "h_max must be at least the grid step {BANDWIDTH_STEP}"
        )));
    }
    let steps = (h_max / BANDWIDTH_STEP + 1e-9).floor() as usize;
    let grid: Vec<f64> = (1..=steps).map(|i| BANDWIDTH_STEP * i as f64).collect();

    let scores: Vec<(f64, Result<F>)> = grid
        .into_par_iter()
        .map(|h| {
            let model = KdeModel::new(F::cast(h), x_train.clone())?;
            let score = kde_log_likelihood(&model, x_val)?;
            Ok((h, score))
        })
        .map(|r: Result<(f64, F)>| match r {
            Ok((h, s)) => (h, Ok(s)),
            Err(e) => (0.0, Err(e)),
        })
        .collect();

    let mut best: Option<(f64, F)> = None;
    for (h, score) in scores {
        let score = score?;
        let better = match best {
            None => true,
            Some((_, best_score)) => score > best_score,
        };
        if better {
            best = Some((h, score));
        }
    }
    let (h, _) = best.expect("grid is non-empty");
    KdeModel::new(F::cast(h), x_train.clone())
}

/// Draws `count` rows: a uniformly chosen center plus N(0, h^2 I) noise.
pub fn kde_sample<F: Scalar>(model: &KdeModel<F>, count: usize, seed: u64) -> Array2<F> {
    let d = model.dims();
    let n = model.centers.nrows();
    let mut out = Array2::<F>::zeros((count, d));
    let mut rng = stream(seed, 0xD3);
    for mut row in out.rows_mut() {
        let center = rng.random_range(0..n);
        for j in 0..d {
            row[j] = model.centers[[center, j]] + model.bandwidth * F::standard_normal(&mut rng);
        }
    }
    out
}
