//! Gaussian mixture estimation by expectation-maximization, with
//! validation-score model selection over the component count.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, forward_substitute, log_det_from_cholesky};
use crate::rng::{derive_seed, stream};
use crate::scalar::Scalar;

/// Ridge added to every covariance diagonal at initialization and after each
/// M-step; keeps near-duplicate data from producing singular components.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-4;

/// A fitted mixture: weights on the simplex, one mean and one symmetric
/// positive-definite covariance per component.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel<F: Scalar> {
    pub weights: Vec<F>,
    /// C x D matrix of component means.
    pub means: Array2<F>,
    pub covariances: Vec<Array2<F>>,
}

impl<F: Scalar> GmmModel<F> {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.means.ncols()
    }

    fn cholesky_factors(&self) -> Result<Vec<(Array2<F>, F)>> {
        self.covariances
            .iter()
            .map(|cov| {
                let l = cholesky(cov)?;
                let logdet = log_det_from_cholesky(&l);
                Ok((l, logdet))
            })
            .collect()
    }
}

/// Log density of each sample under each component plus the mixture log
/// weight: entry (i, c) = ln pi_c + ln N(x_i | mu_c, Sigma_c).
fn weighted_log_densities<F: Scalar>(
    model: &GmmModel<F>,
    x: &Array2<F>,
    factors: &[(Array2<F>, F)],
) -> Array2<F> {
    let n = x.nrows();
    let d = x.ncols();
    let c = model.components();
    let half = F::cast(0.5);
    let log_two_pi = F::cast((2.0 * std::f64::consts::PI).ln());
    let mut out = Array2::<F>::zeros((n, c));
    for (k, (l, logdet)) in factors.iter().enumerate() {
        let log_weight = if model.weights[k] > F::zero() {
            model.weights[k].ln()
        } else {
            F::neg_infinity()
        };
        let base = -half * (F::cast(d as f64) * log_two_pi + *logdet);
        for i in 0..n {
            let diff: Array1<F> = (0..d).map(|j| x[[i, j]] - model.means[[k, j]]).collect();
            let y = forward_substitute(l, &diff);
            let mahal = y.iter().map(|&v| v * v).sum::<F>();
            out[[i, k]] = log_weight + base - half * mahal;
        }
    }
    out
}

fn log_sum_exp_rows<F: Scalar>(m: &Array2<F>) -> Array1<F> {
    let mut out = Array1::<F>::zeros(m.nrows());
    for (i, row) in m.rows().into_iter().enumerate() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        if !max.is_finite() {
            out[i] = max;
            continue;
        }
        let sum: F = row.iter().map(|&v| (v - max).exp()).sum();
        out[i] = max + sum.ln();
    }
    out
}

fn validate_matrix<F: Scalar>(x: &Array2<F>, what: &str) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::invalid_input(format!("{what} must be non-empty")));
    }
    Ok(())
}

/// Biased (1/N) sample covariance with the ridge added.
fn global_covariance<F: Scalar>(x: &Array2<F>) -> Array2<F> {
    let n = x.nrows();
    let d = x.ncols();
    let nf = F::cast(n as f64);
    let mean = x.sum_axis(Axis(0)) / nf;
    let mut cov = Array2::<F>::zeros((d, d));
    for row in x.rows() {
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in 0..=a {
                cov[[a, b]] += da * (row[b] - mean[b]);
            }
        }
    }
    let ridge = F::cast(COVARIANCE_RIDGE);
    for a in 0..d {
        for b in 0..=a {
            cov[[a, b]] /= nf;
            cov[[b, a]] = cov[[a, b]];
        }
        cov[[a, a]] += ridge;
    }
    cov
}

/// Draws `count` distinct row indices, the first uniformly and each later
/// one with probability proportional to its squared distance from the rows
/// already chosen.
fn spread_row_sample<F: Scalar>(
    x: &Array2<F>,
    count: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<usize> {
    let n = x.nrows();
    let mut chosen = Vec::with_capacity(count);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;

    let dist2 = |a: usize, b: usize| -> F {
        x.row(a)
            .iter()
            .zip(x.row(b).iter())
            .map(|(&p, &q)| (p - q) * (p - q))
            .sum()
    };
    let mut d2: Vec<F> = (0..n).map(|i| dist2(i, first)).collect();

    while chosen.len() < count {
        let total: F = d2.iter().copied().sum();
        let next = if total > F::zero() {
            let mut u = F::unit_uniform(rng) * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= F::zero() {
                    continue;
                }
                if u < w {
                    pick = Some(i);
                    break;
                }
                u -= w;
            }
            pick.unwrap_or_else(|| {
                // Rounding pushed u past the last positive weight.
                d2.iter().rposition(|&w| w > F::zero()).expect("total > 0")
            })
        } else {
            // Remaining rows duplicate the chosen ones; take any free index.
            (0..n).find(|&i| !taken[i]).expect("count <= n")
        };
        chosen.push(next);
        taken[next] = true;
        for i in 0..n {
            let dn = dist2(i, next);
            if dn < d2[i] {
                d2[i] = dn;
            }
        }
    }
    chosen
}

/// Fits a `components`-component mixture to `x` by EM.
pub fn gmm_fit_em<F: Scalar>(
    x: &Array2<F>,
    components: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<GmmModel<F>> {
    gmm_fit_em_traced(x, components, seed, max_iter, tol).map(|(model, _)| model)
}

/// Like [`gmm_fit_em`] but also returns the per-iteration average
/// log-likelihood trace (non-decreasing, which is what makes EM EM).
pub fn gmm_fit_em_traced<F: Scalar>(
    x: &Array2<F>,
    components: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(GmmModel<F>, Vec<F>)> {
    validate_matrix(x, "training data")?;
    let n = x.nrows();
    let d = x.ncols();
    if components == 0 {
        return Err(Error::invalid_input("component count must be at least 1"));
    }
    if n < components {
        return Err(Error::invalid_input(format!(
            "{n} samples cannot support {components} components"
        )));
    }

    // Means start at distinct data rows sampled with squared-distance
    // weighting (seeded), covariances at the global sample covariance,
    // weights uniform. Uniform row sampling can put two means in one cluster
    // and park EM on a symmetric plateau below the stopping tolerance;
    // distance weighting spreads the starting means across clusters while
    // staying a deterministic draw of distinct rows.
    let mut rng = stream(seed, 0xE5);
    let picks = spread_row_sample(x, components, &mut rng);
    let mut means = Array2::<F>::zeros((components, d));
    for (k, i) in picks.into_iter().enumerate() {
        means.row_mut(k).assign(&x.row(i));
    }
    let base_cov = global_covariance(x);
    let mut model = GmmModel {
        weights: vec![F::cast(1.0 / components as f64); components],
        means,
        covariances: vec![base_cov; components],
    };

    let nf = F::cast(n as f64);
    let ridge = F::cast(COVARIANCE_RIDGE);
    let tol = F::cast(tol);
    let mut trace: Vec<F> = Vec::new();

    for _ in 0..max_iter.max(1) {
        // E-step.
        let factors = model.cholesky_factors()?;
        let weighted = weighted_log_densities(&model, x, &factors);
        let lse = log_sum_exp_rows(&weighted);
        let avg_ll = lse.iter().copied().sum::<F>() / nf;
        if !avg_ll.is_finite() {
            return Err(Error::numerical("non-finite likelihood during EM"));
        }
        let converged = trace.last().is_some_and(|&prev| avg_ll - prev < tol);
        trace.push(avg_ll);
        if converged {
            break;
        }

        let mut resp = weighted;
        for (mut row, &norm) in resp.rows_mut().into_iter().zip(lse.iter()) {
            row.mapv_inplace(|v| (v - norm).exp());
        }

        // M-step.
        let totals = resp.sum_axis(Axis(0));
        for k in 0..components {
            let total = totals[k];
            if !(total > F::zero()) {
                return Err(Error::numerical(
                    "a mixture component lost all responsibility during EM",
                ));
            }
            model.weights[k] = total / nf;
            let mut mean = Array1::<F>::zeros(d);
            for (i, row) in x.rows().into_iter().enumerate() {
                let r = resp[[i, k]];
                for j in 0..d {
                    mean[j] += r * row[j];
                }
            }
            mean.mapv_inplace(|v| v / total);
            let mut cov = Array2::<F>::zeros((d, d));
            for (i, row) in x.rows().into_iter().enumerate() {
                let r = resp[[i, k]];
                for a in 0..d {
                    let da = row[a] - mean[a];
                    for b in 0..=a {
                        cov[[a, b]] += r * da * (row[b] - mean[b]);
                    }
                }
            }
            for a in 0..d {
                for b in 0..=a {
                    cov[[a, b]] /= total;
                    cov[[b, a]] = cov[[a, b]];
                }
                cov[[a, a]] += ridge;
            }
            model.means.row_mut(k).assign(&mean);
            model.covariances[k] = cov;
        }
    }

    Ok((model, trace))
}

/// Per-sample average log-likelihood of `x` under the mixture,
/// log-sum-exp stabilized.
pub fn gmm_score<F: Scalar>(model: &GmmModel<F>, x: &Array2<F>) -> Result<F> {
    validate_matrix(x, "scoring data")?;
    if x.ncols() != model.dims() {
        return Err(Error::invalid_input(format!(
            "data has {} features, model expects {}",
            x.ncols(),
            model.dims()
        )));
    }
    let factors = model.cholesky_factors()?;
    let weighted = weighted_log_densities(model, x, &factors);
    let lse = log_sum_exp_rows(&weighted);
    Ok(lse.iter().copied().sum::<F>() / F::cast(x.nrows() as f64))
}

/// Fits candidates C = 1..=c_max, keeps the component count that maximizes
/// the validation score, smallest C on ties.
pub fn gmm_select_and_fit<F: Scalar>(
    x_train: &Array2<F>,
    x_val: &Array2<F>,
    c_max: usize,
    seed: u64,
) -> Result<GmmModel<F>> {
    validate_matrix(x_train, "training data")?;
    validate_matrix(x_val, "validation data")?;
    if c_max == 0 {
        return Err(Error::invalid_input("c_max must be at least 1"));
    }
    let upper = c_max.min(x_train.nrows());
    // Candidate fits are pure; evaluate them in parallel and pick the argmax
    // sequentially so ties resolve to the smallest C regardless of schedule.
    let candidates: Vec<(usize, Result<(GmmModel<F>, F)>)> = (1..=upper)
        .into_par_iter()
        .map(|c| {
            let fit_seed = derive_seed(seed, c as u64);
            let outcome = gmm_fit_em(x_train, c, fit_seed, DEFAULT_MAX_ITER, DEFAULT_TOL)
                .and_then(|model| {
                    let score = gmm_score(&model, x_val)?;
                    Ok((model, score))
                });
            (c, outcome)
        })
        .collect();

    let mut best: Option<(GmmModel<F>, F)> = None;
    for (_, outcome) in candidates {
        let (model, score) = outcome?;
        let better = match &best {
            None => true,
            Some((_, best_score)) => score > *best_score,
        };
        if better {
            best = Some((model, score));
        }
    }
    Ok(best.expect("at least one candidate").0)
}

/// Draws `count` rows: component c ~ Categorical(weights), then
/// x ~ N(mu_c, Sigma_c).
pub fn gmm_sample<F: Scalar>(model: &GmmModel<F>, count: usize, seed: u64) -> Result<Array2<F>> {
    let d = model.dims();
    let factors = model.cholesky_factors()?;
    let mut out = Array2::<F>::zeros((count, d));
    let mut rng = stream(seed, 0x5A);
    for mut row in out.rows_mut() {
        let u = F::unit_uniform(&mut rng);
        let mut acc = F::zero();
        let mut component = model.components() - 1;
        for (k, &w) in model.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                component = k;
                break;
            }
        }
        let l = &factors[component].0;
        let z: Array1<F> = (0..d).map(|_| F::standard_normal(&mut rng)).collect();
        for j in 0..d {
            let mut v = model.means[[component, j]];
            for k in 0..=j {
                v += l[[j, k]] * z[k];
            }
            row[j] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_data(n: usize, d: usize, mean: f64, sd: f64, seed: u64) -> Array2<f64> {
        let mut rng = stream(seed, 1);
        let mut x = Array2::<f64>::zeros((n, d));
        for v in x.iter_mut() {
            *v = mean + sd * f64::standard_normal(&mut rng);
        }
        x
    }

    #[test]
    fn single_component_recovers_closed_form_moments() {
        let x = gaussian_data(200, 3, 1.5, 2.0, 9);
        let model = gmm_fit_em(&x, 1, 4, 200, 1e-4).unwrap();
        let n = x.nrows() as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        for j in 0..3 {
            assert!((model.means[[0, j]] - mean[j]).abs() < 1e-9);
        }
        // Covariance matches the biased sample covariance once the ridge is
        // removed from the diagonal.
        for a in 0..3 {
            for b in 0..3 {
                let mut expected = 0.0;
                for i in 0..x.nrows() {
                    expected += (x[[i, a]] - mean[a]) * (x[[i, b]] - mean[b]);
                }
                expected /= n;
                let mut got = model.covariances[0][[a, b]];
                if a == b {
                    got -= COVARIANCE_RIDGE;
                }
                assert!((got - expected).abs() < 1e-9, "cov[{a},{b}]");
            }
        }
        assert_eq!(model.weights, vec![1.0]);
    }

    #[test]
    fn em_trace_is_monotone() {
        for seed in 0..5 {
            let x = gaussian_data(120, 2, 0.0, 1.0, seed);
            let (_, trace) = gmm_fit_em_traced(&x, 3, seed, 60, 0.0).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "trace decreased: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn two_separated_clusters_are_recovered() {
        let mut rng = stream(33, 2);
        let mut x = Array2::<f64>::zeros((2000, 1));
        for (i, v) in x.iter_mut().enumerate() {
            let center = if i % 2 == 0 { -5.0 } else { 5.0 };
            *v = center + 0.5 * f64::standard_normal(&mut rng);
        }
        let model = gmm_fit_em(&x, 2, 7, 200, 1e-4).unwrap();
        let mut means: Vec<f64> = (0..2).map(|k| model.means[[k, 0]]).collect();
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((means[0] + 5.0).abs() < 0.2, "low mean {}", means[0]);
        assert!((means[1] - 5.0).abs() < 0.2, "high mean {}", means[1]);
    }

    #[test]
    fn score_closed_form_and_mixture_collapse() {
        // Standard 1-D normal scored at x = 0.
        let model = GmmModel {
            weights: vec![1.0],
            means: Array2::zeros((1, 1)),
            covariances: vec![Array2::from_elem((1, 1), 1.0)],
        };
        let x = Array2::zeros((1, 1));
        let score = gmm_score(&model, &x).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((score - expected).abs() < 1e-9);
        assert!((score + 0.9189).abs() < 1e-4);

        // Two identical components with split weights score identically.
        let doubled = GmmModel {
            weights: vec![0.5, 0.5],
            means: Array2::zeros((2, 1)),
            covariances: vec![Array2::from_elem((1, 1), 1.0); 2],
        };
        let x = gaussian_data(50, 1, 0.3, 1.0, 5);
        let a = gmm_score(&model, &x).unwrap();
        let b = gmm_score(&doubled, &x).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn model_samples_score_higher_than_shifted_samples() {
        let x = gaussian_data(500, 2, 0.0, 1.0, 3);
        let model = gmm_fit_em(&x, 1, 1, 200, 1e-4).unwrap();
        let near = gmm_sample(&model, 400, 8).unwrap();
        let far = near.mapv(|v| v + 10.0);
        let s_near = gmm_score(&model, &near).unwrap();
        let s_far = gmm_score(&model, &far).unwrap();
        assert!(s_near > s_far);
    }

    #[test]
    fn selection_prefers_small_c_on_unimodal_data() {
        let train = gaussian_data(300, 2, 0.0, 1.0, 11);
        let val = gaussian_data(150, 2, 0.0, 1.0, 12);
        let model = gmm_select_and_fit(&train, &val, 6, 5).unwrap();
        // Argmax property: the winner's validation score is >= every
        // candidate's, in particular C = c_max.
        let winner_score = gmm_score(&model, &val).unwrap();
        let big = gmm_fit_em(&train, 6, derive_seed(5, 6), 200, 1e-4).unwrap();
        let big_score = gmm_score(&big, &val).unwrap();
        assert!(winner_score >= big_score);
        assert!(model.components() <= 3, "picked {} components", model.components());
    }

    #[test]
    fn c_max_one_returns_the_closed_form_fit() {
        let train = gaussian_data(100, 2, 1.0, 1.0, 2);
        let val = gaussian_data(50, 2, 1.0, 1.0, 3);
        let selected = gmm_select_and_fit(&train, &val, 1, 7).unwrap();
        let direct = gmm_fit_em(&train, 1, derive_seed(7, 1), 200, 1e-4).unwrap();
        assert_eq!(selected, direct);
    }

    #[test]
    fn sampling_boundaries_and_determinism() {
        let x = gaussian_data(100, 2, 0.0, 1.0, 1);
        let model = gmm_fit_em(&x, 2, 2, 50, 1e-4).unwrap();
        let empty = gmm_sample(&model, 0, 1).unwrap();
        assert_eq!(empty.nrows(), 0);
        assert_eq!(empty.ncols(), 2);
        let a = gmm_sample(&model, 25, 42).unwrap();
        let b = gmm_sample(&model, 25, 42).unwrap();
        assert_eq!(a, b);

        // Degenerate categorical: all mass on component 0.
        let spiked: GmmModel<f64> = GmmModel {
            weights: vec![1.0, 0.0],
            means: ndarray::array![[0.0], [100.0]],
            covariances: vec![Array2::from_elem((1, 1), 1e-6); 2],
        };
        let s = gmm_sample(&spiked, 200, 3).unwrap();
        for &v in s.iter() {
            assert!(v.abs() < 1.0, "sample {v} came from the zero-weight component");
        }
    }

    #[test]
    fn law_of_large_numbers_for_single_component() {
        let model: GmmModel<f64> = GmmModel {
            weights: vec![1.0],
            means: Array2::zeros((1, 3)),
            covariances: vec![Array2::eye(3)],
        };
        let s = gmm_sample(&model, 50_000, 7).unwrap();
        let mean = s.sum_axis(Axis(0)) / 50_000.0;
        for j in 0..3 {
            assert!(mean[j].abs() < 0.05, "dim {j} mean {}", mean[j]);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let x = gaussian_data(5, 2, 0.0, 1.0, 1);
        assert!(gmm_fit_em(&x, 6, 1, 10, 1e-4).is_err());
        assert!(gmm_fit_em(&x, 0, 1, 10, 1e-4).is_err());
        let model = gmm_fit_em(&x, 1, 1, 10, 1e-4).unwrap();
        let wrong = gaussian_data(4, 3, 0.0, 1.0, 2);
        assert!(gmm_score(&model, &wrong).is_err());
    }

    #[test]
    fn weights_stay_on_the_simplex() {
        let x = gaussian_data(200, 2, 0.0, 2.0, 6);
        for c in [1, 2, 4] {
            let model = gmm_fit_em(&x, c, 3, 80, 1e-6).unwrap();
            let total: f64 = model.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(model.weights.iter().all(|&w| w >= 0.0));
            // Covariances stay PD: Cholesky must succeed.
            assert!(model.cholesky_factors().is_ok());
        }
    }
}
