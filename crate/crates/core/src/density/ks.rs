//! Two-sample Kolmogorov-Smirnov statistic, computed per feature over the
//! empirical CDFs and aggregated by the mean. The statistic only depends on
//! rank counts, so it is reported in `f64` regardless of the data scalar.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-feature KS statistics and their mean. Lower means closer
/// distributions; arbitration decisions use `aggregate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub per_feature_statistics: Vec<f64>,
    pub aggregate: f64,
}

/// sup_x |F_A(x) - F_B(x)| for each feature column of `a` and `b`.
pub fn ks_two_sample<F: Scalar>(a: &Array2<F>, b: &Array2<F>) -> Result<KsReport> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::invalid_input("KS test needs non-empty samples"));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::invalid_input(format!(
            "samples have different widths: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let d = a.ncols();
    let mut per_feature = Vec::with_capacity(d);
    for j in 0..d {
        let mut xa: Vec<F> = a.column(j).to_vec();
        let mut xb: Vec<F> = b.column(j).to_vec();
        xa.sort_by(|x, y| x.partial_cmp(y).expect("finite feature values"));
        xb.sort_by(|x, y| x.partial_cmp(y).expect("finite feature values"));
        per_feature.push(ks_statistic_sorted(&xa, &xb));
    }
    let aggregate = per_feature.iter().sum::<f64>() / d as f64;
    Ok(KsReport { per_feature_statistics: per_feature, aggregate })
}

fn ks_statistic_sorted<F: Scalar>(xa: &[F], xb: &[F]) -> f64 {
    // Track the numerator |ia * nb - ib * na| in integers and divide once,
    // so rational statistics like 1/3 come out exactly.
    let na = xa.len();
    let nb = xb.len();
    let mut ia = 0usize;
    let mut ib = 0usize;
    let mut best_num = 0i64;
    while ia < na && ib < nb {
        let v = if xa[ia] <= xb[ib] { xa[ia] } else { xb[ib] };
        while ia < na && xa[ia] == v {
            ia += 1;
        }
        while ib < nb && xb[ib] == v {
            ib += 1;
        }
        let gap = (ia as i64 * nb as i64 - ib as i64 * na as i64).abs();
        if gap > best_num {
            best_num = gap;
        }
    }
    best_num as f64 / (na as f64 * nb as f64)
}
