//! SMOTE oversampling: minority classes are grown to the size of the largest
//! class by interpolating between a random minority instance and one of its
//! k nearest same-class neighbors.

use ndarray::Array2;
use rand::Rng;

use super::TabularDataset;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::Scalar;

/// Balances class counts by synthesizing rows for minority classes.
///
/// Each synthetic row is `a + u * (b - a)` with `u ~ Uniform(0, 1)`, where
/// `a` is a random minority instance and `b` one of its `k_neighbors`
/// nearest same-class neighbors (Euclidean distance, ties broken by row
/// index). Synthetic rows are appended after the original rows, so existing
/// row order is preserved.
pub fn smote_balance<F: Scalar>(
    data: &TabularDataset<F>,
    k_neighbors: usize,
    seed: u64,
) -> Result<TabularDataset<F>> {
    if data.is_empty() {
        return Err(Error::invalid_input("cannot balance an empty dataset"));
    }
    if k_neighbors == 0 {
        return Err(Error::invalid_input("k_neighbors must be at least 1"));
    }
    let per_class = data.class_indices();
    let target = per_class.iter().map(|(_, rows)| rows.len()).max().unwrap_or(0);

    for (class, rows) in &per_class {
        if rows.len() < target && rows.len() < 2 {
            return Err(Error::invalid_input(format!(
                "class {class} has {} instance(s); at least 2 are needed to interpolate",
                rows.len()
            )));
        }
    }

    let deficit: usize = per_class.iter().map(|(_, rows)| target - rows.len()).sum();
    if deficit == 0 {
        return Ok(data.clone());
    }

    let d = data.n_features();
    let mut synth = Array2::<F>::zeros((deficit, d));
    let mut synth_labels = Vec::with_capacity(deficit);
    let mut synth_entities = data.entities().map(|_| Vec::with_capacity(deficit));
    let mut rng = stream(seed, 0);
    let mut cursor = 0usize;

    for (class, rows) in &per_class {
        let missing = target - rows.len();
        if missing == 0 {
            continue;
        }
        let neighbors = nearest_neighbors(data, rows, k_neighbors);
        for _ in 0..missing {
            let a_pos = rng.random_range(0..rows.len());
            let a_row = rows[a_pos];
            let nn = &neighbors[a_pos];
            let b_row = nn[rng.random_range(0..nn.len())];
            let u = F::unit_uniform(&mut rng);
            for j in 0..d {
                let a = data.features()[[a_row, j]];
                let b = data.features()[[b_row, j]];
                synth[[cursor, j]] = a + u * (b - a);
            }
            synth_labels.push(*class);
            if let (Some(out), Some(src)) = (&mut synth_entities, data.entities()) {
                out.push(src[a_row]);
            }
            cursor += 1;
        }
    }

    let n = data.n_rows();
    let mut features = Array2::<F>::zeros((n + deficit, d));
    features.slice_mut(ndarray::s![..n, ..]).assign(data.features());
    features.slice_mut(ndarray::s![n.., ..]).assign(&synth);
    let mut labels = data.labels().to_vec();
    labels.extend(synth_labels);
    let entities = match (data.entities(), synth_entities) {
        (Some(orig), Some(extra)) => {
            let mut e = orig.to_vec();
            e.extend(extra);
            Some(e)
        }
        _ => None,
    };
    TabularDataset::with_metadata(
        features,
        labels,
        data.feature_names().map(|n| n.to_vec()),
        entities,
        None,
    )
}

/// For each row in `rows`, the up-to-k nearest other rows of the same class,
/// ordered by distance with row index as tie-breaker.
fn nearest_neighbors<F: Scalar>(
    data: &TabularDataset<F>,
    rows: &[usize],
    k: usize,
) -> Vec<Vec<usize>> {
    rows.iter()
        .map(|&a| {
            let mut dists: Vec<(F, usize)> = rows
                .iter()
                .filter(|&&b| b != a)
                .map(|&b| {
                    let d2 = data
                        .row(a)
                        .iter()
                        .zip(data.row(b).iter())
                        .map(|(&x, &y)| (x - y) * (x - y))
                        .sum::<F>();
                    (d2, b)
                })
                .collect();
            dists.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
            dists.into_iter().take(k).map(|(_, b)| b).collect()
        })
        .collect()
}
