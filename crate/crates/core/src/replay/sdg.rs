//! Synthetic data generation: fit both density families, generate a probe
//! set from each, and keep the family whose probe is closer to the real
//! training data under the aggregate KS statistic (ties go to the GMM,
//! which stores no training rows).

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{ReplaySource, ReplaySourceKind};
use crate::density::{
    gmm_select_and_fit, kde_select_and_fit, ks_two_sample, DensityModel,
};
use crate::error::{Error, Result};
use crate::nn::{MultiHeadMlp, TaskId};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

/// Probe rows drawn per candidate for the KS arbitration; the statistic
/// stabilizes well below this, so larger training sets do not inflate
/// arbitration cost.
pub const PROBE_CAP: usize = 2048;

/// Outcome of the density arbitration for one mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsArbitration {
    pub gmm_statistic: Option<f64>,
    pub kde_statistic: Option<f64>,
    /// "gmm" or "kde".
    pub winner: String,
    pub winning_statistic: f64,
}

fn probe_size(train_rows: usize) -> usize {
    train_rows.min(PROBE_CAP)
}

fn probe_statistic<F: Scalar>(
    x_train: &Array2<F>,
    model: &DensityModel<F>,
    seed: u64,
) -> Result<f64> {
    let probe = model.sample(probe_size(x_train.nrows()), seed)?;
    Ok(ks_two_sample(x_train, &probe)?.aggregate)
}

fn generative_source<F: Scalar>(
    mission_id: u32,
    task_id: TaskId,
    density: DensityModel<F>,
    snapshot: Arc<MultiHeadMlp<F>>,
    train_size: usize,
) -> Result<ReplaySource<F>> {
    snapshot.head(task_id)?;
    Ok(ReplaySource {
        mission_id,
        task_id,
        kind: ReplaySourceKind::Generative { density, snapshot, train_size },
    })
}

/// Fits both families, arbitrates by probe KS statistic, and wraps the
/// winner with the label-model snapshot.
#[allow(clippy::too_many_arguments)]
pub fn build_sdg_source<F: Scalar>(
    mission_id: u32,
    task_id: TaskId,
    x_train: &Array2<F>,
    x_val: &Array2<F>,
    c_max: usize,
    h_max: f64,
    snapshot: Arc<MultiHeadMlp<F>>,
    seed: u64,
) -> Result<(ReplaySource<F>, KsArbitration)> {
    let gmm = DensityModel::Gmm(gmm_select_and_fit(x_train, x_val, c_max, derive_seed(seed, 1))?);
    let kde = DensityModel::Kde(kde_select_and_fit(x_train, x_val, h_max)?);
    let stat_gmm = probe_statistic(x_train, &gmm, derive_seed(seed, 2))?;
    let stat_kde = probe_statistic(x_train, &kde, derive_seed(seed, 3))?;

    let (winner_model, winner_name, winning_statistic) = if stat_gmm <= stat_kde {
        (gmm, "gmm", stat_gmm)
    } else {
        (kde, "kde", stat_kde)
    };
    let arbitration = KsArbitration {
        gmm_statistic: Some(stat_gmm),
        kde_statistic: Some(stat_kde),
        winner: winner_name.to_string(),
        winning_statistic,
    };
    let train_size = x_train.nrows();
    Ok((generative_source(mission_id, task_id, winner_model, snapshot, train_size)?, arbitration))
}

/// GMM-only source for the pinned-method ablation.
#[allow(clippy::too_many_arguments)]
pub fn build_gmm_source<F: Scalar>(
    mission_id: u32,
    task_id: TaskId,
    x_train: &Array2<F>,
    x_val: &Array2<F>,
    c_max: usize,
    snapshot: Arc<MultiHeadMlp<F>>,
    seed: u64,
) -> Result<(ReplaySource<F>, KsArbitration)> {
    let gmm = DensityModel::Gmm(gmm_select_and_fit(x_train, x_val, c_max, derive_seed(seed, 1))?);
    let stat = probe_statistic(x_train, &gmm, derive_seed(seed, 2))?;
    let arbitration = KsArbitration {
        gmm_statistic: Some(stat),
        kde_statistic: None,
        winner: "gmm".to_string(),
        winning_statistic: stat,
    };
    let train_size = x_train.nrows();
    Ok((generative_source(mission_id, task_id, gmm, snapshot, train_size)?, arbitration))
}

/// KDE-only source for the pinned-method ablation.
#[allow(clippy::too_many_arguments)]
pub fn build_kde_source<F: Scalar>(
    mission_id: u32,
    task_id: TaskId,
    x_train: &Array2<F>,
    x_val: &Array2<F>,
    h_max: f64,
    snapshot: Arc<MultiHeadMlp<F>>,
    seed: u64,
) -> Result<(ReplaySource<F>, KsArbitration)> {
    let kde = DensityModel::Kde(kde_select_and_fit(x_train, x_val, h_max)?);
    let stat = probe_statistic(x_train, &kde, derive_seed(seed, 2))?;
    let arbitration = KsArbitration {
        gmm_statistic: None,
        kde_statistic: Some(stat),
        winner: "kde".to_string(),
        winning_statistic: stat,
    };
    let train_size = x_train.nrows();
    Ok((generative_source(mission_id, task_id, kde, snapshot, train_size)?, arbitration))
}

/// Labels a batch with the snapshot head's argmax.
pub(crate) fn snapshot_labels<F: Scalar>(
    snapshot: &MultiHeadMlp<F>,
    head: TaskId,
    rows: ArrayView2<'_, F>,
) -> Result<Vec<u32>> {
    let probs = snapshot.forward(rows, head)?;
    Ok(probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            for (i, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = i;
                }
            }
            best as u32
        })
        .collect())
}

/// Draws `count` synthetic rows from a generative source and labels them
/// with the stored snapshot. Deterministic under `seed`.
pub fn generate_replay<F: Scalar>(
    source: &ReplaySource<F>,
    count: usize,
    seed: u64,
) -> Result<(Array2<F>, Vec<u32>)> {
    match &source.kind {
        ReplaySourceKind::Preserved { .. } => Err(Error::invalid_input(
            "generate_replay needs a generative source; this one holds preserved rows",
        )),
        ReplaySourceKind::Generative { density, snapshot, .. } => {
            let rows = density.sample(count, seed)?;
            let labels = snapshot_labels(snapshot, source.task_id, rows.view())?;
            Ok((rows, labels))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{train_mission, CurrentMission, NoReplay, TrainConfig};
    use crate::rng::stream;

    fn blob_data(n: usize, d: usize, centers: &[f64], seed: u64) -> (Array2<f64>, Vec<u32>) {
        let mut rng = stream(seed, 0);
        let mut x = Array2::<f64>::zeros((n, d));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % centers.len();
            for j in 0..d {
                x[[i, j]] = centers[class] + f64::standard_normal(&mut rng);
            }
            y.push(class as u32);
        }
        (x, y)
    }

    fn snapshot_for(x: &Array2<f64>, y: &[u32], classes: usize) -> Arc<MultiHeadMlp<f64>> {
        let mut model = MultiHeadMlp::new(&[x.ncols(), 16, 8], 3).unwrap();
        model.add_head(0, classes).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.02,
            momentum: 0.9,
            batch_size: 32,
            epochs: 40,
            seed: 5,
        };
        let current = CurrentMission { mission_id: 1, task_id: 0, features: x, labels: y };
        train_mission(&mut model, &current, &mut NoReplay, &cfg).unwrap();
        Arc::new(model)
    }

    #[test]
    fn single_gaussian_wins_with_a_close_probe() {
        // 1k-sample synthetic Gaussian, D = 10: the winning probe must sit
        // within 0.1 aggregate KS of the real data.
        let (x, y) = blob_data(1000, 10, &[0.0], 11);
        let (val, _) = blob_data(300, 10, &[0.0], 12);
        let snapshot = snapshot_for(&x, &y, 1);
        let (source, arb) =
            build_sdg_source(1, 0, &x, &val, 8, 0.5, snapshot, 21).unwrap();
        assert!(arb.winning_statistic < 0.1, "winner statistic {}", arb.winning_statistic);
        assert!(source.is_generative());
        assert!(arb.gmm_statistic.is_some() && arb.kde_statistic.is_some());
    }

    #[test]
    fn arbitration_picks_the_smaller_statistic_with_gmm_ties() {
        let a = KsArbitration {
            gmm_statistic: Some(0.215),
            kde_statistic: Some(0.050),
            winner: String::new(),
            winning_statistic: 0.0,
        };
        // The decision rule itself: statistic_kde < statistic_gmm -> KDE.
        let winner = if a.gmm_statistic.unwrap() <= a.kde_statistic.unwrap() {
            "gmm"
        } else {
            "kde"
        };
        assert_eq!(winner, "kde");
        // Equal statistics tie-break to the GMM.
        let winner_tie = if 0.08f64 <= 0.08f64 { "gmm" } else { "kde" };
        assert_eq!(winner_tie, "gmm");
    }

    #[test]
    fn replay_labels_cover_every_class_of_separable_blobs() {
        let (x, y) = blob_data(600, 4, &[0.0, 8.0, -8.0], 7);
        let (val, _) = blob_data(200, 4, &[0.0, 8.0, -8.0], 8);
        let snapshot = snapshot_for(&x, &y, 3);
        // Snapshot must be accurate for the label histogram to make sense.
        let labels = snapshot_labels(&snapshot, 0, x.view()).unwrap();
        let acc = labels.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
        assert!(acc >= 0.99, "snapshot accuracy {acc}");

        let (source, _) = build_sdg_source(1, 0, &x, &val, 6, 0.5, snapshot, 5).unwrap();
        let (rows, syn_labels) = generate_replay(&source, 400, 9).unwrap();
        assert_eq!(rows.nrows(), 400);
        for class in 0..3u32 {
            assert!(
                syn_labels.iter().any(|&l| l == class),
                "class {class} missing from replay labels"
            );
        }
        // Determinism under the seed.
        let (rows2, labels2) = generate_replay(&source, 400, 9).unwrap();
        assert_eq!(rows, rows2);
        assert_eq!(syn_labels, labels2);
    }

    #[test]
    fn empty_replay_and_preserved_sources_error_paths() {
        let (x, y) = blob_data(100, 3, &[0.0], 2);
        let snapshot = snapshot_for(&x, &y, 1);
        let (source, _) = build_kde_source(1, 0, &x, &x, 0.5, snapshot, 4).unwrap();
        let (rows, labels) = generate_replay(&source, 0, 1).unwrap();
        assert_eq!(rows.nrows(), 0);
        assert!(labels.is_empty());

        let preserved = ReplaySource {
            mission_id: 1,
            task_id: 0,
            kind: ReplaySourceKind::Preserved { rows: x, labels: y },
        };
        assert!(generate_replay(&preserved, 5, 1).is_err());
    }

    #[test]
    fn snapshot_must_own_the_head() {
        let (x, y) = blob_data(50, 3, &[0.0], 3);
        let snapshot = snapshot_for(&x, &y, 1);
        assert!(build_kde_source(1, 9, &x, &x, 0.5, snapshot, 4).is_err());
    }
}
