//! Property tests for the crate-wide invariants.

use ndarray::Array2;
use proptest::prelude::*;

use replaycl::data::{
    load_csv, normalize_apply, normalize_fit_apply, pca_fit, save_csv, smote_balance,
    stratified_time_split, TabularDataset,
};
use replaycl::density::{gmm_fit_em, gmm_score, kde_log_likelihood, ks_two_sample, KdeModel};
use replaycl::nn::{softmax_rows, LossLedger};
use replaycl::replay::{compose_balanced_batch, preserve_data, ReplaySource, ReplaySourceKind};

fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), values).unwrap()
}

fn finite_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-1e3..1e3f64, rows * cols)
        .prop_map(move |v| matrix(rows, cols, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalization_is_idempotent(features in finite_matrix(12, 4)) {
        let data = TabularDataset::new(features, vec![0; 12]).unwrap();
        let (once, _) = normalize_fit_apply(&data).unwrap();
        let (twice, state2) = normalize_fit_apply(&once).unwrap();
        for (a, b) in once.features().iter().zip(twice.features().iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // Re-applying a normalized dataset's own state is also the identity.
        let again = normalize_apply(&state2, &once).unwrap();
        for (a, b) in once.features().iter().zip(again.features().iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // And every fitted output lies in [0, 1].
        for &v in once.features().iter() {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn smote_balances_and_interpolates(
        sizes in proptest::collection::vec(2usize..12, 2..4),
        seed in 0u64..500,
    ) {
        let total: usize = sizes.iter().sum();
        let mut values = Vec::with_capacity(total * 2);
        let mut labels = Vec::with_capacity(total);
        for (class, &count) in sizes.iter().enumerate() {
            for i in 0..count {
                values.push(class as f64 * 50.0 + i as f64);
                values.push(i as f64 * 0.5);
                labels.push(class as u32);
            }
        }
        let data = TabularDataset::new(matrix(total, 2, values), labels).unwrap();
        let balanced = smote_balance(&data, 5, seed).unwrap();

        // Uniform histogram at the majority count.
        let max = sizes.iter().copied().max().unwrap();
        for (_, rows) in balanced.class_indices() {
            prop_assert_eq!(rows.len(), max);
        }
        // Synthetic rows are convex combinations of same-class originals:
        // both coordinates lie within the class's bounding box and on the
        // class's line structure (coordinate 2 = 0.5 * (coordinate 1 mod 50)).
        for i in data.n_rows()..balanced.n_rows() {
            let class = balanced.labels()[i] as usize;
            let x = balanced.features()[[i, 0]];
            let y = balanced.features()[[i, 1]];
            let lo = class as f64 * 50.0;
            let hi = lo + sizes[class] as f64 - 1.0;
            prop_assert!(x >= lo - 1e-9 && x <= hi + 1e-9);
            prop_assert!((y - (x - lo) * 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn pca_components_stay_orthonormal_under_rescaling(
        scale in 1e-3..1e3f64,
        seed in 0u64..200,
    ) {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::StandardNormal;
        let features = Array2::from_shape_fn((25, 4), |_| {
            let z: f64 = normal.sample(&mut rng);
            z * scale
        });
        let data = TabularDataset::new(features, vec![0; 25]).unwrap();
        let p = pca_fit(&data, 3).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..4).map(|j| p.components[a][j] * p.components[b][j]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn split_partitions_every_entity_exactly(
        entity_sizes in proptest::collection::vec(3usize..40, 1..5),
    ) {
        let total: usize = entity_sizes.iter().sum();
        let mut entities = Vec::with_capacity(total);
        for (e, &count) in entity_sizes.iter().enumerate() {
            entities.extend(std::iter::repeat_n(e as u32, count));
        }
        let data = TabularDataset::with_metadata(
            Array2::zeros((total, 1)),
            vec![0; total],
            None,
            Some(entities),
            None,
        )
        .unwrap();
        let s = stratified_time_split(&data, (0.7, 0.1, 0.2)).unwrap();
        prop_assert_eq!(
            s.train.n_rows() + s.validation.n_rows() + s.test.n_rows(),
            total
        );
        // Per entity: counts follow the floor rule with the remainder on train.
        for (e, &count) in entity_sizes.iter().enumerate() {
            let in_split = |d: &TabularDataset<f64>| {
                d.entities().unwrap().iter().filter(|&&x| x == e as u32).count()
            };
            let n_val = (0.1 * count as f64).floor() as usize;
            let n_te = (0.2 * count as f64).floor() as usize;
            prop_assert_eq!(in_split(&s.validation), n_val);
            prop_assert_eq!(in_split(&s.test), n_te);
            prop_assert_eq!(in_split(&s.train), count - n_val - n_te);
        }
    }

    #[test]
    fn ks_statistic_is_invariant_under_monotone_transforms(
        a in proptest::collection::vec(-50.0..50.0f64, 5..40),
        b in proptest::collection::vec(-50.0..50.0f64, 5..40),
        scale in 0.1..10.0f64,
        offset in -5.0..5.0f64,
    ) {
        let am = matrix(a.len(), 1, a.clone());
        let bm = matrix(b.len(), 1, b.clone());
        let base = ks_two_sample(&am, &bm).unwrap();
        // x -> scale * x + offset and x -> atan(x) are strictly increasing.
        let affine = |m: &Array2<f64>| m.mapv(|v| scale * v + offset);
        let smooth = |m: &Array2<f64>| m.mapv(f64::atan);
        let t1 = ks_two_sample(&affine(&am), &affine(&bm)).unwrap();
        let t2 = ks_two_sample(&smooth(&am), &smooth(&bm)).unwrap();
        prop_assert_eq!(base.aggregate, t1.aggregate);
        prop_assert_eq!(base.aggregate, t2.aggregate);
    }

    #[test]
    fn preservation_size_bounds_hold(
        losses in proptest::collection::vec(0.0..10.0f64, 4..40),
        percentile in 1.0..99.0f64,
    ) {
        let n = losses.len();
        let mut ledger = LossLedger::<f64>::new(n);
        for (i, &l) in losses.iter().enumerate() {
            ledger.add(i, l);
        }
        ledger.complete_epoch();
        let rows = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let (kept, _) = preserve_data(&ledger, &rows, &vec![0; n], percentile, &[0]).unwrap();
        let lower = ((1.0 - percentile / 100.0) * n as f64).ceil() as usize;
        prop_assert!(kept.nrows() >= lower, "kept {} < lower bound {lower}", kept.nrows());
        prop_assert!(kept.nrows() <= n);

        // Every preserved instance's loss dominates every discarded one's.
        let kept_ids: Vec<usize> = kept.column(0).iter().map(|&v| v as usize).collect();
        let kept_min = kept_ids.iter().map(|&i| losses[i]).fold(f64::INFINITY, f64::min);
        let discarded_max = (0..n)
            .filter(|i| !kept_ids.contains(i))
            .map(|i| losses[i])
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(kept_min >= discarded_max);
    }

    #[test]
    fn balanced_batches_deviate_from_uniform_only_by_the_remainder(
        batch in 3usize..64,
        n_sources in 1usize..4,
        seed in 0u64..100,
    ) {
        prop_assume!(batch >= n_sources + 1);
        let current = Array2::<f64>::zeros((20, 2));
        let labels = vec![0u32; 20];
        let sources: Vec<ReplaySource<f64>> = (0..n_sources)
            .map(|i| ReplaySource {
                mission_id: i as u32 + 1,
                task_id: 0,
                kind: ReplaySourceKind::Preserved {
                    rows: Array2::zeros((7, 2)),
                    labels: vec![0; 7],
                },
            })
            .collect();
        let tagged = compose_balanced_batch(
            (&current, &labels, 99, 0),
            &sources,
            batch,
            seed,
        )
        .unwrap();
        let n = n_sources + 1;
        let quota = batch / n;
        let sizes: Vec<usize> = tagged.parts.iter().map(|p| p.features.nrows()).collect();
        let total: usize = sizes.iter().sum();
        prop_assert_eq!(total, batch);
        prop_assert_eq!(sizes[0], batch - (n - 1) * quota);
        for &s in &sizes[1..] {
            prop_assert_eq!(s, quota);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(logits in finite_matrix(6, 5)) {
        let probs = softmax_rows(&logits);
        for row in probs.rows() {
            let sum: f64 = row.sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            for &p in row {
                prop_assert!(p >= 0.0);
            }
        }
    }

    #[test]
    fn density_scores_stay_finite(values in proptest::collection::vec(-20.0..20.0f64, 24)) {
        let x = matrix(12, 2, values);
        let gmm = gmm_fit_em(&x, 2, 3, 40, 1e-4).unwrap();
        prop_assert!(gmm_score(&gmm, &x).unwrap().is_finite());
        let kde = KdeModel::new(0.05, x.clone()).unwrap();
        // Far queries underflow the kernel sum without log-sum-exp; the
        // score must still be finite.
        let far = x.mapv(|v| v + 500.0);
        prop_assert!(kde_log_likelihood(&kde, &far).unwrap().is_finite());
    }

    #[test]
    fn csv_round_trip_is_exact(values in proptest::collection::vec(-1e6..1e6f64, 18)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let data = TabularDataset::new(matrix(6, 3, values), vec![0, 1, 2, 0, 1, 2]).unwrap();
        save_csv(&data, &path).unwrap();
        let back: TabularDataset<f64> = load_csv(&path).unwrap();
        prop_assert_eq!(back.features(), data.features());
        prop_assert_eq!(back.labels(), data.labels());
    }
}
