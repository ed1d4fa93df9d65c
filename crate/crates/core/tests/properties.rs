mod common;

use fraudkit::clustering::{assign, fit_kmeans_matrix};
use fraudkit::dataset::{apply_scaler, fit_scaler, rebalance, split_holdout, Dataset};
use fraudkit::ensemble::{
    aggregate_columns, aggregate_mv, aggregate_or, enumerate_ensembles, predict_ensemble, EnsembleSpec, Rule, VoteMatrix,
};
use fraudkit::eval::{build_report, compare_rows, confusion, metrics, stratified_folds, ConfusionCounts, ReportRow};
use fraudkit::feature_select::{mutual_information_scores, pearson_scores, select_features};
use fraudkit::learners::{fit_classifier, BinaryClassifier, Family, ModelSpec, Variant};
use fraudkit::mixed::{fit_mixed, predict_mixed, PredictorTemplate};
use fraudkit::Matrix;
use proptest::prelude::*;

fn votes(max_rows: usize, width: impl Strategy<Value = usize>) -> impl Strategy<Value = Vec<Vec<u8>>> {
    width.prop_flat_map(move |m| prop::collection::vec(prop::collection::vec(0u8..=1, m), 1..max_rows))
}

fn odd_width() -> impl Strategy<Value = usize> {
    (0usize..4).prop_map(|h| 2 * h + 1)
}

fn labelled(max: usize) -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1..max).prop_flat_map(|n| (prop::collection::vec(0u8..=1, n), prop::collection::vec(0u8..=1, n)))
}

fn columns(rows: &[Vec<u8>]) -> Vec<Vec<u8>> {
    (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

/// Rows with both classes present at least `min_per_class` times.
fn two_class_data(dim: usize, min_per_class: usize) -> impl Strategy<Value = Dataset> {
    (prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), 2 * min_per_class..60), any::<u64>()).prop_map(
        move |(rows, seed)| {
            let n = rows.len();
            let labels: Vec<u8> = (0..n).map(|i| u8::from((i as u64 + seed) % 3 == 0)).collect();
            let mut labels = labels;
            for (i, l) in labels.iter_mut().enumerate().take(2 * min_per_class) {
                *l = u8::from(i % 2 == 0);
            }
            common::dataset(rows, labels)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mv_is_the_mode(rows in votes(40, odd_width())) {
        let got = aggregate_mv(&VoteMatrix::from_rows(&rows).unwrap()).unwrap();
        let expected: Vec<u8> = rows.iter().map(|r| common::mode_oracle(r)).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn or_is_any(rows in votes(40, 1usize..6)) {
        let got = aggregate_or(&VoteMatrix::from_rows(&rows).unwrap());
        let expected: Vec<u8> = rows.iter().map(|r| u8::from(r.contains(&1))).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn or_dominates_every_member(rows in votes(40, 2usize..6), actual_seed in any::<u64>()) {
        let actual: Vec<u8> = (0..rows.len()).map(|i| u8::from((i as u64 ^ actual_seed) % 2 == 0)).collect();
        let or = aggregate_or(&VoteMatrix::from_rows(&rows).unwrap());
        let c = confusion(&or, &actual).unwrap();
        for col in columns(&rows) {
            let mc = confusion(&col, &actual).unwrap();
            prop_assert!(c.tp >= mc.tp);
            prop_assert!(c.tn <= mc.tn);
        }
    }

    #[test]
    fn aggregation_ignores_member_order(rows in votes(30, odd_width()), rot in 0usize..7) {
        let cols = columns(&rows);
        let m = cols.len();
        let mut shuffled: Vec<&[u8]> = cols.iter().map(Vec::as_slice).collect();
        shuffled.rotate_left(rot % m);
        let orig: Vec<&[u8]> = cols.iter().map(Vec::as_slice).collect();
        for rule in [Rule::MajorityVote, Rule::Or] {
            prop_assert_eq!(aggregate_columns(rule, &orig), aggregate_columns(rule, &shuffled));
        }
    }

    #[test]
    fn identical_members_reproduce_the_member(col in prop::collection::vec(0u8..=1, 1..50), half in 0usize..3) {
        let copies: Vec<&[u8]> = vec![col.as_slice(); 2 * half + 1];
        prop_assert_eq!(&aggregate_columns(Rule::MajorityVote, &copies), &col);
        prop_assert_eq!(&aggregate_columns(Rule::Or, &copies), &col);
    }

    #[test]
    fn enumeration_is_complete_and_ordered(m in 5usize..10) {
        let pool: Vec<String> = (0..m).map(|i| format!("M{i}")).collect();
        for rule in [Rule::MajorityVote, Rule::Or] {
            let specs = enumerate_ensembles(&pool, rule).unwrap();
            let expected: usize = rule.sizes().iter().filter(|&&s| s <= m).map(|&s| binomial(m, s)).sum();
            prop_assert_eq!(specs.len(), expected);
            for (i, s) in specs.iter().enumerate() {
                prop_assert_eq!(s.index, i + 1);
                prop_assert!(s.members.windows(2).all(|w| w[0] < w[1]));
            }
            for w in specs.windows(2) {
                let key = |s: &EnsembleSpec| (s.members.len(), s.members.clone());
                prop_assert!(key(&w[0]) < key(&w[1]));
            }
        }
    }

    #[test]
    fn confusion_matches_counting((pred, actual) in labelled(200)) {
        let c = confusion(&pred, &actual).unwrap();
        let count = |p: u8, a: u8| pred.iter().zip(&actual).filter(|(&x, &y)| x == p && y == a).count();
        prop_assert_eq!(c, ConfusionCounts { tp: count(1, 1), tn: count(0, 0), fp: count(1, 0), fn_: count(0, 1) });
    }

    #[test]
    fn bcr_is_mean_of_sens_and_spec(tp in 0usize..500, tn in 0usize..500, fp in 0usize..500, fn_ in 0usize..500) {
        let m = metrics(&ConfusionCounts { tp, tn, fp, fn_ });
        match (m.sens, m.spec) {
            (Some(s), Some(p)) => prop_assert!((m.bcr.unwrap() - (s + p) / 2.0).abs() <= 1e-12),
            _ => prop_assert!(m.bcr.is_none()),
        }
        for v in [m.acc, m.bcr, m.sens, m.spec, m.f1, m.mean4].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn folds_partition_and_stratify(n0 in 10usize..120, n1 in 10usize..40, folds in 2usize..11, seed in any::<u64>()) {
        let mut labels = vec![0u8; n0];
        labels.extend(vec![1u8; n1]);
        let parts = stratified_folds(&labels, folds, seed).unwrap();
        prop_assert_eq!(parts.len(), folds);
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n0 + n1).collect::<Vec<_>>());
        let spread = |v: Vec<usize>| v.iter().max().unwrap() - v.iter().min().unwrap();
        prop_assert!(spread(parts.iter().map(Vec::len).collect()) <= 1);
        for class in [0u8, 1] {
            prop_assert!(spread(parts.iter().map(|p| p.iter().filter(|&&i| labels[i] == class).count()).collect()) <= 1);
        }
    }

    #[test]
    fn report_order_is_the_comparison_order(counts in prop::collection::vec((0usize..20, 0usize..20, 0usize..20, 0usize..20), 1..30)) {
        let rows: Vec<ReportRow> = counts
            .iter()
            .enumerate()
            .map(|(i, &(tp, tn, fp, fn_))| {
                let c = ConfusionCounts { tp, tn, fp, fn_ };
                ReportRow { label: format!("r{i}"), composition: String::new(), counts: c, metrics: metrics(&c), folds: vec![] }
            })
            .collect();
        let report = build_report("t", rows.clone());
        prop_assert_eq!(report.len(), rows.len());
        // undefined keys after all defined ones, stable among equals
        let key = |v: Option<f64>| v.map_or((1, 0.0), |x| (0, -x));
        for w in report.rows.windows(2) {
            let (a, b) = (&w[0].metrics, &w[1].metrics);
            let ka = (key(a.bcr), key(a.sens), key(a.mean4));
            let kb = (key(b.bcr), key(b.sens), key(b.mean4));
            prop_assert!(ka.partial_cmp(&kb) != Some(std::cmp::Ordering::Greater));
            prop_assert_ne!(compare_rows(a, b), std::cmp::Ordering::Greater);
            if ka == kb {
                let idx = |r: &ReportRow| r.label[1..].parse::<usize>().unwrap();
                prop_assert!(idx(&w[0]) < idx(&w[1]));
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filter_scores_are_bounded(data in two_class_data(4, 3)) {
        for p in pearson_scores(&data).unwrap() {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
        }
        for mi in mutual_information_scores(&data, 10).unwrap() {
            prop_assert!(mi >= -1e-12);
        }
    }

    #[test]
    fn filter_scores_follow_feature_order(data in two_class_data(4, 3), rot in 1usize..4) {
        let perm: Vec<usize> = (0..4).map(|j| (j + rot) % 4).collect();
        let moved = data.select_features(&perm);
        let (p, pm) = (pearson_scores(&data).unwrap(), pearson_scores(&moved).unwrap());
        let (m, mm) = (mutual_information_scores(&data, 10).unwrap(), mutual_information_scores(&moved, 10).unwrap());
        for (new, &old) in perm.iter().enumerate() {
            prop_assert!((pm[new] - p[old]).abs() <= 1e-12);
            prop_assert!((mm[new] - m[old]).abs() <= 1e-12);
        }
    }

    #[test]
    fn relevance_is_two_of_three(data in two_class_data(5, 4), seed in any::<u64>()) {
        let forest = ModelSpec::new(Family::RandomForest, Variant::Classical).with_param("trees", 10.0);
        let v = select_features(&data, 10, &forest, seed).unwrap();
        let above = |s: &[f64]| {
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|&x| x > mean).collect::<Vec<_>>()
        };
        let (a, b, c) = (above(&v.pearson), above(&v.mutual_information), above(&v.importance));
        let majority: Vec<bool> = (0..5).map(|j| [a[j], b[j], c[j]].iter().filter(|&&x| x).count() >= 2).collect();
        if majority.contains(&true) {
            prop_assert!(!v.forced);
            prop_assert_eq!(&v.relevant, &majority);
        } else {
            prop_assert!(v.forced);
            prop_assert_eq!(v.relevant.iter().filter(|&&r| r).count(), 1);
        }
    }

    #[test]
    fn lloyd_never_increases_inertia(points in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 8..80), k in 1usize..6, seed in any::<u64>()) {
        let x = Matrix::from_rows(&points).unwrap();
        let km = fit_kmeans_matrix(&x, k, seed, 300, 1e-4).unwrap();
        prop_assert!(km.inertia_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        let got = assign(&km, &x).unwrap();
        for (i, row) in x.iter_rows().enumerate() {
            let d = |c: usize| -> f64 { row.iter().zip(km.centroids.row(c)).map(|(a, b)| (a - b).powi(2)).sum() };
            let best = (0..km.k).map(d).fold(f64::INFINITY, f64::min);
            prop_assert!(d(got[i]) <= best);
        }
    }

    #[test]
    fn knn_agrees_with_sorting(data in two_class_data(2, 3), k in prop::sample::select(vec![1usize, 3, 5]), q in prop::collection::vec(-5.0f64..5.0, 2)) {
        let spec = ModelSpec::new(Family::Knn, Variant::Classical).with_param("k", k as f64);
        let model = fit_classifier(&spec, &data).unwrap();
        let mut order: Vec<(f64, u8)> = data
            .features()
            .iter_rows()
            .zip(data.labels())
            .map(|(p, &l)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2), l))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        // a tie at the k-th distance leaves the answer underdetermined
        prop_assume!(order[k - 1].0 < order[k].0);
        let frauds = order[..k].iter().filter(|(_, l)| *l == 1).count();
        prop_assert_eq!(model.predict_one(&q), u8::from(2 * frauds > k));
    }

    #[test]
    fn short_circuit_matches_full_votes(data in two_class_data(3, 3), thresholds in prop::collection::vec(-4.0f64..4.0, 2..6)) {
        struct Cut(usize, f64);
        impl BinaryClassifier for Cut {
            fn dim(&self) -> usize { 3 }
            fn predict_one(&self, x: &[f64]) -> u8 { u8::from(x[self.0] > self.1) }
        }
        let cuts: Vec<Cut> = thresholds.iter().enumerate().map(|(i, &t)| Cut(i % 3, t)).collect();
        let refs: Vec<&Cut> = cuts.iter().collect();
        let m = cuts.len();
        let spec = EnsembleSpec::new(1, Rule::Or, (0..m).collect()).unwrap();
        let out = predict_ensemble(&spec, &refs, data.features()).unwrap();
        let cols: Vec<Vec<u8>> = cuts.iter().map(|c| c.predict(data.features()).unwrap()).collect();
        let col_refs: Vec<&[u8]> = cols.iter().map(Vec::as_slice).collect();
        prop_assert_eq!(&out.labels, &aggregate_columns(Rule::Or, &col_refs));
        prop_assert_eq!(out.invocations[0], data.len());
        prop_assert!(out.invocations.iter().sum::<usize>() <= data.len() * m);
    }

    #[test]
    fn scaler_maps_training_data_into_unit_box(data in two_class_data(3, 2)) {
        let scaled = apply_scaler(&fit_scaler(&data).unwrap(), &data).unwrap();
        for row in scaled.features().iter_rows() {
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        prop_assert_eq!(scaled.labels(), data.labels());
    }

    #[test]
    fn holdout_is_a_stratified_partition(data in two_class_data(2, 10), seed in any::<u64>()) {
        let split = split_holdout(&data, 0.3, seed).unwrap();
        let mut all = [split.train_indices.clone(), split.test_indices.clone()].concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..data.len()).collect::<Vec<_>>());
        let (_, test) = split.apply(&data);
        let [n0, n1] = data.class_counts();
        let [t0, t1] = test.class_counts();
        prop_assert_eq!(t0, (n0 as f64 * 0.3).round() as usize);
        prop_assert_eq!(t1, (n1 as f64 * 0.3).round() as usize);
    }

    #[test]
    fn rebalance_equalises_classes(data in two_class_data(2, 3), seed in any::<u64>()) {
        let balanced = rebalance(&data, seed).unwrap();
        let [a, b] = balanced.class_counts();
        prop_assert_eq!(a, b);
        prop_assert_eq!(a, data.class_counts().into_iter().max().unwrap());
    }

    #[test]
    fn mixed_model_labels_every_object(data in two_class_data(2, 6), k in 1usize..4, seed in any::<u64>()) {
        let template = PredictorTemplate::Single(ModelSpec::new(Family::NaiveBayes, Variant::Classical));
        let model = fit_mixed(&data, k, &template, seed, Default::default()).unwrap();
        let pred = predict_mixed(&model, data.features()).unwrap();
        prop_assert_eq!(pred.len(), data.len());
        prop_assert_eq!(model.summary.iter().map(|s| s.size).sum::<usize>(), data.len());
        prop_assert_eq!(model.summary.iter().map(|s| s.fraud_count).sum::<usize>(), data.class_counts()[1]);
    }
}
