use ambient_agitation::data_model::{Channel, ChannelSeries};
use ambient_agitation::evaluation::{compute_metrics, stratified_folds, stratified_split};
use ambient_agitation::features::{window_features, DiffMode, FeatureKind, FeatureLayout};
use ambient_agitation::gbt::{fit_gbt, predict_gbt, GbtParams};
use ambient_agitation::seeds;
use ambient_agitation::signal::{median_filter, normalize, MinMax};
use ndarray::Array2;
use proptest::prelude::*;

fn labels(min_each: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, 0..60).prop_map(move |mut v| {
        v.extend(std::iter::repeat_n(0, min_each));
        v.extend(std::iter::repeat_n(1, min_each));
        v
    })
}

proptest! {
    #[test]
    fn metrics_stay_in_unit_interval(pairs in prop::collection::vec((0u8..=1, 0u8..=1), 1..80)) {
        let (y, p): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let r = compute_metrics(&y, &p).unwrap();
        for v in [r.accuracy, r.precision, r.recall, r.f1_positive, r.f1_negative, r.weighted_f1, r.chance_weighted_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(r.majority_baseline_accuracy >= 0.5);
        prop_assert_eq!(r.confusion.total(), y.len());
    }

    #[test]
    fn perfect_predictions_score_one(y in labels(1)) {
        let r = compute_metrics(&y, &y).unwrap();
        prop_assert_eq!(r.weighted_f1, 1.0);
        prop_assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn metrics_ignore_row_order(pairs in prop::collection::vec((0u8..=1, 0u8..=1), 1..60), rot in 0usize..60) {
        let (y, p): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let k = rot % y.len();
        let (mut y2, mut p2) = (y.clone(), p.clone());
        y2.rotate_left(k);
        p2.rotate_left(k);
        prop_assert_eq!(compute_metrics(&y, &p).unwrap().weighted_f1, compute_metrics(&y2, &p2).unwrap().weighted_f1);
    }

    #[test]
    fn median_stays_within_window_extremes(values in prop::collection::vec(-100.0f64..100.0, 1..120), len in 1usize..12) {
        let s = ChannelSeries::complete(Channel::Humidity, 0, values.clone());
        let out = median_filter(&s, len).unwrap();
        prop_assert_eq!(out.len(), values.len());
        let (lo, hi) = values.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        for v in &out.values {
            prop_assert!(*v >= lo && *v <= hi);
        }
    }

    #[test]
    fn median_preserves_constants(c in -1e3f64..1e3, n in 1usize..80, len in 1usize..12) {
        let s = ChannelSeries::complete(Channel::Pressure, 0, vec![c; n]);
        prop_assert!(median_filter(&s, len).unwrap().values.iter().all(|&v| v == c));
    }

    #[test]
    fn normalize_is_monotone_and_bounded(mut values in prop::collection::vec(-1e4f64..1e4, 2..80), lo in -1e4f64..0.0, width in 1.0f64..2e4) {
        values.sort_by(f64::total_cmp);
        let s = ChannelSeries::complete(Channel::Light, 0, values);
        let (out, _) = normalize(&s, MinMax { min: lo, max: lo + width });
        for w in out.values.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert!(out.values.iter().all(|v| (0.0..=100.0).contains(v)));
    }

    #[test]
    fn window_spread_features_ignore_offsets(xs in prop::collection::vec(0.0f64..100.0, 2..50), shift in -50.0f64..50.0, t in 0.0f64..1e9) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let a = window_features([&xs, &xs, &xs, &xs, &xs], t, DiffMode::Absolute);
        let b = window_features([&shifted, &xs, &xs, &xs, &xs], t, DiffMode::Absolute);
        prop_assert!((a[0] + shift - b[0]).abs() < 1e-9);
        for f in [3usize, 4, 5] {
            prop_assert!((a[f] - b[f]).abs() < 1e-7 * a[f].abs().max(1.0));
        }
        prop_assert!((0.0..100.0).contains(&a[6]));
        prop_assert!(a.chunks(7).all(|c| c[6] == a[6]));
    }

    #[test]
    fn layout_index_round_trips(w in 0usize..9, c in 0usize..5, f in 0usize..7) {
        let layout = FeatureLayout { n_windows: 9 };
        let idx = layout.index(w, Channel::ALL[c], FeatureKind::ALL[f]);
        prop_assert_eq!(idx, w * 35 + c * 7 + f);
        prop_assert_eq!(layout.decompose(idx), (w, Channel::ALL[c], FeatureKind::ALL[f]));
    }

    #[test]
    fn split_partitions_and_stratifies(y in labels(2), seed in any::<u64>()) {
        let s = stratified_split(&y, 0.5, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
        for class in [0u8, 1] {
            let total = y.iter().filter(|&&t| t == class).count() as f64;
            let train = s.train.iter().filter(|&&i| y[i] == class).count() as f64;
            prop_assert!((train - total / 2.0).abs() <= 0.5);
        }
        prop_assert_eq!(s, stratified_split(&y, 0.5, seed).unwrap());
    }

    #[test]
    fn folds_cover_every_row_once(y in labels(5), seed in any::<u64>()) {
        let folds = stratified_folds(&y, 5, seed).unwrap();
        let mut seen = vec![0usize; y.len()];
        for f in &folds {
            for &i in &f.test {
                seen[i] += 1;
            }
            prop_assert_eq!(f.train.len() + f.test.len(), y.len());
        }
        prop_assert!(seen.iter().all(|&k| k == 1));
    }

    #[test]
    fn gbt_probabilities_and_training_loss(rows in prop::collection::vec((prop::collection::vec(-5.0f64..5.0, 3), 0u8..=1), 6..40)) {
        let mut y: Vec<u8> = rows.iter().map(|r| r.1).collect();
        y[0] = 0;
        y[1] = 1;
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.0.clone()).collect();
        let x = Array2::from_shape_vec((y.len(), 3), flat).unwrap();
        let m = fit_gbt(x.view(), &y, &GbtParams { n_trees: 10, ..Default::default() }, 0).unwrap();
        prop_assert!(predict_gbt(&m, x.view()).unwrap().iter().all(|p| *p > 0.0 && *p < 1.0));
        prop_assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn derived_seeds_are_stable_and_tag_sensitive(seed in any::<u64>(), i in 0u64..1000) {
        prop_assert_eq!(seeds::derive(seed, "a"), seeds::derive(seed, "a"));
        prop_assert_ne!(seeds::derive(seed, "a"), seeds::derive(seed, "b"));
        prop_assert_ne!(seeds::derive_indexed(seed, "a", i), seeds::derive_indexed(seed, "a", i + 1));
    }
}
