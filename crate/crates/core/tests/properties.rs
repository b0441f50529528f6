use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use proptest::prelude::*;
use userboost::data::{generate_mini_dataset, Label};
use userboost::dissimilarity::{dtw, keogh_lb, klb_mod, soft_dtw_series};
use userboost::features::{extract, FEATURE_LEN};
use userboost::forest::{fit, ForestConfig};
use userboost::genmodel::{approx_mrr, hard_mrr, kl_loss, validation_indices, wae_loss, EarlyStopping, LatentDistribution};
use userboost::harness::{enrolment_set, temporal_split, SplitSpec};
use userboost::metrics::{auroc, sweep, ScoreSet};
use userboost::sampling::{sample, EmbeddingEntry, Strategy as Sampler, UserEmbeddings};

fn vals(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, 1..=max_len)
}

fn pair(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_len).prop_flat_map(|n| (prop::collection::vec(-5.0..5.0f64, n), prop::collection::vec(-5.0..5.0f64, n)))
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![(0..=5u8).prop_map(|v| v as f64 / 5.0), 0.0..1.0f64], 1..=25)
}

fn user(id: u32, n: usize) -> impl Strategy<Value = UserEmbeddings> {
    prop::collection::vec((prop::collection::vec(-3.0..3.0f64, 10), prop::collection::vec(-4.0..1.0f64, 10)), n).prop_map(
        move |es| {
            let entries = es
                .into_iter()
                .map(|(m, lv)| EmbeddingEntry { dist: LatentDistribution::new(m, lv).unwrap(), terminal_id: None })
                .collect();
            UserEmbeddings::new(id, entries).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dtw_is_symmetric_and_zero_on_self(x in vals(12), y in vals(12)) {
        prop_assert_eq!(dtw(&x, &y, None).unwrap(), dtw(&y, &x, None).unwrap());
        prop_assert_eq!(dtw(&x, &x, None).unwrap(), 0.0);
        prop_assert!(dtw(&x, &y, None).unwrap() >= 0.0);
    }

    #[test]
    fn narrowing_the_band_never_lowers_dtw((x, y) in pair(24), w in 1usize..8) {
        let narrow = dtw(&x, &y, Some(w)).unwrap();
        let wide = dtw(&x, &y, Some(w + 1)).unwrap();
        prop_assert!(narrow >= wide);
        prop_assert!(wide >= dtw(&x, &y, None).unwrap());
    }

    #[test]
    fn keogh_bounds_banded_dtw((x, y) in pair(40), w in 1usize..40) {
        prop_assert!(keogh_lb(&x, &y, w).unwrap().value <= dtw(&y, &x, Some(w)).unwrap() + 1e-12);
    }

    #[test]
    fn klb_mod_is_zero_on_self_and_nonnegative(v in prop::collection::vec(-3.0..3.0f64, 6..60)) {
        let rows = v.len() / 2;
        let x = Array2::from_shape_vec((rows, 2), v[..rows * 2].to_vec()).unwrap();
        let y = x.mapv(|a| a * 1.5 - 0.2);
        prop_assert_eq!(klb_mod(x.view(), x.view()).unwrap().value, 0.0);
        prop_assert!(klb_mod(x.view(), y.view()).unwrap().value >= 0.0);
    }

    #[test]
    fn soft_dtw_lies_below_dtw(x in vals(10), y in vals(10), gamma in 1e-3..2.0f64) {
        prop_assert!(soft_dtw_series(&x, &y, gamma).0 <= dtw(&x, &y, None).unwrap() + 1e-12);
    }

    #[test]
    fn error_rates_are_monotone(pos in scores(), neg in scores()) {
        let r = sweep(&ScoreSet::new(pos, neg)).unwrap();
        prop_assert!(r.thresholds.windows(2).all(|t| t[0] < t[1]));
        prop_assert!(r.far.windows(2).all(|f| f[0] >= f[1]));
        prop_assert!(r.frr.windows(2).all(|f| f[0] <= f[1]));
        prop_assert_eq!(r.far[0], 1.0);
        prop_assert_eq!(*r.far.last().unwrap(), 0.0);
        prop_assert_eq!(*r.frr.last().unwrap(), 1.0);
        prop_assert!(r.eer_low <= r.eer_high);
        prop_assert!((0.0..=1.0).contains(&r.far_at_zero));
    }

    #[test]
    fn swapping_classes_complements_auroc(pos in scores(), neg in scores()) {
        let a = auroc(&ScoreSet::new(pos.clone(), neg.clone())).unwrap();
        let b = auroc(&ScoreSet::new(neg, pos)).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_is_nonnegative(m in prop::collection::vec(-4.0..4.0f64, 10), lv in prop::collection::vec(-6.0..3.0f64, 10)) {
        prop_assert!(kl_loss(&LatentDistribution::new(m, lv).unwrap()).value >= -1e-12);
    }

    #[test]
    fn wae_vanishes_on_identical_points(p in prop::collection::vec(-3.0..3.0f64, 10), n in 2usize..10) {
        let m = Array2::from_shape_fn((n, 10), |(_, k)| p[k]);
        prop_assert!(wae_loss(m.view(), m.view()).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn mrr_stays_in_unit_interval(s in prop::collection::vec(-5.0..5.0f64, 12), t in prop::collection::vec(0usize..4, 3)) {
        let m = Array2::from_shape_vec((3, 4), s).unwrap();
        let a = approx_mrr(m.view(), &t, 1.0).unwrap();
        let h = hard_mrr(m.view(), &t);
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!((0.25..=1.0).contains(&h));
    }

    #[test]
    fn validation_subset_is_sorted_and_sized(n in 2usize..300, frac in 0.01..0.99f64, seed in any::<u64>()) {
        let v = validation_indices(n, frac, seed);
        prop_assert!(v.windows(2).all(|p| p[0] < p[1]));
        prop_assert!(v.iter().all(|&i| i < n));
        prop_assert_eq!(v.len(), ((n as f64 * frac).round() as usize).clamp(1, n - 1));
        prop_assert_eq!(&v, &validation_indices(n, frac, seed));
    }

    #[test]
    fn early_stopping_waits_exactly_patience(losses in prop::collection::vec(0.0..10.0f64, 1..80), patience in 1usize..20) {
        let mut es = EarlyStopping::new(patience);
        let mut stopped = None;
        for (i, &l) in losses.iter().enumerate() {
            es.observe(i + 1, l);
            if es.should_stop(i + 1) {
                stopped = Some(i + 1);
                break;
            }
        }
        if let Some(e) = stopped {
            let best = (1..=e).min_by(|&a, &b| losses[a - 1].total_cmp(&losses[b - 1]).then(a.cmp(&b))).unwrap();
            prop_assert_eq!(e, best + patience);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampling_contracts(
        target in (2usize..6).prop_flat_map(|n| user(0, n)),
        others in prop::collection::vec((1usize..4).prop_flat_map(|n| user(1, n)), 1..4),
        seed in any::<u64>(),
    ) {
        let t_means: Vec<&Vec<f64>> = target.entries.iter().map(|e| &e.dist.mean).collect();
        let o_means: Vec<&Vec<f64>> = others.iter().flat_map(|o| o.entries.iter().map(|e| &e.dist.mean)).collect();
        let all: Vec<&Vec<f64>> = t_means.iter().chain(&o_means).copied().collect();
        let inside = |p: &[f64], pts: &[&Vec<f64>]| (0..10).all(|c| {
            pts.iter().any(|q| q[c] <= p[c]) && pts.iter().any(|q| q[c] >= p[c])
        });
        for strategy in Sampler::ALL {
            let s = sample(strategy, &target, &others, 40, 2, seed).unwrap();
            prop_assert_eq!(&s, &sample(strategy, &target, &others, 40, 2, seed).unwrap());
            prop_assert!(s.iter().all(|p| p.len() == 10 && p.iter().all(|v| v.is_finite())));
            match strategy {
                Sampler::SelfMixed => prop_assert!(s.iter().all(|p| inside(p, &t_means))),
                Sampler::Adversarial => prop_assert!(s.iter().all(|p| inside(p, &all))),
                Sampler::SameUser => {
                    prop_assert!(s.iter().all(|p| t_means.iter().any(|t| t[..5] == p[..5])));
                    prop_assert!(s.iter().all(|p| o_means.iter().any(|o| o[5..] == p[5..])));
                }
                Sampler::Neighbourhood => {}
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn temporal_split_keeps_the_future_out_of_training(users in 2usize..4, gestures in 3usize..12, seed in 0u64..1000) {
        let ds = generate_mini_dataset(users, gestures, seed).unwrap();
        let split = temporal_split(&ds, &SplitSpec { seed, ..Default::default() }).unwrap();
        prop_assert_eq!(split.train.len() + split.validation.len() + split.test.len(), ds.windows.len());
        let mut last_train: BTreeMap<(u32, Label), u64> = BTreeMap::new();
        for w in split.train.iter().chain(&split.validation) {
            let e = last_train.entry((w.user_id, w.label)).or_insert(0);
            *e = (*e).max(w.order_index);
        }
        for w in &split.test {
            if let Some(&t) = last_train.get(&(w.user_id, w.label)) {
                prop_assert!(w.order_index > t);
            }
        }
        let keys: BTreeSet<_> = ds.windows.iter().map(|w| w.key()).collect();
        prop_assert_eq!(keys.len(), ds.windows.len());
        split.record.check_disjoint().unwrap();
        let gestures: Vec<_> = split.train_pool().into_iter().filter(|w| w.label == Label::Gesture).cloned().collect();
        if let Some(set) = enrolment_set(&gestures, 1) {
            let terminals: BTreeSet<_> = set.iter().map(|w| (w.user_id, w.terminal_id)).collect();
            prop_assert_eq!(terminals.len(), set.len());
        }
    }

    #[test]
    fn forest_probabilities_are_vote_fractions(seed in any::<u64>(), trees in 1usize..12) {
        let ds = generate_mini_dataset(2, 8, seed % 97).unwrap();
        let feats: Vec<Vec<f64>> = ds.windows.iter().map(|w| extract(w).values).collect();
        prop_assert!(feats.iter().all(|f| f.len() == FEATURE_LEN));
        let labels: Vec<bool> = ds.windows.iter().map(|w| w.user_id == 0 && w.label == Label::Gesture).collect();
        let cfg = ForestConfig { n_trees: trees, ..Default::default() };
        let forest = fit(&feats, &labels, &cfg, seed).unwrap();
        for f in &feats {
            let p = forest.predict_proba(f).unwrap();
            prop_assert_eq!(p * trees as f64, (p * trees as f64).round());
            prop_assert!((0.0..=1.0).contains(&p));
        }
        let again = fit(&feats, &labels, &cfg, seed).unwrap();
        prop_assert_eq!(forest, again);
    }
}
