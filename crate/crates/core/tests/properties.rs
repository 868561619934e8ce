mod common;

use common::{brute_conv, brute_force_keep, naive_r, random_columns, table_from_columns};
use pdmm::canonical::to_canonical_string;
use pdmm::imaging::{resize_bilinear, Image2D, Volume};
use pdmm::metrics::{confusion_matrix_from_indices, metrics_report};
use pdmm::models::{checkpoint_from_str, checkpoint_to_string, Model, Sample};
use pdmm::nn::{Conv2d, Tensor};
use pdmm::rng::RngStream;
use pdmm::tabular::{pearson, prune_correlated, zscore_fit_apply, StageLabel};
use pdmm::training::stratified_split;
use proptest::prelude::*;

fn column(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn pearson_symmetric_and_bounded((x, y) in (2usize..30).prop_flat_map(|n| (column(n), column(n)))) {
        let a = pearson(&x, &y).unwrap().r;
        let b = pearson(&y, &x).unwrap().r;
        prop_assert_eq!(a, b);
        prop_assert!((-1.0..=1.0).contains(&a));
        prop_assert!((a - naive_r(&x, &y)).abs() < 1e-6);
    }

    #[test]
    fn pearson_affine_invariant(
        (x, y) in (3usize..30).prop_flat_map(|n| (column(n), column(n))),
        a in prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
        b in -50.0f64..50.0,
    ) {
        let r = pearson(&x, &y).unwrap();
        prop_assume!(!r.constant_input);
        let scaled: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let r2 = pearson(&scaled, &y).unwrap().r;
        prop_assert!((r2 - a.signum() * r.r).abs() < 1e-9, "{} vs {}", r2, r.r);
    }

    #[test]
    fn pruning_matches_oracle(seed in any::<u64>(), t in 0.05f64..0.95) {
        let cols = random_columns(&mut RngStream::new(seed));
        let table = table_from_columns(&cols);
        let (pruned, report) = prune_correlated(&table, t).unwrap();
        let expect: Vec<String> = brute_force_keep(&cols, t).iter().map(|j| format!("c{j}")).collect();
        prop_assert_eq!(pruned.feature_names(), &expect[..]);
        prop_assert_eq!(report.kept.len() + report.dropped.len(), cols.len());
        for d in &report.dropped {
            prop_assert!(d.correlation.abs() > t);
        }
    }

    #[test]
    fn zscore_has_zero_mean_unit_sd(seed in any::<u64>()) {
        let cols = random_columns(&mut RngStream::new(seed));
        let table = table_from_columns(&cols);
        let (z, stats) = zscore_fit_apply(&table, None).unwrap();
        let n = z.n_rows() as f64;
        for j in 0..z.n_features() {
            let c = z.column(j);
            let mean = c.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            if stats.constant_flags[j] {
                prop_assert!(c.iter().all(|&v| v == 0.0));
            } else {
                let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                prop_assert!((sd - 1.0).abs() < 1e-9, "sd {}", sd);
            }
        }
    }

    #[test]
    fn resize_stays_within_input_range(
        h in 1usize..12, w in 1usize..12, oh in 1usize..20, ow in 1usize..20, seed in any::<u64>(),
    ) {
        let mut rng = RngStream::new(seed);
        let px: Vec<f64> = (0..h * w).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let (lo, hi) = px.iter().fold((f64::MAX, f64::MIN), |(l, u), &v| (l.min(v), u.max(v)));
        let img = Image2D::new(h, w, px.clone()).unwrap();
        let out = resize_bilinear(&img, oh, ow).unwrap();
        prop_assert_eq!(out.shape(), (oh, ow));
        for &v in out.pixels() {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
        // Edge-aligned: corners are preserved exactly.
        if oh > 1 && ow > 1 {
            prop_assert_eq!(out.get(0, 0), img.get(0, 0));
            prop_assert_eq!(out.get(oh - 1, ow - 1), img.get(h - 1, w - 1));
        }
    }

    #[test]
    fn conv_matches_direct_definition(
        c in 1usize..4, o in 1usize..4, ks in 1usize..4, stride in 1usize..3,
        extra_h in 0usize..6, extra_w in 0usize..6, seed in any::<u64>(),
    ) {
        let (h, w) = (ks + extra_h, ks + extra_w);
        let mut rng = RngStream::new(seed);
        let mut conv = Conv2d::<f64>::new("c", c, o, ks, stride, &mut rng);
        for b in conv.bias.value.data_mut() {
            *b = rng.uniform(-1.0, 1.0);
        }
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let y = conv.compute(&Tensor::new(vec![c, h, w], x.clone()).unwrap()).unwrap();
        let (expect, oh, ow) = brute_conv(&x, c, h, w, conv.kernel.value.data(), o, ks, conv.bias.value.data(), stride);
        prop_assert_eq!(y.shape(), &[o, oh, ow][..]);
        prop_assert_eq!(conv.output_shape(&[c, h, w]).unwrap(), [o, oh, ow]);
        for (a, b) in y.data().iter().zip(&expect) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn support_weighted_recall_is_accuracy(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200)) {
        let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let r = metrics_report(&confusion_matrix_from_indices(&preds, &labels).unwrap()).unwrap();
        let n = labels.len() as f64;
        let weighted: f64 = r.per_stage.iter().map(|m| m.recall * m.support as f64).sum::<f64>() / n;
        prop_assert!((weighted - r.accuracy).abs() < 1e-12);
        let hits = preds.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64;
        prop_assert_eq!(r.accuracy, hits / n);
    }

    #[test]
    fn split_is_a_stratified_partition(
        counts in prop::collection::vec(0usize..40, 5), ratio in 0.05f64..0.95, seed in any::<u64>(),
    ) {
        let stages: Vec<StageLabel> = counts
            .iter()
            .enumerate()
            .flat_map(|(s, &c)| std::iter::repeat_n(StageLabel::from_index(s).unwrap(), c))
            .collect();
        prop_assume!(!stages.is_empty());
        let ids: Vec<String> = (0..stages.len()).map(|i| format!("id{i}")).collect();
        let plan = stratified_split(&ids, &stages, ratio, seed).unwrap();
        let mut all: Vec<String> = plan.train_ids.iter().chain(&plan.test_ids).cloned().collect();
        all.sort();
        let mut sorted = ids.clone();
        sorted.sort();
        prop_assert_eq!(all, sorted);
        for (s, &c) in counts.iter().enumerate() {
            let in_test = plan
                .test_ids
                .iter()
                .filter(|id| stages[id[2..].parse::<usize>().unwrap()].index() == s)
                .count();
            if c >= 2 {
                prop_assert!(in_test >= 1 && in_test < c);
            } else {
                prop_assert_eq!(in_test, 0);
            }
        }
        prop_assert_eq!(stratified_split(&ids, &stages, ratio, seed).unwrap(), plan);
    }

    #[test]
    fn mvol_round_trip_is_bit_exact(
        dims in (1usize..6, 1usize..6, 1usize..6), bits in prop::collection::vec(any::<u32>(), 125),
    ) {
        let n = dims.0 * dims.1 * dims.2;
        let voxels: Vec<f32> = bits[..n].iter().map(|&b| {
            let v = f32::from_bits(b);
            if v.is_finite() { v } else { 0.5 }
        }).collect();
        let vol = Volume::new([dims.0, dims.1, dims.2], voxels).unwrap();
        let back = Volume::from_bytes(&vol.to_bytes()).unwrap();
        prop_assert_eq!(back.dims(), vol.dims());
        let same = back.voxels().iter().zip(vol.voxels()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn canonical_json_is_a_fixed_point(xs in prop::collection::vec(-1e300f64..1e300, 0..20)) {
        let v = serde_json::json!({ "z": xs, "a": { "k": 1 } });
        let s = to_canonical_string(&v).unwrap();
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(to_canonical_string(&back).unwrap(), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 20, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn symptoms_checkpoint_round_trip(n in 1usize..12, hidden in 1usize..9, deep in any::<bool>(), seed in any::<u64>()) {
        let model = Model::build_symptoms(n, hidden, deep, seed).unwrap();
        let text = checkpoint_to_string(&model).unwrap();
        let back = checkpoint_from_str(&text).unwrap();
        prop_assert_eq!(checkpoint_to_string(&back).unwrap(), text);
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.3 - 1.0).collect();
        let s = Sample { features: Some(&x), image: None };
        let (p, q) = (model.predict_proba(&s).unwrap(), back.predict_proba(&s).unwrap());
        prop_assert!(p.probs.iter().zip(&q.probs).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
