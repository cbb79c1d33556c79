use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segfeat_core::data::{split_train_val, AnnotatedSegment, Annotation};
use segfeat_core::inference::TableScores;
use segfeat_core::metrics::{match_boundaries, precision_recall_f1};
use segfeat_core::model::score_segmentation;
use segfeat_core::{dp_segment, dp_segment_k, EvalReport, FeatureConfig, ModelConfig, SegmentalModel};

fn sorted_times(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0u32..5000, 0..max_len).prop_map(|mut v| {
        v.sort_unstable();
        v.dedup();
        v.into_iter().map(|x| x as f64 / 1000.0).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dp_result_is_valid_and_scored_consistently(t in 1usize..40, seed in any::<u64>(), cap in 1usize..12) {
        let table = TableScores::random(t, &mut ChaCha8Rng::seed_from_u64(seed));
        let (seg, score) = dp_segment(&table, Some(cap)).unwrap();
        prop_assert_eq!(seg.frames(), t);
        prop_assert!(seg.spans().iter().all(|(s, e)| e - s <= cap));
        let rescored = score_segmentation(&table, &seg).unwrap();
        prop_assert!((rescored - score).abs() < 1e-9);
        // The unconstrained optimum bounds every fixed-count optimum.
        let (free, best) = dp_segment(&table, None).unwrap();
        prop_assert!(best >= score - 1e-12);
        for k in 1..=t.min(10) {
            let (sk, vk) = dp_segment_k(&table, k).unwrap();
            prop_assert_eq!(sk.num_segments(), k);
            prop_assert!(vk <= best + 1e-12);
            if k == free.num_segments() {
                prop_assert!((vk - best).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matching_counts_are_bounded(pred in sorted_times(30), reference in sorted_times(30), tol in 0.0f64..0.05) {
        let hits = match_boundaries(&pred, &reference, tol).unwrap();
        prop_assert!(hits <= pred.len().min(reference.len()));
        let (p, r, f1) = precision_recall_f1(hits, pred.len(), reference.len()).unwrap();
        for v in [p, r, f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(f1 <= p.max(r) + 1e-12 && f1 >= p.min(r) - 1e-12);
        let report = EvalReport::from_counts(hits, pred.len(), reference.len()).unwrap();
        prop_assert!(report.r_value <= 1.0 + 1e-12);
    }

    #[test]
    fn self_matching_is_perfect_and_tolerance_monotone(times in sorted_times(30), shift in -0.004f64..0.004) {
        prop_assert_eq!(match_boundaries(&times, &times, 0.0).unwrap(), times.len());
        let moved: Vec<f64> = times.iter().map(|t| t + shift).collect();
        // Distinct times are at least 1 ms apart, so a sub-5 ms shift within a
        // 5 ms tolerance keeps every pair.
        prop_assert_eq!(match_boundaries(&moved, &times, 0.005).unwrap(), times.len());
        let loose = match_boundaries(&moved, &times, 0.02).unwrap();
        let tight = match_boundaries(&moved, &times, 0.0).unwrap();
        prop_assert!(tight <= loose);
    }

    #[test]
    fn annotation_frames_stay_interior(lens in prop::collection::vec(1usize..800, 1..12), frames_extra in 0usize..3) {
        let mut segs = Vec::new();
        let mut start = 0;
        for (i, len) in lens.iter().enumerate() {
            segs.push(AnnotatedSegment { start, end: start + len, symbol: format!("s{}", i % 3) });
            start += len;
        }
        let ann = Annotation::new(segs).unwrap();
        let frames = (start / 160).max(1) + frames_extra;
        let (seg, symbols) = ann.to_frames(160, frames).unwrap();
        prop_assert_eq!(symbols.len(), seg.num_segments());
        prop_assert!(seg.boundaries().iter().all(|&b| b >= 1 && b < frames));
        prop_assert!(seg.boundaries().len() < lens.len().max(1));
    }

    #[test]
    fn train_val_split_partitions(n in 1usize..200, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let (train, val) = split_train_val((0..n).collect::<Vec<_>>(), frac, seed).unwrap();
        prop_assert_eq!(train.len() + val.len(), n);
        prop_assert_eq!(val.len(), (n as f64 * frac + 1e-9).floor() as usize);
        let mut all: Vec<usize> = train.into_iter().chain(val).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoints_round_trip(hidden in 1usize..6, layers in 1usize..3, head in 0usize..5, shared in any::<bool>(),
                              mean_span in any::<bool>(), classes in 0usize..4, seed in any::<u64>()) {
        let cfg = ModelConfig {
            input_dim: 5,
            hidden,
            layers,
            head_hidden: (head > 0).then_some(head),
            shared_heads: shared,
            mean_span,
            seed,
            ..Default::default()
        };
        let inventory = (0..classes).map(|c| format!("p{c}")).collect();
        let model = SegmentalModel::with_input_dim(cfg, FeatureConfig::default(), inventory).unwrap();
        let bytes = model.to_bytes();
        let back = SegmentalModel::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back.config(), model.config());
        prop_assert_eq!(back.inventory(), model.inventory());
    }
}
