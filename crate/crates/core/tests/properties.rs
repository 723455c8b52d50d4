use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cir_core::harness::{compare, MetricsRecord, RunStatus};
use cir_core::nn::Matrix;
use cir_core::strategy::baselines::{FisherState, ReplayBuffer};
use cir_core::strategy::dwgrnet::{fuse, BranchSignals, FusionConfig, FusionReduce};
use cir_core::strategy::hatcir::{plan_fragments, MomentumRule};
use cir_core::stream::{
    deserialize_stream, serialize_stream, FirstOccurrenceDist, RepetitionSpec, Stream, StreamConfig,
};

fn first_occurrence() -> impl Strategy<Value = FirstOccurrenceDist> {
    prop_oneof![
        (0.001f64..=1.0).prop_map(|p| FirstOccurrenceDist::Geometric { p }),
        Just(FirstOccurrenceDist::Uniform),
        prop::collection::vec(0.0f64..1.0, 1..12)
            .prop_filter("some mass", |w| w.iter().sum::<f64>() > 1e-3)
            .prop_map(|pmf| FirstOccurrenceDist::Explicit { pmf }),
    ]
}

fn repetition() -> impl Strategy<Value = RepetitionSpec> {
    prop_oneof![
        (0.0f64..=1.0).prop_map(|q| RepetitionSpec::Fixed { q }),
        (0.0f64..2.0).prop_map(|exponent| RepetitionSpec::Zipf { exponent }),
    ]
}

fn stream_config() -> impl Strategy<Value = StreamConfig> {
    (1usize..15, 1usize..60, 1usize..25, 1usize..30, first_occurrence(), repetition(), any::<u64>()).prop_map(
        |(n, size, c, pool, first_occurrence, repetition, seed)| StreamConfig {
            n_experiences: n,
            experience_size: size.max(1),
            n_classes: c,
            samples_per_class: pool,
            first_occurrence,
            repetition,
            seed,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn streams_satisfy_their_invariants(cfg in stream_config()) {
        let s = Stream::generate(&cfg).unwrap();
        s.validate().unwrap();
        prop_assert_eq!(s.len(), cfg.n_experiences);
        for (k, e) in s.experiences.iter().enumerate() {
            let t = k + 1;
            prop_assert_eq!(e.index, t);
            prop_assert!(!e.classes.is_empty());
            prop_assert_eq!(&e.classes, &s.schedule.classes_at(t));
            prop_assert_eq!(e.samples.keys().copied().collect::<Vec<_>>(), e.classes.clone());
            prop_assert!(e.samples.values().flatten().all(|&i| (i as usize) < cfg.samples_per_class));
            prop_assert_eq!(e.total_samples(), cfg.experience_size);
            for ids in e.samples.values().filter(|ids| ids.len() <= cfg.samples_per_class) {
                prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
            }
        }
        for c in 0..cfg.n_classes {
            let first = s.schedule.first_occurrence[c];
            prop_assert!(s.schedule.is_present(c, first));
            prop_assert!((1..first).all(|t| !s.schedule.is_present(c, t)));
        }
        prop_assert!(s.schedule.first_occurrence.contains(&1));
    }

    #[test]
    fn stream_files_are_deterministic(cfg in stream_config()) {
        let a = serialize_stream(&Stream::generate(&cfg).unwrap());
        let b = serialize_stream(&Stream::generate(&cfg).unwrap());
        prop_assert_eq!(&a, &b);
        let back = deserialize_stream(&a).unwrap();
        prop_assert_eq!(serialize_stream(&back), a);
    }

    #[test]
    fn replay_buffer_is_bounded_and_class_balanced(
        capacity in 0usize..40,
        labels in prop::collection::vec(0usize..8, 0..300),
        seed in any::<u64>(),
    ) {
        let mut buf = ReplayBuffer::new(capacity);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, &y) in labels.iter().enumerate() {
            buf.insert(&[i as f64, y as f64], y, &mut rng);
            *seen.entry(y).or_insert(0) += 1;
            prop_assert_eq!(buf.len(), capacity.min(i + 1));
            let counts = buf.class_counts();
            // Every class keeps its fair share or everything it has sent.
            let share = capacity / seen.len();
            for (c, &n) in &seen {
                prop_assert!(counts.get(c).copied().unwrap_or(0) >= n.min(share), "class {} after {} inserts", c, i + 1);
            }
        }
        prop_assert!(buf.items().iter().all(|(x, y)| x[1] as usize == *y));
    }

    #[test]
    fn ewc_penalty_is_nonnegative_and_zero_at_anchor(
        entries in prop::collection::vec((0.0f64..10.0, -5.0f64..5.0, -5.0f64..5.0), 1..50),
    ) {
        let state = FisherState {
            importance: entries.iter().map(|e| e.0).collect(),
            anchor: entries.iter().map(|e| e.1).collect(),
        };
        let params: Vec<f64> = entries.iter().map(|e| e.2).collect();
        prop_assert!(state.penalty(&params) >= 0.0);
        prop_assert_eq!(state.penalty(&state.anchor.clone()), 0.0);
    }

    #[test]
    fn fusion_scales_with_positive_powers_of_two(
        seed in any::<u64>(),
        shift in -6i32..6,
        reduce in prop_oneof![Just(FusionReduce::Max), Just(FusionReduce::Mean)],
        flags in (any::<bool>(), any::<bool>(), any::<bool>()),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, c) = (3, 6);
        let signals: Vec<BranchSignals> = (0..rng.random_range(1..4))
            .map(|b| {
                let classes: Vec<usize> = (0..c).filter(|k| (k + b) % 2 == 0 || *k == b).collect();
                BranchSignals {
                    logits: Matrix::from_vec(rows, classes.len(), (0..rows * classes.len()).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap(),
                    entropy: (0..rows).map(|_| rng.random_range(0.01..2.0)).collect(),
                    feature_norm: (0..rows).map(|_| rng.random_range(0.1..4.0)).collect(),
                    classes,
                }
            })
            .collect();
        let fusion = FusionConfig {
            use_entropy: flags.0,
            use_class_count: flags.1,
            use_feature_norm: flags.2,
            fusion_reduce: reduce,
            ..FusionConfig::default()
        };
        let factor = 2f64.powi(shift);
        let scaled: Vec<BranchSignals> = signals
            .iter()
            .map(|s| {
                let mut t = s.clone();
                t.logits.scale(factor);
                t
            })
            .collect();
        let a = fuse(&signals, fusion, rows, c).unwrap();
        let b = fuse(&scaled, fusion, rows, c).unwrap();
        prop_assert_eq!(&a.labels, &b.labels);
        prop_assert_eq!(&a.uncovered, &b.uncovered);
        for (x, y) in a.logits.as_slice().iter().zip(b.logits.as_slice()) {
            prop_assert!(x * factor == *y || (x.is_infinite() && x == y));
        }
    }

    #[test]
    fn momentum_ignores_claims_outside_the_window(
        window in 1usize..5,
        claims in prop::collection::btree_map(0usize..40, -5.0f64..5.0, 1..10),
        older in -100.0f64..100.0,
    ) {
        let weights: Vec<f64> = (1..=window).map(|w| w as f64).collect();
        let rule = MomentumRule::new(window, weights.clone()).unwrap();
        // Distinct recencies, shifted so that 0 stays free for the stale claim.
        let entries: Vec<(usize, usize, f64)> = claims.iter().enumerate().map(|(id, (&r, &l))| (r + 1, id, l)).collect();
        let score = rule.score(&entries).unwrap();
        let mut newest: Vec<&(usize, usize, f64)> = entries.iter().collect();
        newest.sort_by_key(|e| e.0);
        let kept = &newest[newest.len().saturating_sub(window)..];
        let w = &weights[window - kept.len()..];
        let expected = if kept.len() == 1 {
            kept[0].2
        } else {
            kept.iter().zip(w).map(|(e, w)| w * e.2).sum::<f64>() / w.iter().sum::<f64>()
        };
        prop_assert!((score - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        if entries.len() >= window {
            let mut with_stale = entries.clone();
            with_stale.push((0, 99, older));
            prop_assert_eq!(rule.score(&with_stale).unwrap(), score);
        }
    }

    #[test]
    fn fragment_plans_are_contiguous_and_balanced(n in 1usize..200, f in 1usize..50) {
        prop_assume!(f <= n);
        let plan = plan_fragments(n, f, 1).unwrap();
        prop_assert_eq!(plan.assignment.len(), n);
        prop_assert!(plan.assignment.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        let cov = plan.coverage();
        prop_assert_eq!(cov.iter().sum::<usize>(), n);
        prop_assert!(cov.iter().max().unwrap() - cov.iter().min().unwrap() <= 1);
        prop_assert!(cov.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn comparison_cells_are_means_of_successful_runs(
        runs in prop::collection::vec((0usize..3, 0usize..3, 0u64..4, prop::option::of(0.0f64..1.0)), 1..40),
    ) {
        let names = ["naive", "er200", "hatcir"];
        let streams = ["S1", "S4", "NOREP-20x5"];
        let records: Vec<MetricsRecord> = runs
            .iter()
            .map(|&(s, t, seed, acc)| MetricsRecord {
                strategy: names[s].into(),
                stream: streams[t].into(),
                seed,
                status: if acc.is_some() { RunStatus::Ok } else { RunStatus::Failed },
                trajectory: acc.into_iter().collect(),
                final_accuracy: acc,
                n_experiences: 1,
                error: None,
                run_log: vec![],
            })
            .collect();
        let table = compare(&records);
        let mut reversed = records.clone();
        reversed.reverse();
        let again = compare(&reversed);
        prop_assert_eq!(&again.streams, &table.streams);
        for (a, b) in again.rows.iter().zip(&table.rows) {
            prop_assert_eq!(&a.strategy, &b.strategy);
            prop_assert_eq!(&a.cells, &b.cells);
        }
        for row in &table.rows {
            for (stream, cell) in table.streams.iter().zip(&row.cells) {
                let hits: Vec<f64> = runs
                    .iter()
                    .filter(|r| names[r.0] == row.strategy && streams[r.1] == stream)
                    .filter_map(|r| r.3)
                    .collect();
                match cell {
                    None => prop_assert!(hits.is_empty()),
                    Some(v) => {
                        let mean = hits.iter().sum::<f64>() / hits.len() as f64;
                        prop_assert!((v - mean).abs() < 1e-12);
                    }
                }
            }
        }
        let averages: Vec<f64> = table.rows.iter().map(|r| if r.average.is_nan() { f64::NEG_INFINITY } else { r.average }).collect();
        prop_assert!(averages.windows(2).all(|w| w[0] >= w[1]));
    }
}
