use std::path::Path;

use cir_core::harness::{
    build_stream, drive_strategy, experience_data, no_repetition_stream, run_experiment, ExperimentConfig, RunStatus,
};
use cir_core::nn::{accuracy, Predictor, SyntheticSpec};
use cir_core::rng::{derive_seed, domain};
use cir_core::strategy::hatcir::{HatCir, HatCirConfig};
use cir_core::strategy::{build_strategy, Strategy, StrategyConfigs, StrategyContext, STRATEGY_IDS};

const SMALL: &str = r#"
[experiment]
streams = ["S4", "S6"]
strategies = ["naive", "er200", "joint"]
seeds = [0, 1, 2, 3, 4]

[dataset]
kind = "synthetic"
n_classes = 6
input_dim = 8
train_per_class = 40
test_per_class = 10

[train]
epochs = 2
hidden = [16]
projection_dim = 8
"#;

#[test]
fn every_cell_of_the_grid_gets_one_record() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&cfg, Path::new("."), dir.path()).unwrap();
    assert_eq!(summary.records.len(), 2 * 3 * 5);
    assert_eq!(summary.files.len(), 2 * 3);
    let mut keys: Vec<(String, String, u64)> =
        summary.records.iter().map(|r| (r.strategy.clone(), r.stream.clone(), r.seed)).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 30);
    assert!(summary.records.iter().all(|r| r.status == RunStatus::Ok));
    for r in &summary.records {
        let expected = if r.strategy == "joint" { 1 } else { r.n_experiences };
        assert_eq!(r.trajectory.len(), expected, "{} on {}", r.strategy, r.stream);
        assert_eq!(r.final_accuracy, r.trajectory.last().copied());
    }
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn every_registered_strategy_runs_a_short_stream() {
    let spec = SyntheticSpec {
        n_classes: 6,
        input_dim: 8,
        train_per_class: 30,
        test_per_class: 5,
        ..SyntheticSpec::default()
    };
    let ds = spec.generate(3).unwrap();
    let stream = no_repetition_stream(6, 2, 30, 0).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.train.epochs = 2;
    cfg.train.hidden = vec![16];
    for id in STRATEGY_IDS.iter().chain(&["er:17", "ewc:5", "lwf:0.5:2"]) {
        let ctx = StrategyContext {
            input_dim: ds.input_dim,
            n_classes: ds.n_classes(),
            n_experiences: stream.len(),
            train: cfg.train.clone(),
            seed: 9,
        };
        let mut s = build_strategy(id, ctx, &StrategyConfigs::default()).unwrap();
        let (traj, _) = drive_strategy(s.as_mut(), &stream, &ds, true).unwrap();
        assert!(!traj.is_empty() && traj.iter().all(|a| (0.0..=1.0).contains(a)), "{id}");
        assert!(s.predict(&ds.test_x).unwrap().iter().all(|&p| p < 6), "{id}");
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn baselines_order_on_the_standard_stream() {
    let mut cfg = ExperimentConfig::default();
    cfg.train.epochs = 10;
    let acc = |id: &str| {
        median(
            (0..3)
                .map(|seed| {
                    let ds = cfg.dataset.load(seed, Path::new(".")).unwrap();
                    let stream = no_repetition_stream(ds.n_classes(), 5, ds.samples_per_class(), seed).unwrap();
                    let ctx = StrategyContext {
                        input_dim: ds.input_dim,
                        n_classes: ds.n_classes(),
                        n_experiences: stream.len(),
                        train: cfg.train.clone(),
                        seed: derive_seed(seed, &[domain::STRATEGY]),
                    };
                    let mut s = build_strategy(id, ctx, &cfg.strategy_configs()).unwrap();
                    *drive_strategy(s.as_mut(), &stream, &ds, false).unwrap().0.last().unwrap()
                })
                .collect(),
        )
    };
    let (joint, large, small, naive) = (acc("joint"), acc("er2000"), acc("er200"), acc("naive"));
    // A 2000-sample buffer holds half of the 4000 training samples, so replay
    // gets within a point or two of joint training.
    assert!(joint > large - 0.02, "joint {joint} vs er2000 {large}");
    assert!(large > small, "er2000 {large} vs er200 {small}");
    assert!(small > naive, "er200 {small} vs naive {naive}");
}

#[test]
fn hatcir_members_fit_a_separable_experience() {
    let spec = SyntheticSpec {
        n_classes: 3,
        input_dim: 6,
        train_per_class: 60,
        test_per_class: 20,
        separation: 3.0,
        spread: 0.5,
    };
    let ds = spec.generate(1).unwrap();
    let stream = no_repetition_stream(3, 3, 60, 0).unwrap();
    let mut train = ExperimentConfig::default().train;
    train.epochs = 10;
    let ctx = StrategyContext {
        input_dim: 6,
        n_classes: 3,
        n_experiences: 1,
        train,
        seed: 4,
    };
    let mut h = HatCir::new(ctx, HatCirConfig::default()).unwrap();
    let exp = experience_data(&ds, &stream.experiences[0]);
    h.train_experience(&exp).unwrap();
    for m in &h.fragments()[0].members {
        assert!(accuracy(&m.predict(&exp.x).unwrap(), &exp.y) >= 0.9);
    }
    assert!(accuracy(&h.predict(&ds.test_x).unwrap(), &ds.test_y) >= 0.9);
}

#[test]
fn second_ensemble_member_does_not_hurt_hatcir() {
    let cfg = ExperimentConfig::from_toml("[experiment]\nstreams = [\"S4\"]\nstrategies = [\"hatcir\"]").unwrap();
    let run = |ensembles: usize| -> f64 {
        median(
            (0..3)
                .map(|seed| {
                    let ds = cfg.dataset.load(seed, Path::new(".")).unwrap();
                    let stream = build_stream(&cfg, "S4", &ds, seed).unwrap();
                    let ctx = StrategyContext {
                        input_dim: ds.input_dim,
                        n_classes: ds.n_classes(),
                        n_experiences: stream.len(),
                        train: cfg.train.clone(),
                        seed: derive_seed(seed, &[domain::STRATEGY]),
                    };
                    let hc = HatCirConfig { ensembles, ..cfg.hatcir.clone() };
                    let mut h = HatCir::new(ctx, hc).unwrap();
                    *drive_strategy(&mut h, &stream, &ds, false).unwrap().0.last().unwrap()
                })
                .collect(),
        )
    };
    let (one, two) = (run(1), run(2));
    assert!(two >= one, "E=2 {two} vs E=1 {one}");
}
