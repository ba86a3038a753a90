//! Behaviour of the training loop on small synthetic problems.

use prefix_bases::data::{center, stratified_split, LabeledDataset, SplitIndices};
use prefix_bases::losses::{Hyperparameters, Objective};
use prefix_bases::synthetic::{generate, SyntheticSpec};
use prefix_bases::training::{train, AdamConfig, BatchSize, TrainConfig};

fn small_problem(seed: u64) -> (LabeledDataset, SplitIndices) {
    let (ds, _) = generate(&SyntheticSpec::small(4, 60, seed)).unwrap();
    let split = stratified_split(&ds, (0.7, 0.1, 0.2), seed).unwrap();
    let (centered, _) = center(&ds, &split).unwrap();
    (centered, split)
}

#[test]
fn decoder_stays_orthonormal_after_every_epoch() {
    let (ds, split) = small_problem(3);
    let objective = Objective::from_id("fp_mrl", 4, &Hyperparameters::default()).unwrap();
    for epochs in 1..=6 {
        let mut cfg = TrainConfig::new(objective.clone(), 4, 9);
        cfg.batch_size = BatchSize::Size(32);
        cfg.max_epochs = epochs;
        cfg.patience = 1000;
        let report = train(&ds, &split, &cfg).unwrap();
        let a = &report.model.decoder_a;
        let defect = (a.transpose() * a - nalgebra::DMatrix::identity(4, 4)).norm();
        assert!(defect <= 1e-8, "after {epochs} epochs ‖AᵀA - I‖ = {defect:e}");
    }
}

#[test]
fn best_val_is_the_minimum_of_the_curve() {
    let (ds, split) = small_problem(4);
    let objective = Objective::from_id(
        "md_l1",
        3,
        &Hyperparameters {
            alpha: Some(0.05),
            ..Default::default()
        },
    )
    .unwrap();
    let mut cfg = TrainConfig::new(objective, 3, 2);
    cfg.orthonormal_decoder = false;
    cfg.max_epochs = 40;
    cfg.patience = 3;
    let report = train(&ds, &split, &cfg).unwrap();
    let min = report.val_curve.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_val, min);
    assert_eq!(report.val_curve[report.best_epoch - 1], min);
    assert_eq!(report.epochs_run(), report.val_curve.len());
    if report.stopped_early {
        assert_eq!(report.epochs_run() - report.best_epoch, cfg.patience);
    }
}

#[test]
fn full_batch_lae_with_a_small_step_never_goes_up() {
    let (ds, split) = small_problem(5);
    let objective = Objective::from_id("lae", 3, &Hyperparameters::default()).unwrap();
    let mut cfg = TrainConfig::new(objective, 3, 1);
    cfg.batch_size = BatchSize::Full;
    cfg.orthonormal_decoder = false;
    cfg.max_epochs = 20;
    cfg.patience = 1000;
    cfg.adam = AdamConfig {
        lr: 1e-4,
        ..AdamConfig::default()
    };
    let report = train(&ds, &split, &cfg).unwrap();
    assert_eq!(report.train_curve.len(), 20);
    for w in report.train_curve.windows(2) {
        assert!(w[1] <= w[0], "train objective rose: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn identical_seeds_give_identical_reports() {
    let (ds, split) = small_problem(6);
    let objective = Objective::from_id(
        "s_mrl",
        4,
        &Hyperparameters {
            nesting: Some(vec![2, 4]),
            ..Default::default()
        },
    )
    .unwrap();
    let mut cfg = TrainConfig::new(objective, 4, 11);
    cfg.orthonormal_decoder = false;
    cfg.max_epochs = 15;
    let a = train(&ds, &split, &cfg).unwrap();
    let b = train(&ds, &split, &cfg).unwrap();
    assert_eq!(a.train_curve, b.train_curve);
    assert_eq!(a.model, b.model);
}
