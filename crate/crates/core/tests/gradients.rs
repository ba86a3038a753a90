//! Central-difference checks of every hand-written gradient.

mod common;

use common::{mlp_gradient_error, worst_linear_error, LINEAR_FAMILIES, MLP_STEP};
use prefix_bases::classify::ClassifierLoss;
use prefix_bases::losses::PrefixWeights;

#[test]
fn linear_families_match_finite_differences() {
    for (i, id) in LINEAR_FAMILIES.iter().enumerate() {
        let worst = worst_linear_error(id, 20, 100 + i as u64);
        assert!(worst <= 1e-5, "{id}: relative error {worst:.2e}");
    }
}

#[test]
fn classifier_full_prefix_matches_finite_differences() {
    let loss = ClassifierLoss::FpMrl {
        weights: PrefixWeights::new(vec![0.5, 1.0, 2.0]).unwrap(),
    };
    for seed in 0..20 {
        let e = mlp_gradient_error(&loss, seed, MLP_STEP);
        assert!(e <= 1e-4, "seed {seed}: {e:.2e}");
    }
}

#[test]
fn classifier_monotone_l1_matches_finite_differences() {
    let loss = ClassifierLoss::MdL1 { alpha: 0.3 };
    for seed in 0..20 {
        let e = mlp_gradient_error(&loss, seed, MLP_STEP);
        assert!(e <= 1e-4, "seed {seed}: {e:.2e}");
    }
}
