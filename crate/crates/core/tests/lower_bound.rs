//! The weighted-prefix lower bound `Σ_m ω_m Σ_{k>m} σ_k²` against direct
//! minimization on 3×3 problems.

mod common;

use common::brute_force_weighted_minimum;
use prefix_bases::losses::{fp_mrl_loss, LinearAutoencoder, PrefixWeights};
use prefix_bases::oracles::{fp_mrl_lower_bound, pca};
use prefix_bases::rng::{gaussian_matrix, rng_from_seed};
use rand::Rng as _;

#[test]
fn general_omega_bound_is_tight_on_three_by_three_data() {
    let mut rng = rng_from_seed(31);
    for case in 0..6 {
        let x = gaussian_matrix(3, 3, &mut rng);
        let d = 2 + case % 2;
        let omega: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..3.0)).collect();
        let weights = PrefixWeights::new(omega.clone()).unwrap();
        let fit = pca(&x, 3).unwrap();
        let bound = fp_mrl_lower_bound(&fit.spectrum, d, &weights).unwrap();

        let u = fit.basis.directions.columns(0, d).into_owned();
        let at_pca = fp_mrl_loss(&LinearAutoencoder::tied(&u, true), &x, &weights).unwrap();
        let scale = x.norm_squared();
        assert!(
            (at_pca - bound).abs() <= 1e-10 * scale,
            "case {case}: PCA {at_pca} vs bound {bound}"
        );

        let searched = brute_force_weighted_minimum(&x, d, &omega, 12, 500 + case as u64);
        assert!(
            searched >= bound - 1e-9 * scale,
            "case {case}: search {searched} below bound {bound}"
        );
        assert!(
            searched <= bound + 1e-4 * scale,
            "case {case}: search {searched} stuck above bound {bound}"
        );
    }
}

#[test]
fn random_models_never_beat_the_bound() {
    let mut rng = rng_from_seed(32);
    let x = gaussian_matrix(3, 3, &mut rng);
    let weights = PrefixWeights::new(vec![0.7, 1.9]).unwrap();
    let bound = fp_mrl_lower_bound(&pca(&x, 3).unwrap().spectrum, 2, &weights).unwrap();
    for _ in 0..2000 {
        let m =
            LinearAutoencoder::new(gaussian_matrix(2, 3, &mut rng), gaussian_matrix(3, 2, &mut rng), false).unwrap();
        assert!(fp_mrl_loss(&m, &x, &weights).unwrap() >= bound * (1.0 - 1e-12));
    }
}
