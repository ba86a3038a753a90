//! The plain reconstruction loss cannot tell `(A, B)` from `(AT, T⁻¹B)`;
//! the full-prefix loss can. Starting from the PCA solution, apply random
//! rotations of the latent space and compare the two losses.
//!
//! cargo run --release --example symmetry_breaking -- [seed]

use prefix_bases::linalg::random_rotation;
use prefix_bases::losses::{fp_mrl_loss, lae_loss, LinearAutoencoder, PrefixWeights};
use prefix_bases::oracles::pca;
use prefix_bases::rng::{gaussian_matrix, rng_from_seed};

fn main() -> prefix_bases::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (p, n, d) = (12, 400, 4);
    let mut rng = rng_from_seed(seed);
    // anisotropic data so the eigenvalues are distinct
    let mut x = gaussian_matrix(p, n, &mut rng);
    for (i, mut row) in x.row_iter_mut().enumerate() {
        row *= 1.0 / (1.0 + i as f64);
    }
    let u = pca(&x, d)?.basis.directions;
    let model = LinearAutoencoder::tied(&u, true);
    let weights = PrefixWeights::uniform(d);
    let lae0 = lae_loss(&model, &x)?.total;
    let fp0 = fp_mrl_loss(&model, &x, &weights)?;
    println!("PCA solution: LAE {lae0:.6}, FP-MRL {fp0:.6}");
    println!("rotation   ΔLAE (rel)    ΔFP-MRL");
    for r in 0..5 {
        let t = random_rotation(d, &mut rng);
        let rotated = model.reparameterized(&t)?;
        let lae = lae_loss(&rotated, &x)?.total;
        let fp = fp_mrl_loss(&rotated, &x, &weights)?;
        println!("{r:>8}   {:+.2e}     {:+.4}", (lae - lae0) / lae0, fp - fp0);
    }
    Ok(())
}
