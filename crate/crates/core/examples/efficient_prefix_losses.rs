//! All `d` prefix reconstruction losses two ways: one reconstruction per
//! prefix, and from the `d×d` statistics `H`, `G^A`, `G^Z` shared by every
//! prefix. Prints the largest disagreement and the timings next to a
//! single LAE loss.
//!
//! cargo run --release --example efficient_prefix_losses -- [n] [p] [d]

use prefix_bases::experiment::bench_cell;
use prefix_bases::losses::{compute_sufficient_stats, prefix_losses_efficient, prefix_losses_naive};
use prefix_bases::rng::{gaussian_matrix, rng_from_seed};
use prefix_bases::training::init_model;

fn main() -> prefix_bases::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let (n, p, d) = match args[..] {
        [n, p, d, ..] => (n, p, d),
        _ => (4096, 512, 64),
    };
    let mut rng = rng_from_seed(7);
    let x = gaussian_matrix(p, n, &mut rng);
    let model = init_model(p, d, false, &mut rng);

    let naive = prefix_losses_naive(&model, &x)?;
    let fast = prefix_losses_efficient(&compute_sufficient_stats(&model, &x)?);
    let worst = naive
        .iter()
        .zip(&fast)
        .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    println!("max relative difference over {d} prefixes: {worst:.2e}");

    let cell = bench_cell(n, p, d, 5, 0)?;
    println!("median seconds (n={n}, p={p}, d={d}):");
    println!("  single LAE loss      {:.3e}", cell.lae.median);
    println!("  all prefixes, naive  {:.3e}", cell.naive.median);
    println!("  all prefixes, shared {:.3e}", cell.efficient.median);
    println!(
        "shared / LAE = {:.2}, shared / naive = {:.3}",
        cell.efficient_over_lae(),
        cell.efficient_over_naive()
    );
    Ok(())
}
