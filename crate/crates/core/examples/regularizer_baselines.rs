//! The ordering baselines on the two-block data: sparse-prefix MRL on the
//! nesting set {5, 10, 25, 50}, non-uniform ℓ2 with the linear λ ramp, and
//! the monotone ℓ1 penalty. Each is scored against the train-split PCA.
//!
//! cargo run --release --example regularizer_baselines -- [seed] [max_epochs]

use prefix_bases::experiment::{linear_preset, run_single, Seeded};

fn main() -> prefix_bases::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: Option<usize> = args.next().and_then(|s| s.parse().ok());

    let base = linear_preset("synthetic-mse")?.reseed(seed);
    for method in ["s_mrl", "nu_l2", "md_l1"] {
        let mut cfg = base.for_method(method);
        if let Some(e) = epochs {
            cfg.max_epochs = e;
        }
        let (_, out) = run_single(&cfg)?;
        let a = &out.alignment;
        let mean_paired = a.paired_cos.iter().sum::<f64>() / a.paired_cos.len() as f64;
        println!(
            "{method:>6}: {} epochs, mean PairedCos {:.3}, PairedCos at k=1,5,10: {:.3} {:.3} {:.3}, angle at k=d {:.2}°",
            out.report.epochs_run(),
            mean_paired,
            a.paired_cos[0],
            a.paired_cos[4],
            a.paired_cos[9],
            a.mean_angle_deg[a.d() - 1]
        );
        if let Some(l) = &out.run.config.hyper.lambdas {
            println!("        λ from {:.3e} to {:.3e}", l[0], l[l.len() - 1]);
        }
    }
    Ok(())
}
