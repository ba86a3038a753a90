//! Train the small MLP classifier under full-prefix cross-entropy and under
//! the monotone ℓ1 penalty, then print per-coordinate magnitude, 1-D probe
//! accuracy and prefix accuracy for both.
//!
//! cargo run --release --example classification_probes -- [seed] [images labels]
//!
//! With two IDX paths the data is read from disk (for example MNIST's
//! train-images-idx3-ubyte and train-labels-idx1-ubyte); otherwise the
//! 20-class synthetic set is drawn at 3500 samples per class, the size of
//! MNIST.

use prefix_bases::classify::{run_fig2_protocol, ClassifierConfig};
use prefix_bases::data::{load_idx, stratified_split};
use prefix_bases::synthetic::{generate, SyntheticSpec};

fn main() -> prefix_bases::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(0);
    let ds = match (args.get(1), args.get(2)) {
        (Some(images), Some(labels)) => load_idx(images, labels)?,
        _ => {
            let spec = SyntheticSpec {
                seed,
                samples_per_class: 3500,
                ..SyntheticSpec::default()
            };
            generate(&spec)?.0
        }
    };
    let split = stratified_split(&ds, (0.7, 0.1, 0.2), seed)?;
    let cfg = ClassifierConfig {
        seed,
        ..ClassifierConfig::default()
    };
    let t = std::time::Instant::now();
    let res = run_fig2_protocol(&ds, &split, &cfg)?;
    println!("trained both models in {:.1}s", t.elapsed().as_secs_f64());
    for (name, prof, rep) in [
        ("FP-MRL", &res.fp_mrl, &res.fp_mrl_report),
        ("MD-l1", &res.md_l1, &res.md_l1_report),
    ] {
        println!(
            "{name}: best epoch {}, rho(mean|z|, probe) = {:.3}",
            rep.best_epoch, prof.rho
        );
        println!("   k  mean|z|  probe  prefix");
        for k in 0..prof.mean_abs.len() {
            println!(
                "  {:>2}  {:.4}  {:.3}  {:.3}",
                k + 1,
                prof.mean_abs[k],
                prof.probe_accuracy[k],
                prof.prefix_accuracy[k]
            );
        }
    }
    Ok(())
}
