//! Full-batch Fisher training with and without the prefix sum, compared
//! with the analytic LDA axes of the synthetic generator and with the LDA
//! oracle on the train split.
//!
//! cargo run --release --example lda_recovery -- [seed] [steps]

use prefix_bases::data::{center, stratified_split};
use prefix_bases::losses::{LossFamily, Objective, PrefixWeights, Task};
use prefix_bases::metrics::paired_cos;
use prefix_bases::oracles::lda;
use prefix_bases::synthetic::{generate, truth_bases, SyntheticSpec};
use prefix_bases::training::{train, BatchSize, TrainConfig};

fn main() -> prefix_bases::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(50000);
    let (d, eps) = (19, 1e-4);
    let spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    };
    let (raw, _) = generate(&spec)?;
    let truth = truth_bases(&spec, d)?;
    let split = stratified_split(&raw, (0.7, 0.1, 0.2), seed)?;
    let (ds, _) = center(&raw, &split)?;
    let train_ds = {
        let (x, y) = ds.subset(&split.train);
        prefix_bases::data::LabeledDataset::new(prefix_bases::data::DataMatrix::new(x)?, y, ds.n_classes)?
    };
    let oracle = lda(&train_ds, d, eps)?;
    let oracle_vs_truth = paired_cos(&oracle.directions, &truth.lda.directions)?;
    println!("train-split LDA oracle vs analytic axes:");
    println!("  {}", fmt(&oracle_vs_truth.values));

    let families = [
        ("fisher", LossFamily::Unordered),
        (
            "fisher_fp_mrl",
            LossFamily::FullPrefix {
                weights: PrefixWeights::uniform(d),
            },
        ),
    ];
    for (name, family) in families {
        let mut cfg = TrainConfig::new(Objective::new(Task::Fisher { eps }, family), d, seed);
        cfg.batch_size = BatchSize::Full;
        cfg.max_epochs = steps;
        cfg.patience = steps;
        cfg.orthonormal_decoder = false;
        let t = std::time::Instant::now();
        let report = train(&ds, &split, &cfg)?;
        let learned = report.model.encoder_b.transpose();
        let vs_truth = paired_cos(&learned, &truth.lda.directions)?;
        let vs_oracle = paired_cos(&learned, &oracle.directions)?;
        println!(
            "{name}: {} steps in {:.1}s, train objective {:.4}",
            report.epochs_run(),
            t.elapsed().as_secs_f64(),
            report.best_train
        );
        println!("  vs analytic: {}", fmt(&vs_truth.values));
        println!("  vs oracle:   {}", fmt(&vs_oracle.values));
    }
    Ok(())
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ")
}
