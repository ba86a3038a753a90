//! Draw the 20-class two-block dataset, show which axes carry variance and
//! which carry class separation, and check the empirical PCA of one draw
//! against the analytic axes.
//!
//! cargo run --release --example synthetic_data -- [seed] [out_dir]

use prefix_bases::metrics::max_cos;
use prefix_bases::oracles::pca;
use prefix_bases::synthetic::{generate, truth_bases, write_csv, SyntheticSpec};

fn main() -> prefix_bases::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let out = args.next();

    let spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    };
    let (ds, truth) = generate(&spec)?;
    println!("{} samples, p = {}, C = {}", ds.n(), ds.p(), ds.n_classes);

    let top: Vec<String> = truth.pca_axes[..12]
        .iter()
        .map(|&i| {
            let block = if i < spec.p_noise { "n" } else { "s" };
            format!("{block}{i}:{:.2}", truth.feature_variances[i])
        })
        .collect();
    println!("largest feature variances: {}", top.join(" "));
    println!("LDA axes (by between-class variance): {:?}", &truth.lda_axes[..5]);

    let bases = truth_bases(&spec, 10)?;
    if bases.ordering_warning {
        println!("warning: the leading analytic PCA axes are not the top population variance directions");
    }
    let x = ds.data.values().clone();
    let mean = x.column_mean();
    let centered = x.map_with_location(|r, _, v| v - mean[r]);
    let empirical = pca(&centered, 10)?;
    let fit = max_cos(&empirical.basis.directions, &bases.pca.directions)?;
    let worst = fit.values.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("empirical vs analytic PCA, top 10: min MaxCos = {worst:.4}");

    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|e| prefix_bases::Error::Io {
            path: dir.clone().into(),
            source: e,
        })?;
        write_csv(&ds, format!("{dir}/data.csv"))?;
        truth.write_json(format!("{dir}/truth.json"))?;
        println!("wrote {dir}/data.csv and {dir}/truth.json");
    }
    Ok(())
}
