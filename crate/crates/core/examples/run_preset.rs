//! Run a built-in preset (or a JSON config) through the experiment layer
//! and write the same files as `prefix-bases train`.
//!
//! cargo run --release --example run_preset -- synthetic-fisher runs/fisher
//! cargo run --release --example run_preset -- path/to/config.json runs/mine

use std::path::Path;

use prefix_bases::experiment::{linear_preset, read_json, run_single, write_run};

fn main() -> prefix_bases::Result<()> {
    let mut args = std::env::args().skip(1);
    let which = args.next().unwrap_or_else(|| "synthetic-mse".into());
    let out = args.next().unwrap_or_else(|| format!("runs/{which}"));
    let cfg = if which.ends_with(".json") {
        read_json(Path::new(&which))?
    } else {
        linear_preset(&which)?
    };
    let (_, outcome) = run_single(&cfg)?;
    write_run(&outcome, Path::new(&out))?;
    let s = outcome.summary();
    println!(
        "{} / {}: best epoch {} of {}, train {:.5e}, config {}",
        s.name,
        s.method,
        s.best_epoch,
        s.epochs_run,
        s.best_train,
        &s.config_sha256[..12]
    );
    println!("wrote {out}");
    Ok(())
}
