//! Command-line front end. Exit codes: 0 success, 2 configuration error,
//! 3 numeric failure, 4 I/O error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::experiment::{
    classify_preset, config_hash, linear_preset, preset_names, read_json, run_bench, run_classify, run_panels,
    run_single, synth_preset, write_bench_csv, write_fig1, write_fig2, write_json_tagged, write_losses, write_run,
    BenchGrid, ClassifyExperiment, ExperimentConfig, Seeded,
};
use crate::synthetic::{generate, write_csv, SyntheticSpec};
use crate::training::Provenance;

#[derive(Debug, Parser)]
#[command(
    name = "prefix-bases",
    version,
    about = "Ordered linear representations checked against PCA and LDA"
)]
pub struct Cli {
    /// Worker threads for parallel runs (1 gives the deterministic serial mode).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the config seed (data draw, split and training).
    #[arg(long, env = "PREFIX_BASES_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic two-block dataset and write CSV plus truth JSON.
    Synth {
        /// `default` (20 classes, 500 per class) or `classify` (3500 per class).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long, env = "PREFIX_BASES_SEED")]
        seed: Option<u64>,
        #[arg(long, default_value = "synth")]
        out: PathBuf,
    },
    /// Train one linear model and score it against the train-split oracle.
    Train {
        #[command(flatten)]
        common: Common,
        /// Loss id overriding the config's `loss`.
        #[arg(long)]
        loss: Option<String>,
    },
    /// Time one LAE loss against all-prefix naive and efficient evaluation.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1024,4096")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "512")]
        p: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
        d: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Per-cell memory budget in MiB.
        #[arg(long, default_value_t = 2048)]
        max_memory_mb: usize,
        #[arg(long, env = "PREFIX_BASES_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "bench")]
        out: PathBuf,
    },
    /// Run every method for a figure's panels and emit long-format CSV.
    Reproduce {
        figure: Figure,
        #[command(flatten)]
        common: Common,
    },
    /// List built-in presets.
    Presets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig1,
    Fig2,
    Losses,
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth {
            preset,
            classes,
            per_class,
            seed,
            out,
        } => cmd_synth(preset.as_deref(), classes, per_class, seed, &out),
        Command::Train { common, loss } => cmd_train(&common, loss.as_deref()),
        Command::Bench {
            n,
            p,
            d,
            repeats,
            max_memory_mb,
            seed,
            out,
        } => {
            let grid = BenchGrid {
                n,
                p,
                d,
                repeats,
                max_bytes: max_memory_mb.saturating_mul(1 << 20),
                seed,
            };
            cmd_bench(&grid, &out)
        }
        Command::Reproduce { figure, common } => cmd_reproduce(figure, &common),
        Command::Presets => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn cmd_synth(
    preset: Option<&str>,
    classes: Option<usize>,
    per_class: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut spec = match (preset, classes) {
        (Some(name), _) => synth_preset(name)?,
        (None, Some(c)) => SyntheticSpec::small(c, per_class.unwrap_or(10), 0),
        (None, None) => {
            return Err(Error::Config("synth needs --preset or --classes".into()));
        }
    };
    if let (Some(_), Some(c)) = (preset, classes) {
        if c != spec.n_classes {
            return Err(Error::Config("--classes cannot change a preset's class count".into()));
        }
    }
    if let Some(n) = per_class {
        spec.samples_per_class = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    let prov = Provenance {
        config_sha256: config_hash(&spec)?,
        seed: spec.seed,
    };
    let (ds, truth) = generate(&spec)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_csv(&ds, out.join("data.csv"))?;
    write_json_tagged(&out.join("truth.json"), &prov, &truth)?;
    write_json_tagged(&out.join("spec.json"), &prov, &spec)?;
    println!("wrote {} samples × {} features to {}", ds.n(), ds.p(), out.display());
    Ok(())
}

fn load_linear(common: &Common, default_preset: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = match (&common.config, &common.preset) {
        (Some(path), _) => read_json(path)?,
        (None, Some(name)) => linear_preset(name)?,
        (None, None) => linear_preset(default_preset)?,
    };
    Ok(match common.seed {
        Some(s) => cfg.reseed(s),
        None => cfg,
    })
}

fn out_dir(common: &Common, fallback: &str) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(fallback))
}

fn cmd_train(common: &Common, loss: Option<&str>) -> Result<()> {
    let mut cfg = load_linear(common, "synthetic-mse")?;
    if let Some(l) = loss {
        cfg.loss = l.to_string();
    }
    cfg.methods.clear();
    cfg.check()?;
    if common.dry_run {
        let data = crate::experiment::PreparedData::load(&cfg.dataset, cfg.split, cfg.seed)?;
        let run = cfg.resolve(&data)?;
        println!("{}", serde_json::to_string_pretty(&run.config)?);
        println!("config_sha256 = {}", run.provenance.config_sha256);
        return Ok(());
    }
    let dir = out_dir(common, &format!("{}-{}", cfg.name, cfg.loss));
    let (_, outcome) = run_single(&cfg)?;
    write_run(&outcome, &dir)?;
    let s = outcome.summary();
    println!(
        "{}: {} epochs, best train {:.6e}, best val {:.6e}{}; wrote {}",
        s.method,
        s.epochs_run,
        s.best_train,
        s.best_val,
        s.lower_bound_gap
            .map(|g| format!(", bound gap {:+.3}%", 100.0 * g))
            .unwrap_or_default(),
        dir.display()
    );
    Ok(())
}

fn cmd_bench(grid: &BenchGrid, out: &Path) -> Result<()> {
    grid.check()?;
    let prov = Provenance {
        config_sha256: config_hash(grid)?,
        seed: grid.seed,
    };
    let cells = run_bench(grid)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("timing.csv");
    write_bench_csv(&path, &prov, &cells, grid.repeats)?;
    for c in &cells {
        println!(
            "n={:>6} p={:>4} d={:>3}  lae {:.3e}s  naive {:.3e}s  efficient {:.3e}s  eff/lae {:.2}",
            c.n,
            c.p,
            c.d,
            c.lae.median,
            c.naive.median,
            c.efficient.median,
            c.efficient_over_lae()
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn load_classify(common: &Common) -> Result<ClassifyExperiment> {
    let exp: ClassifyExperiment = match (&common.config, &common.preset) {
        (Some(path), _) => read_json(path)?,
        (None, Some(name)) => classify_preset(name)?,
        (None, None) => classify_preset("synthetic-classify")?,
    };
    Ok(match common.seed {
        Some(s) => exp.reseed(s),
        None => exp,
    })
}

fn cmd_reproduce(figure: Figure, common: &Common) -> Result<()> {
    if figure == Figure::Fig2 {
        let exp = load_classify(common)?;
        exp.check()?;
        if common.dry_run {
            println!("{}", serde_json::to_string_pretty(&exp)?);
            println!("config_sha256 = {}", config_hash(&exp)?);
            return Ok(());
        }
        let dir = out_dir(common, "fig2");
        let (prov, result, secs) = run_classify(&exp)?;
        write_fig2(&prov, &result, secs, &dir)?;
        println!(
            "rho FP-MRL {:.3}, MD-l1 {:.3}; wrote {}",
            result.fp_mrl.rho,
            result.md_l1.rho,
            dir.display()
        );
        return Ok(());
    }

    let configs = if common.config.is_some() || common.preset.is_some() {
        vec![load_linear(common, "")?]
    } else {
        ["synthetic-mse", "synthetic-fisher"]
            .iter()
            .map(|name| {
                let c = linear_preset(name)?;
                Ok(match common.seed {
                    Some(s) => c.reseed(s),
                    None => c,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    for c in &configs {
        c.check()?;
    }
    if common.dry_run {
        println!("{}", serde_json::to_string_pretty(&configs)?);
        return Ok(());
    }
    let name = if figure == Figure::Fig1 { "fig1" } else { "losses" };
    let dir = out_dir(common, name);
    let results = run_panels(&configs)?;
    match figure {
        Figure::Fig1 => write_fig1(&results, &dir)?,
        _ => write_losses(&results, &dir)?,
    }
    for (row, o) in &results.outcomes {
        println!(
            "{row}/{}: {} epochs, mean paired cos {:.3}",
            o.run.config.loss,
            o.report.epochs_run(),
            o.alignment.paired_cos.iter().sum::<f64>() / o.alignment.paired_cos.len() as f64
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}
