//! Config-driven experiments: dataset resolution, single training runs with
//! alignment metrics against the train-split oracle, multi-method panels,
//! the classification protocol, and loss-evaluation timing.
//!
//! Every file written here carries the SHA-256 of the resolved config and
//! the seed: CSVs in a leading `#` comment line, JSON files as top-level
//! fields.

mod bench;
mod config;
mod output;

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bench::{bench_cell, run_bench, write_bench_csv, BenchCell, BenchGrid, Timing};
pub use config::{
    classify_preset, config_hash, linear_preset, preset_names, read_json, synth_preset, ClassifyExperiment,
    DatasetSpec, ExperimentConfig, IdxFiles, LambdaSchedule, Metric, Seeded,
};
pub use output::{write_json_tagged, write_long_csv, LongRow};

use crate::classify::{run_fig2_protocol, save_classifier, Fig2Result};
use crate::data::{center, stratified_split, DataMatrix, LabeledDataset, SplitIndices};
use crate::error::{Error, Result};
use crate::losses::{NuL2Lambdas, Objective, Task};
use crate::metrics::AlignmentProfile;
use crate::oracles::{lda, pca, ReferenceBasis};
use crate::training::{save_checkpoint_with, train, Provenance, TrainConfig, TrainReport};

/// Centered data plus the split it was centered on.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: LabeledDataset,
    pub split: SplitIndices,
}

impl PreparedData {
    pub fn load(spec: &DatasetSpec, fractions: (f64, f64, f64), seed: u64) -> Result<Self> {
        let raw = spec.load()?;
        let split = stratified_split(&raw, fractions, seed)?;
        let (dataset, _) = center(&raw, &split)?;
        Ok(PreparedData { dataset, split })
    }

    pub fn train_x(&self) -> DMatrix<f64> {
        self.dataset.data.select_columns(&self.split.train)
    }

    fn train_set(&self) -> Result<LabeledDataset> {
        let (x, y) = self.dataset.subset(&self.split.train);
        LabeledDataset::new(DataMatrix::new(x)?, y, self.dataset.n_classes)
    }
}

/// One method of an [`ExperimentConfig`], fully resolved against its data.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    /// The config with `loss` fixed, `methods` cleared, λ filled in and the
    /// decoder flag made explicit. This is what gets hashed.
    pub config: ExperimentConfig,
    pub train: TrainConfig,
    pub reference: ReferenceBasis,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: ResolvedRun,
    pub report: TrainReport,
    pub alignment: AlignmentProfile,
    pub wall_clock_seconds: f64,
}

/// The JSON summary written next to each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub method: String,
    pub d: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_train: f64,
    pub best_val: f64,
    pub final_train: f64,
    pub final_val: f64,
    pub stopped_early: bool,
    pub lower_bound: Option<f64>,
    pub lower_bound_gap: Option<f64>,
    pub rerandomized_columns: usize,
    pub seed: u64,
    pub config_sha256: String,
    pub wall_clock_seconds: f64,
}

impl RunOutcome {
    pub fn summary(&self) -> RunSummary {
        let r = &self.report;
        RunSummary {
            name: self.run.config.name.clone(),
            method: self.run.config.loss.clone(),
            d: self.run.config.d,
            epochs_run: r.epochs_run(),
            best_epoch: r.best_epoch,
            best_train: r.best_train,
            best_val: r.best_val,
            final_train: r.train_curve.last().copied().unwrap_or(f64::NAN),
            final_val: r.val_curve.last().copied().unwrap_or(f64::NAN),
            stopped_early: r.stopped_early,
            lower_bound: r.lower_bound,
            lower_bound_gap: r.lower_bound_gap,
            rerandomized_columns: r.rerandomized.len(),
            seed: self.run.provenance.seed,
            config_sha256: self.run.provenance.config_sha256.clone(),
            wall_clock_seconds: self.wall_clock_seconds,
        }
    }
}

/// Decoder columns for reconstruction objectives, encoder rows for Fisher.
pub fn learned_directions(report: &TrainReport) -> DMatrix<f64> {
    match report.config.objective.task {
        Task::Reconstruction => report.model.decoder_a.clone(),
        Task::Fisher { .. } => report.model.encoder_b.transpose(),
    }
}

fn needs_lambdas(method: &str) -> bool {
    method.ends_with("nu_l2")
}

impl ExperimentConfig {
    /// Loss ids this config runs: `methods` if given, else `loss`.
    pub fn method_list(&self) -> Vec<String> {
        if self.methods.is_empty() {
            vec![self.loss.clone()]
        } else {
            self.methods.clone()
        }
    }

    pub fn for_method(&self, method: &str) -> ExperimentConfig {
        ExperimentConfig {
            loss: method.to_string(),
            methods: Vec::new(),
            ..self.clone()
        }
    }

    fn train_config(&self, objective: Objective) -> TrainConfig {
        let ortho = self.orthonormal_decoder.unwrap_or(self.loss == "fp_mrl");
        TrainConfig {
            objective,
            d: self.d,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            orthonormal_decoder: ortho,
            adam: self.adam,
        }
    }

    /// Everything that can be checked without reading data.
    pub fn check(&self) -> Result<()> {
        self.dataset.check()?;
        config::check_split(self.split)?;
        if self.metrics.is_empty() {
            return Err(Error::Config("no metrics selected".into()));
        }
        for method in self.method_list() {
            let mut hyper = self.hyper.clone();
            if needs_lambdas(&method) && hyper.lambdas.is_none() {
                if self.lambda_schedule.is_none() {
                    return Err(Error::Config(format!(
                        "{method} needs `hyper.lambdas` or a `lambda_schedule`"
                    )));
                }
                hyper.lambdas = Some((1..=self.d).map(|k| k as f64).collect());
            }
            let objective = Objective::from_id(&method, self.d, &hyper)?;
            if matches!(objective.task, Task::Fisher { .. }) && !self.dataset.is_labeled() {
                return Err(Error::Config(format!("{method} needs class labels")));
            }
            self.for_method(&method).train_config(objective).validate(self.d)?;
        }
        Ok(())
    }

    /// Resolves `self.loss` against prepared data: builds the λ schedule,
    /// validates shapes, and computes the oracle reference basis.
    pub fn resolve(&self, data: &PreparedData) -> Result<ResolvedRun> {
        let mut config = self.for_method(&self.loss);
        let x_train = data.train_x();
        let p = x_train.nrows();
        if self.d > p.min(x_train.ncols()) {
            return Err(Error::Config(format!(
                "d = {} exceeds min(p, n_train) = {}",
                self.d,
                p.min(x_train.ncols())
            )));
        }
        if needs_lambdas(&config.loss) && config.hyper.lambdas.is_none() {
            let spectrum = pca(&x_train, self.d)?.spectrum;
            let sigma_d_sq = spectrum[self.d - 1] / x_train.ncols() as f64;
            let lambdas = NuL2Lambdas::linear_schedule(sigma_d_sq, self.d)?;
            config.hyper.lambdas = Some(lambdas.values().to_vec());
        }
        let objective = Objective::from_id(&config.loss, self.d, &config.hyper)?;
        let train_cfg = config.train_config(objective);
        train_cfg.validate(p)?;
        config.orthonormal_decoder = Some(train_cfg.orthonormal_decoder);

        let reference = match train_cfg.objective.task {
            Task::Reconstruction => pca(&x_train, self.d)?.basis,
            Task::Fisher { eps } => {
                if data.dataset.n_classes < 2 {
                    return Err(Error::Config(format!("{} needs at least two classes", config.loss)));
                }
                lda(&data.train_set()?, self.d, eps)?
            }
        };
        let provenance = Provenance {
            config_sha256: config_hash(&config)?,
            seed: config.seed,
        };
        Ok(ResolvedRun {
            config,
            train: train_cfg,
            reference,
            provenance,
        })
    }
}

impl ResolvedRun {
    pub fn execute(self, data: &PreparedData) -> Result<RunOutcome> {
        let start = Instant::now();
        let report = train(&data.dataset, &data.split, &self.train)?;
        let learned = learned_directions(&report);
        let reference = &self.reference.directions;
        let cols = learned.ncols().min(reference.ncols());
        let alignment = AlignmentProfile::compute(
            &learned.columns(0, cols).into_owned(),
            &reference.columns(0, cols).into_owned(),
        )?;
        Ok(RunOutcome {
            run: self,
            report,
            alignment,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn alignment_rows(&self, method: &str, profile: &AlignmentProfile) -> Vec<LongRow> {
        let mut rows = Vec::new();
        for metric in &self.config.metrics {
            let values = match metric {
                Metric::PairedCos => &profile.paired_cos,
                Metric::MaxCos => &profile.max_cos,
                Metric::MeanAngleDeg => &profile.mean_angle_deg,
            };
            rows.extend(
                values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| LongRow::new(method, i + 1, metric.name(), v)),
            );
        }
        rows
    }
}

/// Long-format rows for the oracle spectrum: raw and max-normalized.
pub fn reference_rows(label: &str, basis: &ReferenceBasis) -> Vec<LongRow> {
    let normalized = basis.normalized_values();
    basis
        .values
        .iter()
        .zip(&normalized)
        .enumerate()
        .flat_map(|(i, (&v, &nv))| {
            [
                LongRow::new(label, i + 1, "value", v),
                LongRow::new(label, i + 1, "normalized_value", nv),
            ]
        })
        .collect()
}

/// Per-epoch objectives; `k` holds the 1-based epoch.
pub fn curve_rows(method: &str, train_curve: &[f64], val_curve: &[f64]) -> Vec<LongRow> {
    let mut rows: Vec<LongRow> = train_curve
        .iter()
        .enumerate()
        .map(|(e, &v)| LongRow::new(method, e + 1, "train_objective", v))
        .collect();
    rows.extend(
        val_curve
            .iter()
            .enumerate()
            .map(|(e, &v)| LongRow::new(method, e + 1, "val_objective", v)),
    );
    rows
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Validates, resolves and trains one config; nothing is written.
pub fn run_single(config: &ExperimentConfig) -> Result<(PreparedData, RunOutcome)> {
    config.check()?;
    let data = PreparedData::load(&config.dataset, config.split, config.seed)?;
    let run = config.resolve(&data)?;
    let outcome = run.execute(&data)?;
    Ok((data, outcome))
}

/// Writes the outputs of a single training run into `dir`.
pub fn write_run(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let prov = &outcome.run.provenance;
    let method = outcome.run.config.loss.as_str();
    write_json_tagged(&dir.join("config.json"), prov, &outcome.run.config)?;
    write_json_tagged(&dir.join("report.json"), prov, &outcome.report)?;
    write_json_tagged(&dir.join("summary.json"), prov, &outcome.summary())?;
    write_long_csv(
        &dir.join("alignment.csv"),
        prov,
        &outcome.run.alignment_rows(method, &outcome.alignment),
    )?;
    write_long_csv(
        &dir.join("reference.csv"),
        prov,
        &reference_rows("reference", &outcome.run.reference),
    )?;
    write_long_csv(
        &dir.join("curves.csv"),
        prov,
        &curve_rows(method, &outcome.report.train_curve, &outcome.report.val_curve),
    )?;
    save_checkpoint_with(
        &outcome.report.model,
        dir.join("model"),
        outcome.run.config.checkpoint,
        Some(prov.clone()),
    )?;
    Ok(())
}

/// One row of a figure panel: its data and the resolved methods.
struct Panel {
    data: PreparedData,
    runs: Vec<ResolvedRun>,
}

/// Results of every method across one or more configs.
pub struct PanelResults {
    pub provenance: Provenance,
    /// `(config name, outcome)` in config then method order.
    pub outcomes: Vec<(String, RunOutcome)>,
    /// `(config name, reference basis)` per config.
    pub references: Vec<(String, ReferenceBasis)>,
}

/// Resolves every method of every config before training any of them,
/// then trains all runs in parallel on the current rayon pool.
pub fn run_panels(configs: &[ExperimentConfig]) -> Result<PanelResults> {
    for c in configs {
        c.check()?;
    }
    let mut panels = Vec::with_capacity(configs.len());
    let mut resolved_configs = Vec::new();
    for c in configs {
        let data = PreparedData::load(&c.dataset, c.split, c.seed)?;
        let runs = c
            .method_list()
            .iter()
            .map(|m| c.for_method(m).resolve(&data))
            .collect::<Result<Vec<_>>>()?;
        resolved_configs.extend(runs.iter().map(|r| r.config.clone()));
        panels.push(Panel { data, runs });
    }
    let seed = configs.first().map(|c| c.seed).unwrap_or(0);
    let provenance = Provenance {
        config_sha256: config_hash(&resolved_configs)?,
        seed,
    };

    let jobs: Vec<(usize, ResolvedRun)> = panels
        .iter_mut()
        .enumerate()
        .flat_map(|(i, p)| std::mem::take(&mut p.runs).into_iter().map(move |r| (i, r)))
        .collect();
    let results: Vec<Result<(String, RunOutcome)>> = jobs
        .into_par_iter()
        .map(|(i, run)| {
            let name = configs[i].name.clone();
            log::info!("{name}/{}: training", run.config.loss);
            let outcome = run.execute(&panels[i].data)?;
            log::info!(
                "{name}/{}: {} epochs, {:.1}s",
                outcome.run.config.loss,
                outcome.report.epochs_run(),
                outcome.wall_clock_seconds
            );
            Ok((name, outcome))
        })
        .collect();
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut references = Vec::new();
    for c in configs {
        if let Some((_, o)) = outcomes.iter().find(|(n, _)| *n == c.name) {
            references.push((c.name.clone(), o.run.reference.clone()));
        }
    }
    Ok(PanelResults {
        provenance,
        outcomes,
        references,
    })
}

/// Alignment profiles of every method plus the oracle spectra.
pub fn write_fig1(results: &PanelResults, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let mut rows = Vec::new();
    for (name, basis) in &results.references {
        rows.extend(reference_rows(&format!("{name}/reference"), basis));
    }
    for (name, o) in &results.outcomes {
        let label = format!("{name}/{}", o.run.config.loss);
        rows.extend(o.run.alignment_rows(&label, &o.alignment));
    }
    write_long_csv(&dir.join("fig1.csv"), &results.provenance, &rows)?;
    write_panel_summary(results, dir)?;
    for (name, o) in &results.outcomes {
        save_checkpoint_with(
            &o.report.model,
            dir.join(format!("{name}-{}", o.run.config.loss)),
            o.run.config.checkpoint,
            Some(o.run.provenance.clone()),
        )?;
    }
    Ok(())
}

/// Per-epoch train and validation objectives of every method.
pub fn write_losses(results: &PanelResults, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let rows: Vec<LongRow> = results
        .outcomes
        .iter()
        .flat_map(|(name, o)| {
            curve_rows(
                &format!("{name}/{}", o.run.config.loss),
                &o.report.train_curve,
                &o.report.val_curve,
            )
        })
        .collect();
    write_long_csv(&dir.join("losses.csv"), &results.provenance, &rows)?;
    write_panel_summary(results, dir)
}

fn write_panel_summary(results: &PanelResults, dir: &Path) -> Result<()> {
    let summaries: Vec<RunSummary> = results.outcomes.iter().map(|(_, o)| o.summary()).collect();
    write_json_tagged(
        &dir.join("summary.json"),
        &results.provenance,
        &serde_json::json!({ "runs": summaries }),
    )
}

/// Validates, loads and runs the two-model classification protocol.
pub fn run_classify(exp: &ClassifyExperiment) -> Result<(Provenance, Fig2Result, f64)> {
    exp.check()?;
    let provenance = Provenance {
        config_sha256: config_hash(exp)?,
        seed: exp.classifier.seed,
    };
    let raw = exp.dataset.load()?;
    if raw.n_classes < 2 {
        return Err(Error::Config("classification needs at least two classes".into()));
    }
    let split = stratified_split(&raw, exp.split, exp.classifier.seed)?;
    let start = Instant::now();
    let result = run_fig2_protocol(&raw, &split, &exp.classifier)?;
    Ok((provenance, result, start.elapsed().as_secs_f64()))
}

pub fn write_fig2(provenance: &Provenance, result: &Fig2Result, seconds: f64, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (method, prof, report) in [
        ("fp_mrl", &result.fp_mrl, &result.fp_mrl_report),
        ("md_l1", &result.md_l1, &result.md_l1_report),
    ] {
        for (metric, values) in [
            ("mean_abs", &prof.mean_abs),
            ("variance", &prof.variance),
            ("probe_accuracy", &prof.probe_accuracy),
            ("prefix_accuracy", &prof.prefix_accuracy),
        ] {
            rows.extend(
                values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| LongRow::new(method, i + 1, metric, v)),
            );
        }
        rows.push(LongRow::new(method, 0, "spearman_rho", prof.rho));
        curves.extend(curve_rows(method, &report.train_curve, &report.val_curve));
        save_classifier(
            report,
            dir.join(format!("classifier-{method}")),
            Some(provenance.clone()),
        )?;
    }
    write_long_csv(&dir.join("fig2.csv"), provenance, &rows)?;
    write_long_csv(&dir.join("fig2_curves.csv"), provenance, &curves)?;
    write_json_tagged(
        &dir.join("summary.json"),
        provenance,
        &serde_json::json!({
            "fp_mrl": {
                "rho": result.fp_mrl.rho,
                "rho_degenerate": result.fp_mrl.rho_degenerate,
                "best_epoch": result.fp_mrl_report.best_epoch,
                "floored_norms": result.fp_mrl_report.floored_norms,
            },
            "md_l1": {
                "rho": result.md_l1.rho,
                "rho_degenerate": result.md_l1.rho_degenerate,
                "best_epoch": result.md_l1_report.best_epoch,
                "floored_norms": result.md_l1_report.floored_norms,
            },
            "wall_clock_seconds": seconds,
        }),
    )
}
