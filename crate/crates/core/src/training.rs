//! Adam, orthonormal re-projection of the decoder, and the mini-batch
//! training loop with validation early stopping.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{LabeledDataset, SplitIndices};
use crate::error::{Error, Result};
use crate::linalg::{deficient_columns, thin_qr};
use crate::losses::{Batch, LinearAutoencoder, LossFamily, Objective, PrefixWeights, Task};
use crate::oracles::{fp_mrl_lower_bound, pca, scatter_of, ScatterPair};
use crate::rng::{derive_seed, gaussian_matrix, rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Moment accumulators for a fixed list of parameter matrices.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<DMatrix<f64>>,
    pub second_moment: Vec<DMatrix<f64>>,
    pub step_count: u64,
}

/// Index of the parameter whose gradient contained a NaN or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFinite {
    pub param: usize,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        AdamState {
            config,
            first_moment: shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect(),
            second_moment: shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect(),
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update. Weight decay is decoupled and applied
/// multiplicatively before the moment step. Parameters are left untouched
/// if any gradient is non-finite.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [&mut DMatrix<f64>],
    grads: &[&DMatrix<f64>],
) -> std::result::Result<(), NonFinite> {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.first_moment.len());
    if let Some(param) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(NonFinite { param });
    }
    let c = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let decay = 1.0 - c.lr * c.weight_decay;
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        assert_eq!(p.shape(), g.shape());
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for ((pv, &gv), (mv, vv)) in p.iter_mut().zip(g.iter()).zip(m.iter_mut().zip(v.iter_mut())) {
            *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
            *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
            let mh = *mv / bc1;
            let vh = *vv / bc2;
            *pv = *pv * decay - c.lr * mh / (vh.sqrt() + c.eps);
        }
    }
    Ok(())
}

/// Result of re-orthonormalizing a decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Reprojection {
    pub a: DMatrix<f64>,
    /// Columns that were numerically dependent and replaced by random
    /// directions in the orthogonal complement of the others.
    pub rerandomized: Vec<usize>,
}

/// Q factor of the thin QR of `a` (positive `R` diagonal), keeping column
/// order. Dependent columns are re-drawn from `rng`.
pub fn reproject_orthonormal(a: &DMatrix<f64>, rng: &mut Rng) -> Result<Reprojection> {
    let (p, d) = a.shape();
    if d > p {
        return Err(Error::Shape(format!("cannot orthonormalize {d} columns in R^{p}")));
    }
    let (mut q, r) = thin_qr(a);
    let bad = deficient_columns(&r, 1e-12);
    for &j in &bad {
        let mut fresh = None;
        for _ in 0..8 {
            let mut v = gaussian_matrix(p, 1, rng);
            // two Gram-Schmidt passes against every column that is already good
            for _ in 0..2 {
                for k in (0..d).filter(|&k| k != j && (!bad.contains(&k) || k < j)) {
                    let proj = q.column(k).dot(&v.column(0));
                    v.column_mut(0).axpy(-proj, &q.column(k), 1.0);
                }
            }
            let norm = v.norm();
            if norm > 1e-8 {
                fresh = Some(v / norm);
                break;
            }
        }
        let v = fresh.ok_or_else(|| Error::RankDeficient(format!("could not refill decoder column {j}")))?;
        q.set_column(j, &v.column(0));
    }
    Ok(Reprojection {
        a: q,
        rerandomized: bad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Size(usize),
}

impl Serialize for BatchSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Full => s.serialize_str("full"),
            BatchSize::Size(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(0) => Err(serde::de::Error::custom("batch_size must be at least 1")),
            Raw::N(n) => Ok(BatchSize::Size(n)),
            Raw::S(s) if s == "full" => Ok(BatchSize::Full),
            Raw::S(s) => Err(serde::de::Error::custom(format!(
                "batch_size {s:?} is neither a count nor \"full\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub d: usize,
    pub batch_size: BatchSize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub orthonormal_decoder: bool,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainConfig {
    /// Defaults for the synthetic reconstruction row: batch 256, 200 epochs,
    /// patience 5, orthonormal decoder.
    pub fn new(objective: Objective, d: usize, seed: u64) -> Self {
        TrainConfig {
            objective,
            d,
            batch_size: BatchSize::Size(256),
            max_epochs: 200,
            patience: 5,
            seed,
            orthonormal_decoder: true,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.d == 0 || self.d > p {
            return Err(Error::Config(format!("latent dimension {} outside [1, {p}]", self.d)));
        }
        if let BatchSize::Size(0) = self.batch_size {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if matches!(self.objective.task, Task::Fisher { .. }) && self.batch_size != BatchSize::Full {
            return Err(Error::Config("Fisher objectives train on the full batch".into()));
        }
        if let Task::Fisher { eps } = self.objective.task {
            if !(eps > 0.0) {
                return Err(Error::Config(format!("Fisher stabilizer must be positive, got {eps}")));
            }
        }
        if let LossFamily::MonotoneL1 { alpha } = self.objective.family {
            if !(alpha > 0.0) {
                return Err(Error::Config(format!("MD-ℓ1 α must be positive, got {alpha}")));
            }
        }
        let a = self.adam;
        if !(a.lr > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.weight_decay < 0.0 {
            return Err(Error::Config(format!("invalid optimizer settings {a:?}")));
        }
        self.objective.check_dim(self.d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    /// Objective on the whole train split after each epoch.
    pub train_curve: Vec<f64>,
    /// Objective on the validation split after each epoch.
    pub val_curve: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    /// 1-based epoch of the retained checkpoint; 0 if none finished.
    pub best_epoch: usize,
    pub best_val: f64,
    /// Train objective of the retained checkpoint.
    pub best_train: f64,
    pub stopped_early: bool,
    pub model: LinearAutoencoder,
    /// `(epoch, column)` pairs re-drawn during re-projection.
    pub rerandomized: Vec<(usize, usize)>,
    /// Prefix-sum Eckart–Young floor for reconstruction objectives.
    pub lower_bound: Option<f64>,
    /// `(best_train - lower_bound) / lower_bound`.
    pub lower_bound_gap: Option<f64>,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.train_curve.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Encoder `N(0, 1/p)`, decoder with orthonormal columns.
pub fn init_model(p: usize, d: usize, orthonormal_decoder: bool, rng: &mut Rng) -> LinearAutoencoder {
    let b = gaussian_matrix(d, p, rng) / (p as f64).sqrt();
    let (a, _) = thin_qr(&gaussian_matrix(p, d, rng));
    LinearAutoencoder {
        encoder_b: b,
        decoder_a: a,
        orthonormal_decoder,
    }
}

/// Lower bound on a reconstruction objective from the train spectrum.
pub fn reconstruction_lower_bound(objective: &Objective, x_train: &DMatrix<f64>, d: usize) -> Result<Option<f64>> {
    if !objective.is_total() {
        return Ok(None);
    }
    let weights = match &objective.family {
        LossFamily::FullPrefix { weights } => weights.clone(),
        LossFamily::SparsePrefix { nesting } => PrefixWeights::from_nesting(nesting),
        _ => PrefixWeights::full_width_only(d),
    };
    let rank = x_train.nrows().min(x_train.ncols());
    let spectrum = pca(x_train, rank)?.spectrum;
    Ok(Some(fp_mrl_lower_bound(&spectrum, d, &weights)?))
}

struct Split {
    x: DMatrix<f64>,
    scatter: Option<ScatterPair>,
}

impl Split {
    fn batch(&self) -> Batch<'_> {
        Batch {
            x: &self.x,
            scatter: self.scatter.as_ref(),
        }
    }
}

/// Trains a linear encoder/decoder on the train split and returns the
/// checkpoint with the lowest validation objective.
///
/// Batches are reshuffled each epoch from `derive_seed(seed, epoch)`. When
/// the validation split is empty the train objective drives early stopping.
pub fn train(ds: &LabeledDataset, split: &SplitIndices, config: &TrainConfig) -> Result<TrainReport> {
    config.validate(ds.p())?;
    if split.train.is_empty() {
        return Err(Error::EmptyDataset("train split is empty".into()));
    }
    let objective = &config.objective;
    let fisher = matches!(objective.task, Task::Fisher { .. });
    let make = |idx: &[usize]| -> Result<Split> {
        let (x, labels) = ds.subset(idx);
        let scatter = if fisher {
            Some(scatter_of(&x, &labels, ds.n_classes)?)
        } else {
            None
        };
        Ok(Split { x, scatter })
    };
    let train_split = make(&split.train)?;
    let val_split = if split.val.is_empty() {
        log::warn!("validation split is empty; early stopping on the train objective");
        None
    } else {
        Some(make(&split.val)?)
    };
    let n_train = train_split.x.ncols();
    let batch_size = match config.batch_size {
        BatchSize::Full => n_train,
        BatchSize::Size(b) => b.min(n_train),
    };
    let lower_bound = reconstruction_lower_bound(objective, &train_split.x, config.d)?;

    let mut init_rng = rng_from_seed(derive_seed(config.seed, 0x1417));
    let mut model = init_model(ds.p(), config.d, config.orthonormal_decoder, &mut init_rng);
    let mut proj_rng = rng_from_seed(derive_seed(config.seed, 0x9e0));
    let shapes = if objective.uses_decoder() {
        vec![model.encoder_b.shape(), model.decoder_a.shape()]
    } else {
        vec![model.encoder_b.shape()]
    };
    let mut adam = AdamState::new(config.adam, &shapes);

    let mut report = TrainReport {
        config: config.clone(),
        train_curve: Vec::new(),
        val_curve: Vec::new(),
        epoch_seconds: Vec::new(),
        best_epoch: 0,
        best_val: f64::INFINITY,
        best_train: f64::INFINITY,
        stopped_early: false,
        model: model.clone(),
        rerandomized: Vec::new(),
        lower_bound,
        lower_bound_gap: None,
    };
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        if batch_size < n_train {
            let mut rng = rng_from_seed(derive_seed(config.seed, epoch as u64));
            order.shuffle(&mut rng);
        }
        for (bi, chunk) in order.chunks(batch_size).enumerate() {
            let owned;
            let xb = if chunk.len() == n_train {
                &train_split.x
            } else {
                owned = train_split.x.select_columns(chunk);
                &owned
            };
            let batch = Batch {
                x: xb,
                scatter: train_split.scatter.as_ref(),
            };
            let (loss, mut grad) = objective.value_and_gradient(&model, batch)?;
            if !loss.is_finite() {
                return Err(diverged(report, epoch, bi, loss));
            }
            if objective.is_total() {
                grad = grad.scale(1.0 / chunk.len() as f64);
            }
            let stepped = if objective.uses_decoder() {
                adam_step(
                    &mut adam,
                    &mut [&mut model.encoder_b, &mut model.decoder_a],
                    &[&grad.b, &grad.a],
                )
            } else {
                adam_step(&mut adam, &mut [&mut model.encoder_b], &[&grad.b])
            };
            if stepped.is_err() {
                return Err(Error::NonFiniteGradient { epoch, batch: bi, loss });
            }
            if config.orthonormal_decoder && objective.uses_decoder() {
                let r = reproject_orthonormal(&model.decoder_a, &mut proj_rng)?;
                report.rerandomized.extend(r.rerandomized.iter().map(|&j| (epoch, j)));
                model.decoder_a = r.a;
            }
        }

        let train_loss = objective.value(&model, train_split.batch())?;
        let val_loss = match &val_split {
            Some(v) => objective.value(&model, v.batch())?,
            None => train_loss,
        };
        report.train_curve.push(train_loss);
        report.val_curve.push(val_loss);
        report.epoch_seconds.push(start.elapsed().as_secs_f64());
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(diverged(report, epoch, 0, train_loss));
        }
        if val_loss < report.best_val {
            report.best_val = val_loss;
            report.best_train = train_loss;
            report.best_epoch = epoch;
            report.model = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                report.stopped_early = true;
                break;
            }
        }
        log::debug!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}");
    }
    report.lower_bound_gap = report.lower_bound.map(|lb| (report.best_train - lb) / lb);
    Ok(report)
}

fn diverged(mut report: TrainReport, epoch: usize, batch: usize, loss: f64) -> Error {
    report.lower_bound_gap = report.lower_bound.map(|lb| (report.best_train - lb) / lb);
    Error::Diverged {
        epoch,
        batch,
        loss,
        report: Box::new(report),
    }
}

/// On-disk layout of a checkpoint's matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointFormat {
    /// Little-endian `f64`, encoder then decoder, column-major.
    Binary,
    /// One CSV file per matrix, one matrix row per line.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: CheckpointFormat,
    pub d: usize,
    pub p: usize,
    pub orthonormal_decoder: bool,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Hash of the resolved run configuration and the seed it ran with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

/// Writes `<stem>.json` plus the matrix file(s) next to it.
pub fn save_checkpoint(model: &LinearAutoencoder, stem: impl AsRef<Path>, format: CheckpointFormat) -> Result<PathBuf> {
    save_checkpoint_with(model, stem, format, None)
}

/// [`save_checkpoint`] with provenance recorded in the header.
pub fn save_checkpoint_with(
    model: &LinearAutoencoder,
    stem: impl AsRef<Path>,
    format: CheckpointFormat,
    provenance: Option<Provenance>,
) -> Result<PathBuf> {
    let stem = stem.as_ref();
    let name = stem
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("bad checkpoint path {}", stem.display())))?
        .to_string();
    let dir = stem.parent().unwrap_or(Path::new("."));
    let files = match format {
        CheckpointFormat::Binary => {
            let file = format!("{name}.bin");
            let mut bytes = Vec::with_capacity(8 * 2 * model.d() * model.p());
            for v in model.encoder_b.iter().chain(model.decoder_a.iter()) {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            let path = dir.join(&file);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            vec![file]
        }
        CheckpointFormat::Csv => {
            let mut out = Vec::new();
            for (tag, m) in [("encoder", &model.encoder_b), ("decoder", &model.decoder_a)] {
                let file = format!("{name}.{tag}.csv");
                let path = dir.join(&file);
                write_matrix_csv(m, &path)?;
                out.push(file);
            }
            out
        }
    };
    let header = CheckpointHeader {
        format,
        d: model.d(),
        p: model.p(),
        orthonormal_decoder: model.orthonormal_decoder,
        files,
        provenance,
    };
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads a checkpoint given the path of its JSON header.
pub fn load_checkpoint(header_path: impl AsRef<Path>) -> Result<LinearAutoencoder> {
    let header_path = header_path.as_ref();
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let h: CheckpointHeader = serde_json::from_str(&text)?;
    let dir = header_path.parent().unwrap_or(Path::new("."));
    let (b, a) = match h.format {
        CheckpointFormat::Binary => {
            let file = h
                .files
                .first()
                .ok_or_else(|| Error::Format("checkpoint lists no files".into()))?;
            let path = dir.join(file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let len = h.d * h.p;
            if bytes.len() != 16 * len {
                return Err(Error::Format(format!(
                    "{} holds {} bytes, expected {}",
                    path.display(),
                    bytes.len(),
                    16 * len
                )));
            }
            let vals: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            (
                DMatrix::from_column_slice(h.d, h.p, &vals[..len]),
                DMatrix::from_column_slice(h.p, h.d, &vals[len..]),
            )
        }
        CheckpointFormat::Csv => {
            if h.files.len() != 2 {
                return Err(Error::Format("CSV checkpoint needs encoder and decoder files".into()));
            }
            (
                read_matrix_csv(&dir.join(&h.files[0]))?,
                read_matrix_csv(&dir.join(&h.files[1]))?,
            )
        }
    };
    if b.shape() != (h.d, h.p) || a.shape() != (h.p, h.d) {
        return Err(Error::Consistency(
            "checkpoint matrices disagree with header shapes".into(),
        ));
    }
    LinearAutoencoder::new(b, a, h.orthonormal_decoder)
}

pub(crate) fn write_matrix_csv(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        buf.push_str(&cells.join(","));
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, s)| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    row: r + 1,
                    column: c + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format(format!("ragged matrix in {}", path.display())));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataMatrix;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(cfg, &[(2, 2)]);
        let mut p = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 0.5]);
        let before = p.clone();
        let g = DMatrix::zeros(2, 2);
        for _ in 0..10 {
            adam_step(&mut st, &mut [&mut p], &[&g]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step_count, 10);
    }

    #[test]
    fn constant_gradient_moves_by_lr_per_step() {
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(cfg, &[(1, 2)]);
        let mut p = DMatrix::zeros(1, 2);
        let g = DMatrix::from_row_slice(1, 2, &[3.0, -0.002]);
        let mut prev = p.clone();
        for _ in 0..500 {
            prev.copy_from(&p);
            adam_step(&mut st, &mut [&mut p], &[&g]).unwrap();
        }
        let step = &p - &prev;
        assert!((step[0] + 1e-3).abs() < 1e-9);
        assert!((step[1] - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn non_finite_gradient_leaves_params_alone() {
        let mut st = AdamState::new(AdamConfig::default(), &[(1, 1), (1, 1)]);
        let mut a = DMatrix::from_element(1, 1, 1.0);
        let mut b = DMatrix::from_element(1, 1, 2.0);
        let ga = DMatrix::from_element(1, 1, 0.1);
        let gb = DMatrix::from_element(1, 1, f64::NAN);
        let err = adam_step(&mut st, &mut [&mut a, &mut b], &[&ga, &gb]).unwrap_err();
        assert_eq!(err.param, 1);
        assert_eq!(a[(0, 0)], 1.0);
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn reprojection_removes_column_scaling() {
        let mut a = DMatrix::zeros(4, 2);
        a[(0, 0)] = 2.0;
        a[(1, 1)] = 3.0;
        let r = reproject_orthonormal(&a, &mut rng_from_seed(0)).unwrap();
        let mut expect = DMatrix::zeros(4, 2);
        expect[(0, 0)] = 1.0;
        expect[(1, 1)] = 1.0;
        assert!((r.a - expect).norm() < 1e-15);
        assert!(r.rerandomized.is_empty());
    }

    #[test]
    fn reprojection_refills_dependent_columns() {
        let mut rng = rng_from_seed(3);
        let mut a = gaussian_matrix(6, 3, &mut rng);
        let c0 = a.column(0).into_owned();
        a.set_column(2, &(c0 * 2.0));
        let r = reproject_orthonormal(&a, &mut rng).unwrap();
        assert_eq!(r.rerandomized, vec![2]);
        assert!((r.a.transpose() * &r.a - DMatrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn batch_size_serde() {
        assert_eq!(serde_json::from_str::<BatchSize>("\"full\"").unwrap(), BatchSize::Full);
        assert_eq!(serde_json::from_str::<BatchSize>("64").unwrap(), BatchSize::Size(64));
        assert!(serde_json::from_str::<BatchSize>("0").is_err());
        assert!(serde_json::from_str::<BatchSize>("\"half\"").is_err());
        assert_eq!(serde_json::to_string(&BatchSize::Full).unwrap(), "\"full\"");
    }

    fn toy() -> (LabeledDataset, SplitIndices) {
        let mut rng = rng_from_seed(9);
        let mut x = gaussian_matrix(5, 60, &mut rng);
        for (i, mut row) in x.row_iter_mut().enumerate() {
            row *= 1.0 / (i + 1) as f64;
        }
        let labels = (0..60).map(|i| i % 2).collect();
        let ds = LabeledDataset::new(DataMatrix::new(x).unwrap(), labels, 2).unwrap();
        let split = SplitIndices {
            train: (0..40).collect(),
            val: (40..50).collect(),
            test: (50..60).collect(),
        };
        (ds, split)
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (ds, split) = toy();
        let mut cfg = TrainConfig::new(Objective::fp_mrl(3), 3, 11);
        cfg.batch_size = BatchSize::Size(16);
        cfg.max_epochs = 5;
        let r1 = train(&ds, &split, &cfg).unwrap();
        let r2 = train(&ds, &split, &cfg).unwrap();
        assert_eq!(r1.train_curve, r2.train_curve);
        assert_eq!(r1.model, r2.model);
        assert!(r1.model.orthonormality_defect() < 1e-8);
    }

    #[test]
    fn checkpoint_roundtrip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let model = init_model(5, 2, true, &mut rng_from_seed(4));
        for (fmt, stem) in [(CheckpointFormat::Binary, "bin"), (CheckpointFormat::Csv, "csv")] {
            let header = save_checkpoint(&model, dir.path().join(stem), fmt).unwrap();
            let back = load_checkpoint(header).unwrap();
            assert!((back.encoder_b - &model.encoder_b).norm() < 1e-15);
            assert!((back.decoder_a - &model.decoder_a).norm() < 1e-15);
        }
    }
}
