//! Small nonlinear classifier `p → h → h → d` with ReLU, dropout and a
//! unit-normalized code, a shared linear head, and hand-written backward
//! passes for the full-prefix cross-entropy and the monotone ℓ1 penalty.
//!
//! Inputs are standardized per feature with train-split statistics in
//! place of batch normalization.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, SplitIndices};
use crate::error::{Error, Result};
use crate::losses::PrefixWeights;
use crate::metrics::{ProbeConfig, ProbeProfile};
use crate::rng::{derive_seed, gaussian_matrix, rng_from_seed, Rng};
use crate::training::{adam_step, AdamConfig, AdamState, Provenance};

/// Below this the output norm is floored before dividing.
pub const NORM_FLOOR: f64 = 1e-12;

/// Fixed affine map `x ↦ (x - mean) / scale` per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub mean: DVector<f64>,
    pub scale: DVector<f64>,
}

impl InputScaler {
    /// Fits on the columns of `x`. Constant features keep scale 1.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.ncols() as f64;
        let mean: DVector<f64> = x.column_sum() / n;
        let scale = DVector::from_iterator(
            x.nrows(),
            x.row_iter().enumerate().map(|(i, r)| {
                let var = r.iter().map(|v| (v - mean[i]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            }),
        );
        InputScaler { mean, scale }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for mut col in out.column_iter_mut() {
            col -= &self.mean;
            col.component_div_assign(&self.scale);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpEncoder {
    pub w1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub w3: DMatrix<f64>,
    pub b3: DMatrix<f64>,
    pub dropout: f64,
    pub normalize: bool,
}

impl MlpEncoder {
    /// He-normal hidden layers, `N(0, 1/fan_in)` output layer, zero biases.
    pub fn new(p: usize, hidden: (usize, usize), d: usize, dropout: f64, rng: &mut Rng) -> Self {
        let (h1, h2) = hidden;
        MlpEncoder {
            w1: gaussian_matrix(h1, p, rng) * (2.0 / p as f64).sqrt(),
            b1: DMatrix::zeros(h1, 1),
            w2: gaussian_matrix(h2, h1, rng) * (2.0 / h1 as f64).sqrt(),
            b2: DMatrix::zeros(h2, 1),
            w3: gaussian_matrix(d, h2, rng) / (h2 as f64).sqrt(),
            b3: DMatrix::zeros(d, 1),
            dropout,
            normalize: true,
        }
    }

    pub fn p(&self) -> usize {
        self.w1.ncols()
    }

    pub fn d(&self) -> usize {
        self.w3.nrows()
    }

    fn params(&self) -> [&DMatrix<f64>; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    fn params_mut(&mut self) -> [&mut DMatrix<f64>; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }
}

/// `logits = W z + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub w: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearHead {
    pub fn new(n_classes: usize, d: usize, rng: &mut Rng) -> Self {
        LinearHead {
            w: gaussian_matrix(n_classes, d, rng) / (d as f64).sqrt(),
            b: DMatrix::zeros(n_classes, 1),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.w.nrows()
    }

    pub fn bias(&self) -> DVector<f64> {
        self.b.column(0).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout masks drawn from this seed.
    Train(u64),
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub x: DMatrix<f64>,
    /// ReLU indicator times inverted-dropout scale, per hidden layer.
    mask1: DMatrix<f64>,
    h1: DMatrix<f64>,
    mask2: DMatrix<f64>,
    h2: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub norms: Vec<f64>,
    pub z: DMatrix<f64>,
    /// Samples whose output norm hit [`NORM_FLOOR`].
    pub floored: Vec<usize>,
}

fn add_bias(m: &mut DMatrix<f64>, b: &DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        col += b.column(0);
    }
}

fn hidden(pre: DMatrix<f64>, dropout: f64, rng: Option<&mut Rng>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut mask = pre.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    if let Some(rng) = rng {
        if dropout > 0.0 {
            let keep = 1.0 / (1.0 - dropout);
            for m in mask.iter_mut() {
                *m *= if rng.random::<f64>() < dropout { 0.0 } else { keep };
            }
        }
    }
    let h = pre.component_mul(&mask);
    (mask, h)
}

/// Encodes the columns of `x` (already standardized).
pub fn forward(enc: &MlpEncoder, x: &DMatrix<f64>, mode: Mode) -> Forward {
    let mut rng = match mode {
        Mode::Train(seed) => Some(rng_from_seed(seed)),
        Mode::Eval => None,
    };
    let mut a1 = &enc.w1 * x;
    add_bias(&mut a1, &enc.b1);
    let (mask1, h1) = hidden(a1, enc.dropout, rng.as_mut());
    let mut a2 = &enc.w2 * &h1;
    add_bias(&mut a2, &enc.b2);
    let (mask2, h2) = hidden(a2, enc.dropout, rng.as_mut());
    let mut f = &enc.w3 * &h2;
    add_bias(&mut f, &enc.b3);

    let mut z = f.clone();
    let mut norms = vec![1.0; f.ncols()];
    let mut floored = Vec::new();
    if enc.normalize {
        for (j, mut col) in z.column_iter_mut().enumerate() {
            let mut r = col.norm();
            if r < NORM_FLOOR {
                r = NORM_FLOOR;
                floored.push(j);
            }
            col /= r;
            norms[j] = r;
        }
    }
    Forward {
        x: x.clone(),
        mask1,
        h1,
        mask2,
        h2,
        f,
        norms,
        z,
        floored,
    }
}

/// Codes only, evaluation mode.
pub fn encode(enc: &MlpEncoder, x: &DMatrix<f64>) -> DMatrix<f64> {
    forward(enc, x, Mode::Eval).z
}

/// Training objective for the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case")]
pub enum ClassifierLoss {
    /// `Σ_m ω_m CE(W_{:,1:m} z_{1:m} + b)`.
    FpMrl { weights: PrefixWeights },
    /// `CE(W z + b) + (α/n) Σ_k k Σ_s |z_sk|`.
    MdL1 { alpha: f64 },
}

impl ClassifierLoss {
    pub fn id(&self) -> &'static str {
        match self {
            ClassifierLoss::FpMrl { .. } => "fp_mrl",
            ClassifierLoss::MdL1 { .. } => "md_l1",
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            ClassifierLoss::FpMrl { weights } if weights.dim() != d => Err(Error::Config(format!(
                "{} prefix weights for code width {d}",
                weights.dim()
            ))),
            ClassifierLoss::MdL1 { alpha } if !(*alpha > 0.0) => {
                Err(Error::Config(format!("MD-ℓ1 α must be positive, got {alpha}")))
            }
            _ => Ok(()),
        }
    }
}

fn check_labels(z: &DMatrix<f64>, head: &LinearHead, labels: &[usize]) -> Result<()> {
    if labels.len() != z.ncols() || head.w.ncols() != z.nrows() {
        return Err(Error::Shape(format!(
            "{} labels, codes {}x{}, head {}x{}",
            labels.len(),
            z.nrows(),
            z.ncols(),
            head.w.nrows(),
            head.w.ncols()
        )));
    }
    if let Some(&c) = labels.iter().find(|&&c| c >= head.n_classes()) {
        return Err(Error::Consistency(format!("label {c} >= {}", head.n_classes())));
    }
    Ok(())
}

/// In-place softmax of a logit column; returns `log Σ exp`.
fn softmax_col(logits: &mut [f64]) -> f64 {
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - top).exp();
        s += *v;
    }
    for v in logits.iter_mut() {
        *v /= s;
    }
    top + s.ln()
}

/// All `d` prefix logit vectors of one code, accumulated one column of `W`
/// at a time. Entry `m-1` is `W_{:,1:m} z_{1:m} + b`.
pub fn prefix_logits(head: &LinearHead, z: &[f64]) -> Vec<Vec<f64>> {
    let c = head.n_classes();
    let mut cur: Vec<f64> = head.b.iter().copied().collect();
    let mut out = Vec::with_capacity(z.len());
    for (k, &zk) in z.iter().enumerate() {
        for i in 0..c {
            cur[i] += head.w[(i, k)] * zk;
        }
        out.push(cur.clone());
    }
    out
}

/// Gradient of a loss with respect to the codes and the head.
#[derive(Debug, Clone)]
pub struct CodeGradient {
    pub z: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Weighted full-prefix cross-entropy, averaged over samples, and its
/// gradient. With `g_m` the softmax residual of prefix `m`, code `k` and
/// head column `k` see the suffix sum `G_k = Σ_{m≥k} ω_m g_m`.
pub fn fp_mrl_ce(
    z: &DMatrix<f64>,
    head: &LinearHead,
    labels: &[usize],
    weights: &PrefixWeights,
    want_grad: bool,
) -> Result<(f64, Option<CodeGradient>)> {
    check_labels(z, head, labels)?;
    let (d, n) = z.shape();
    if weights.dim() != d {
        return Err(Error::Shape(format!(
            "{} prefix weights for code width {d}",
            weights.dim()
        )));
    }
    let c = head.n_classes();
    let omega = weights.omega();
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| CodeGradient {
        z: DMatrix::zeros(d, n),
        w: DMatrix::zeros(c, d),
        b: DMatrix::zeros(c, 1),
    });
    let mut suffix = vec![0.0; c];
    for s in 0..n {
        let zs: Vec<f64> = z.column(s).iter().copied().collect();
        let mut logits = prefix_logits(head, &zs);
        for (m, l) in logits.iter_mut().enumerate() {
            let lse = softmax_col(l);
            let y_logit = lse + l[labels[s]].ln();
            total += omega[m] * (lse - y_logit);
        }
        if let Some(g) = grad.as_mut() {
            suffix.iter_mut().for_each(|v| *v = 0.0);
            for k in (0..d).rev() {
                let probs = &logits[k];
                for i in 0..c {
                    let r = probs[i] - if i == labels[s] { 1.0 } else { 0.0 };
                    suffix[i] += omega[k] * r * inv_n;
                }
                let mut gz = 0.0;
                for i in 0..c {
                    gz += head.w[(i, k)] * suffix[i];
                    g.w[(i, k)] += suffix[i] * zs[k];
                }
                g.z[(k, s)] = gz;
            }
            for i in 0..c {
                g.b[(i, 0)] += suffix[i];
            }
        }
    }
    Ok((total * inv_n, grad))
}

/// Full-width cross-entropy plus `(α/n) Σ_k k Σ_s |z_sk|`; `sign(0) = 0`
/// in the subgradient. `alpha = 0` gives plain cross-entropy.
pub fn md_l1_ce(
    z: &DMatrix<f64>,
    head: &LinearHead,
    labels: &[usize],
    alpha: f64,
    want_grad: bool,
) -> Result<(f64, Option<CodeGradient>)> {
    check_labels(z, head, labels)?;
    let (d, n) = z.shape();
    let c = head.n_classes();
    let inv_n = 1.0 / n as f64;
    let mut logits = &head.w * z;
    add_bias(&mut logits, &head.b);
    let mut ce = 0.0;
    let mut resid = DMatrix::zeros(c, n);
    for (s, mut col) in logits.column_iter_mut().enumerate() {
        let slice = col.as_mut_slice();
        let y = labels[s];
        let y_raw = slice[y];
        let lse = softmax_col(slice);
        ce += lse - y_raw;
        for i in 0..c {
            resid[(i, s)] = (slice[i] - if i == y { 1.0 } else { 0.0 }) * inv_n;
        }
    }
    let mut penalty = 0.0;
    for (k, row) in z.row_iter().enumerate() {
        penalty += (k + 1) as f64 * row.iter().map(|v| v.abs()).sum::<f64>();
    }
    let value = ce * inv_n + alpha * inv_n * penalty;
    if !want_grad {
        return Ok((value, None));
    }
    let mut gz = head.w.transpose() * &resid;
    for s in 0..n {
        for k in 0..d {
            let v = z[(k, s)];
            let sign = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            };
            gz[(k, s)] += alpha * inv_n * (k + 1) as f64 * sign;
        }
    }
    Ok((
        value,
        Some(CodeGradient {
            z: gz,
            w: &resid * z.transpose(),
            b: DMatrix::from_column_slice(c, 1, resid.column_sum().as_slice()),
        }),
    ))
}

pub fn classifier_loss(
    loss: &ClassifierLoss,
    z: &DMatrix<f64>,
    head: &LinearHead,
    labels: &[usize],
    want_grad: bool,
) -> Result<(f64, Option<CodeGradient>)> {
    match loss {
        ClassifierLoss::FpMrl { weights } => fp_mrl_ce(z, head, labels, weights, want_grad),
        ClassifierLoss::MdL1 { alpha } => md_l1_ce(z, head, labels, *alpha, want_grad),
    }
}

/// Gradients for every encoder and head parameter.
#[derive(Debug, Clone)]
pub struct ClassifierGradient {
    pub w1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub w3: DMatrix<f64>,
    pub b3: DMatrix<f64>,
    pub head_w: DMatrix<f64>,
    pub head_b: DMatrix<f64>,
}

impl ClassifierGradient {
    pub fn as_refs(&self) -> [&DMatrix<f64>; 8] {
        [
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.w3,
            &self.b3,
            &self.head_w,
            &self.head_b,
        ]
    }
}

/// Gradient of the pre-normalization output: `(I - z zᵀ) g / ‖f‖`.
pub fn normalization_backward(fw: &Forward, gz: &DMatrix<f64>) -> DMatrix<f64> {
    let mut gf = gz.clone();
    for (s, mut col) in gf.column_iter_mut().enumerate() {
        let zs = fw.z.column(s);
        let proj = zs.dot(&col);
        col.axpy(-proj, &zs, 1.0);
        col /= fw.norms[s];
    }
    gf
}

/// Loss value and exact gradients through the cached forward pass; dropout
/// acts as the fixed mask stored in `fw`.
pub fn backward(
    enc: &MlpEncoder,
    head: &LinearHead,
    fw: &Forward,
    labels: &[usize],
    loss: &ClassifierLoss,
) -> Result<(f64, ClassifierGradient)> {
    let (value, g) = classifier_loss(loss, &fw.z, head, labels, true)?;
    let g = g.expect("gradient requested");
    let gf = if enc.normalize {
        normalization_backward(fw, &g.z)
    } else {
        g.z.clone()
    };
    let col_sum = |m: &DMatrix<f64>| DMatrix::from_column_slice(m.nrows(), 1, m.column_sum().as_slice());
    let w3 = &gf * fw.h2.transpose();
    let b3 = col_sum(&gf);
    let ga2 = (enc.w3.transpose() * &gf).component_mul(&fw.mask2);
    let w2 = &ga2 * fw.h1.transpose();
    let b2 = col_sum(&ga2);
    let ga1 = (enc.w2.transpose() * &ga2).component_mul(&fw.mask1);
    let w1 = &ga1 * fw.x.transpose();
    let b1 = col_sum(&ga1);
    Ok((
        value,
        ClassifierGradient {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            head_w: g.w,
            head_b: g.b,
        },
    ))
}

/// Settings of the classification protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub d: usize,
    pub hidden: (usize, usize),
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    /// MD-ℓ1 strength for the comparison model.
    pub alpha: f64,
    pub seed: u64,
    pub probe: ProbeConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            d: 16,
            hidden: (256, 256),
            dropout: 0.1,
            batch_size: 128,
            max_epochs: 20,
            patience: 5,
            adam: AdamConfig::default(),
            alpha: 0.01,
            seed: 0,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub loss: ClassifierLoss,
    pub train_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub encoder: MlpEncoder,
    pub head: LinearHead,
    pub scaler: InputScaler,
    pub floored_norms: usize,
}

/// Mini-batch Adam on one classifier objective with validation early
/// stopping; the best checkpoint is returned.
pub fn train_classifier(
    ds: &LabeledDataset,
    split: &SplitIndices,
    loss: &ClassifierLoss,
    cfg: &ClassifierConfig,
) -> Result<ClassifierReport> {
    loss.validate(cfg.d)?;
    if cfg.batch_size == 0 || cfg.patience == 0 || cfg.max_epochs == 0 {
        return Err(Error::Config(
            "batch_size, patience and max_epochs must be positive".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(Error::Config(format!("dropout {} outside [0, 1)", cfg.dropout)));
    }
    if split.train.is_empty() {
        return Err(Error::EmptyDataset("train split is empty".into()));
    }
    let (x_tr_raw, y_tr) = ds.subset(&split.train);
    let scaler = InputScaler::fit(&x_tr_raw);
    let x_tr = scaler.apply(&x_tr_raw);
    let (x_val, y_val) = if split.val.is_empty() {
        (x_tr.clone(), y_tr.clone())
    } else {
        let (x, y) = ds.subset(&split.val);
        (scaler.apply(&x), y)
    };

    let mut rng = rng_from_seed(derive_seed(cfg.seed, 0xC1F));
    let mut enc = MlpEncoder::new(ds.p(), cfg.hidden, cfg.d, cfg.dropout, &mut rng);
    let mut head = LinearHead::new(ds.n_classes, cfg.d, &mut rng);
    let shapes: Vec<(usize, usize)> = enc
        .params()
        .iter()
        .map(|m| m.shape())
        .chain([head.w.shape(), head.b.shape()])
        .collect();
    let mut adam = AdamState::new(cfg.adam, &shapes);

    let mut report = ClassifierReport {
        loss: loss.clone(),
        train_curve: Vec::new(),
        val_curve: Vec::new(),
        epoch_seconds: Vec::new(),
        best_epoch: 0,
        best_val: f64::INFINITY,
        encoder: enc.clone(),
        head: head.clone(),
        scaler: scaler.clone(),
        floored_norms: 0,
    };
    let n = x_tr.ncols();
    let mut order: Vec<usize> = (0..n).collect();
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let mut shuffle_rng = rng_from_seed(derive_seed(cfg.seed, epoch as u64));
        order.shuffle(&mut shuffle_rng);
        let (mut run_loss, mut seen) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x_tr.select_columns(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y_tr[i]).collect();
            let mask_seed = derive_seed(cfg.seed, ((epoch as u64) << 32) | bi as u64);
            let fw = forward(&enc, &xb, Mode::Train(mask_seed));
            report.floored_norms += fw.floored.len();
            let (value, g) = backward(&enc, &head, &fw, &yb, loss)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteGradient {
                    epoch,
                    batch: bi,
                    loss: value,
                });
            }
            run_loss += value * chunk.len() as f64;
            seen += chunk.len();
            let [w1, b1, w2, b2, w3, b3] = enc.params_mut();
            let mut params = [w1, b1, w2, b2, w3, b3, &mut head.w, &mut head.b];
            if adam_step(&mut adam, &mut params, &g.as_refs()).is_err() {
                return Err(Error::NonFiniteGradient {
                    epoch,
                    batch: bi,
                    loss: value,
                });
            }
        }
        let (val, _) = classifier_loss(loss, &encode(&enc, &x_val), &head, &y_val, false)?;
        report.train_curve.push(run_loss / seen as f64);
        report.val_curve.push(val);
        report.epoch_seconds.push(start.elapsed().as_secs_f64());
        if val < report.best_val {
            report.best_val = val;
            report.best_epoch = epoch;
            report.encoder = enc.clone();
            report.head = head.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
        log::debug!("{} epoch {epoch}: val {val:.5}", loss.id());
    }
    Ok(report)
}

/// Probe profile of a trained classifier on the train and test splits.
pub fn evaluate_classifier(
    report: &ClassifierReport,
    ds: &LabeledDataset,
    split: &SplitIndices,
    probe: &ProbeConfig,
) -> Result<ProbeProfile> {
    let test_idx = if split.test.is_empty() {
        &split.train
    } else {
        &split.test
    };
    let (x_tr, y_tr) = ds.subset(&split.train);
    let (x_te, y_te) = ds.subset(test_idx);
    let z_tr = encode(&report.encoder, &report.scaler.apply(&x_tr));
    let z_te = encode(&report.encoder, &report.scaler.apply(&x_te));
    ProbeProfile::compute(
        &z_tr,
        &y_tr,
        &z_te,
        &y_te,
        &report.head.w,
        &report.head.bias(),
        ds.n_classes,
        probe,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fig2Result {
    pub fp_mrl: ProbeProfile,
    pub md_l1: ProbeProfile,
    pub fp_mrl_report: ClassifierReport,
    pub md_l1_report: ClassifierReport,
}

/// Trains the full-prefix and monotone-ℓ1 classifiers on the same backbone
/// and data, then profiles both.
pub fn run_fig2_protocol(ds: &LabeledDataset, split: &SplitIndices, cfg: &ClassifierConfig) -> Result<Fig2Result> {
    let fp = ClassifierLoss::FpMrl {
        weights: PrefixWeights::uniform(cfg.d),
    };
    let md = ClassifierLoss::MdL1 { alpha: cfg.alpha };
    let probe = ProbeConfig {
        seed: derive_seed(cfg.seed, 0x9B0),
        ..cfg.probe
    };
    let (fp_report, md_report) = rayon::join(
        || train_classifier(ds, split, &fp, cfg),
        || train_classifier(ds, split, &md, cfg),
    );
    let (fp_report, md_report) = (fp_report?, md_report?);
    Ok(Fig2Result {
        fp_mrl: evaluate_classifier(&fp_report, ds, split, &probe)?,
        md_l1: evaluate_classifier(&md_report, ds, split, &probe)?,
        fp_mrl_report: fp_report,
        md_l1_report: md_report,
    })
}

/// JSON header of a classifier checkpoint. The single binary file holds
/// every matrix in `shapes` order as little-endian column-major `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierCheckpointHeader {
    pub loss: String,
    pub dropout: f64,
    pub normalize: bool,
    /// `w1 b1 w2 b2 w3 b3 head_w head_b scaler_mean scaler_scale`.
    pub shapes: Vec<(usize, usize)>,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// A trained classifier as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierCheckpoint {
    pub encoder: MlpEncoder,
    pub head: LinearHead,
    pub scaler: InputScaler,
}

/// Writes `<stem>.json` and `<stem>.bin`; returns the header path.
pub fn save_classifier(
    report: &ClassifierReport,
    stem: impl AsRef<Path>,
    provenance: Option<Provenance>,
) -> Result<PathBuf> {
    let stem = stem.as_ref();
    let name = stem
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("bad checkpoint path {}", stem.display())))?;
    let dir = stem.parent().unwrap_or(Path::new("."));
    let mean = DMatrix::from_column_slice(report.scaler.mean.len(), 1, report.scaler.mean.as_slice());
    let scale = DMatrix::from_column_slice(report.scaler.scale.len(), 1, report.scaler.scale.as_slice());
    let mats: Vec<&DMatrix<f64>> = report
        .encoder
        .params()
        .into_iter()
        .chain([&report.head.w, &report.head.b, &mean, &scale])
        .collect();
    let mut bytes = Vec::new();
    for v in mats.iter().flat_map(|m| m.iter()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let file = format!("{name}.bin");
    let bin = dir.join(&file);
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let header = ClassifierCheckpointHeader {
        loss: report.loss.id().to_string(),
        dropout: report.encoder.dropout,
        normalize: report.encoder.normalize,
        shapes: mats.iter().map(|m| m.shape()).collect(),
        file,
        provenance,
    };
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_classifier(header_path: impl AsRef<Path>) -> Result<ClassifierCheckpoint> {
    let header_path = header_path.as_ref();
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let h: ClassifierCheckpointHeader = serde_json::from_str(&text)?;
    if h.shapes.len() != 10 {
        return Err(Error::Format(format!(
            "expected 10 matrices, header lists {}",
            h.shapes.len()
        )));
    }
    let bin = header_path.parent().unwrap_or(Path::new(".")).join(&h.file);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let total: usize = h.shapes.iter().map(|(r, c)| r * c).sum();
    if bytes.len() != 8 * total {
        return Err(Error::Format(format!(
            "{} holds {} bytes, expected {}",
            bin.display(),
            bytes.len(),
            8 * total
        )));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut at = 0;
    let mut mats = h.shapes.iter().map(|&(r, c)| {
        let m = DMatrix::from_column_slice(r, c, &vals[at..at + r * c]);
        at += r * c;
        m
    });
    let mut next = || mats.next().expect("ten shapes checked above");
    let encoder = MlpEncoder {
        w1: next(),
        b1: next(),
        w2: next(),
        b2: next(),
        w3: next(),
        b3: next(),
        dropout: h.dropout,
        normalize: h.normalize,
    };
    let head = LinearHead { w: next(), b: next() };
    let scaler = InputScaler {
        mean: next().column(0).into_owned(),
        scale: next().column(0).into_owned(),
    };
    if encoder.w1.ncols() != scaler.mean.len() || head.w.ncols() != encoder.w3.nrows() {
        return Err(Error::Format("checkpoint matrices have inconsistent shapes".into()));
    }
    Ok(ClassifierCheckpoint { encoder, head, scaler })
}
