//! Alignment diagnostics (paired cosine, max cosine, mean principal angle)
//! and per-coordinate informativeness (1-D probes, prefix accuracy, rank
//! correlation).

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{deficient_columns, thin_qr};
use crate::rng::{derive_seed, rng_from_seed};

/// Unit-normalized copies of the columns; zero columns stay zero and are
/// reported.
fn unit_columns(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let mut out = m.clone();
    let zero = crate::linalg::normalize_columns(&mut out);
    (out, zero)
}

fn check_pair(learned: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<()> {
    if learned.shape() != reference.shape() {
        return Err(Error::Shape(format!(
            "learned directions are {}x{}, reference is {}x{}",
            learned.nrows(),
            learned.ncols(),
            reference.nrows(),
            reference.ncols()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineProfile {
    pub values: Vec<f64>,
    /// Learned directions with zero norm (their values are 0).
    pub zero_norm: Vec<usize>,
}

/// `|⟨q_k, e_k⟩|` with both sides unit-normalized. Directions are columns.
pub fn paired_cos(learned: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<CosineProfile> {
    check_pair(learned, reference)?;
    let (q, zero_norm) = unit_columns(learned);
    let (e, _) = unit_columns(reference);
    let values = (0..q.ncols()).map(|k| q.column(k).dot(&e.column(k)).abs()).collect();
    Ok(CosineProfile { values, zero_norm })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxCosProfile {
    pub values: Vec<f64>,
    /// Reference index attaining each maximum (smallest on ties).
    pub argmax: Vec<usize>,
    pub zero_norm: Vec<usize>,
}

/// `max_j |⟨q_k, e_j⟩|`.
pub fn max_cos(learned: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<MaxCosProfile> {
    check_pair(learned, reference)?;
    let (q, zero_norm) = unit_columns(learned);
    let (e, _) = unit_columns(reference);
    let g = q.transpose() * e;
    let mut values = Vec::with_capacity(g.nrows());
    let mut argmax = Vec::with_capacity(g.nrows());
    for row in g.row_iter() {
        let mut best = 0;
        for j in 1..row.len() {
            if row[j].abs() > row[best].abs() {
                best = j;
            }
        }
        values.push(row[best].abs());
        argmax.push(best);
    }
    Ok(MaxCosProfile {
        values,
        argmax,
        zero_norm,
    })
}

/// Mean principal angle in degrees between the spans of the leading `k`
/// columns of each side. Both blocks are orthonormalized first.
pub fn mean_principal_angle(learned: &DMatrix<f64>, reference: &DMatrix<f64>, k: usize) -> Result<f64> {
    if k == 0 || k > learned.ncols() || k > reference.ncols() || learned.nrows() != reference.nrows() {
        return Err(Error::Shape(format!(
            "k = {k} for blocks {}x{} and {}x{}",
            learned.nrows(),
            learned.ncols(),
            reference.nrows(),
            reference.ncols()
        )));
    }
    let orth = |m: DMatrix<f64>, what: &str| -> Result<DMatrix<f64>> {
        let (q, r) = thin_qr(&m);
        let bad = deficient_columns(&r, 1e-10);
        if bad.is_empty() {
            Ok(q)
        } else {
            Err(Error::RankDeficient(format!(
                "{what} block is rank deficient at columns {bad:?}"
            )))
        }
    };
    let q = orth(learned.columns(0, k).into_owned(), "learned")?;
    let e = orth(reference.columns(0, k).into_owned(), "reference")?;
    let sv = (q.transpose() * e).singular_values();
    let total: f64 = sv.iter().map(|s| s.clamp(-1.0, 1.0).acos()).sum();
    Ok(total.to_degrees() / k as f64)
}

/// Per-k alignment of learned directions with a reference basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentProfile {
    pub paired_cos: Vec<f64>,
    pub max_cos: Vec<f64>,
    pub max_cos_index: Vec<usize>,
    pub mean_angle_deg: Vec<f64>,
    pub zero_norm: Vec<usize>,
}

impl AlignmentProfile {
    pub fn compute(learned: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<Self> {
        let pc = paired_cos(learned, reference)?;
        let mc = max_cos(learned, reference)?;
        let mean_angle_deg = (1..=learned.ncols())
            .map(|k| mean_principal_angle(learned, reference, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(AlignmentProfile {
            paired_cos: pc.values,
            max_cos: mc.values,
            max_cos_index: mc.argmax,
            mean_angle_deg,
            zero_norm: pc.zero_norm,
        })
    }

    pub fn d(&self) -> usize {
        self.paired_cos.len()
    }

    /// One row per k.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "paired_cos", "max_cos", "max_cos_index", "mean_angle_deg"])?;
        for k in 0..self.d() {
            wr.write_record([
                (k + 1).to_string(),
                self.paired_cos[k].to_string(),
                self.max_cos[k].to_string(),
                (self.max_cos_index[k] + 1).to_string(),
                self.mean_angle_deg[k].to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// One side was constant; `rho` is reported as 0.
    pub degenerate: bool,
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<Spearman> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Validation(format!(
            "spearman needs two equal-length inputs of length ≥ 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(Spearman {
            rho: 0.0,
            degenerate: true,
        });
    }
    Ok(Spearman {
        rho: (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Settings for the per-coordinate logistic probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step: f64,
    pub train_cap: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            max_iter: 1000,
            grad_tol: 1e-6,
            step: 1.0,
            train_cap: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub converged: bool,
    /// Constant training feature; the majority class was predicted.
    pub degenerate: bool,
}

/// Stratified subsample of at most `cap` indices, proportional per class
/// (largest remainder).
pub fn stratified_cap(labels: &[usize], n_classes: usize, cap: usize, seed: u64) -> Vec<usize> {
    if labels.len() <= cap {
        return (0..labels.len()).collect();
    }
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let total = labels.len() as f64;
    let quotas: Vec<f64> = sizes.iter().map(|&s| s as f64 * cap as f64 / total).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
    let short = cap - take.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        take[c] += 1;
    }
    let mut out = Vec::with_capacity(cap);
    for (c, mut members) in by_class.into_iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, c as u64));
        members.shuffle(&mut rng);
        out.extend_from_slice(&members[..take[c].min(members.len())]);
    }
    out.sort_unstable();
    out
}

fn majority(labels: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &c in labels {
        counts[c] += 1;
    }
    (0..n_classes)
        .max_by_key(|&c| (counts[c], std::cmp::Reverse(c)))
        .unwrap_or(0)
}

/// Multinomial logistic regression on one scalar feature (a weight and a
/// bias per class), fit by full-batch gradient descent on the mean
/// cross-entropy, scored by top-1 accuracy on the test values.
pub fn probe_1d(
    train_z: &[f64],
    train_labels: &[usize],
    test_z: &[f64],
    test_labels: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    if n_classes < 2 {
        return Err(Error::Validation("probe needs at least two classes".into()));
    }
    if train_z.len() != train_labels.len() || test_z.len() != test_labels.len() || train_z.is_empty() {
        return Err(Error::Shape("probe inputs and labels disagree in length".into()));
    }
    if let Some(&c) = train_labels.iter().chain(test_labels).find(|&&c| c >= n_classes) {
        return Err(Error::Consistency(format!("label {c} >= {n_classes}")));
    }
    let keep = stratified_cap(train_labels, n_classes, cfg.train_cap, cfg.seed);
    let z: Vec<f64> = keep.iter().map(|&i| train_z[i]).collect();
    let y: Vec<usize> = keep.iter().map(|&i| train_labels[i]).collect();
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let score = |pred: &dyn Fn(f64) -> usize| {
        let hits = test_z.iter().zip(test_labels).filter(|(&v, &c)| pred(v) == c).count();
        if test_z.is_empty() {
            0.0
        } else {
            hits as f64 / test_z.len() as f64
        }
    };
    if !(sd > 1e-12 * (1.0 + mean.abs())) {
        let m = majority(&y, n_classes);
        return Ok(ProbeResult {
            accuracy: score(&|_| m),
            converged: true,
            degenerate: true,
        });
    }
    // the model class is affine in the feature, so standardizing only
    // rescales the parameters and keeps gradient descent well conditioned
    let u: Vec<f64> = z.iter().map(|v| (v - mean) / sd).collect();
    let (mut w, mut b) = (vec![0.0; n_classes], vec![0.0; n_classes]);
    let mut probs = vec![0.0; n_classes];
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let (mut gw, mut gb) = (vec![0.0; n_classes], vec![0.0; n_classes]);
        for (&ui, &yi) in u.iter().zip(&y) {
            softmax_into(ui, &w, &b, &mut probs);
            for c in 0..n_classes {
                let r = probs[c] - if c == yi { 1.0 } else { 0.0 };
                gw[c] += r * ui;
                gb[c] += r;
            }
        }
        let mut norm2 = 0.0;
        for c in 0..n_classes {
            gw[c] /= n;
            gb[c] /= n;
            norm2 += gw[c] * gw[c] + gb[c] * gb[c];
        }
        if norm2.sqrt() < cfg.grad_tol {
            converged = true;
            break;
        }
        for c in 0..n_classes {
            w[c] -= cfg.step * gw[c];
            b[c] -= cfg.step * gb[c];
        }
    }
    let predict = |v: f64| {
        let ui = (v - mean) / sd;
        (0..n_classes)
            .map(|c| w[c] * ui + b[c])
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (c, s)| if s > best.1 { (c, s) } else { best },
            )
            .0
    };
    Ok(ProbeResult {
        accuracy: score(&predict),
        converged,
        degenerate: false,
    })
}

fn softmax_into(u: f64, w: &[f64], b: &[f64], out: &mut [f64]) {
    let mut top = f64::NEG_INFINITY;
    for c in 0..w.len() {
        out[c] = w[c] * u + b[c];
        top = top.max(out[c]);
    }
    let mut s = 0.0;
    for v in out.iter_mut() {
        *v = (*v - top).exp();
        s += *v;
    }
    for v in out.iter_mut() {
        *v /= s;
    }
}

/// Top-1 accuracy of `W_{:,1:k} z_{1:k} + b` on the columns of `z` (d×n).
pub fn prefix_linear_accuracy(
    z: &DMatrix<f64>,
    labels: &[usize],
    head_w: &DMatrix<f64>,
    head_b: &DVector<f64>,
    k: usize,
) -> Result<f64> {
    if k == 0 || k > z.nrows() || head_w.ncols() != z.nrows() || head_b.len() != head_w.nrows() {
        return Err(Error::Shape(format!(
            "prefix {k} with codes {}x{}, head {}x{}",
            z.nrows(),
            z.ncols(),
            head_w.nrows(),
            head_w.ncols()
        )));
    }
    if labels.len() != z.ncols() {
        return Err(Error::Shape(format!("{} labels for {} codes", labels.len(), z.ncols())));
    }
    let mut logits = head_w.columns(0, k) * z.rows(0, k);
    for mut col in logits.column_iter_mut() {
        col += head_b;
    }
    let hits = logits
        .column_iter()
        .zip(labels)
        .filter(|(col, &c)| col.imax() == c)
        .count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}

/// Per-coordinate statistics of a trained classifier's codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeProfile {
    pub mean_abs: Vec<f64>,
    pub variance: Vec<f64>,
    pub probe_accuracy: Vec<f64>,
    pub prefix_accuracy: Vec<f64>,
    /// Spearman correlation between `mean_abs` and `probe_accuracy`.
    pub rho: f64,
    pub rho_degenerate: bool,
}

impl ProbeProfile {
    /// Codes are `d×n` matrices. Magnitude statistics use the test codes.
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        z_train: &DMatrix<f64>,
        y_train: &[usize],
        z_test: &DMatrix<f64>,
        y_test: &[usize],
        head_w: &DMatrix<f64>,
        head_b: &DVector<f64>,
        n_classes: usize,
        cfg: &ProbeConfig,
    ) -> Result<Self> {
        let d = z_test.nrows();
        if z_train.nrows() != d {
            return Err(Error::Shape("train and test codes differ in width".into()));
        }
        let n = z_test.ncols() as f64;
        let mean_abs: Vec<f64> = z_test
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>() / n)
            .collect();
        let variance: Vec<f64> = z_test
            .row_iter()
            .map(|r| {
                let m = r.sum() / n;
                r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
            })
            .collect();
        let probe_accuracy = (0..d)
            .into_par_iter()
            .map(|k| {
                let tr: Vec<f64> = z_train.row(k).iter().copied().collect();
                let te: Vec<f64> = z_test.row(k).iter().copied().collect();
                probe_1d(&tr, y_train, &te, y_test, n_classes, cfg).map(|r| r.accuracy)
            })
            .collect::<Result<Vec<_>>>()?;
        let prefix_accuracy = (1..=d)
            .map(|k| prefix_linear_accuracy(z_test, y_test, head_w, head_b, k))
            .collect::<Result<Vec<_>>>()?;
        let sp = spearman_rho(&mean_abs, &probe_accuracy)?;
        Ok(ProbeProfile {
            mean_abs,
            variance,
            probe_accuracy,
            prefix_accuracy,
            rho: sp.rho,
            rho_degenerate: sp.degenerate,
        })
    }

    /// One row per k.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "mean_abs", "variance", "probe_accuracy", "prefix_accuracy"])?;
        for k in 0..self.mean_abs.len() {
            wr.write_record([
                (k + 1).to_string(),
                self.mean_abs[k].to_string(),
                self.variance[k].to_string(),
                self.probe_accuracy[k].to_string(),
                self.prefix_accuracy[k].to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))
    }
}
