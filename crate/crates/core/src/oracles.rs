//! Exact reference bases: PCA by singular value decomposition, LDA by the
//! symmetric reduction of the generalized eigenproblem, class scatter
//! matrices, and the full-prefix reconstruction lower bound.

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{fix_signs, sym_eigen_desc};
use crate::losses::PrefixWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    Pca,
    Lda,
}

/// Ordered unit directions (columns) with their eigenvalues (PCA) or
/// Fisher ratios (LDA), nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBasis {
    pub directions: DMatrix<f64>,
    pub values: Vec<f64>,
    pub kind: BasisKind,
}

impl ReferenceBasis {
    pub fn dim(&self) -> usize {
        self.directions.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.directions.nrows()
    }

    /// Leading `k` directions.
    pub fn leading(&self, k: usize) -> ReferenceBasis {
        ReferenceBasis {
            directions: self.directions.columns(0, k).into_owned(),
            values: self.values[..k].to_vec(),
            kind: self.kind,
        }
    }

    /// Values divided by the largest one (used when plotting spectra next
    /// to alignment profiles).
    pub fn normalized_values(&self) -> Vec<f64> {
        let top = self.values.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return vec![0.0; self.values.len()];
        }
        self.values.iter().map(|v| v / top).collect()
    }

    /// CSV with the values as the header row followed by one row per
    /// ambient coordinate (so each column is one direction).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.values.iter().map(|v| v.to_string()))?;
        for row in self.directions.row_iter() {
            wr.write_record(row.iter().map(|v| v.to_string()))?;
        }
        wr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, kind: BasisKind) -> Result<ReferenceBasis> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    c.trim().parse::<f64>().map_err(|_| Error::Parse {
                        row: i,
                        column: j,
                        message: format!("{c:?} is not a number"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let Some((values, body)) = rows.split_first() else {
            return Err(Error::EmptyDataset("basis CSV is empty".into()));
        };
        let d = values.len();
        let p = body.len();
        let directions = DMatrix::from_row_iterator(p, d, body.iter().flatten().copied());
        Ok(ReferenceBasis {
            directions,
            values: values.clone(),
            kind,
        })
    }
}

/// PCA output: the basis, the full spectrum of `X Xᵀ` (length `p`, zero
/// padded), and whether fewer than the requested directions were available.
#[derive(Debug, Clone)]
pub struct Pca {
    pub basis: ReferenceBasis,
    pub spectrum: Vec<f64>,
    pub rank_warning: bool,
}

/// Top-`d` eigenpairs of `Σ = X Xᵀ` (no `1/n`), from the SVD of `X`.
pub fn pca(x: &DMatrix<f64>, d: usize) -> Result<Pca> {
    let (p, n) = x.shape();
    if d == 0 || d > p.min(n) {
        return Err(Error::Validation(format!(
            "pca dimension {d} must lie in [1, min(p, n) = {}]",
            p.min(n)
        )));
    }
    let svd = SVD::new(x.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let tol = p.max(n) as f64 * f64::EPSILON * smax;
    let rank = s.iter().filter(|&&v| v > tol && v > 0.0).count();
    let keep = d.min(rank);

    let mut spectrum: Vec<f64> = s.iter().map(|v| v * v).collect();
    spectrum.resize(p, 0.0);

    let mut directions = u.select_columns(&order[..keep]);
    fix_signs(&mut directions);
    Ok(Pca {
        basis: ReferenceBasis {
            directions,
            values: spectrum[..keep].to_vec(),
            kind: BasisKind::Pca,
        },
        spectrum,
        rank_warning: keep < d,
    })
}

/// Between-class and within-class scatter, both `1/n` weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub s_bc: DMatrix<f64>,
    pub s_wc: DMatrix<f64>,
}

impl ScatterPair {
    /// Number of eigenvalues of `s_bc` above `rel_tol` times the largest.
    pub fn between_rank(&self, rel_tol: f64) -> usize {
        let (v, _) = sym_eigen_desc(&self.s_bc);
        let top = v.iter().copied().fold(0.0, f64::max);
        if top <= 0.0 {
            return 0;
        }
        v.iter().filter(|&&e| e > rel_tol * top).count()
    }
}

pub fn scatter_matrices(ds: &LabeledDataset) -> Result<ScatterPair> {
    scatter_of(ds.data.values(), &ds.labels, ds.n_classes)
}

/// Scatter matrices of the columns of `x` with the given labels. Classes
/// with no members in `x` contribute nothing.
pub fn scatter_of(x: &DMatrix<f64>, labels: &[usize], n_classes: usize) -> Result<ScatterPair> {
    let (p, n) = x.shape();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} columns", labels.len())));
    }
    if n == 0 {
        return Err(Error::EmptyDataset("scatter of zero samples".into()));
    }
    let mut sums = DMatrix::zeros(p, n_classes);
    let mut counts = vec![0usize; n_classes];
    for (j, &c) in labels.iter().enumerate() {
        if c >= n_classes {
            return Err(Error::Consistency(format!("label {c} >= {n_classes}")));
        }
        sums.column_mut(c).axpy(1.0, &x.column(j), 1.0);
        counts[c] += 1;
    }
    let mu: DVector<f64> = x.column_sum() / n as f64;
    let mut means = sums;
    for (c, &k) in counts.iter().enumerate() {
        if k > 0 {
            means.column_mut(c).scale_mut(1.0 / k as f64);
        }
    }

    let mut dev = x.clone();
    for (j, &c) in labels.iter().enumerate() {
        dev.column_mut(j).axpy(-1.0, &means.column(c), 1.0);
    }
    let s_wc = (&dev * dev.transpose()) / n as f64;

    let mut between = DMatrix::zeros(p, n_classes);
    for (c, &k) in counts.iter().enumerate() {
        if k > 0 {
            let w = (k as f64 / n as f64).sqrt();
            between.set_column(c, &((means.column(c) - &mu) * w));
        }
    }
    let s_bc = &between * between.transpose();
    Ok(ScatterPair { s_bc, s_wc })
}

pub fn lda(ds: &LabeledDataset, d: usize, eps: f64) -> Result<ReferenceBasis> {
    lda_from_scatter(&scatter_matrices(ds)?, d, eps)
}

/// Top-`d` solutions of `S_bc v = γ (S_wc + eps I) v`: Cholesky
/// `S_wc + eps I = L Lᵀ`, eigendecomposition of `L⁻¹ S_bc L⁻ᵀ`, then
/// `v = L⁻ᵀ u` normalized to unit length.
pub fn lda_from_scatter(sc: &ScatterPair, d: usize, eps: f64) -> Result<ReferenceBasis> {
    let p = sc.s_wc.nrows();
    if d == 0 || d > p {
        return Err(Error::Validation(format!("lda dimension {d} outside [1, {p}]")));
    }
    let reg = &sc.s_wc + DMatrix::identity(p, p) * eps;
    let chol = Cholesky::<f64, Dyn>::new(reg)
        .ok_or_else(|| Error::Stabilizer(format!("S_wc + {eps:e} I is not positive definite")))?;
    let l = chol.l();
    let left = l
        .solve_lower_triangular(&sc.s_bc)
        .ok_or_else(|| Error::Stabilizer("singular Cholesky factor".into()))?;
    // (L⁻¹ S_bc) L⁻ᵀ = (L⁻¹ (L⁻¹ S_bc)ᵀ)ᵀ
    let reduced = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Stabilizer("singular Cholesky factor".into()))?
        .transpose();
    let (gamma, u) = sym_eigen_desc(&reduced);
    let u = u.columns(0, d).into_owned();
    let mut v = l
        .transpose()
        .solve_upper_triangular(&u)
        .ok_or_else(|| Error::Stabilizer("singular Cholesky factor".into()))?;
    crate::linalg::normalize_columns(&mut v);
    fix_signs(&mut v);
    Ok(ReferenceBasis {
        directions: v,
        values: gamma.iter().take(d).map(|g| g.max(0.0)).collect(),
        kind: BasisKind::Lda,
    })
}

/// `Σ_m ω_m Σ_{k>m} σ_k²`, the sum of per-prefix Eckart–Young floors. With
/// unit weights this is `Σ_{k=2}^{d} (k-1) σ_k² + d Σ_{k>d} σ_k²`.
pub fn fp_mrl_lower_bound(eigenvalues: &[f64], d: usize, weights: &PrefixWeights) -> Result<f64> {
    if eigenvalues.len() < d {
        return Err(Error::Validation(format!(
            "need at least {d} eigenvalues, got {}",
            eigenvalues.len()
        )));
    }
    if weights.dim() != d {
        return Err(Error::Validation(format!(
            "weights have dimension {}, expected {d}",
            weights.dim()
        )));
    }
    if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Validation("eigenvalues must be nonincreasing".into()));
    }
    // tail[m] = Σ_{k > m} σ_k² with 1-based m
    let mut tail = vec![0.0; eigenvalues.len() + 1];
    for k in (0..eigenvalues.len()).rev() {
        tail[k] = tail[k + 1] + eigenvalues[k];
    }
    Ok(weights.omega().iter().enumerate().map(|(i, w)| w * tail[i + 1]).sum())
}
