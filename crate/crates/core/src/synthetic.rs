//! Two-block synthetic data whose leading PCA and LDA subspaces are
//! orthogonal by construction.
//!
//! Features `0..p_noise` are class-independent Gaussian noise with variance
//! `τ_noise² ρ_noise^{2i}`. Features `p_noise..p` form the signal block: the
//! class-`c` mean is row `c` of `H diag(β)` with `β_i = β_0 ρ_sig^i` and `H`
//! orthonormal and orthogonal to the all-ones vector, plus isotropic
//! `N(0, τ_sig²)` spread.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::thin_qr;
use crate::oracles::{BasisKind, ReferenceBasis};
use crate::rng::{derive_seed, gaussian_matrix, normal, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub p_noise: usize,
    pub p_sig: usize,
    pub tau_noise: f64,
    pub tau_sig: f64,
    pub rho_noise: f64,
    pub rho_sig: f64,
    pub beta0: f64,
    pub samples_per_class: usize,
    /// Per-class sample counts overriding `samples_per_class`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_counts: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 20,
            p_noise: 50,
            p_sig: 19,
            tau_noise: 5.0,
            tau_sig: 0.1,
            rho_noise: 0.9,
            rho_sig: 0.7,
            beta0: 1.0,
            samples_per_class: 500,
            class_counts: None,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Small variant with `p_sig = C - 1`, other parameters at their defaults.
    pub fn small(n_classes: usize, samples_per_class: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_classes,
            p_sig: n_classes.saturating_sub(1),
            samples_per_class,
            seed,
            ..SyntheticSpec::default()
        }
    }

    pub fn p(&self) -> usize {
        self.p_noise + self.p_sig
    }

    pub fn counts(&self) -> Vec<usize> {
        self.class_counts
            .clone()
            .unwrap_or_else(|| vec![self.samples_per_class; self.n_classes])
    }

    pub fn n(&self) -> usize {
        self.counts().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Construction(format!(
                "need at least two classes, got {}",
                self.n_classes
            )));
        }
        if self.p_sig + 1 > self.n_classes {
            return Err(Error::Construction(format!(
                "p_sig = {} exceeds C - 1 = {}; class means cannot be orthogonal to the all-ones vector",
                self.p_sig,
                self.n_classes - 1
            )));
        }
        if self.p() == 0 {
            return Err(Error::Construction("no features requested".into()));
        }
        for (name, v) in [
            ("tau_noise", self.tau_noise),
            ("tau_sig", self.tau_sig),
            ("beta0", self.beta0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Construction(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("rho_noise", self.rho_noise), ("rho_sig", self.rho_sig)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Construction(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        let counts = self.counts();
        if counts.len() != self.n_classes {
            return Err(Error::Construction(format!(
                "{} class counts for {} classes",
                counts.len(),
                self.n_classes
            )));
        }
        if counts.contains(&0) {
            return Err(Error::Construction("every class needs at least one sample".into()));
        }
        Ok(())
    }

    /// `τ_noise² ρ_noise^{2i}`.
    pub fn noise_variances(&self) -> Vec<f64> {
        (0..self.p_noise)
            .map(|i| self.tau_noise.powi(2) * self.rho_noise.powi(2 * i as i32))
            .collect()
    }

    /// `β_i = β_0 ρ_sig^i`.
    pub fn betas(&self) -> Vec<f64> {
        (0..self.p_sig)
            .map(|i| self.beta0 * self.rho_sig.powi(i as i32))
            .collect()
    }
}

/// Population quantities of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    /// Noise-block variances, nonincreasing.
    pub noise_variances: Vec<f64>,
    /// Population between-class scatter of the signal block; `β_i²/C`
    /// under uniform priors.
    pub signal_between: Vec<f64>,
    /// Total population variance of every feature.
    pub feature_variances: Vec<f64>,
    /// Noise-block indices by decreasing variance, then signal-block
    /// indices by decreasing total variance.
    pub pca_axes: Vec<usize>,
    /// Signal-block feature indices in decreasing Fisher ratio.
    pub lda_axes: Vec<usize>,
    /// `C × p_sig` class-mean matrix of the signal block.
    pub class_means: DMatrix<f64>,
}

impl SyntheticTruth {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// `C × p_sig` orthonormal columns orthogonal to `1_C`, from the QR of a
/// projected Gaussian.
fn class_mean_frame(spec: &SyntheticSpec) -> DMatrix<f64> {
    let c = spec.n_classes;
    let mut rng = rng_from_seed(derive_seed(spec.seed, 0xC1A55));
    let mut g = gaussian_matrix(c, spec.p_sig, &mut rng);
    for mut col in g.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let (mut h, _) = thin_qr(&g);
    // strip the rounding-level component along 1_C left by QR
    for mut col in h.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let n = col.norm();
        col /= n;
    }
    h
}

fn population(spec: &SyntheticSpec, means: &DMatrix<f64>) -> SyntheticTruth {
    let counts = spec.counts();
    let n = counts.iter().sum::<usize>() as f64;
    let priors: Vec<f64> = counts.iter().map(|&k| k as f64 / n).collect();
    let mut signal_between = Vec::with_capacity(spec.p_sig);
    for i in 0..spec.p_sig {
        let mu: f64 = (0..spec.n_classes).map(|c| priors[c] * means[(c, i)]).sum();
        let s: f64 = (0..spec.n_classes)
            .map(|c| priors[c] * (means[(c, i)] - mu).powi(2))
            .sum();
        signal_between.push(s);
    }
    let noise_variances = spec.noise_variances();
    let mut feature_variances = noise_variances.clone();
    feature_variances.extend(signal_between.iter().map(|b| b + spec.tau_sig.powi(2)));

    let by_variance = |mut axes: Vec<usize>| {
        axes.sort_by(|&a, &b| feature_variances[b].total_cmp(&feature_variances[a]).then(a.cmp(&b)));
        axes
    };
    let mut pca_axes = by_variance((0..spec.p_noise).collect());
    pca_axes.extend(by_variance((spec.p_noise..spec.p()).collect()));
    let mut lda_order: Vec<usize> = (0..spec.p_sig).collect();
    lda_order.sort_by(|&a, &b| signal_between[b].total_cmp(&signal_between[a]).then(a.cmp(&b)));
    SyntheticTruth {
        noise_variances,
        signal_between,
        feature_variances,
        pca_axes,
        lda_axes: lda_order.into_iter().map(|i| spec.p_noise + i).collect(),
        class_means: means.clone(),
    }
}

/// Draws the dataset. Samples are stored class by class; each class draws
/// from its own derived seed, so classes are generated in parallel without
/// affecting the output.
pub fn generate(spec: &SyntheticSpec) -> Result<(LabeledDataset, SyntheticTruth)> {
    spec.validate()?;
    let h = class_mean_frame(spec);
    let betas = spec.betas();
    let mut means = h;
    for (i, mut col) in means.column_iter_mut().enumerate() {
        col *= betas[i];
    }
    let counts = spec.counts();
    let noise_sd: Vec<f64> = spec.noise_variances().iter().map(|v| v.sqrt()).collect();
    let p = spec.p();

    let blocks: Vec<DMatrix<f64>> = (0..spec.n_classes)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(derive_seed(spec.seed, 0x5A3F_0000 + c as u64));
            let mut block = DMatrix::zeros(p, counts[c]);
            for mut col in block.column_iter_mut() {
                for (i, sd) in noise_sd.iter().enumerate() {
                    col[i] = sd * normal(&mut rng);
                }
                for i in 0..spec.p_sig {
                    col[spec.p_noise + i] = means[(c, i)] + spec.tau_sig * normal(&mut rng);
                }
            }
            block
        })
        .collect();

    let n: usize = counts.iter().sum();
    let mut x = DMatrix::zeros(p, n);
    let mut labels = Vec::with_capacity(n);
    let mut at = 0;
    for (c, block) in blocks.iter().enumerate() {
        x.columns_mut(at, block.ncols()).copy_from(block);
        at += block.ncols();
        labels.extend(std::iter::repeat_n(c, block.ncols()));
    }
    let ds = LabeledDataset::new(DataMatrix::new(x)?, labels, spec.n_classes)?;
    Ok((ds, population(spec, &means)))
}

/// Analytic reference bases: coordinate axes ordered by population
/// variance (PCA) and signal axes ordered by `β` (LDA).
#[derive(Debug, Clone, PartialEq)]
pub struct TruthBases {
    pub pca: ReferenceBasis,
    pub lda: ReferenceBasis,
    /// Set when the leading `d` PCA axes are not all noise axes, or when
    /// some of their variances tie.
    pub ordering_warning: bool,
}

pub fn truth_bases(spec: &SyntheticSpec, d_pca: usize) -> Result<TruthBases> {
    spec.validate()?;
    let p = spec.p();
    if d_pca == 0 || d_pca > p {
        return Err(Error::Validation(format!(
            "PCA truth dimension {d_pca} outside [1, {p}]"
        )));
    }
    let truth = population(
        spec,
        &(class_mean_frame(spec) * DMatrix::from_diagonal(&spec.betas().into())),
    );
    let axis_basis = |axes: &[usize]| {
        let mut m = DMatrix::zeros(p, axes.len());
        for (k, &i) in axes.iter().enumerate() {
            m[(i, k)] = 1.0;
        }
        m
    };
    let pca_axes = &truth.pca_axes[..d_pca];
    // the axes are the top-d population PCA only if they are all noise
    // axes, strictly ordered, and none is outranked by a signal axis
    let top_signal = truth.feature_variances[spec.p_noise..]
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let mut warning = pca_axes.iter().any(|&i| i >= spec.p_noise);
    warning |= pca_axes
        .windows(2)
        .any(|w| truth.feature_variances[w[0]] <= truth.feature_variances[w[1]]);
    warning |= pca_axes.iter().any(|&i| truth.feature_variances[i] <= top_signal);
    if warning {
        log::warn!("leading {d_pca} analytic PCA axes are not the top population variance directions");
    }
    let pca = ReferenceBasis {
        directions: axis_basis(pca_axes),
        values: pca_axes.iter().map(|&i| truth.feature_variances[i]).collect(),
        kind: BasisKind::Pca,
    };
    let tau2 = spec.tau_sig.powi(2);
    let lda = ReferenceBasis {
        directions: axis_basis(&truth.lda_axes),
        values: truth
            .lda_axes
            .iter()
            .map(|&i| truth.signal_between[i - spec.p_noise] / tau2)
            .collect(),
        kind: BasisKind::Lda,
    };
    Ok(TruthBases {
        pca,
        lda,
        ordering_warning: warning,
    })
}

/// Dataset as CSV: header `f0..f{p-1},label`, one sample per row.
pub fn write_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let header: Vec<String> = (0..ds.p())
        .map(|i| format!("f{i}"))
        .chain(["label".to_string()])
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    let x = ds.data.values();
    for (j, &label) in ds.labels.iter().enumerate() {
        for v in x.column(j).iter() {
            out.push_str(&format!("{v:e},"));
        }
        out.push_str(&format!("{label}\n"));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameters() {
        let s = SyntheticSpec::default();
        assert_eq!((s.n_classes, s.p_noise, s.p_sig, s.p()), (20, 50, 19, 69));
        assert_eq!(s.n(), 10_000);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn too_many_signal_dims_is_rejected() {
        let s = SyntheticSpec {
            p_sig: 20,
            ..SyntheticSpec::default()
        };
        assert!(matches!(generate(&s), Err(Error::Construction(_))));
    }

    #[test]
    fn class_means_are_centered_and_scaled() {
        let s = SyntheticSpec::small(6, 5, 2);
        let (_, truth) = generate(&s).unwrap();
        for i in 0..s.p_sig {
            assert!(truth.class_means.column(i).sum().abs() < 1e-10);
        }
        let g = truth.class_means.transpose() * &truth.class_means;
        let b = s.betas();
        for i in 0..s.p_sig {
            for j in 0..s.p_sig {
                let want = if i == j { b[i] * b[i] } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-12);
            }
        }
        for (i, v) in truth.signal_between.iter().enumerate() {
            assert!((v - b[i] * b[i] / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = SyntheticSpec::small(4, 7, 11);
        let (a, _) = generate(&s).unwrap();
        let (b, _) = generate(&s).unwrap();
        assert_eq!(a.data.values(), b.data.values());
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn analytic_axes_are_disjoint() {
        let tb = truth_bases(&SyntheticSpec::default(), 20).unwrap();
        let cross = tb.pca.directions.transpose() * &tb.lda.directions;
        assert_eq!(cross.norm(), 0.0);
        assert_eq!(tb.pca.directions[(0, 0)], 1.0);
        assert_eq!(tb.lda.directions[(50, 0)], 1.0);
        assert!(!tb.ordering_warning);
    }

    #[test]
    fn default_spectrum_is_outranked_past_noise_axis_28() {
        // noise variance 25·0.81^i drops below the leading signal axis
        // (0.01 + 1/20) at i = 29
        assert!(!truth_bases(&SyntheticSpec::default(), 29).unwrap().ordering_warning);
        let tb = truth_bases(&SyntheticSpec::default(), 50).unwrap();
        assert!(tb.ordering_warning);
        for k in 0..50 {
            assert_eq!(tb.pca.directions.column(k).iamax(), k);
        }
        let full = truth_bases(&SyntheticSpec::default(), 69).unwrap();
        assert_eq!(full.pca.directions.column(50).iamax(), 50);
    }
}
