use nalgebra::{DMatrix, DVector};

use super::{LinearAutoencoder, NestingSet, NuL2Lambdas, PrefixWeights};
use crate::error::{Error, Result};

/// A loss summed over `n` samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub n: usize,
}

impl LossValue {
    pub fn mean(&self) -> f64 {
        self.total / self.n as f64
    }
}

/// `‖X - ABX‖_F²`.
pub fn lae_loss(model: &LinearAutoencoder, x: &DMatrix<f64>) -> Result<LossValue> {
    model.check_data(x)?;
    let z = model.encode(x);
    let resid = x - &model.decoder_a * z;
    Ok(LossValue {
        total: resid.norm_squared(),
        n: x.ncols(),
    })
}

/// `ℓ_m = ‖X - A_{:,1:m} B_{1:m,:} X‖_F²` for every `m`, each prefix
/// reconstructed from scratch.
pub fn prefix_losses_naive(model: &LinearAutoencoder, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    model.check_data(x)?;
    Ok((1..=model.d())
        .map(|m| {
            let b = model.encoder_b.rows(0, m);
            let a = model.decoder_a.columns(0, m);
            let z = b * x;
            (x - a * z).norm_squared()
        })
        .collect())
}

/// The `d×d` summaries `H = AᵀXZᵀ`, `G^A = AᵀA`, `G^Z = ZZᵀ` plus `‖X‖_F²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub h: DMatrix<f64>,
    pub g_a: DMatrix<f64>,
    pub g_z: DMatrix<f64>,
    pub x_norm_sq: f64,
}

pub fn compute_sufficient_stats(model: &LinearAutoencoder, x: &DMatrix<f64>) -> Result<SufficientStats> {
    model.check_data(x)?;
    let z = model.encode(x);
    let zt = z.transpose();
    let xzt = x * &zt;
    let at = model.decoder_a.transpose();
    Ok(SufficientStats {
        h: &at * xzt,
        g_a: &at * &model.decoder_a,
        g_z: &z * zt,
        x_norm_sq: x.norm_squared(),
    })
}

/// All prefix losses from the shared statistics in `O(d²)`:
/// `ℓ_m = ‖X‖² - 2 Σ_{i≤m} H_ii + Σ_{i,j≤m} G^A_ij G^Z_ij`, grown one
/// row/column of `G^A ∘ G^Z` at a time.
pub fn prefix_losses_efficient(stats: &SufficientStats) -> Vec<f64> {
    let d = stats.h.nrows();
    let (ga, gz) = (&stats.g_a, &stats.g_z);
    let mut trace_h = 0.0;
    let mut quad = 0.0;
    let mut out = Vec::with_capacity(d);
    for m in 0..d {
        trace_h += stats.h[(m, m)];
        let mut cross = 0.0;
        for i in 0..m {
            cross += ga[(i, m)] * gz[(i, m)];
        }
        quad += 2.0 * cross + ga[(m, m)] * gz[(m, m)];
        out.push(stats.x_norm_sq - 2.0 * trace_h + quad);
    }
    out
}

/// `Σ_m ω_m ℓ_m` through the sufficient statistics. Accepts any
/// nonnegative weights, so it covers plain and sparse-prefix losses too.
pub fn weighted_prefix_loss(model: &LinearAutoencoder, x: &DMatrix<f64>, weights: &PrefixWeights) -> Result<f64> {
    if weights.dim() != model.d() {
        return Err(Error::Shape(format!(
            "{} prefix weights for latent dimension {}",
            weights.dim(),
            model.d()
        )));
    }
    let ell = prefix_losses_efficient(&compute_sufficient_stats(model, x)?);
    Ok(weights.omega().iter().zip(&ell).map(|(w, l)| w * l).sum())
}

/// Full-prefix Matryoshka reconstruction loss.
pub fn fp_mrl_loss(model: &LinearAutoencoder, x: &DMatrix<f64>, weights: &PrefixWeights) -> Result<f64> {
    weighted_prefix_loss(model, x, weights)
}

/// Sparse Matryoshka loss: unit weight on each prefix in `nesting`.
pub fn s_mrl_loss(model: &LinearAutoencoder, x: &DMatrix<f64>, nesting: &NestingSet) -> Result<f64> {
    if nesting.d() != model.d() {
        return Err(Error::Shape(format!(
            "nesting set ends at {}, model has d = {}",
            nesting.d(),
            model.d()
        )));
    }
    weighted_prefix_loss(model, x, &PrefixWeights::from_nesting(nesting))
}

/// `(1/n)‖X - ABX‖_F² + Σ_k λ_k (‖b_k‖² + ‖a_k‖²)`.
pub fn nu_l2_loss(model: &LinearAutoencoder, x: &DMatrix<f64>, lambdas: &NuL2Lambdas) -> Result<f64> {
    if lambdas.dim() != model.d() {
        return Err(Error::Shape(format!(
            "{} coefficients for latent dimension {}",
            lambdas.dim(),
            model.d()
        )));
    }
    let recon = lae_loss(model, x)?.mean();
    let penalty: f64 = lambdas
        .values()
        .iter()
        .enumerate()
        .map(|(k, l)| l * (model.encoder_b.row(k).norm_squared() + model.decoder_a.column(k).norm_squared()))
        .sum();
    Ok(recon + penalty)
}

/// `(1/n)‖X - ABX‖_F² + (α/n) Σ_k k Σ_s |b_kᵀ x_s|`.
pub fn md_l1_loss(model: &LinearAutoencoder, x: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Validation(format!("α must be positive, got {alpha}")));
    }
    md_l1_unchecked(model, x, alpha)
}

pub(super) fn md_l1_unchecked(model: &LinearAutoencoder, x: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    model.check_data(x)?;
    let n = x.ncols() as f64;
    let z = model.encode(x);
    let resid = x - &model.decoder_a * &z;
    Ok((resid.norm_squared() + alpha * monotone_l1_mass(&z)) / n)
}

/// `Σ_k k Σ_s |z_ks|` with 1-based `k`.
pub(crate) fn monotone_l1_mass(z: &DMatrix<f64>) -> f64 {
    z.row_iter()
        .enumerate()
        .map(|(k, row)| (k + 1) as f64 * row.iter().map(|v| v.abs()).sum::<f64>())
        .sum()
}

/// Coefficients of the full-prefix expansion
/// `Σω‖x‖² - 2 Σ_k w_k xᵀy_k + Σ_k S_kk ‖y_k‖² + Σ_{i<j} 2 S_ij y_iᵀy_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionCoefficients {
    pub constant: f64,
    pub linear: Vec<f64>,
    pub quadratic: Vec<f64>,
    /// `((i, j), 2 S_ij)` for `i < j`, zero-based.
    pub cross: Vec<((usize, usize), f64)>,
}

pub fn expansion_coefficients(weights: &PrefixWeights) -> ExpansionCoefficients {
    let s = weights.coupling();
    let d = weights.dim();
    let mut cross = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            cross.push(((i, j), 2.0 * s[(i, j)]));
        }
    }
    ExpansionCoefficients {
        constant: weights.total(),
        linear: weights.cumulative().to_vec(),
        quadratic: (0..d).map(|k| s[(k, k)]).collect(),
        cross,
    }
}

/// Full-prefix loss of a single sample assembled term by term from the
/// rank-one contributions `y_k = a_k (b_kᵀ x)`.
pub fn expanded_fp_mrl_sample(model: &LinearAutoencoder, x: &DVector<f64>, weights: &PrefixWeights) -> f64 {
    let c = expansion_coefficients(weights);
    let y: Vec<DVector<f64>> = (0..model.d())
        .map(|k| model.decoder_a.column(k) * model.encoder_b.row(k).dot(&x.transpose()))
        .collect();
    let mut total = c.constant * x.norm_squared();
    for (k, yk) in y.iter().enumerate() {
        total -= 2.0 * c.linear[k] * x.dot(yk);
        total += c.quadratic[k] * yk.norm_squared();
    }
    for ((i, j), coef) in &c.cross {
        total += coef * y[*i].dot(&y[*j]);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, rng_from_seed};

    fn random_model(p: usize, d: usize, seed: u64) -> LinearAutoencoder {
        let mut rng = rng_from_seed(seed);
        LinearAutoencoder::new(gaussian_matrix(d, p, &mut rng), gaussian_matrix(p, d, &mut rng), false).unwrap()
    }

    #[test]
    fn lae_identity_and_zero_decoder() {
        let mut rng = rng_from_seed(1);
        let x = gaussian_matrix(4, 9, &mut rng);
        let id = LinearAutoencoder::new(DMatrix::identity(4, 4), DMatrix::identity(4, 4), true).unwrap();
        assert!(lae_loss(&id, &x).unwrap().total < 1e-24);
        let mut m = random_model(4, 2, 3);
        m.decoder_a.fill(0.0);
        let v = lae_loss(&m, &x).unwrap();
        assert!((v.total - x.norm_squared()).abs() < 1e-12);
        assert!((v.mean() - x.norm_squared() / 9.0).abs() < 1e-12);
    }

    #[test]
    fn lae_at_pca_basis_equals_tail() {
        let mut rng = rng_from_seed(8);
        let x = gaussian_matrix(6, 40, &mut rng);
        let pca = crate::oracles::pca(&x, 6).unwrap();
        for d in 1..6 {
            let model = LinearAutoencoder::tied(&pca.basis.directions.columns(0, d).into_owned(), true);
            let tail: f64 = pca.spectrum[d..].iter().sum();
            assert!((lae_loss(&model, &x).unwrap().total - tail).abs() < 1e-9 * tail);
        }
    }

    #[test]
    fn naive_matches_rank_one_brute_force() {
        let model = random_model(5, 3, 2);
        let mut rng = rng_from_seed(4);
        let x = gaussian_matrix(5, 10, &mut rng);
        let naive = prefix_losses_naive(&model, &x).unwrap();
        for m in 1..=3 {
            let mut total = 0.0;
            for s in 0..10 {
                let xs = x.column(s);
                let mut recon = DVector::zeros(5);
                for k in 0..m {
                    let zk = model.encoder_b.row(k).transpose().dot(&xs);
                    recon += model.decoder_a.column(k) * zk;
                }
                total += (xs - recon).norm_squared();
            }
            assert!((naive[m - 1] - total).abs() < 1e-10 * total);
        }
        assert!((naive[2] - lae_loss(&model, &x).unwrap().total).abs() < 1e-12 * naive[2]);
    }

    #[test]
    fn d1_prefix_and_formula() {
        let model = random_model(4, 1, 5);
        let mut rng = rng_from_seed(6);
        let x = gaussian_matrix(4, 7, &mut rng);
        let st = compute_sufficient_stats(&model, &x).unwrap();
        let eff = prefix_losses_efficient(&st);
        let by_hand = st.x_norm_sq - 2.0 * st.h[(0, 0)] + st.g_a[(0, 0)] * st.g_z[(0, 0)];
        assert_eq!(eff, vec![by_hand]);
        let lae = lae_loss(&model, &x).unwrap().total;
        assert!((eff[0] - lae).abs() < 1e-10 * lae);
    }

    #[test]
    fn stats_definitions() {
        let model = random_model(6, 3, 9);
        let mut rng = rng_from_seed(10);
        let x = gaussian_matrix(6, 11, &mut rng);
        let st = compute_sufficient_stats(&model, &x).unwrap();
        let z = &model.encoder_b * &x;
        let (a, at) = (&model.decoder_a, model.decoder_a.transpose());
        assert!((&st.h - &at * &x * z.transpose()).amax() < 1e-10);
        assert!((&st.g_a - &at * a).amax() < 1e-10);
        assert!((&st.g_z - &z * z.transpose()).amax() < 1e-10);

        let (q, _) = crate::linalg::thin_qr(&gaussian_matrix(6, 3, &mut rng));
        let ortho = LinearAutoencoder::tied(&q, true);
        let st = compute_sufficient_stats(&ortho, &x).unwrap();
        assert!((st.g_a - DMatrix::identity(3, 3)).amax() < 1e-12);

        let st = compute_sufficient_stats(&model, &DMatrix::zeros(6, 4)).unwrap();
        assert!(st.h.amax() == 0.0 && st.g_z.amax() == 0.0 && st.x_norm_sq == 0.0);
    }

    #[test]
    fn zero_decoder_prefix_losses() {
        let mut model = random_model(5, 4, 12);
        model.decoder_a.fill(0.0);
        let mut rng = rng_from_seed(13);
        let x = gaussian_matrix(5, 8, &mut rng);
        let eff = prefix_losses_efficient(&compute_sufficient_stats(&model, &x).unwrap());
        for l in eff {
            assert!((l - x.norm_squared()).abs() < 1e-12);
        }
    }

    #[test]
    fn fp_mrl_full_width_only_is_lae() {
        let model = random_model(5, 3, 14);
        let mut rng = rng_from_seed(15);
        let x = gaussian_matrix(5, 12, &mut rng);
        let lae = lae_loss(&model, &x).unwrap().total;
        let v = fp_mrl_loss(&model, &x, &PrefixWeights::full_width_only(3)).unwrap();
        assert!((v - lae).abs() < 1e-9 * lae);
    }

    #[test]
    fn s_mrl_special_cases() {
        let model = random_model(5, 4, 16);
        let mut rng = rng_from_seed(17);
        let x = gaussian_matrix(5, 12, &mut rng);
        let lae = lae_loss(&model, &x).unwrap().total;
        let only_d = s_mrl_loss(&model, &x, &NestingSet::new(vec![4]).unwrap()).unwrap();
        assert!((only_d - lae).abs() < 1e-9 * lae);
        let full = s_mrl_loss(&model, &x, &NestingSet::full(4)).unwrap();
        let fp = fp_mrl_loss(&model, &x, &PrefixWeights::uniform(4)).unwrap();
        assert!((full - fp).abs() < 1e-12 * fp);
    }

    #[test]
    fn s_mrl_geometric_nesting_at_d50() {
        let model = random_model(60, 50, 18);
        let mut rng = rng_from_seed(19);
        let x = gaussian_matrix(60, 30, &mut rng);
        let ell = prefix_losses_efficient(&compute_sufficient_stats(&model, &x).unwrap());
        let want: f64 = [5, 10, 25, 50].iter().map(|m| ell[m - 1]).sum();
        let got = s_mrl_loss(&model, &x, &NestingSet::new(vec![5, 10, 25, 50]).unwrap()).unwrap();
        assert!((got - want).abs() < 1e-12 * want);
    }

    #[test]
    fn nu_l2_penalty_terms() {
        let model = random_model(5, 3, 20);
        let mut rng = rng_from_seed(21);
        let x = gaussian_matrix(5, 6, &mut rng);
        let lam = NuL2Lambdas::new(vec![0.1, 0.2, 0.3]).unwrap();
        let mut pen = 0.0;
        for k in 0..3 {
            pen += lam.values()[k] * (model.encoder_b.row(k).norm_squared() + model.decoder_a.column(k).norm_squared());
        }
        let want = lae_loss(&model, &x).unwrap().total / 6.0 + pen;
        assert!((nu_l2_loss(&model, &x, &lam).unwrap() - want).abs() < 1e-12 * want);

        // equal coefficients: plain weight decay
        let eq = NuL2Lambdas::new_unchecked(vec![1e-3; 3]);
        let wd = 1e-3 * (model.encoder_b.norm_squared() + model.decoder_a.norm_squared());
        let want = lae_loss(&model, &x).unwrap().total / 6.0 + wd;
        assert!((nu_l2_loss(&model, &x, &eq).unwrap() - want).abs() < 1e-12 * want);
    }

    #[test]
    fn md_l1_penalty() {
        let mut model = random_model(5, 3, 22);
        let mut rng = rng_from_seed(23);
        let x = gaussian_matrix(5, 1, &mut rng);
        let z = &model.encoder_b * &x;
        let alpha = 0.01;
        let pen = alpha * (z[0].abs() + 2.0 * z[1].abs() + 3.0 * z[2].abs());
        let want = lae_loss(&model, &x).unwrap().total + pen;
        assert!((md_l1_loss(&model, &x, alpha).unwrap() - want).abs() < 1e-12 * want);

        model.encoder_b.fill(0.0);
        let x = gaussian_matrix(5, 4, &mut rng);
        let v = md_l1_loss(&model, &x, alpha).unwrap();
        assert!((v - x.norm_squared() / 4.0).abs() < 1e-12);
        assert!(md_l1_loss(&model, &x, 0.0).is_err());
    }

    #[test]
    fn prefix_losses_nonincreasing_at_prefix_optimal_encoder() {
        // with orthonormal A and B = Aᵀ every added dimension is a
        // least-squares improvement
        let mut rng = rng_from_seed(24);
        let x = gaussian_matrix(7, 30, &mut rng);
        let (q, _) = crate::linalg::thin_qr(&gaussian_matrix(7, 5, &mut rng));
        let model = LinearAutoencoder::tied(&q, true);
        let ell = prefix_losses_naive(&model, &x).unwrap();
        assert!(ell.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        let any = random_model(7, 5, 25);
        assert!(prefix_losses_naive(&any, &x).unwrap().iter().all(|&l| l >= 0.0));
    }
}
