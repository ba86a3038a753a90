use nalgebra::{Cholesky, DMatrix, Dyn};

use super::{NestingSet, PrefixWeights};
use crate::error::{Error, Result};
use crate::oracles::ScatterPair;

/// Embedding-space scatters `B S Bᵀ`, shared by every prefix.
struct Projected {
    b_sbc: DMatrix<f64>,
    b_swc: DMatrix<f64>,
    between: DMatrix<f64>,
    within: DMatrix<f64>,
}

impl Projected {
    fn new(b: &DMatrix<f64>, sc: &ScatterPair) -> Result<Self> {
        if b.ncols() != sc.s_bc.nrows() {
            return Err(Error::Shape(format!(
                "encoder has {} columns, scatter is {}x{}",
                b.ncols(),
                sc.s_bc.nrows(),
                sc.s_bc.ncols()
            )));
        }
        let b_sbc = b * &sc.s_bc;
        let b_swc = b * &sc.s_wc;
        let bt = b.transpose();
        let between = &b_sbc * &bt;
        let within = &b_swc * bt;
        Ok(Projected {
            b_sbc,
            b_swc,
            between,
            within,
        })
    }

    /// Value `-Tr[(W_m + εI)⁻¹ N_m]` of the leading-`m` block and, when
    /// asked, its gradient with respect to the first `m` rows of `B`:
    /// `-2 M⁻¹ (B S_bc) + 2 M⁻¹ N M⁻¹ (B S_wc)`.
    fn prefix(&self, m: usize, eps: f64, want_grad: bool) -> Result<(f64, Option<DMatrix<f64>>)> {
        let reg = self.within.view((0, 0), (m, m)) + DMatrix::identity(m, m) * eps;
        let chol = Cholesky::<f64, Dyn>::new(reg).ok_or_else(|| {
            Error::Stabilizer(format!(
                "embedding within-class scatter + {eps:e} I is not positive definite"
            ))
        })?;
        let n = self.between.view((0, 0), (m, m)).into_owned();
        let k = chol.solve(&n); // M⁻¹ N
        let value = -k.trace();
        if !want_grad {
            return Ok((value, None));
        }
        let mnm = chol.solve(&k.transpose()); // M⁻¹ N M⁻¹ (symmetric)
        let g = chol.solve(&self.b_sbc.rows(0, m).into_owned()) * -2.0 + (mnm * self.b_swc.rows(0, m)) * 2.0;
        Ok((value, Some(g)))
    }
}

/// `-Tr[(B S_wc Bᵀ + εI)⁻¹ B S_bc Bᵀ]`.
pub fn fisher_loss(encoder_b: &DMatrix<f64>, sc: &ScatterPair, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Projected::new(encoder_b, sc)?
        .prefix(encoder_b.nrows(), eps, false)
        .map(|(v, _)| v)
}

/// Unit-weight sum of the Fisher loss over the leading-`m` rows for each
/// `m` in the nesting set.
pub fn fisher_prefix_loss(encoder_b: &DMatrix<f64>, sc: &ScatterPair, eps: f64, nesting: &NestingSet) -> Result<f64> {
    if nesting.d() != encoder_b.nrows() {
        return Err(Error::Shape(format!(
            "nesting set ends at {}, encoder has {} rows",
            nesting.d(),
            encoder_b.nrows()
        )));
    }
    fisher_weighted_prefix_loss(encoder_b, sc, eps, &PrefixWeights::from_nesting(nesting))
}

pub fn fisher_weighted_prefix_loss(
    encoder_b: &DMatrix<f64>,
    sc: &ScatterPair,
    eps: f64,
    weights: &PrefixWeights,
) -> Result<f64> {
    fisher_weighted(encoder_b, sc, eps, weights, false).map(|(v, _)| v)
}

pub(super) fn fisher_weighted(
    encoder_b: &DMatrix<f64>,
    sc: &ScatterPair,
    eps: f64,
    weights: &PrefixWeights,
    want_grad: bool,
) -> Result<(f64, DMatrix<f64>)> {
    check_eps(eps)?;
    let (d, p) = encoder_b.shape();
    if weights.dim() != d {
        return Err(Error::Shape(format!("{} prefix weights for {d} rows", weights.dim())));
    }
    let proj = Projected::new(encoder_b, sc)?;
    let mut value = 0.0;
    let mut grad = DMatrix::zeros(d, p);
    for (m, &w) in weights.omega().iter().enumerate().map(|(i, w)| (i + 1, w)) {
        if w == 0.0 {
            continue;
        }
        let (v, g) = proj.prefix(m, eps, want_grad)?;
        value += w * v;
        if let Some(g) = g {
            let mut top = grad.rows_mut(0, m);
            top += &g * w;
        }
    }
    Ok((value, grad))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::Validation(format!(
            "Fisher stabilizer must be positive, got {eps}"
        )));
    }
    Ok(())
}
