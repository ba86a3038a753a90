//! Loss families for linear encoder/decoder pairs: plain reconstruction,
//! full-prefix and sparse-prefix Matryoshka sums, non-uniform ℓ2 and
//! monotone-decay ℓ1 penalties, and the Fisher trace ratio, all with
//! closed-form gradients.
//!
//! Reconstruction losses are totals over samples, as in `‖X - ABX‖_F²`;
//! use [`LossValue::mean`] for the per-sample figure. The regularized
//! families carry their own `1/n`.

mod fisher;
mod objective;
mod prefix;
mod weights;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fisher::{fisher_loss, fisher_prefix_loss, fisher_weighted_prefix_loss};
pub use objective::{gradient, Batch, Gradient, Hyperparameters, LossFamily, Objective, Task};
pub use prefix::{
    compute_sufficient_stats, expanded_fp_mrl_sample, expansion_coefficients, fp_mrl_loss, lae_loss, md_l1_loss,
    nu_l2_loss, prefix_losses_efficient, prefix_losses_naive, s_mrl_loss, weighted_prefix_loss, ExpansionCoefficients,
    LossValue, SufficientStats,
};
pub use weights::{NestingSet, NuL2Lambdas, PrefixWeights};

/// Encoder `B` (d×p) and decoder `A` (p×d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAutoencoder {
    pub encoder_b: DMatrix<f64>,
    pub decoder_a: DMatrix<f64>,
    pub orthonormal_decoder: bool,
}

impl LinearAutoencoder {
    pub fn new(encoder_b: DMatrix<f64>, decoder_a: DMatrix<f64>, orthonormal_decoder: bool) -> Result<Self> {
        let (d, p) = encoder_b.shape();
        if decoder_a.shape() != (p, d) {
            return Err(Error::Shape(format!(
                "encoder is {d}x{p}, decoder must be {p}x{d} but is {}x{}",
                decoder_a.nrows(),
                decoder_a.ncols()
            )));
        }
        if d == 0 || p == 0 {
            return Err(Error::Shape("empty model".into()));
        }
        Ok(LinearAutoencoder {
            encoder_b,
            decoder_a,
            orthonormal_decoder,
        })
    }

    /// `A = Bᵀ = U` for an orthonormal `U` (p×d).
    pub fn tied(u: &DMatrix<f64>, orthonormal_decoder: bool) -> Self {
        LinearAutoencoder {
            encoder_b: u.transpose(),
            decoder_a: u.clone(),
            orthonormal_decoder,
        }
    }

    pub fn d(&self) -> usize {
        self.encoder_b.nrows()
    }

    pub fn p(&self) -> usize {
        self.encoder_b.ncols()
    }

    pub fn encode(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.encoder_b * x
    }

    /// The model restricted to its first `m` latent dimensions.
    pub fn truncated(&self, m: usize) -> LinearAutoencoder {
        LinearAutoencoder {
            encoder_b: self.encoder_b.rows(0, m).into_owned(),
            decoder_a: self.decoder_a.columns(0, m).into_owned(),
            orthonormal_decoder: self.orthonormal_decoder,
        }
    }

    /// `(A T, T⁻¹ B)` for an invertible `T` (d×d).
    pub fn reparameterized(&self, t: &DMatrix<f64>) -> Result<LinearAutoencoder> {
        let inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Validation("reparameterization is singular".into()))?;
        Ok(LinearAutoencoder {
            encoder_b: inv * &self.encoder_b,
            decoder_a: &self.decoder_a * t,
            orthonormal_decoder: self.orthonormal_decoder,
        })
    }

    /// `‖AᵀA - I‖_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        let d = self.d();
        (self.decoder_a.transpose() * &self.decoder_a - DMatrix::identity(d, d)).norm()
    }

    pub(crate) fn check_data(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.p() {
            return Err(Error::Shape(format!(
                "data has {} features, model expects {}",
                x.nrows(),
                self.p()
            )));
        }
        Ok(())
    }
}
