use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::fisher::fisher_weighted;
use super::prefix::{monotone_l1_mass, prefix_losses_efficient, SufficientStats};
use super::{LinearAutoencoder, NestingSet, NuL2Lambdas, PrefixWeights};
use crate::error::{Error, Result};
use crate::oracles::ScatterPair;

/// What the model is asked to do: reconstruct its input, or separate
/// classes under the Fisher trace ratio (decoder unused).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Task {
    Reconstruction,
    Fisher { eps: f64 },
}

/// How the latent dimensions are ordered (or not).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LossFamily {
    Unordered,
    FullPrefix { weights: PrefixWeights },
    SparsePrefix { nesting: NestingSet },
    NonUniformL2 { lambdas: NuL2Lambdas },
    MonotoneL1 { alpha: f64 },
}

impl LossFamily {
    pub fn short_name(&self) -> &'static str {
        match self {
            LossFamily::Unordered => "unordered",
            LossFamily::FullPrefix { .. } => "fp_mrl",
            LossFamily::SparsePrefix { .. } => "s_mrl",
            LossFamily::NonUniformL2 { .. } => "nu_l2",
            LossFamily::MonotoneL1 { .. } => "md_l1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub task: Task,
    pub family: LossFamily,
}

/// Inputs to one loss evaluation: a block of samples (columns) and, for
/// Fisher objectives, the scatter matrices of the same samples.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a DMatrix<f64>,
    pub scatter: Option<&'a ScatterPair>,
}

impl<'a> Batch<'a> {
    pub fn new(x: &'a DMatrix<f64>) -> Self {
        Batch { x, scatter: None }
    }

    pub fn with_scatter(x: &'a DMatrix<f64>, scatter: &'a ScatterPair) -> Self {
        Batch {
            x,
            scatter: Some(scatter),
        }
    }
}

/// Partial derivatives with respect to the decoder and encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Gradient {
    pub fn scale(mut self, s: f64) -> Self {
        self.a *= s;
        self.b *= s;
        self
    }

    pub fn norm(&self) -> f64 {
        (self.a.norm_squared() + self.b.norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

impl Objective {
    pub fn new(task: Task, family: LossFamily) -> Self {
        Objective { task, family }
    }

    pub fn lae() -> Self {
        Self::new(Task::Reconstruction, LossFamily::Unordered)
    }

    pub fn fp_mrl(d: usize) -> Self {
        Self::new(
            Task::Reconstruction,
            LossFamily::FullPrefix {
                weights: PrefixWeights::uniform(d),
            },
        )
    }

    /// Builds an objective from a loss identifier such as `"fp_mrl"` or
    /// `"fisher_s_mrl"`. Family hyperparameters come from `hyper`.
    pub fn from_id(id: &str, d: usize, hyper: &Hyperparameters) -> Result<Self> {
        let (task, family) = match id.strip_prefix("fisher") {
            Some(rest) => {
                let eps = hyper
                    .eps
                    .ok_or_else(|| Error::Config(format!("{id} needs a Fisher stabilizer `eps`")))?;
                (Task::Fisher { eps }, rest.trim_start_matches('_'))
            }
            None => (Task::Reconstruction, id),
        };
        let family = match family {
            "" | "lae" | "unordered" => LossFamily::Unordered,
            "fp_mrl" => LossFamily::FullPrefix {
                weights: match &hyper.omega {
                    Some(w) => PrefixWeights::new(w.clone())?,
                    None => PrefixWeights::uniform(d),
                },
            },
            "s_mrl" => LossFamily::SparsePrefix {
                nesting: NestingSet::for_dim(
                    hyper
                        .nesting
                        .clone()
                        .ok_or_else(|| Error::Config(format!("{id} needs a nesting set")))?,
                    d,
                )?,
            },
            "nu_l2" => LossFamily::NonUniformL2 {
                lambdas: NuL2Lambdas::new(
                    hyper
                        .lambdas
                        .clone()
                        .ok_or_else(|| Error::Config(format!("{id} needs λ coefficients")))?,
                )?,
            },
            "md_l1" => LossFamily::MonotoneL1 {
                alpha: hyper.alpha.ok_or_else(|| Error::Config(format!("{id} needs α")))?,
            },
            _ => return Err(Error::Config(format!("unknown loss id {id:?}"))),
        };
        let obj = Objective { task, family };
        obj.check_dim(d)?;
        Ok(obj)
    }

    pub fn id(&self) -> String {
        match self.task {
            Task::Reconstruction => match self.family {
                LossFamily::Unordered => "lae".to_string(),
                ref f => f.short_name().to_string(),
            },
            Task::Fisher { .. } => match self.family {
                LossFamily::Unordered => "fisher".to_string(),
                ref f => format!("fisher_{}", f.short_name()),
            },
        }
    }

    /// Reconstruction sums without an explicit `1/n` are totals; the
    /// trainer divides them by the batch size before stepping.
    pub fn is_total(&self) -> bool {
        matches!(
            (&self.task, &self.family),
            (
                Task::Reconstruction,
                LossFamily::Unordered | LossFamily::FullPrefix { .. } | LossFamily::SparsePrefix { .. }
            )
        )
    }

    pub fn uses_decoder(&self) -> bool {
        matches!(self.task, Task::Reconstruction)
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        let got = match &self.family {
            LossFamily::FullPrefix { weights } => weights.dim(),
            LossFamily::SparsePrefix { nesting } => nesting.d(),
            LossFamily::NonUniformL2 { lambdas } => lambdas.dim(),
            LossFamily::Unordered | LossFamily::MonotoneL1 { .. } => d,
        };
        if got != d {
            return Err(Error::Config(format!(
                "{} hyperparameters are sized for d = {got}, model has d = {d}",
                self.id()
            )));
        }
        Ok(())
    }

    pub fn value(&self, model: &LinearAutoencoder, batch: Batch<'_>) -> Result<f64> {
        self.evaluate(model, batch, false).map(|(v, _)| v)
    }

    pub fn value_and_gradient(&self, model: &LinearAutoencoder, batch: Batch<'_>) -> Result<(f64, Gradient)> {
        self.evaluate(model, batch, true)
    }

    fn evaluate(&self, model: &LinearAutoencoder, batch: Batch<'_>, want_grad: bool) -> Result<(f64, Gradient)> {
        let x = batch.x;
        model.check_data(x)?;
        self.check_dim(model.d())?;
        let d = model.d();
        let n = x.ncols() as f64;

        let (mut value, mut grad) = match self.task {
            Task::Reconstruction => {
                let weights = match &self.family {
                    LossFamily::FullPrefix { weights } => weights.clone(),
                    LossFamily::SparsePrefix { nesting } => PrefixWeights::from_nesting(nesting),
                    _ => PrefixWeights::full_width_only(d),
                };
                let (v, g) = reconstruction(model, x, &weights, want_grad);
                if self.is_total() {
                    (v, g)
                } else {
                    (v / n, g.scale(1.0 / n))
                }
            }
            Task::Fisher { eps } => {
                let sc = batch
                    .scatter
                    .ok_or_else(|| Error::Config("Fisher objective needs scatter matrices".into()))?;
                let weights = match &self.family {
                    LossFamily::FullPrefix { weights } => weights.clone(),
                    LossFamily::SparsePrefix { nesting } => PrefixWeights::from_nesting(nesting),
                    _ => PrefixWeights::full_width_only(d),
                };
                let (v, gb) = fisher_weighted(&model.encoder_b, sc, eps, &weights, want_grad)?;
                (
                    v,
                    Gradient {
                        a: DMatrix::zeros(model.p(), d),
                        b: gb,
                    },
                )
            }
        };

        match &self.family {
            LossFamily::NonUniformL2 { lambdas } => {
                for (k, &l) in lambdas.values().iter().enumerate() {
                    value += l * model.encoder_b.row(k).norm_squared();
                    if self.uses_decoder() {
                        value += l * model.decoder_a.column(k).norm_squared();
                    }
                    if want_grad {
                        let mut row = grad.b.row_mut(k);
                        row += model.encoder_b.row(k) * (2.0 * l);
                        if self.uses_decoder() {
                            grad.a.column_mut(k).axpy(2.0 * l, &model.decoder_a.column(k), 1.0);
                        }
                    }
                }
            }
            LossFamily::MonotoneL1 { alpha } => {
                let z = model.encode(x);
                value += alpha / n * monotone_l1_mass(&z);
                if want_grad {
                    // sign(0) = 0
                    let mut s = z.map(|v| {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    for (k, mut row) in s.row_iter_mut().enumerate() {
                        row *= alpha / n * (k + 1) as f64;
                    }
                    grad.b += s * x.transpose();
                }
            }
            _ => {}
        }
        Ok((value, grad))
    }
}

/// Hyperparameters consulted by [`Objective::from_id`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nesting: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
}

/// Weighted prefix reconstruction total and its gradient:
/// `∂A = -2 X Zᵀ W + 2 A (S∘G^Z)`, `∂B = 2 [(S∘G^A) Z - W AᵀX] Xᵀ`
/// with `W = diag(w)` and `S` the coupling matrix.
fn reconstruction(
    model: &LinearAutoencoder,
    x: &DMatrix<f64>,
    weights: &PrefixWeights,
    want_grad: bool,
) -> (f64, Gradient) {
    let (a, b) = (&model.decoder_a, &model.encoder_b);
    let z = b * x;
    let zt = z.transpose();
    let xzt = x * &zt;
    let at = a.transpose();
    let stats = SufficientStats {
        h: &at * &xzt,
        g_a: &at * a,
        g_z: &z * zt,
        x_norm_sq: x.norm_squared(),
    };
    let ell = prefix_losses_efficient(&stats);
    let value = weights.omega().iter().zip(&ell).map(|(w, l)| w * l).sum();
    if !want_grad {
        return (
            value,
            Gradient {
                a: DMatrix::zeros(0, 0),
                b: DMatrix::zeros(0, 0),
            },
        );
    }

    let s = weights.coupling();
    let w = weights.cumulative();
    let mut ga = xzt;
    for (k, mut col) in ga.column_iter_mut().enumerate() {
        col *= -2.0 * w[k];
    }
    ga += a * s.component_mul(&stats.g_z) * 2.0;

    let mut inner = s.component_mul(&stats.g_a) * &z;
    let mut at_x = at * x;
    for (k, mut row) in at_x.row_iter_mut().enumerate() {
        row *= w[k];
    }
    inner -= at_x;
    let gb = inner * x.transpose() * 2.0;
    (value, Gradient { a: ga, b: gb })
}

/// Closed-form gradient of `objective` at `model`.
pub fn gradient(objective: &Objective, model: &LinearAutoencoder, batch: Batch<'_>) -> Result<Gradient> {
    objective.value_and_gradient(model, batch).map(|(_, g)| g)
}
