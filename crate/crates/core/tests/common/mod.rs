#![allow(dead_code)]

use nalgebra::DMatrix;
use prefix_bases::classify::{backward, classifier_loss, forward, ClassifierLoss, LinearHead, MlpEncoder, Mode};
use prefix_bases::losses::{Batch, Hyperparameters, LinearAutoencoder, Objective};
use prefix_bases::oracles::{scatter_of, ScatterPair};
use prefix_bases::rng::{gaussian_matrix, rng_from_seed, Rng};
use rand::Rng as _;

/// Central-difference step for the linear objectives.
pub const LINEAR_STEP: f64 = 1e-6;
/// Central-difference step for the MLP objectives.
pub const MLP_STEP: f64 = 1e-5;

pub const LINEAR_FAMILIES: [&str; 10] = [
    "lae",
    "fp_mrl",
    "s_mrl",
    "nu_l2",
    "md_l1",
    "fisher",
    "fisher_fp_mrl",
    "fisher_s_mrl",
    "fisher_nu_l2",
    "fisher_md_l1",
];

/// `‖g - h‖ / max(‖g‖, ‖h‖)`, or 0 when both vanish.
pub fn rel_err(g: &[f64], h: &[f64]) -> f64 {
    let diff: f64 = g.iter().zip(h).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = g
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(h.iter().map(|v| v * v).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub struct LinearInstance {
    pub objective: Objective,
    pub model: LinearAutoencoder,
    pub x: DMatrix<f64>,
    pub scatter: ScatterPair,
}

impl LinearInstance {
    pub fn batch(&self) -> Batch<'_> {
        Batch::with_scatter(&self.x, &self.scatter)
    }
}

/// Random small instance of a loss family: `p = 6`, `d = 3`, `n = 30`,
/// three classes, random prefix weights, nesting `{1, 3}`, increasing λ.
pub fn linear_instance(id: &str, rng: &mut Rng) -> LinearInstance {
    let (p, d, n, c) = (6, 3, 30, 3);
    let mut x = gaussian_matrix(p, n, rng);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col[labels[j]] += 1.5;
    }
    let mut lambdas = vec![rng.random_range(0.05..0.2)];
    for _ in 1..d {
        let last = *lambdas.last().unwrap();
        lambdas.push(last + rng.random_range(0.05..0.3));
    }
    let hyper = Hyperparameters {
        eps: Some(1e-2),
        alpha: Some(rng.random_range(0.1..1.0)),
        lambdas: Some(lambdas),
        nesting: Some(vec![1, 3]),
        omega: Some((0..d).map(|_| rng.random_range(0.5..2.0)).collect()),
    };
    let objective = Objective::from_id(id, d, &hyper).expect("valid family");
    let model = LinearAutoencoder::new(gaussian_matrix(d, p, rng), gaussian_matrix(p, d, rng), false).unwrap();
    let scatter = scatter_of(&x, &labels, c).unwrap();
    LinearInstance {
        objective,
        model,
        x,
        scatter,
    }
}

/// Relative error of the analytic gradient against central differences
/// over every entry of `B` (and `A` when the objective uses it).
pub fn linear_gradient_error(inst: &LinearInstance, h: f64) -> f64 {
    let (_, g) = inst.objective.value_and_gradient(&inst.model, inst.batch()).unwrap();
    let mut analytic: Vec<f64> = g.b.iter().copied().collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    let eval = |m: &LinearAutoencoder| inst.objective.value(m, inst.batch()).unwrap();
    for i in 0..inst.model.encoder_b.len() {
        let mut plus = inst.model.clone();
        plus.encoder_b[i] += h;
        let mut minus = inst.model.clone();
        minus.encoder_b[i] -= h;
        numeric.push((eval(&plus) - eval(&minus)) / (2.0 * h));
    }
    if inst.objective.uses_decoder() {
        analytic.extend(g.a.iter());
        for i in 0..inst.model.decoder_a.len() {
            let mut plus = inst.model.clone();
            plus.decoder_a[i] += h;
            let mut minus = inst.model.clone();
            minus.decoder_a[i] -= h;
            numeric.push((eval(&plus) - eval(&minus)) / (2.0 * h));
        }
    }
    rel_err(&analytic, &numeric)
}

/// Worst relative error over `count` random instances of a family.
pub fn worst_linear_error(id: &str, count: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| linear_gradient_error(&linear_instance(id, &mut rng), LINEAR_STEP))
        .fold(0.0, f64::max)
}

/// Relative error of the classifier backward pass on `p = 6`, hidden 4,
/// `d = 3`, two classes, a batch of 5, with a fixed dropout mask.
pub fn mlp_gradient_error(loss: &ClassifierLoss, seed: u64, h: f64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let mut enc = MlpEncoder::new(6, (4, 4), 3, 0.1, &mut rng);
    // nonzero biases keep every code off the norm floor, where z jumps
    enc.b1 = gaussian_matrix(4, 1, &mut rng) * 0.5;
    enc.b2 = gaussian_matrix(4, 1, &mut rng) * 0.5;
    enc.b3 = gaussian_matrix(3, 1, &mut rng) * 0.5;
    let head = LinearHead::new(2, 3, &mut rng);
    let x = gaussian_matrix(6, 5, &mut rng);
    let labels = vec![0, 1, 1, 0, 1];
    let mode = Mode::Train(seed ^ 0x5eed);
    let fw = forward(&enc, &x, mode);
    assert!(fw.floored.is_empty(), "degenerate instance");
    let (_, g) = backward(&enc, &head, &fw, &labels, loss).unwrap();
    let analytic: Vec<f64> = g.as_refs().iter().flat_map(|m| m.iter().copied()).collect();

    let eval = |enc: &MlpEncoder, head: &LinearHead| {
        let z = forward(enc, &x, mode).z;
        classifier_loss(loss, &z, head, &labels, false).unwrap().0
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    for which in 0..8 {
        let len = match which {
            0 => enc.w1.len(),
            1 => enc.b1.len(),
            2 => enc.w2.len(),
            3 => enc.b2.len(),
            4 => enc.w3.len(),
            5 => enc.b3.len(),
            6 => head.w.len(),
            _ => head.b.len(),
        };
        for i in 0..len {
            let value_at = |delta: f64| {
                let (mut e, mut hd) = (enc.clone(), head.clone());
                let m = match which {
                    0 => &mut e.w1,
                    1 => &mut e.b1,
                    2 => &mut e.w2,
                    3 => &mut e.b2,
                    4 => &mut e.w3,
                    5 => &mut e.b3,
                    6 => &mut hd.w,
                    _ => &mut hd.b,
                };
                m[i] += delta;
                eval(&e, &hd)
            };
            numeric.push((value_at(h) - value_at(-h)) / (2.0 * h));
        }
    }
    rel_err(&analytic, &numeric)
}

/// Minimum of `Σ ω_m ℓ_m` found by many gradient-descent restarts from
/// random `(A, B)`; used to test a lower bound from above.
pub fn brute_force_weighted_minimum(x: &DMatrix<f64>, d: usize, omega: &[f64], restarts: usize, seed: u64) -> f64 {
    let p = x.nrows();
    let hyper = Hyperparameters {
        omega: Some(omega.to_vec()),
        ..Hyperparameters::default()
    };
    let objective = Objective::from_id("fp_mrl", d, &hyper).unwrap();
    let mut rng = rng_from_seed(seed);
    let scale = x.norm_squared();
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        let mut model =
            LinearAutoencoder::new(gaussian_matrix(d, p, &mut rng), gaussian_matrix(p, d, &mut rng), false).unwrap();
        let mut lr = 0.05 / scale.max(1e-12);
        let mut value = objective.value(&model, Batch::new(x)).unwrap();
        for _ in 0..4000 {
            let (_, g) = objective.value_and_gradient(&model, Batch::new(x)).unwrap();
            let mut trial = model.clone();
            trial.encoder_b -= &g.b * lr;
            trial.decoder_a -= &g.a * lr;
            let v = objective.value(&trial, Batch::new(x)).unwrap();
            if v <= value {
                model = trial;
                value = v;
                lr *= 1.2;
            } else {
                lr *= 0.5;
            }
        }
        best = best.min(value);
    }
    best
}
