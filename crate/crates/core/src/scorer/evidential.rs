//! Evidential trajectory regression: a head emitting Normal-Inverse-Gamma
//! parameters per coordinate, its likelihood loss, and sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use super::autodiff::{softplus, Matrix, Tape, Var};
use super::decoder::{mlp, mlp_on_tape, DecoderParams};
use super::features::{SceneFeatures, SCENE_FEATURES};
use super::losses::backward;
use super::train::{Optimizer, TrainingDataset};
use crate::error::{Error, Result};
use crate::geometry::{PlanningVocabulary, Trajectory, HORIZON};

/// Regressed coordinates: (x, y) per waypoint.
pub const REGRESSION_DIMS: usize = 2 * HORIZON;
pub const REGRESSION_LAYER_SIZES: [usize; 3] = [SCENE_FEATURES, 64, 4 * REGRESSION_DIMS];
/// Multiplier on the raw mean output so that unit-scale activations reach metric distances.
pub const GAMMA_SCALE: f64 = 10.0;
pub const EVIDENTIAL_REGULARIZER: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct EvidentialOutput {
    pub gamma: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl EvidentialOutput {
    pub fn dims(&self) -> usize {
        self.gamma.len()
    }

    /// Every coordinate with the same NIG parameters.
    pub fn uniform(dims: usize, gamma: f64, upsilon: f64, alpha: f64, beta: f64) -> Self {
        EvidentialOutput {
            gamma: vec![gamma; dims],
            upsilon: vec![upsilon; dims],
            alpha: vec![alpha; dims],
            beta: vec![beta; dims],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.gamma.len();
        if [self.upsilon.len(), self.alpha.len(), self.beta.len()].iter().any(|&l| l != n) {
            return Err(Error::ShapeMismatch { expected: format!("{n} per parameter"), actual: "ragged".into() });
        }
        for i in 0..n {
            let ok = self.gamma[i].is_finite() && self.upsilon[i] > 0.0 && self.alpha[i] > 1.0 && self.beta[i] > 0.0;
            if !ok || !self.beta[i].is_finite() || !self.alpha[i].is_finite() || !self.upsilon[i].is_finite() {
                return Err(Error::InvalidParameter(format!("NIG parameters out of range at dimension {i}")));
            }
        }
        Ok(())
    }

    /// The mean trajectory, with headings from consecutive displacements.
    pub fn trajectory(&self) -> Result<Trajectory> {
        vector_to_trajectory(&self.gamma)
    }
}

/// Interprets an 80-vector as 40 (x, y) waypoints.
pub fn vector_to_trajectory(v: &[f64]) -> Result<Trajectory> {
    if v.len() != REGRESSION_DIMS {
        return Err(Error::ShapeMismatch { expected: format!("{REGRESSION_DIMS}"), actual: format!("{}", v.len()) });
    }
    let pts: Vec<(f64, f64)> = v.chunks(2).map(|c| (c[0], c[1])).collect();
    Trajectory::from_positions(&pts)
}

pub fn trajectory_to_vector(t: &Trajectory) -> Vec<f64> {
    t.waypoints().iter().flat_map(|w| [w.x, w.y]).collect()
}

/// Weights of the regression head (scene features to NIG parameters).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionParams {
    pub net: DecoderParams,
}

impl RegressionParams {
    pub fn init(seed: u64) -> Self {
        RegressionParams { net: DecoderParams::init(&REGRESSION_LAYER_SIZES, seed) }
    }

    pub fn zeros() -> Self {
        RegressionParams { net: DecoderParams::zeros(&REGRESSION_LAYER_SIZES) }
    }
}

fn split_raw(raw: &[f64]) -> EvidentialOutput {
    let d = REGRESSION_DIMS;
    EvidentialOutput {
        gamma: raw[..d].iter().map(|z| GAMMA_SCALE * z).collect(),
        upsilon: raw[d..2 * d].iter().map(|&z| softplus(z)).collect(),
        alpha: raw[2 * d..3 * d].iter().map(|&z| 1.0 + softplus(z)).collect(),
        beta: raw[3 * d..].iter().map(|&z| softplus(z)).collect(),
    }
}

pub fn forward_regression(params: &RegressionParams, scene: &SceneFeatures) -> Result<EvidentialOutput> {
    let sizes = params.net.sizes();
    if sizes[0] != SCENE_FEATURES || *sizes.last().unwrap() != 4 * REGRESSION_DIMS {
        return Err(Error::ShapeMismatch {
            expected: format!("{SCENE_FEATURES} -> ... -> {}", 4 * REGRESSION_DIMS),
            actual: format!("{:?}", sizes),
        });
    }
    let raw = mlp(&params.net, &Matrix::from_vec(1, SCENE_FEATURES, scene.0.to_vec()));
    Ok(split_raw(&raw.data))
}

/// NIG parameter nodes, each `1 x 80`.
#[derive(Debug, Clone, Copy)]
pub struct EvidentialVars {
    pub gamma: Var,
    pub upsilon: Var,
    pub alpha: Var,
    pub beta: Var,
}

/// Splits a `1 x 320` raw output node into constrained NIG parameters.
pub fn evidential_on_tape(tape: &mut Tape, raw: Var) -> EvidentialVars {
    let d = REGRESSION_DIMS;
    let g = tape.columns(raw, 0, d);
    let u = tape.columns(raw, d, d);
    let a = tape.columns(raw, 2 * d, d);
    let b = tape.columns(raw, 3 * d, d);
    let gamma = tape.scale(g, GAMMA_SCALE);
    let upsilon = tape.softplus(u);
    let a = tape.softplus(a);
    let alpha = tape.offset(a, 1.0);
    let beta = tape.softplus(b);
    EvidentialVars { gamma, upsilon, alpha, beta }
}

fn nig_term(y: f64, g: f64, u: f64, a: f64, b: f64) -> f64 {
    let omega = 2.0 * b * (1.0 + u);
    let r = y - g;
    0.5 * (std::f64::consts::PI / u).ln() - a * omega.ln() + (a + 0.5) * (r * r * u + omega).ln() + ln_gamma(a)
        - ln_gamma(a + 0.5)
        + EVIDENTIAL_REGULARIZER * r.abs() * (2.0 * u + a)
}

/// Summed NIG negative log-likelihood plus the evidence regularizer.
pub fn evidential_loss(ev: &EvidentialOutput, target: &[f64]) -> Result<f64> {
    if target.len() != ev.dims() {
        return Err(Error::ShapeMismatch { expected: format!("{}", ev.dims()), actual: format!("{}", target.len()) });
    }
    Ok((0..ev.dims())
        .map(|i| nig_term(target[i], ev.gamma[i], ev.upsilon[i], ev.alpha[i], ev.beta[i]))
        .sum())
}

pub fn evidential_loss_on_tape(tape: &mut Tape, ev: EvidentialVars, target: &[f64]) -> Var {
    let y = tape.constant(Matrix::from_vec(1, target.len(), target.to_vec()));
    let r = tape.sub(y, ev.gamma);
    // omega = 2 beta (1 + upsilon)
    let one_plus_u = tape.offset(ev.upsilon, 1.0);
    let omega = tape.mul(ev.beta, one_plus_u);
    let omega = tape.scale(omega, 2.0);
    let ln_u = tape.ln(ev.upsilon, 0.0);
    let t1 = tape.scale(ln_u, -0.5);
    let t1 = tape.offset(t1, 0.5 * std::f64::consts::PI.ln());
    let ln_omega = tape.ln(omega, 0.0);
    let t2 = tape.mul(ev.alpha, ln_omega);
    let r2 = tape.square(r);
    let r2u = tape.mul(r2, ev.upsilon);
    let inner = tape.add(r2u, omega);
    let ln_inner = tape.ln(inner, 0.0);
    let a_half = tape.offset(ev.alpha, 0.5);
    let t3 = tape.mul(a_half, ln_inner);
    let lg_a = tape.ln_gamma(ev.alpha);
    let lg_ah = tape.ln_gamma(a_half);
    let t4 = tape.sub(lg_a, lg_ah);
    let abs_r = tape.abs(r);
    let two_u = tape.scale(ev.upsilon, 2.0);
    let evidence = tape.add(two_u, ev.alpha);
    let reg = tape.mul(abs_r, evidence);
    let reg = tape.scale(reg, EVIDENTIAL_REGULARIZER);
    let s = tape.sub(t1, t2);
    let s = tape.add(s, t3);
    let s = tape.add(s, t4);
    let s = tape.add(s, reg);
    tape.sum(s)
}

/// Draws `n` vectors: per dimension `sigma^2 ~ InvGamma(alpha, beta)` then
/// `mu ~ N(gamma, sigma^2 / upsilon)`.
pub fn sample_nig(ev: &EvidentialOutput, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    Ok(sample_nig_with_variance(ev, n, seed)?.into_iter().map(|(mu, _)| mu).collect())
}

/// Like [`sample_nig`] but also returns the drawn variances.
pub fn sample_nig_with_variance(ev: &EvidentialOutput, n: usize, seed: u64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    ev.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gammas: Vec<Gamma<f64>> = (0..ev.dims())
        .map(|i| Gamma::new(ev.alpha[i], 1.0 / ev.beta[i]).map_err(|e| Error::InvalidParameter(e.to_string())))
        .collect::<Result<_>>()?;
    Ok((0..n)
        .map(|_| {
            let mut mu = Vec::with_capacity(ev.dims());
            let mut var = Vec::with_capacity(ev.dims());
            for i in 0..ev.dims() {
                let sigma2 = 1.0 / gammas[i].sample(&mut rng);
                let z: f64 = StandardNormal.sample(&mut rng);
                mu.push(ev.gamma[i] + (sigma2 / ev.upsilon[i]).sqrt() * z);
                var.push(sigma2);
            }
            (mu, var)
        })
        .collect())
}

/// Trains the regression head toward each record's best vocabulary trajectory.
pub fn train_regression(
    data: &TrainingDataset,
    vocab: &PlanningVocabulary,
    epochs: usize,
    lr: f64,
    seed: u64,
    optimizer: Optimizer,
) -> Result<RegressionParams> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut params = RegressionParams::init(seed);
    let targets: Vec<Vec<f64>> = data.records.iter().map(|r| trajectory_to_vector(vocab.get(r.human))).collect();
    let n = params.net.len();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    for step in 1..=epochs as i32 {
        let grads: Vec<Vec<f64>> = (0..data.len())
            .into_par_iter()
            .map(|i| {
                backward(&params.net, |tape, vars| {
                    let x = tape.constant(Matrix::from_vec(1, SCENE_FEATURES, data.records[i].features.0.to_vec()));
                    let raw = mlp_on_tape(tape, vars, x);
                    let ev = evidential_on_tape(tape, raw);
                    Ok(evidential_loss_on_tape(tape, ev, &targets[i]))
                })
                .map(|(_, g)| g)
            })
            .collect::<Result<_>>()?;
        let mut mean = vec![0.0; n];
        for g in &grads {
            for (a, b) in mean.iter_mut().zip(g) {
                *a += b / data.len() as f64;
            }
        }
        let direction = match optimizer {
            Optimizer::GradientDescent => mean,
            Optimizer::Adam { beta1, beta2, eps } => (0..n)
                .map(|j| {
                    m[j] = beta1 * m[j] + (1.0 - beta1) * mean[j];
                    v[j] = beta2 * v[j] + (1.0 - beta2) * mean[j] * mean[j];
                    (m[j] / (1.0 - beta1.powi(step))) / ((v[j] / (1.0 - beta2.powi(step))).sqrt() + eps)
                })
                .collect(),
        };
        params.net = params.net.stepped(&direction, lr)?;
    }
    Ok(params)
}
