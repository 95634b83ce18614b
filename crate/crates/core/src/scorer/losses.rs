//! Training objectives and the generic reverse-mode gradient entry point.

use super::autodiff::{Matrix, Tape, Var};
use super::decoder::{DecoderParams, DecoderVars, ScoreTable, SCORE_FEATURES};
use crate::error::{Error, Result};
use crate::geometry::{trajectory_l2, PlanningVocabulary, Trajectory};
use crate::worldsim::SubScores;

/// Probability floor inside the cross-entropy logarithms.
pub const PROB_FLOOR: f64 = 1e-12;
/// Softmax temperature (meters) of the imitation target.
pub const IMITATION_TEMPERATURE: f64 = 2.0;

fn check_rows(pred: usize, expert: usize) -> Result<()> {
    if pred != expert {
        return Err(Error::ShapeMismatch {
            expected: format!("{pred} expert rows"),
            actual: format!("{expert}"),
        });
    }
    if pred == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// Mean binary cross-entropy over trajectories and the five features.
pub fn kd_loss(pred: &ScoreTable, expert: &[SubScores]) -> Result<f64> {
    check_rows(pred.len(), expert.len())?;
    let mut total = 0.0;
    for (row, e) in pred.rows.iter().zip(expert) {
        for (&p, y) in row.iter().zip(e.to_array()) {
            total -= y * p.max(PROB_FLOOR).ln() + (1.0 - y) * (1.0 - p).max(PROB_FLOOR).ln();
        }
    }
    Ok(total / (pred.len() * SCORE_FEATURES) as f64)
}

/// Expert targets as a `k x 5` matrix.
pub fn expert_matrix(expert: &[SubScores]) -> Matrix {
    Matrix::from_vec(expert.len(), SCORE_FEATURES, expert.iter().flat_map(|e| e.to_array()).collect())
}

pub fn kd_loss_on_tape(tape: &mut Tape, probs: Var, targets: &Matrix) -> Var {
    let y = tape.constant(targets.clone());
    let one_minus_y = tape.constant(Matrix { data: targets.data.iter().map(|t| 1.0 - t).collect(), ..targets.clone() });
    let log_p = tape.ln(probs, PROB_FLOOR);
    let q = tape.scale(probs, -1.0);
    let q = tape.offset(q, 1.0);
    let log_q = tape.ln(q, PROB_FLOOR);
    let a = tape.mul(y, log_p);
    let b = tape.mul(one_minus_y, log_q);
    let s = tape.add(a, b);
    let m = tape.mean(s);
    tape.scale(m, -1.0)
}

/// Soft target over the vocabulary: `softmax(-l2(t_j, human) / lambda)`.
pub fn imitation_target(vocab: &PlanningVocabulary, human: &Trajectory, temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = vocab.iter().map(|t| -trajectory_l2(t, human) / temperature).collect();
    softmax(&logits)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Cross-entropy of `target` against the softmax of the final scores.
pub fn cross_entropy_with_target(final_scores: &[f64], target: &[f64]) -> Result<f64> {
    check_rows(final_scores.len(), target.len())?;
    Ok(-target.iter().zip(log_softmax(final_scores)).map(|(q, l)| q * l).sum::<f64>())
}

/// Distance-based cross-entropy between the vocabulary scores and a human trajectory.
pub fn imitation_loss(final_scores: &[f64], vocab: &PlanningVocabulary, human: &Trajectory) -> Result<f64> {
    cross_entropy_with_target(final_scores, &imitation_target(vocab, human, IMITATION_TEMPERATURE))
}

/// `final_scores` is a `k x 1` node; `target` a length-k distribution.
pub fn imitation_loss_on_tape(tape: &mut Tape, final_scores: Var, target: &[f64]) -> Var {
    let q = tape.constant(Matrix::column(target.to_vec()));
    let l = tape.log_softmax(final_scores);
    let prod = tape.mul(q, l);
    let s = tape.sum(prod);
    tape.scale(s, -1.0)
}

pub fn loss_total(kd: f64, imitation: f64) -> f64 {
    kd + imitation
}

/// Runs `loss` on a fresh tape with the decoder registered as parameters and
/// returns the loss value and its gradient in flattened layout.
pub fn backward<F>(params: &DecoderParams, loss: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Tape, &DecoderVars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = loss(&mut tape, &vars)?;
    let value = tape.scalar_value(out);
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let grads = tape.backward(out);
    Ok((value, vars.gradient(&grads)))
}
