//! Differentiable versions of the scoring-planner measures.

use super::{semantic_assignment, CandidateSet, Measure, UncertaintyConfig, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::geometry::ClusterAssignment;
use crate::scorer::autodiff::{Matrix, Tape, Var};
use crate::scorer::{aggregate_on_tape, SCORE_FEATURES};

/// `-sum(p ln p)` of a nonnegative mass node normalized by its total.
pub fn normalized_entropy_on_tape(tape: &mut Tape, mass: Var) -> Result<Var> {
    let total = tape.sum(mass);
    if !(tape.scalar_value(total) > 0.0) {
        return Err(Error::AllZeroScores);
    }
    let p = tape.div_scalar(mass, total);
    let ln_p = tape.ln(p, LOG_FLOOR);
    let plnp = tape.mul(p, ln_p);
    let s = tape.sum(plnp);
    Ok(tape.scale(s, -1.0))
}

/// Per-cluster sums of an `M x 1` node as a `5 x 1` node.
fn cluster_sums(tape: &mut Tape, values: Var, assignment: &ClusterAssignment) -> Var {
    let m = assignment.len();
    let mut indicator = Matrix::zeros(5, m);
    for (j, l) in assignment.labels().iter().enumerate() {
        indicator.data[l.index() * m + j] = 1.0;
    }
    let ind = tape.constant(indicator);
    tape.matmul(ind, values)
}

pub fn cluster_entropy_on_tape(tape: &mut Tape, probs: Var, assignment: &ClusterAssignment) -> Result<Var> {
    let agg = aggregate_on_tape(tape, probs);
    let sums = cluster_sums(tape, agg, assignment);
    normalized_entropy_on_tape(tape, sums)
}

pub fn full_entropy_on_tape(tape: &mut Tape, probs: Var) -> Result<Var> {
    let agg = aggregate_on_tape(tape, probs);
    normalized_entropy_on_tape(tape, agg)
}

pub fn kl_divergence_on_tape(tape: &mut Tape, probs: Var) -> Var {
    let mut dists = Vec::with_capacity(SCORE_FEATURES);
    let mut logs = Vec::with_capacity(SCORE_FEATURES);
    for j in 0..SCORE_FEATURES {
        let col = tape.column(probs, j);
        let total = tape.sum(col);
        let floored = if tape.scalar_value(total) < LOG_FLOOR {
            tape.constant(Matrix::scalar(LOG_FLOOR))
        } else {
            total
        };
        let p = tape.div_scalar(col, floored);
        logs.push(tape.ln(p, LOG_FLOOR));
        dists.push(p);
    }
    let mut acc = tape.constant(Matrix::scalar(0.0));
    for i in 0..SCORE_FEATURES {
        for j in 0..SCORE_FEATURES {
            if i != j {
                let diff = tape.sub(logs[i], logs[j]);
                let terms = tape.mul(dists[i], diff);
                let kl = tape.sum(terms);
                acc = tape.add(acc, kl);
            }
        }
    }
    acc
}

/// The configured measure as a scalar node, given the `M x 5` score node of the candidates.
pub fn uncertainty_on_tape(
    tape: &mut Tape,
    probs: Var,
    candidates: &CandidateSet,
    cfg: &UncertaintyConfig,
) -> Result<Var> {
    match cfg.measure {
        Measure::ClusterEntropy => cluster_entropy_on_tape(tape, probs, &candidates.assignment),
        Measure::FullEntropy => full_entropy_on_tape(tape, probs),
        Measure::SemanticEntropy => {
            let v = tape.value(probs);
            let rows: Vec<&[f64]> = (0..v.rows).map(|r| v.row(r)).collect();
            let assignment = semantic_assignment(&rows, &candidates.anchors, &candidates.trajectories, cfg.tau);
            cluster_entropy_on_tape(tape, probs, &assignment)
        }
        Measure::KlDivergence => Ok(kl_divergence_on_tape(tape, probs)),
        m => Err(Error::InvalidParameter(format!("{m} is not differentiable through a score decoder"))),
    }
}
