//! The score decoder: a small tanh MLP mapping (scene, trajectory) features to five
//! score features in (0, 1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autodiff::{sigmoid, Matrix, Tape, Var};
use super::features::{input_row, SceneFeatures, TrajectoryFeatures, INPUT_FEATURES};
use crate::error::{Error, Result};

pub const SCORE_FEATURES: usize = 5;
pub const DEFAULT_LAYER_SIZES: [usize; 4] = [INPUT_FEATURES, 64, 64, SCORE_FEATURES];

/// Column indices of the score features, matching [`crate::worldsim::SubScores`].
pub mod col {
    pub const NC: usize = 0;
    pub const DAC: usize = 1;
    pub const EP: usize = 2;
    pub const C: usize = 3;
    pub const TTC: usize = 4;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// Trainable decoder weights. Flattened layout: per layer, the row-major
/// `in x out` weight matrix followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    sizes: Vec<usize>,
    layers: Vec<Dense>,
}

impl DecoderParams {
    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Dense { weight: Matrix::zeros(w[0], w[1]), bias: Matrix::zeros(1, w[1]) })
            .collect();
        DecoderParams { sizes: sizes.to_vec(), layers }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = DecoderParams::zeros(sizes);
        for layer in &mut p.layers {
            let limit = (6.0 / (layer.weight.rows + layer.weight.cols) as f64).sqrt();
            for w in &mut layer.weight.data {
                *w = rng.random_range(-limit..limit);
            }
        }
        p
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for l in &self.layers {
            out.extend_from_slice(&l.weight.data);
            out.extend_from_slice(&l.bias.data);
        }
        out
    }

    pub fn unflatten(sizes: &[usize], flat: &[f64]) -> Result<Self> {
        let mut p = DecoderParams::zeros(sizes);
        if flat.len() != p.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", p.len()),
                actual: format!("{}", flat.len()),
            });
        }
        let mut at = 0;
        for l in &mut p.layers {
            let n = l.weight.data.len();
            l.weight.data.copy_from_slice(&flat[at..at + n]);
            at += n;
            let n = l.bias.data.len();
            l.bias.data.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(p)
    }

    /// `self - step * direction`, with `direction` in flattened layout.
    pub fn stepped(&self, direction: &[f64], step: f64) -> Result<Self> {
        let flat: Vec<f64> = self
            .flatten()
            .iter()
            .zip(direction)
            .map(|(p, d)| p - step * d)
            .collect();
        if direction.len() != flat.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} gradient entries", self.len()),
                actual: format!("{}", direction.len()),
            });
        }
        DecoderParams::unflatten(&self.sizes, &flat)
    }

    fn check_io(&self) -> Result<()> {
        let (first, last) = (self.sizes[0], *self.sizes.last().unwrap());
        if first != INPUT_FEATURES || last != SCORE_FEATURES {
            return Err(Error::ShapeMismatch {
                expected: format!("{INPUT_FEATURES} -> ... -> {SCORE_FEATURES}"),
                actual: format!("{first} -> ... -> {last}"),
            });
        }
        Ok(())
    }

    /// Registers every weight and bias as a parameter leaf.
    pub fn register(&self, tape: &mut Tape) -> DecoderVars {
        DecoderVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.parameter(l.weight.clone()), tape.parameter(l.bias.clone())))
                .collect(),
        }
    }
}

/// Tape handles of the decoder parameters.
#[derive(Debug, Clone)]
pub struct DecoderVars {
    pub layers: Vec<(Var, Var)>,
}

impl DecoderVars {
    /// Gradient in flattened layout.
    pub fn gradient(&self, grads: &super::autodiff::Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for &(w, b) in &self.layers {
            out.extend(grads.wrt(w).data);
            out.extend(grads.wrt(b).data);
        }
        out
    }
}

/// Frozen per-feature standardization applied before the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNormalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputNormalizer {
    pub fn identity() -> Self {
        InputNormalizer { mean: vec![0.0; INPUT_FEATURES], scale: vec![1.0; INPUT_FEATURES] }
    }

    /// Fits mean and inverse standard deviation; constant features keep scale 1.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64; INPUT_FEATURES]>) -> Self {
        let mut n = 0usize;
        let mut sum = [0.0; INPUT_FEATURES];
        let mut sq = [0.0; INPUT_FEATURES];
        for r in rows {
            n += 1;
            for j in 0..INPUT_FEATURES {
                sum[j] += r[j];
                sq[j] += r[j] * r[j];
            }
        }
        if n == 0 {
            return InputNormalizer::identity();
        }
        let mut out = InputNormalizer::identity();
        for j in 0..INPUT_FEATURES {
            let mean = sum[j] / n as f64;
            let var = (sq[j] / n as f64 - mean * mean).max(0.0);
            out.mean[j] = mean;
            out.scale[j] = if var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 };
        }
        out
    }

    pub fn len(&self) -> usize {
        2 * INPUT_FEATURES
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn apply(&self, row: &[f64; INPUT_FEATURES]) -> [f64; INPUT_FEATURES] {
        let mut out = [0.0; INPUT_FEATURES];
        for j in 0..INPUT_FEATURES {
            out[j] = (row[j] - self.mean[j]) * self.scale[j];
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.mean.iter().chain(&self.scale).copied().collect()
    }
}

/// Planner parameters: the frozen input stage and the trainable decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerParams {
    pub normalizer: InputNormalizer,
    pub decoder: DecoderParams,
    pub seed: u64,
}

impl PlannerParams {
    pub fn new(decoder: DecoderParams, seed: u64) -> Self {
        PlannerParams { normalizer: InputNormalizer::identity(), decoder, seed }
    }

    /// Normalized decoder inputs, one row per trajectory.
    pub fn inputs(&self, scene: &SceneFeatures, trajs: &[TrajectoryFeatures]) -> Matrix {
        let mut data = Vec::with_capacity(trajs.len() * INPUT_FEATURES);
        for t in trajs {
            data.extend_from_slice(&self.normalizer.apply(&input_row(scene, t)));
        }
        Matrix::from_vec(trajs.len(), INPUT_FEATURES, data)
    }
}

/// Predicted score features, one row per trajectory id.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub ids: Vec<usize>,
    pub rows: Vec<[f64; SCORE_FEATURES]>,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sub-table restricted to the given row positions.
    pub fn select(&self, positions: &[usize]) -> ScoreTable {
        ScoreTable {
            ids: positions.iter().map(|&p| self.ids[p]).collect(),
            rows: positions.iter().map(|&p| self.rows[p]).collect(),
        }
    }

    pub fn aggregated(&self) -> Vec<f64> {
        self.rows.iter().map(aggregate).collect()
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.rows.len(), SCORE_FEATURES, self.rows.iter().flatten().copied().collect())
    }
}

/// Runs a tanh MLP on the tape and returns the linear output layer.
pub fn mlp_on_tape(tape: &mut Tape, vars: &DecoderVars, inputs: Var) -> Var {
    let mut h = inputs;
    let last = vars.layers.len() - 1;
    for (i, &(w, b)) in vars.layers.iter().enumerate() {
        let z = tape.matmul(h, w);
        let z = tape.add_row(z, b);
        h = if i == last { z } else { tape.tanh(z) };
    }
    h
}

/// Runs the decoder on the tape; returns `(logits, probabilities)`.
pub fn decode_on_tape(tape: &mut Tape, vars: &DecoderVars, inputs: Var) -> (Var, Var) {
    let logits = mlp_on_tape(tape, vars, inputs);
    let probs = tape.sigmoid(logits);
    (logits, probs)
}

/// Tanh MLP with a linear output layer, evaluated without a tape.
pub fn mlp(params: &DecoderParams, inputs: &Matrix) -> Matrix {
    let mut h = inputs.clone();
    let last = params.layers.len() - 1;
    for (i, l) in params.layers.iter().enumerate() {
        let mut z = h.matmul(&l.weight);
        for r in 0..z.rows {
            for (x, b) in z.data[r * z.cols..(r + 1) * z.cols].iter_mut().zip(&l.bias.data) {
                *x += b;
            }
        }
        if i != last {
            z.data.iter_mut().for_each(|x| *x = x.tanh());
        }
        h = z;
    }
    h
}

fn decode(decoder: &DecoderParams, inputs: &Matrix) -> Matrix {
    let mut out = mlp(decoder, inputs);
    out.data.iter_mut().for_each(|x| *x = sigmoid(*x));
    out
}

/// Scores a batch of trajectories for one scene.
pub fn forward(
    params: &PlannerParams,
    scene: &SceneFeatures,
    trajs: &[TrajectoryFeatures],
    ids: &[usize],
) -> Result<ScoreTable> {
    params.decoder.check_io()?;
    if trajs.len() != ids.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} ids", trajs.len()),
            actual: format!("{}", ids.len()),
        });
    }
    let out = decode(&params.decoder, &params.inputs(scene, trajs));
    let rows = (0..out.rows)
        .map(|r| {
            let mut row = [0.0; SCORE_FEATURES];
            row.copy_from_slice(out.row(r));
            row
        })
        .collect();
    Ok(ScoreTable { ids: ids.to_vec(), rows })
}

/// Final score `nc * dac * (5 ttc + 2 c + 5 ep) / 12` of one predicted row.
pub fn aggregate(row: &[f64; SCORE_FEATURES]) -> f64 {
    row[col::NC] * row[col::DAC] * (5.0 * row[col::TTC] + 2.0 * row[col::C] + 5.0 * row[col::EP]) / 12.0
}

/// Aggregated final scores of every row of a `B x 5` score node, as a `B x 1` node.
pub fn aggregate_on_tape(tape: &mut Tape, scores: Var) -> Var {
    let nc = tape.column(scores, col::NC);
    let dac = tape.column(scores, col::DAC);
    let ep = tape.column(scores, col::EP);
    let c = tape.column(scores, col::C);
    let ttc = tape.column(scores, col::TTC);
    let ttc = tape.scale(ttc, 5.0 / 12.0);
    let c = tape.scale(c, 2.0 / 12.0);
    let ep = tape.scale(ep, 5.0 / 12.0);
    let weighted = tape.add(ttc, c);
    let weighted = tape.add(weighted, ep);
    let gate = tape.mul(nc, dac);
    tape.mul(gate, weighted)
}

/// Id of the row with the largest aggregated score; ties go to the lower id.
pub fn select_trajectory(table: &ScoreTable) -> Option<usize> {
    table
        .rows
        .iter()
        .zip(&table.ids)
        .map(|(r, &id)| (aggregate(r), id))
        .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, id)| id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::features::{SCENE_FEATURES, TRAJECTORY_FEATURES};
    use rand::Rng;

    fn scene_feats(seed: u64) -> SceneFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SceneFeatures(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
    }

    fn traj_feats(n: usize, seed: u64) -> Vec<TrajectoryFeatures> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| TrajectoryFeatures(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))).collect()
    }

    #[test]
    fn zero_network_outputs_one_half() {
        let p = PlannerParams::new(DecoderParams::zeros(&DEFAULT_LAYER_SIZES), 0);
        let t = forward(&p, &scene_feats(0), &traj_feats(3, 1), &[0, 1, 2]).unwrap();
        assert!(t.rows.iter().flatten().all(|&x| x == 0.5));
    }

    #[test]
    fn batch_equals_single_rows() {
        let p = PlannerParams::new(DecoderParams::init(&DEFAULT_LAYER_SIZES, 3), 3);
        let s = scene_feats(4);
        let trajs = traj_feats(7, 5);
        let ids: Vec<usize> = (0..7).collect();
        let batch = forward(&p, &s, &trajs, &ids).unwrap();
        for i in 0..7 {
            let single = forward(&p, &s, &trajs[i..=i], &[i]).unwrap();
            for (a, b) in single.rows[0].iter().zip(&batch.rows[i]) {
                assert!((a - b).abs() <= 1e-12);
                assert!(*a > 0.0 && *a < 1.0);
            }
        }
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let p = PlannerParams::new(DecoderParams::init(&DEFAULT_LAYER_SIZES, 8), 8);
        let s = scene_feats(1);
        let trajs = traj_feats(5, 2);
        let plain = forward(&p, &s, &trajs, &[0, 1, 2, 3, 4]).unwrap();
        let mut tape = Tape::new();
        let vars = p.decoder.register(&mut tape);
        let x = tape.constant(p.inputs(&s, &trajs));
        let (_, probs) = decode_on_tape(&mut tape, &vars, x);
        assert_eq!(tape.value(probs), &plain.to_matrix());
        let agg = aggregate_on_tape(&mut tape, probs);
        for (a, b) in tape.value(agg).data.iter().zip(plain.aggregated()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = PlannerParams::new(DecoderParams::zeros(&[10, 4, 5]), 0);
        assert!(matches!(
            forward(&p, &scene_feats(0), &traj_feats(1, 0), &[0]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(DecoderParams::unflatten(&DEFAULT_LAYER_SIZES, &[0.0; 3]).is_err());
    }

    #[test]
    fn aggregate_values() {
        assert_eq!(aggregate(&[1.0; 5]), 1.0);
        assert_eq!(aggregate(&[0.0, 1.0, 1.0, 1.0, 1.0]), 0.0);
        // (nc, dac, ep, c, ttc) = (1, 1, 0.8, 1, 0.5)
        assert!((aggregate(&[1.0, 1.0, 0.8, 1.0, 0.5]) - 8.5 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn selection_ties_and_single_rows() {
        let t = ScoreTable { ids: vec![4], rows: vec![[0.1; 5]] };
        assert_eq!(select_trajectory(&t), Some(4));
        let t = ScoreTable { ids: vec![9, 3, 5], rows: vec![[0.9; 5], [0.9; 5], [0.2; 5]] };
        assert_eq!(select_trajectory(&t), Some(3));
        assert_eq!(select_trajectory(&ScoreTable { ids: vec![], rows: vec![] }), None);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn flatten_round_trip(seed in any::<u64>()) {
            let p = DecoderParams::init(&DEFAULT_LAYER_SIZES, seed);
            let back = DecoderParams::unflatten(p.sizes(), &p.flatten()).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn selection_matches_brute_force_and_is_monotone_invariant(
            rows in proptest::collection::vec(proptest::array::uniform5(0.0f64..1.0), 1..20)
        ) {
            let ids: Vec<usize> = (0..rows.len()).map(|i| (i * 7) % 23).collect();
            let t = ScoreTable { ids: ids.clone(), rows: rows.clone() };
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for (r, &id) in rows.iter().zip(&ids) {
                let a = aggregate(r);
                if a > best.0 || (a == best.0 && id < best.1) {
                    best = (a, id);
                }
            }
            prop_assert_eq!(select_trajectory(&t), Some(best.1));
            // strictly increasing transform of all final scores keeps the argmax
            let transformed = ids.iter().zip(&rows).map(|(&id, r)| (aggregate(r).exp() * 3.0 + 1.0, id))
                .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1))).unwrap().1;
            prop_assert_eq!(transformed, best.1);
        }
    }

    #[test]
    fn feature_widths_add_up() {
        assert_eq!(SCENE_FEATURES + TRAJECTORY_FEATURES, INPUT_FEATURES);
    }
}
