//! Offline training of the score decoder by knowledge distillation plus imitation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::autodiff::{Matrix, Tape, Var};
use super::decoder::{
    aggregate_on_tape, decode_on_tape, DecoderParams, DecoderVars, InputNormalizer, PlannerParams,
    DEFAULT_LAYER_SIZES,
};
use super::features::{encode_scene, encode_trajectory, input_row, SceneFeatures, TrajectoryFeatures};
use super::losses::{backward, expert_matrix, imitation_target, imitation_loss_on_tape, kd_loss_on_tape, IMITATION_TEMPERATURE};
use crate::error::{Error, Result};
use crate::geometry::PlanningVocabulary;
use crate::worldsim::{pdm_score, score_vocabulary, Scene, SubScores};

#[derive(Debug, Clone)]
pub struct TrainingRecord {
    pub scene: Scene,
    pub features: SceneFeatures,
    /// Expert sub-scores, one per vocabulary entry.
    pub expert: Vec<SubScores>,
    /// Vocabulary id with the highest expert PDMS (ties to the lower id).
    pub human: usize,
    targets: Matrix,
    imitation: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainingDataset {
    pub records: Vec<TrainingRecord>,
    pub vocab_features: Vec<TrajectoryFeatures>,
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl TrainingDataset {
    pub fn build(scenes: &[Scene], vocab: &PlanningVocabulary) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let vocab_features: Vec<_> = vocab.iter().map(encode_trajectory).collect();
        let records = scenes
            .par_iter()
            .map(|scene| {
                let expert = score_vocabulary(scene, vocab);
                let pdms: Vec<f64> = expert.iter().map(pdm_score).collect();
                let human = argmax(&pdms);
                TrainingRecord {
                    scene: scene.clone(),
                    features: encode_scene(scene),
                    targets: expert_matrix(&expert),
                    imitation: imitation_target(vocab, vocab.get(human), IMITATION_TEMPERATURE),
                    expert,
                    human,
                }
            })
            .collect();
        Ok(TrainingDataset { records, vocab_features })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-feature standardization fitted over every (scene, trajectory) pair.
    pub fn fit_normalizer(&self) -> InputNormalizer {
        let rows: Vec<_> = self
            .records
            .iter()
            .flat_map(|r| self.vocab_features.iter().map(move |t| input_row(&r.features, t)))
            .collect();
        InputNormalizer::fit(rows.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    GradientDescent,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub layer_sizes: Vec<usize>,
    pub optimizer: Optimizer,
    /// Weight of the imitation term relative to the distillation term.
    pub imitation_weight: f64,
}

impl TrainConfig {
    pub fn new(epochs: usize, lr: f64, seed: u64) -> Self {
        TrainConfig {
            epochs,
            lr,
            seed,
            batch_size: 8,
            layer_sizes: DEFAULT_LAYER_SIZES.to_vec(),
            optimizer: Optimizer::GradientDescent,
            imitation_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PlannerParams,
    /// Mean training loss before training and after every epoch.
    pub epoch_losses: Vec<f64>,
}

/// Knowledge-distillation plus imitation loss of one record on the tape.
pub fn record_loss_on_tape(
    tape: &mut Tape,
    vars: &DecoderVars,
    params: &PlannerParams,
    record: &TrainingRecord,
    vocab_features: &[TrajectoryFeatures],
    imitation_weight: f64,
) -> Var {
    let x = tape.constant(params.inputs(&record.features, vocab_features));
    let (_, probs) = decode_on_tape(tape, vars, x);
    let kd = kd_loss_on_tape(tape, probs, &record.targets);
    let agg = aggregate_on_tape(tape, probs);
    let im = imitation_loss_on_tape(tape, agg, &record.imitation);
    let im = tape.scale(im, imitation_weight);
    tape.add(kd, im)
}

fn record_gradient(params: &PlannerParams, data: &TrainingDataset, i: usize, w: f64) -> Result<(f64, Vec<f64>)> {
    backward(&params.decoder, |tape, vars| {
        Ok(record_loss_on_tape(tape, vars, params, &data.records[i], &data.vocab_features, w))
    })
}

/// Mean total loss over the dataset.
pub fn dataset_loss(params: &PlannerParams, data: &TrainingDataset, imitation_weight: f64) -> Result<f64> {
    let losses: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let mut tape = Tape::new();
            let vars = params.decoder.register(&mut tape);
            let l = record_loss_on_tape(&mut tape, &vars, params, &data.records[i], &data.vocab_features, imitation_weight);
            tape.scalar_value(l)
        })
        .collect();
    let total: f64 = losses.iter().sum();
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok(total / data.len() as f64)
}

/// Plain gradient descent over shuffled mini-batches with default settings.
pub fn train(data: &TrainingDataset, epochs: usize, lr: f64, seed: u64) -> Result<PlannerParams> {
    Ok(train_with(data, &TrainConfig::new(epochs, lr, seed))?.params)
}

pub fn train_with(data: &TrainingDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(cfg.lr > 0.0) || cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("learning rate and batch size must be positive".into()));
    }
    let mut params = PlannerParams {
        normalizer: data.fit_normalizer(),
        decoder: DecoderParams::init(&cfg.layer_sizes, cfg.seed),
        seed: cfg.seed,
    };
    let mut epoch_losses = vec![dataset_loss(&params, data, cfg.imitation_weight)?];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = params.decoder.len();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let grads: Vec<Vec<f64>> = batch
                .par_iter()
                .map(|&i| record_gradient(&params, data, i, cfg.imitation_weight).map(|(_, g)| g))
                .collect::<Result<_>>()?;
            let mut mean = vec![0.0; n];
            for g in &grads {
                for (a, b) in mean.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            mean.iter_mut().for_each(|a| *a *= scale);
            step += 1;
            let direction = match cfg.optimizer {
                Optimizer::GradientDescent => mean,
                Optimizer::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(step);
                    let c2 = 1.0 - beta2.powi(step);
                    (0..n)
                        .map(|j| {
                            m[j] = beta1 * m[j] + (1.0 - beta1) * mean[j];
                            v[j] = beta2 * v[j] + (1.0 - beta2) * mean[j] * mean[j];
                            (m[j] / c1) / ((v[j] / c2).sqrt() + eps)
                        })
                        .collect()
                }
            };
            params.decoder = params.decoder.stepped(&direction, cfg.lr)?;
        }
        epoch_losses.push(dataset_loss(&params, data, cfg.imitation_weight)?);
    }
    Ok(TrainOutcome { params, epoch_losses })
}
