//! Deployment strategies: test-time training from buffered historical gradients,
//! an uncertainty-gated variant, and the fallback layer.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{trajectory_l2, PlanningVocabulary, Trajectory};
use crate::scorer::autodiff::Tape;
use crate::scorer::{
    backward, decode_on_tape, encode_scene, encode_trajectory, forward, select_trajectory, DecoderParams,
    PlannerParams, ScoreTable, SceneFeatures, TrajectoryFeatures,
};
use crate::uncertainty::{measure_uncertainty, uncertainty_on_tape, CandidateSet, Measure, UncertaintyConfig};
use crate::worldsim::{pdm_score, score_vocabulary, ExpertScorer, Scene, SubScores};

/// Mean expert PDMS of every vocabulary entry over `scenes`, in id order.
pub fn mean_expert_pdms(vocab: &PlanningVocabulary, scenes: &[Scene]) -> Result<Vec<f64>> {
    if scenes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per_scene: Vec<Vec<f64>> = scenes
        .par_iter()
        .map(|s| score_vocabulary(s, vocab).iter().map(pdm_score).collect())
        .collect();
    let mut mean = vec![0.0; vocab.len()];
    for row in &per_scene {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = scenes.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// A scoring planner ready for deployment: parameters, vocabulary and the fixed
/// candidate subset its uncertainty is computed over.
#[derive(Debug, Clone)]
pub struct Planner {
    pub params: Arc<PlannerParams>,
    pub vocab: Arc<PlanningVocabulary>,
    pub vocab_features: Arc<Vec<TrajectoryFeatures>>,
    pub candidates: Arc<CandidateSet>,
}

impl Planner {
    pub fn new(params: PlannerParams, vocab: Arc<PlanningVocabulary>, candidates: CandidateSet) -> Self {
        let vocab_features = Arc::new(vocab.iter().map(encode_trajectory).collect());
        Planner { params: Arc::new(params), vocab, vocab_features, candidates: Arc::new(candidates) }
    }

    /// Same vocabulary and candidates with different parameters.
    pub fn with_params(&self, params: PlannerParams) -> Self {
        Planner { params: Arc::new(params), ..self.clone() }
    }

    pub fn score_all(&self, params: &PlannerParams, scene: &SceneFeatures) -> Result<ScoreTable> {
        let ids: Vec<usize> = (0..self.vocab.len()).collect();
        forward(params, scene, &self.vocab_features, &ids)
    }

    pub fn score_candidates(&self, params: &PlannerParams, scene: &SceneFeatures) -> Result<ScoreTable> {
        forward(params, scene, &self.candidates.features, &self.candidates.ids)
    }
}

/// Gradient of an uncertainty measure. The input normalizer is frozen, so its
/// entries are always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyGradient {
    pub value: f64,
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
}

impl UncertaintyGradient {
    /// Encoder entries followed by decoder entries.
    pub fn full(&self) -> Vec<f64> {
        self.encoder.iter().chain(&self.decoder).copied().collect()
    }
}

pub fn compute_uncertainty_gradient(
    params: &PlannerParams,
    scene: &SceneFeatures,
    candidates: &CandidateSet,
    cfg: &UncertaintyConfig,
) -> Result<UncertaintyGradient> {
    let (value, decoder) = backward(&params.decoder, |tape: &mut Tape, vars| {
        let x = tape.constant(params.inputs(scene, &candidates.features));
        let (_, probs) = decode_on_tape(tape, vars, x);
        uncertainty_on_tape(tape, probs, candidates, cfg)
    })?;
    Ok(UncertaintyGradient { value, encoder: vec![0.0; params.normalizer.len()], decoder })
}

/// FIFO of the most recent decoder gradients, stamped with their source frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    capacity: usize,
    entries: VecDeque<(u64, Vec<f64>)>,
}

impl GradientBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("buffer capacity must be at least 1".into()));
        }
        Ok(GradientBuffer { capacity, entries: VecDeque::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn frames(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.0).collect()
    }

    /// Appends `grad`, evicting the oldest entry when full.
    pub fn push(&mut self, grad: Vec<f64>, frame_index: u64) -> Result<()> {
        if let Some(&(last, _)) = self.entries.back() {
            if frame_index <= last {
                return Err(Error::NonIncreasingFrames { previous: last, current: frame_index });
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((frame_index, grad));
        Ok(())
    }

    /// Elementwise mean of the stored gradients, summed oldest first.
    pub fn mean(&self) -> Option<Vec<f64>> {
        let (_, first) = self.entries.front()?;
        let mut acc = vec![0.0; first.len()];
        for (_, g) in &self.entries {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        let n = self.entries.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Some(acc)
    }
}

pub fn push_gradient(mut buffer: GradientBuffer, grad: Vec<f64>, frame_index: u64) -> Result<GradientBuffer> {
    buffer.push(grad, frame_index)?;
    Ok(buffer)
}

/// `theta - eta * mean(buffer)`. An empty buffer is an error; callers keep their parameters.
pub fn ttt_step(params: &DecoderParams, buffer: &GradientBuffer, eta: f64) -> Result<DecoderParams> {
    let mean = buffer.mean().ok_or(Error::EmptyBuffer)?;
    params.stepped(&mean, eta)
}

/// Vocabulary entries ranked by mean expert PDMS over reference scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct FallbackSet {
    pub ids: Vec<usize>,
    pub trajectories: Vec<Trajectory>,
}

/// Top `size` entries by mean PDMS, ties to the lower id.
pub fn rank_by_score(mean: &[f64], size: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..mean.len()).collect();
    ids.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]).then(a.cmp(&b)));
    ids.truncate(size);
    ids
}

pub fn build_fallback_set(vocab: &PlanningVocabulary, reference: &[Scene], size: usize) -> Result<FallbackSet> {
    if size == 0 || size > vocab.len() {
        return Err(Error::InvalidParameter(format!("fallback size {size} outside 1..={}", vocab.len())));
    }
    let ids = rank_by_score(&mean_expert_pdms(vocab, reference)?, size);
    let trajectories = ids.iter().map(|&i| vocab.get(i).clone()).collect();
    Ok(FallbackSet { ids, trajectories })
}

/// Returns the prediction when `uncertainty <= threshold`, otherwise the nearest
/// fallback trajectory (ties to the lower id). The flag reports a replacement.
pub fn fallback_select(
    predicted: &Trajectory,
    fallback: &FallbackSet,
    uncertainty: f64,
    threshold: f64,
) -> (Trajectory, bool) {
    if !(uncertainty > threshold) || fallback.ids.is_empty() {
        return (predicted.clone(), false);
    }
    let best = fallback
        .ids
        .iter()
        .zip(&fallback.trajectories)
        .map(|(&id, t)| (trajectory_l2(predicted, t), id, t))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .unwrap();
    (best.2.clone(), true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    None,
    Ttt,
    TttGated,
    Fallback,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::None, Strategy::Ttt, Strategy::TttGated, Strategy::Fallback];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Ttt => "ttt",
            Strategy::TttGated => "ttt_gated",
            Strategy::Fallback => "fallback",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown strategy {s:?}")))
    }
}

/// Whether test-time updates accumulate along the stream or restart from the
/// trained parameters at every frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    Persistent,
    ResetPerFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentConfig {
    pub strategy: Strategy,
    pub eta: f64,
    pub buffer: usize,
    pub threshold: f64,
    pub fallback_size: usize,
    pub mode: UpdateMode,
    pub uncertainty: UncertaintyConfig,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        DeploymentConfig {
            strategy: Strategy::None,
            eta: 1e-4,
            buffer: 4,
            threshold: 0.8,
            fallback_size: 20,
            mode: UpdateMode::Persistent,
            uncertainty: UncertaintyConfig::default(),
        }
    }
}

impl DeploymentConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        DeploymentConfig { strategy, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidParameter(format!("threshold must be nonnegative, got {}", self.threshold)));
        }
        if self.buffer == 0 || self.fallback_size == 0 {
            return Err(Error::InvalidParameter("buffer and fallback size must be positive".into()));
        }
        if !self.uncertainty.measure.is_scoring() {
            return Err(Error::InvalidParameter(format!(
                "measure {} is not available for a scoring planner",
                self.uncertainty.measure
            )));
        }
        self.uncertainty.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub category: String,
    pub strategy: Strategy,
    pub measure: Measure,
    pub uncertainty: f64,
    pub replaced: bool,
    /// Vocabulary id of the executed trajectory.
    pub selected: usize,
    pub sub: SubScores,
    pub pdms: f64,
    pub params_version: u64,
}

impl FrameRecord {
    pub const CSV_HEADER: &'static str =
        "frame_index,strategy,measure,uncertainty,replaced,nc,dac,ep,c,ttc,pdms,params_version";

    pub fn csv_row(&self) -> String {
        let s = &self.sub;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.frame_index,
            self.strategy,
            self.measure,
            self.uncertainty,
            u8::from(self.replaced),
            s.nc,
            s.dac,
            s.ep,
            s.c,
            s.ttc,
            self.pdms,
            self.params_version
        )
    }
}

pub fn write_records_csv<W: std::io::Write>(records: &[FrameRecord], mut out: W) -> Result<()> {
    writeln!(out, "{}", FrameRecord::CSV_HEADER)?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// What the planner did on one frame, before expert scoring.
#[derive(Debug, Clone)]
struct Decision {
    strategy: Strategy,
    uncertainty: f64,
    replaced: bool,
    selected: usize,
    params_version: u64,
}

fn check_stream(stream: &[Scene]) -> Result<()> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    for w in stream.windows(2) {
        if w[1].frame_index <= w[0].frame_index {
            return Err(Error::NonIncreasingFrames { previous: w[0].frame_index, current: w[1].frame_index });
        }
    }
    Ok(())
}

fn selected_id(table: &ScoreTable) -> Result<usize> {
    select_trajectory(table).ok_or(Error::EmptyDataset)
}

/// Base planner output for one frame with the given parameters.
fn infer(planner: &Planner, params: &PlannerParams, feats: &SceneFeatures, cfg: &DeploymentConfig) -> Result<(usize, f64)> {
    let table = planner.score_all(params, feats)?;
    let selected = selected_id(&table)?;
    let cand = table.select(&planner.candidates.ids);
    let u = measure_uncertainty(&cand, &planner.candidates, &cfg.uncertainty)?.value;
    Ok((selected, u))
}

fn base_decision(planner: &Planner, feats: &SceneFeatures, cfg: &DeploymentConfig) -> Result<Decision> {
    let table = planner.score_all(&planner.params, feats)?;
    let selected = selected_id(&table)?;
    let cand = table.select(&planner.candidates.ids);
    let uncertainty = measure_uncertainty(&cand, &planner.candidates, &cfg.uncertainty)
        .map(|r| r.value)
        .unwrap_or(f64::NAN);
    Ok(Decision { strategy: Strategy::None, uncertainty, replaced: false, selected, params_version: 0 })
}

fn fallback_decision(
    planner: &Planner,
    fallback: &FallbackSet,
    feats: &SceneFeatures,
    cfg: &DeploymentConfig,
) -> Result<Decision> {
    match infer(planner, &planner.params, feats, cfg) {
        Ok((selected, uncertainty)) => {
            let predicted = planner.vocab.get(selected);
            let (chosen, replaced) = fallback_select(predicted, fallback, uncertainty, cfg.threshold);
            Ok(Decision {
                strategy: Strategy::Fallback,
                uncertainty,
                replaced,
                selected: chosen.id as usize,
                params_version: 0,
            })
        }
        Err(Error::AllZeroScores) => base_decision(planner, feats, cfg),
        Err(e) => Err(e),
    }
}

/// Sequential test-time training over the stream.
fn ttt_decisions(planner: &Planner, feats: &[SceneFeatures], stream: &[Scene], cfg: &DeploymentConfig) -> Result<Vec<Decision>> {
    let gated = cfg.strategy == Strategy::TttGated;
    let mut buffer = GradientBuffer::new(cfg.buffer)?;
    let mut current: PlannerParams = (*planner.params).clone();
    let mut version = 0u64;
    let mut out = Vec::with_capacity(stream.len());
    for (scene, f) in stream.iter().zip(feats) {
        let base = match cfg.mode {
            UpdateMode::Persistent => current.clone(),
            UpdateMode::ResetPerFrame => (*planner.params).clone(),
        };
        let frame = (|| -> Result<(Decision, PlannerParams, Vec<f64>)> {
            let mut params = base.clone();
            let mut frame_version = version;
            let apply = !buffer.is_empty() && (!gated || infer(planner, &base, f, cfg)?.1 > cfg.threshold);
            if apply {
                params.decoder = ttt_step(&base.decoder, &buffer, cfg.eta)?;
                frame_version += 1;
            }
            let (selected, uncertainty) = infer(planner, &params, f, cfg)?;
            let grad = compute_uncertainty_gradient(&params, f, &planner.candidates, &cfg.uncertainty)?;
            let decision = Decision { strategy: cfg.strategy, uncertainty, replaced: false, selected, params_version: frame_version };
            Ok((decision, params, grad.decoder))
        })();
        match frame {
            Ok((decision, params, grad)) => {
                if decision.params_version != version {
                    version = decision.params_version;
                    current = params;
                }
                buffer.push(grad, scene.frame_index)?;
                out.push(decision);
            }
            Err(Error::AllZeroScores) | Err(Error::NonFiniteLoss) => {
                let mut d = base_decision(planner, f, cfg)?;
                d.params_version = version;
                out.push(d);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Runs a strategy over a stream and scores every executed trajectory with the expert.
///
/// Frame `i` only sees gradients from frames before `i`, so every record is a
/// function of the stream prefix ending at its frame.
pub fn run_deployment(
    stream: &[Scene],
    planner: &Planner,
    fallback: Option<&FallbackSet>,
    cfg: &DeploymentConfig,
) -> Result<Vec<FrameRecord>> {
    cfg.validate()?;
    check_stream(stream)?;
    let feats: Vec<SceneFeatures> = stream.par_iter().map(encode_scene).collect();
    let decisions: Vec<Decision> = match cfg.strategy {
        Strategy::None => feats.par_iter().map(|f| base_decision(planner, f, cfg)).collect::<Result<_>>()?,
        Strategy::Fallback => {
            let fb = fallback.ok_or_else(|| Error::InvalidParameter("fallback strategy needs a fallback set".into()))?;
            feats.par_iter().map(|f| fallback_decision(planner, fb, f, cfg)).collect::<Result<_>>()?
        }
        Strategy::Ttt | Strategy::TttGated => ttt_decisions(planner, &feats, stream, cfg)?,
    };
    let vocab = &planner.vocab;
    Ok(stream
        .par_iter()
        .zip(decisions)
        .map(|(scene, d)| {
            let sub = ExpertScorer::new(scene, vocab).score(vocab.get(d.selected));
            FrameRecord {
                frame_index: scene.frame_index,
                category: scene.category.code().to_string(),
                strategy: d.strategy,
                measure: cfg.uncertainty.measure,
                uncertainty: d.uncertainty,
                replaced: d.replaced,
                selected: d.selected,
                pdms: pdm_score(&sub),
                sub,
                params_version: d.params_version,
            }
        })
        .collect())
}
