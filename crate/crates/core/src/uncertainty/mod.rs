//! Uncertainty measures over a planner's candidate scores.

pub mod tape;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    assign_clusters, nearest_anchor, sample_candidates, select_anchors, AnchorSet, ClusterAssignment,
    DirectionLabel, PlanningVocabulary, Trajectory,
};
use crate::scorer::evidential::{sample_nig, trajectory_to_vector, EvidentialOutput};
use crate::scorer::{encode_trajectory, ScoreTable, TrajectoryFeatures, SCORE_FEATURES};

pub use tape::uncertainty_on_tape;

/// Floor applied to probabilities before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    ClusterEntropy,
    FullEntropy,
    SemanticEntropy,
    KlDivergence,
    Evidential,
    RegressionSemanticEntropy,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::ClusterEntropy,
        Measure::FullEntropy,
        Measure::SemanticEntropy,
        Measure::KlDivergence,
        Measure::Evidential,
        Measure::RegressionSemanticEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::ClusterEntropy => "cluster_entropy",
            Measure::FullEntropy => "full_entropy",
            Measure::SemanticEntropy => "semantic_entropy",
            Measure::KlDivergence => "kl_divergence",
            Measure::Evidential => "evidential",
            Measure::RegressionSemanticEntropy => "regression_semantic_entropy",
        }
    }

    /// Measures computable from a scoring planner's outputs (and differentiable through them).
    pub fn is_scoring(self) -> bool {
        matches!(
            self,
            Measure::ClusterEntropy | Measure::FullEntropy | Measure::SemanticEntropy | Measure::KlDivergence
        )
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown measure {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyConfig {
    pub m: usize,
    pub tau: f64,
    pub tau_regression: f64,
    pub n_samples: usize,
    pub measure: Measure,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyConfig { m: 100, tau: 0.06, tau_regression: 0.02, n_samples: 32, measure: Measure::ClusterEntropy }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 5 {
            return Err(Error::InvalidParameter(format!("candidate count {} is below 5", self.m)));
        }
        if !(self.tau > 0.0) || !(self.tau_regression > 0.0) {
            return Err(Error::InvalidParameter("clustering thresholds must be positive".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter("sample count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Normalized mass per direction cluster, indexed by [`DirectionLabel::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterDistribution {
    pub probs: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub value: f64,
    pub measure: Measure,
    pub distribution: Option<ClusterDistribution>,
    /// Per-candidate mass that entered the normalization.
    pub candidate_mass: Vec<f64>,
}

impl UncertaintyReport {
    pub const CSV_HEADER: &'static str = "frame_index,measure,value,p1,p2,p3,p4,p5";

    pub fn csv_row(&self, frame_index: u64) -> String {
        let probs = match &self.distribution {
            Some(d) => d.probs.iter().map(|p| format!("{p}")).collect::<Vec<_>>().join(","),
            None => ",,,,".to_string(),
        };
        format!("{frame_index},{},{},{probs}", self.measure, self.value)
    }
}

/// Shannon entropy of `mass / sum(mass)`, with `0 ln 0 = 0`.
pub fn normalized_entropy(mass: &[f64]) -> Result<(f64, Vec<f64>)> {
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllZeroScores);
    }
    let probs: Vec<f64> = mass.iter().map(|m| m / total).collect();
    let h = -probs.iter().map(|&p| p * p.max(LOG_FLOOR).ln()).sum::<f64>();
    Ok((h.max(0.0), probs))
}

fn cluster_masses(values: &[f64], assignment: &ClusterAssignment) -> [f64; 5] {
    let mut mass = [0.0; 5];
    for (v, l) in values.iter().zip(assignment.labels()) {
        mass[l.index()] += v;
    }
    mass
}

fn check_aligned(rows: usize, labels: usize) -> Result<()> {
    if rows != labels {
        return Err(Error::ShapeMismatch { expected: format!("{rows} cluster labels"), actual: format!("{labels}") });
    }
    Ok(())
}

fn entropy_of_clusters(measure: Measure, mass: Vec<f64>, assignment: &ClusterAssignment) -> Result<UncertaintyReport> {
    let clusters = cluster_masses(&mass, assignment);
    let (value, probs) = normalized_entropy(&clusters)?;
    Ok(UncertaintyReport {
        value,
        measure,
        distribution: Some(ClusterDistribution { probs: [probs[0], probs[1], probs[2], probs[3], probs[4]] }),
        candidate_mass: mass,
    })
}

/// Entropy of the per-direction sums of aggregated candidate scores.
pub fn cluster_entropy(table: &ScoreTable, assignment: &ClusterAssignment) -> Result<UncertaintyReport> {
    check_aligned(table.len(), assignment.len())?;
    entropy_of_clusters(Measure::ClusterEntropy, table.aggregated(), assignment)
}

/// Entropy of the normalized aggregated scores of all candidates.
pub fn full_entropy(table: &ScoreTable) -> Result<UncertaintyReport> {
    let mass = table.aggregated();
    let (value, _) = normalized_entropy(&mass)?;
    Ok(UncertaintyReport { value, measure: Measure::FullEntropy, distribution: None, candidate_mass: mass })
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Fixed-center one-step clustering in a feature space: a candidate within `tau`
/// of its nearest anchor feature row joins that anchor, otherwise it falls back to
/// its nearest anchor in trajectory space. Ties go to the earlier label.
pub fn semantic_assignment<R: AsRef<[f64]>>(
    features: &[R],
    anchors: &AnchorSet,
    candidates: &[Trajectory],
    tau: f64,
) -> ClusterAssignment {
    let centers: Vec<&[f64]> = anchors.positions().iter().map(|&p| features[p].as_ref()).collect();
    let labels = features
        .iter()
        .zip(candidates)
        .map(|(f, c)| {
            let mut best = (f64::INFINITY, DirectionLabel::SharpLeft);
            for label in DirectionLabel::ALL {
                let d = l2(f.as_ref(), centers[label.index()]);
                if d < best.0 {
                    best = (d, label);
                }
            }
            if best.0 <= tau {
                best.1
            } else {
                nearest_anchor(c, candidates, anchors)
            }
        })
        .collect();
    ClusterAssignment::new(labels)
}

/// Cluster entropy after clustering candidates by their predicted score rows.
pub fn semantic_entropy(
    table: &ScoreTable,
    anchors: &AnchorSet,
    candidates: &[Trajectory],
    tau: f64,
) -> Result<UncertaintyReport> {
    check_aligned(table.len(), candidates.len())?;
    let assignment = semantic_assignment(&table.rows, anchors, candidates, tau);
    entropy_of_clusters(Measure::SemanticEntropy, table.aggregated(), &assignment)
}

/// Each score-feature column normalized into a distribution over the rows.
pub fn feature_distributions(table: &ScoreTable) -> [Vec<f64>; SCORE_FEATURES] {
    std::array::from_fn(|j| {
        let col: Vec<f64> = table.rows.iter().map(|r| r[j]).collect();
        let total = col.iter().sum::<f64>().max(LOG_FLOOR);
        col.iter().map(|v| v / total).collect()
    })
}

pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| a * (a.max(LOG_FLOOR).ln() - b.max(LOG_FLOOR).ln())).sum()
}

/// Sum of KL divergences over all ordered pairs of distinct feature columns.
pub fn kl_divergence_uncertainty(table: &ScoreTable) -> UncertaintyReport {
    let dists = feature_distributions(table);
    let mut value = 0.0;
    for i in 0..SCORE_FEATURES {
        for j in 0..SCORE_FEATURES {
            if i != j {
                value += kl_divergence(&dists[i], &dists[j]);
            }
        }
    }
    UncertaintyReport { value, measure: Measure::KlDivergence, distribution: None, candidate_mass: Vec::new() }
}

/// Per candidate, the distance to the mean trajectory and to the closest sampled one.
pub fn regression_semantic_features(
    ev: &EvidentialOutput,
    candidates: &[Trajectory],
    n: usize,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    let samples = sample_nig(ev, n, seed)?;
    Ok(candidates
        .iter()
        .map(|c| {
            let v = trajectory_to_vector(c);
            let l_gamma = l2(&v, &ev.gamma);
            let l_mu = samples.iter().map(|s| l2(&v, s)).fold(f64::INFINITY, f64::min);
            [l_gamma, l_mu]
        })
        .collect())
}

/// Semantic entropy for a regression planner, counting each candidate once.
pub fn regression_semantic_entropy(
    ev: &EvidentialOutput,
    anchors: &AnchorSet,
    candidates: &[Trajectory],
    cfg: &UncertaintyConfig,
    seed: u64,
) -> Result<UncertaintyReport> {
    let features = regression_semantic_features(ev, candidates, cfg.n_samples, seed)?;
    let assignment = semantic_assignment(&features, anchors, candidates, cfg.tau_regression);
    entropy_of_clusters(Measure::RegressionSemanticEntropy, vec![1.0; candidates.len()], &assignment)
}

/// `1 - exp(-v)` of the mean epistemic variance `beta / (upsilon (alpha - 1))`.
pub fn evidential_uncertainty(ev: &EvidentialOutput) -> Result<UncertaintyReport> {
    ev.validate()?;
    let v = (0..ev.dims()).map(|i| ev.beta[i] / (ev.upsilon[i] * (ev.alpha[i] - 1.0))).sum::<f64>()
        / ev.dims() as f64;
    Ok(UncertaintyReport {
        value: -(-v).exp_m1(),
        measure: Measure::Evidential,
        distribution: None,
        candidate_mass: Vec::new(),
    })
}

/// The fixed candidate subset a scoring planner computes uncertainty over.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// Vocabulary ids, in sampling order.
    pub ids: Vec<usize>,
    pub trajectories: Vec<Trajectory>,
    pub features: Vec<TrajectoryFeatures>,
    pub anchors: AnchorSet,
    pub assignment: ClusterAssignment,
}

impl CandidateSet {
    pub fn from_ids(vocab: &PlanningVocabulary, ids: Vec<usize>) -> Result<Self> {
        let trajectories: Vec<Trajectory> = ids.iter().map(|&i| vocab.get(i).clone()).collect();
        let anchors = select_anchors(&trajectories)?;
        let assignment = assign_clusters(&trajectories, &anchors);
        let features = trajectories.iter().map(encode_trajectory).collect();
        Ok(CandidateSet { ids, trajectories, features, anchors, assignment })
    }

    /// Weighted sampling of `m` distinct vocabulary entries.
    pub fn sample(vocab: &PlanningVocabulary, weights: &[f64], m: usize, seed: u64) -> Result<Self> {
        CandidateSet::from_ids(vocab, sample_candidates(vocab, weights, m, seed)?)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Evaluates a scoring-planner measure on the candidates' score table.
pub fn measure_uncertainty(
    table: &ScoreTable,
    candidates: &CandidateSet,
    cfg: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    match cfg.measure {
        Measure::ClusterEntropy => cluster_entropy(table, &candidates.assignment),
        Measure::FullEntropy => full_entropy(table),
        Measure::SemanticEntropy => semantic_entropy(table, &candidates.anchors, &candidates.trajectories, cfg.tau),
        Measure::KlDivergence => Ok(kl_divergence_uncertainty(table)),
        m => Err(Error::InvalidParameter(format!("{m} needs an evidential regression planner"))),
    }
}
