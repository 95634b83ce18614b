use serde::{Deserialize, Serialize};

use super::{lateral_endpoint, trajectory_l2, Trajectory};
use crate::error::{Error, Result};

/// Driving-direction cluster labels, in tie-breaking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DirectionLabel {
    SharpLeft = 0,
    SlightLeft = 1,
    Forward = 2,
    SlightRight = 3,
    SharpRight = 4,
}

impl DirectionLabel {
    pub const ALL: [DirectionLabel; 5] = [
        DirectionLabel::SharpLeft,
        DirectionLabel::SlightLeft,
        DirectionLabel::Forward,
        DirectionLabel::SlightRight,
        DirectionLabel::SharpRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn mirrored(self) -> DirectionLabel {
        DirectionLabel::ALL[4 - self.index()]
    }

    pub fn name(self) -> &'static str {
        match self {
            DirectionLabel::SharpLeft => "sharp-left",
            DirectionLabel::SlightLeft => "slight-left",
            DirectionLabel::Forward => "forward",
            DirectionLabel::SlightRight => "slight-right",
            DirectionLabel::SharpRight => "sharp-right",
        }
    }
}

/// Five anchors, stored as positions into the candidate slice they were selected from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSet {
    positions: [usize; 5],
}

impl AnchorSet {
    /// Candidate position of the anchor carrying `label`.
    pub fn position(&self, label: DirectionLabel) -> usize {
        self.positions[label.index()]
    }

    pub fn positions(&self) -> [usize; 5] {
        self.positions
    }

    /// Label of the anchor at candidate position `pos`, if that candidate is an anchor.
    pub fn label_of(&self, pos: usize) -> Option<DirectionLabel> {
        self.positions.iter().position(|&p| p == pos).map(|i| DirectionLabel::ALL[i])
    }
}

/// Per-candidate cluster labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    labels: Vec<DirectionLabel>,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<DirectionLabel>) -> Self {
        ClusterAssignment { labels }
    }

    pub fn labels(&self) -> &[DirectionLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn counts(&self) -> [usize; 5] {
        let mut counts = [0; 5];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }
}

/// Position of the untaken candidate minimizing `key`, ties to lower id then position.
fn best_untaken(
    candidates: &[Trajectory],
    taken: &[usize],
    key: impl Fn(&Trajectory) -> f64,
) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(pos, _)| !taken.contains(pos))
        .map(|(pos, t)| (key(t), t.id, pos))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
        .map(|(_, _, pos)| pos)
}

/// Picks the five direction anchors by lateral endpoint.
///
/// Sharp anchors are the extreme endpoints, slight anchors sit closest to half of
/// the respective sharp value and forward is the smallest absolute endpoint. When a
/// label's best candidate is already taken it falls back to the next-closest one,
/// resolving labels in the order sharp, slight, forward.
pub fn select_anchors(candidates: &[Trajectory]) -> Result<AnchorSet> {
    if candidates.len() < 5 {
        return Err(Error::InvalidParameter(format!(
            "need at least 5 candidates, got {}",
            candidates.len()
        )));
    }
    let lats: Vec<f64> = candidates.iter().map(lateral_endpoint).collect();
    let max = lats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = lats.iter().copied().fold(f64::INFINITY, f64::min);
    if max == min {
        return Err(Error::DegenerateCandidates);
    }

    let mut taken = Vec::with_capacity(5);
    let pick = |key: &dyn Fn(&Trajectory) -> f64, taken: &mut Vec<usize>| {
        // at least 5 candidates, so an untaken one always exists
        let pos = best_untaken(candidates, taken, key).unwrap();
        taken.push(pos);
        pos
    };
    let sharp_left = pick(&|t| -lateral_endpoint(t), &mut taken);
    let sharp_right = pick(&|t| lateral_endpoint(t), &mut taken);
    let half_left = 0.5 * lats[sharp_left];
    let half_right = 0.5 * lats[sharp_right];
    let slight_left = pick(&|t| (lateral_endpoint(t) - half_left).abs(), &mut taken);
    let slight_right = pick(&|t| (lateral_endpoint(t) - half_right).abs(), &mut taken);
    let forward = pick(&|t| lateral_endpoint(t).abs(), &mut taken);

    Ok(AnchorSet { positions: [sharp_left, slight_left, forward, slight_right, sharp_right] })
}

/// Labels every candidate with its nearest anchor in trajectory space.
pub fn assign_clusters(candidates: &[Trajectory], anchors: &AnchorSet) -> ClusterAssignment {
    let labels = candidates
        .iter()
        .map(|c| nearest_anchor(c, candidates, anchors))
        .collect();
    ClusterAssignment { labels }
}

pub(crate) fn nearest_anchor(
    traj: &Trajectory,
    candidates: &[Trajectory],
    anchors: &AnchorSet,
) -> DirectionLabel {
    let mut best = (f64::INFINITY, DirectionLabel::SharpLeft);
    for label in DirectionLabel::ALL {
        let d = trajectory_l2(traj, &candidates[anchors.position(label)]);
        if d < best.0 {
            best = (d, label);
        }
    }
    best.1
}
