//! Trajectories, the planning vocabulary, candidate sampling and direction anchors.
//!
//! Frame convention: x forward, y to the left, heading counter-clockwise from +x.
//! Waypoint `i` is the pose at `t = (i + 1) * DT`; the ego pose at `t = 0` is the origin.

mod anchors;
mod sampling;
mod vocabulary;

pub use anchors::{assign_clusters, select_anchors, AnchorSet, ClusterAssignment, DirectionLabel};
pub(crate) use anchors::nearest_anchor;
pub use sampling::sample_candidates;
pub use vocabulary::{
    arc_trajectory, generate_vocabulary, read_vocabulary, write_vocabulary, PlanningVocabulary,
    VocabularySpec,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of waypoints in every trajectory.
pub const HORIZON: usize = 40;
/// Waypoint period in seconds.
pub const DT: f64 = 0.1;
/// Maximum distance between consecutive poses (30 m/s at 10 Hz).
pub const MAX_STEP: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Waypoint {
    pub const ORIGIN: Waypoint = Waypoint { x: 0.0, y: 0.0, heading: 0.0 };

    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Waypoint { x, y, heading }
    }

    pub fn distance(&self, other: &Waypoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// A 4 s plan of [`HORIZON`] waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Index into the owning vocabulary, `-1` for free trajectories.
    pub id: i64,
    waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn new(id: i64, waypoints: Vec<Waypoint>) -> Result<Self> {
        let traj = Trajectory { id, waypoints };
        traj.validate()?;
        Ok(traj)
    }

    /// Builds a free trajectory from (x, y) pairs, deriving headings from displacements.
    pub fn from_positions(positions: &[(f64, f64)]) -> Result<Self> {
        let mut waypoints = Vec::with_capacity(positions.len());
        let mut prev = (0.0, 0.0);
        let mut heading = 0.0;
        for &(x, y) in positions {
            let (dx, dy) = (x - prev.0, y - prev.1);
            if dx.hypot(dy) > 1e-9 {
                heading = wrap_angle(dy.atan2(dx));
            }
            waypoints.push(Waypoint::new(x, y, heading));
            prev = (x, y);
        }
        Trajectory::new(-1, waypoints)
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn last(&self) -> &Waypoint {
        &self.waypoints[HORIZON - 1]
    }

    /// Returns a copy with every lateral coordinate and heading negated.
    pub fn mirrored(&self) -> Trajectory {
        Trajectory {
            id: self.id,
            waypoints: self
                .waypoints
                .iter()
                .map(|w| Waypoint::new(w.x, -w.y, wrap_angle(-w.heading)))
                .collect(),
        }
    }

    pub fn with_id(mut self, id: i64) -> Trajectory {
        self.id = id;
        self
    }

    pub fn validate(&self) -> Result<()> {
        use std::f64::consts::PI;
        if self.waypoints.len() != HORIZON {
            return Err(Error::InvalidTrajectory(format!(
                "expected {HORIZON} waypoints, got {}",
                self.waypoints.len()
            )));
        }
        let mut prev = Waypoint::ORIGIN;
        for (i, w) in self.waypoints.iter().enumerate() {
            if !(w.x.is_finite() && w.y.is_finite() && w.heading.is_finite()) {
                return Err(Error::InvalidTrajectory(format!("waypoint {i} is not finite")));
            }
            if w.heading <= -PI || w.heading > PI {
                return Err(Error::InvalidTrajectory(format!(
                    "waypoint {i} heading {} outside (-pi, pi]",
                    w.heading
                )));
            }
            if w.distance(&prev) > MAX_STEP + 1e-9 {
                return Err(Error::InvalidTrajectory(format!(
                    "step into waypoint {i} exceeds {MAX_STEP} m"
                )));
            }
            prev = *w;
        }
        Ok(())
    }
}

/// Lateral (y) coordinate of the final waypoint.
pub fn lateral_endpoint(traj: &Trajectory) -> f64 {
    traj.last().y
}

/// Euclidean distance over the stacked (x, y) coordinates of all waypoints.
pub fn trajectory_l2(a: &Trajectory, b: &Trajectory) -> f64 {
    a.waypoints
        .iter()
        .zip(&b.waypoints)
        .map(|(p, q)| (p.x - q.x).powi(2) + (p.y - q.y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn straight(speed: f64, lateral: f64) -> Trajectory {
        let pts: Vec<_> = (1..=HORIZON)
            .map(|i| (speed * DT * i as f64, lateral))
            .collect();
        let wps = pts.iter().map(|&(x, y)| Waypoint::new(x, y, 0.0)).collect();
        Trajectory::new(-1, wps).unwrap()
    }

    #[test]
    fn lateral_endpoint_reads_final_y() {
        assert_eq!(lateral_endpoint(&straight(5.0, 0.0)), 0.0);
        let mut wps = straight(2.5, 0.0).waypoints().to_vec();
        wps[HORIZON - 1] = Waypoint::new(10.0, 2.5, 0.3);
        // last step is large but within the limit
        let t = Trajectory { id: -1, waypoints: wps };
        assert_eq!(lateral_endpoint(&t), 2.5);
        assert_eq!(lateral_endpoint(&t.mirrored()), -2.5);
    }

    #[test]
    fn l2_of_parallel_offset_lines() {
        let a = straight(5.0, 0.0);
        let b = straight(5.0, 1.0);
        assert_eq!(trajectory_l2(&a, &a), 0.0);
        assert!((trajectory_l2(&a, &b) - 40f64.sqrt()).abs() < 1e-12);
        assert_eq!(trajectory_l2(&a, &b), trajectory_l2(&b, &a));
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        assert!(Trajectory::new(0, vec![Waypoint::ORIGIN; 39]).is_err());
        let mut wps = straight(5.0, 0.0).waypoints().to_vec();
        wps[10].x += 4.0;
        assert!(Trajectory::new(0, wps).is_err());
        let mut wps = straight(5.0, 0.0).waypoints().to_vec();
        wps[3].heading = f64::NAN;
        assert!(Trajectory::new(0, wps).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn from_positions_derives_headings() {
        let pts: Vec<_> = (1..=HORIZON).map(|i| (i as f64, i as f64)).collect();
        let t = Trajectory::from_positions(&pts).unwrap();
        assert!((t.waypoints()[5].heading - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    use proptest::prelude::*;

    fn arb_traj() -> impl Strategy<Value = Trajectory> {
        (0.5f64..10.0, -0.4f64..0.4, -3.0f64..3.0).prop_map(|(v, w, off)| {
            let pts: Vec<_> = (1..=HORIZON)
                .map(|i| {
                    let t = i as f64 * DT;
                    (v * t, off * t / 4.0 + w * t * t)
                })
                .collect();
            Trajectory::from_positions(&pts).unwrap()
        })
    }

    proptest! {
        #[test]
        fn l2_is_a_metric(a in arb_traj(), b in arb_traj(), c in arb_traj()) {
            let ab = trajectory_l2(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(trajectory_l2(&a, &a), 0.0);
            prop_assert_eq!(ab, trajectory_l2(&b, &a));
            prop_assert!(trajectory_l2(&a, &c) <= ab + trajectory_l2(&b, &c) + 1e-9);
        }
    }
}
