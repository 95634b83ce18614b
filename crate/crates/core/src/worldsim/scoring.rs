use rayon::prelude::*;

use super::{Obstacle, Scene, SubScores};
use crate::geometry::{PlanningVocabulary, Trajectory, Waypoint, DT, HORIZON};

pub const EGO_HALF_LENGTH: f64 = 2.25;
pub const EGO_HALF_WIDTH: f64 = 1.0;
pub const MAX_ACCEL: f64 = 4.0;
pub const MAX_JERK: f64 = 8.0;
/// Look-ahead of the constant-velocity projection used for time-to-collision.
const TTC_HORIZON_STEPS: usize = 10;

fn waypoint_time(i: usize) -> f64 {
    (i + 1) as f64 * DT
}

/// Separating-axis test between the oriented ego box and an axis-aligned obstacle box.
/// Touching boxes do not overlap.
fn ego_overlaps(cx: f64, cy: f64, heading: f64, obstacle: &Obstacle, t: f64) -> bool {
    let (ox, oy) = obstacle.at(t);
    let (dx, dy) = (ox - cx, oy - cy);
    let (c, s) = (heading.cos(), heading.sin());
    let axes = [(1.0, 0.0), (0.0, 1.0), (c, s), (-s, c)];
    axes.iter().all(|&(nx, ny)| {
        let ego_r = EGO_HALF_LENGTH * (c * nx + s * ny).abs() + EGO_HALF_WIDTH * (-s * nx + c * ny).abs();
        let obs_r = obstacle.hl * nx.abs() + obstacle.hw * ny.abs();
        (dx * nx + dy * ny).abs() < ego_r + obs_r
    })
}

fn any_overlap(scene: &Scene, x: f64, y: f64, heading: f64, t: f64) -> bool {
    scene.obstacles.iter().any(|o| ego_overlaps(x, y, heading, o, t))
}

/// 1 when the ego footprint never overlaps an obstacle at any waypoint time, else 0.
pub fn score_no_collision(scene: &Scene, traj: &Trajectory) -> f64 {
    let hit = traj
        .waypoints()
        .iter()
        .enumerate()
        .any(|(i, w)| any_overlap(scene, w.x, w.y, w.heading, waypoint_time(i)));
    if hit { 0.0 } else { 1.0 }
}

/// 1 unless a one-second constant-velocity projection from some waypoint collides.
///
/// The projection includes the waypoint itself, so a collision always fails TTC too.
pub fn score_ttc(scene: &Scene, traj: &Trajectory) -> f64 {
    let mut prev = Waypoint::ORIGIN;
    for (i, w) in traj.waypoints().iter().enumerate() {
        let (vx, vy) = ((w.x - prev.x) / DT, (w.y - prev.y) / DT);
        let t0 = waypoint_time(i);
        for j in 0..=TTC_HORIZON_STEPS {
            let dt = j as f64 * DT;
            if any_overlap(scene, w.x + vx * dt, w.y + vy * dt, w.heading, t0 + dt) {
                return 0.0;
            }
        }
        prev = *w;
    }
    1.0
}

/// 1 when every waypoint lies within the corridor (boundary included).
pub fn score_drivable_area(scene: &Scene, traj: &Trajectory) -> f64 {
    let inside = traj
        .waypoints()
        .iter()
        .all(|w| scene.corridor.project(w.x, w.y).distance <= scene.corridor.half_width);
    if inside { 1.0 } else { 0.0 }
}

/// 1 when finite-difference acceleration and jerk stay within the comfort limits.
pub fn score_comfort(_scene: &Scene, traj: &Trajectory) -> f64 {
    let mut poses = Vec::with_capacity(HORIZON + 1);
    poses.push((0.0, 0.0));
    poses.extend(traj.waypoints().iter().map(|w| (w.x, w.y)));
    let diff = |v: &[(f64, f64)]| -> Vec<(f64, f64)> {
        v.windows(2).map(|p| ((p[1].0 - p[0].0) / DT, (p[1].1 - p[0].1) / DT)).collect()
    };
    let vel = diff(&poses);
    let acc = diff(&vel);
    let jerk = diff(&acc);
    let ok = acc.iter().all(|a| a.0.hypot(a.1) <= MAX_ACCEL)
        && jerk.iter().all(|j| j.0.hypot(j.1) <= MAX_JERK);
    if ok { 1.0 } else { 0.0 }
}

/// Arc-length progress along the corridor centerline, never negative.
fn raw_progress(scene: &Scene, traj: &Trajectory) -> f64 {
    let start = scene.corridor.project(0.0, 0.0).arc;
    let end = traj.last();
    (scene.corridor.project(end.x, end.y).arc - start).max(0.0)
}

/// Progress relative to the best collision-free, in-corridor vocabulary member.
pub fn score_progress(scene: &Scene, traj: &Trajectory, vocab: &PlanningVocabulary) -> f64 {
    ExpertScorer::new(scene, vocab).progress(traj)
}

/// Composite score `nc * dac * (5 ttc + 2 c + 5 ep) / 12`.
pub fn pdm_score(sub: &SubScores) -> f64 {
    sub.nc * sub.dac * (5.0 * sub.ttc + 2.0 * sub.c + 5.0 * sub.ep) / 12.0
}

/// Expert scorer bound to one scene, caching the progress normalizer.
#[derive(Debug, Clone)]
pub struct ExpertScorer<'a> {
    scene: &'a Scene,
    best_progress: f64,
}

impl<'a> ExpertScorer<'a> {
    pub fn new(scene: &'a Scene, vocab: &PlanningVocabulary) -> Self {
        let best_progress = vocab
            .iter()
            .filter(|t| score_no_collision(scene, t) == 1.0 && score_drivable_area(scene, t) == 1.0)
            .map(|t| raw_progress(scene, t))
            .fold(0.0, f64::max);
        ExpertScorer { scene, best_progress }
    }

    pub fn best_progress(&self) -> f64 {
        self.best_progress
    }

    pub fn progress(&self, traj: &Trajectory) -> f64 {
        if self.best_progress <= 0.0 {
            return 0.0;
        }
        (raw_progress(self.scene, traj) / self.best_progress).clamp(0.0, 1.0)
    }

    pub fn score(&self, traj: &Trajectory) -> SubScores {
        SubScores {
            nc: score_no_collision(self.scene, traj),
            dac: score_drivable_area(self.scene, traj),
            ep: self.progress(traj),
            c: score_comfort(self.scene, traj),
            ttc: score_ttc(self.scene, traj),
        }
    }
}

/// The expert teacher: all five sub-scores of one trajectory.
pub fn expert_score(scene: &Scene, traj: &Trajectory, vocab: &PlanningVocabulary) -> SubScores {
    ExpertScorer::new(scene, vocab).score(traj)
}

/// Expert sub-scores of every vocabulary member, in id order.
pub fn score_vocabulary(scene: &Scene, vocab: &PlanningVocabulary) -> Vec<SubScores> {
    let scorer = ExpertScorer::new(scene, vocab);
    vocab.trajectories().par_iter().map(|t| scorer.score(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_vocabulary, VocabularySpec};
    use crate::worldsim::{Category, Command, Corridor, EgoStatus};

    fn straight_corridor(half_width: f64) -> Corridor {
        Corridor { half_width, centerline: (0..=60).map(|i| [i as f64 * 2.0 - 10.0, 0.0]).collect() }
    }

    fn scene(obstacles: Vec<Obstacle>) -> Scene {
        Scene {
            ego: EgoStatus { speed: 5.0, acceleration: 0.0, command: Command::Straight },
            corridor: straight_corridor(3.0),
            obstacles,
            category: Category::None,
            seed: 0,
            frame_index: 0,
        }
    }

    fn straight(speed: f64) -> Trajectory {
        let pts: Vec<_> = (1..=HORIZON).map(|i| (speed * waypoint_time(i - 1), 0.0)).collect();
        Trajectory::from_positions(&pts).unwrap()
    }

    fn car(x: f64, y: f64, vx: f64, vy: f64) -> Obstacle {
        Obstacle { x, y, vx, vy, hl: 2.25, hw: 1.0 }
    }

    #[test]
    fn empty_scene_passes_collision_checks() {
        let s = scene(vec![]);
        let t = straight(8.0);
        assert_eq!(score_no_collision(&s, &t), 1.0);
        assert_eq!(score_ttc(&s, &t), 1.0);
    }

    #[test]
    fn obstacle_on_waypoint_collides() {
        let t = straight(8.0);
        let w = t.waypoints()[20];
        let s = scene(vec![car(w.x, w.y, 0.0, 0.0)]);
        assert_eq!(score_no_collision(&s, &t), 0.0);
        assert_eq!(score_ttc(&s, &t), 0.0);
    }

    /// Step-by-step overlap oracle written against plain interval arithmetic.
    fn axis_aligned_oracle(s: &Scene, t: &Trajectory) -> bool {
        t.waypoints().iter().enumerate().any(|(i, w)| {
            let time = (i + 1) as f64 * 0.1;
            s.obstacles.iter().any(|o| {
                let (ox, oy) = (o.x + o.vx * time, o.y + o.vy * time);
                (ox - w.x).abs() < o.hl + 2.25 && (oy - w.y).abs() < o.hw + 1.0
            })
        })
    }

    #[test]
    fn crossing_obstacle_that_passed_earlier_is_safe() {
        // ego reaches x = 20 at t = 2.0 s; the crosser is at y = 0 at t = 1.0 s, 10 m/s
        let t = straight(10.0);
        let crosser = car(20.0, -10.0, 0.0, 10.0);
        let s = scene(vec![crosser]);
        assert!(!axis_aligned_oracle(&s, &t));
        assert_eq!(score_no_collision(&s, &t), 1.0);
        // a crosser arriving at the same time does collide
        let s = scene(vec![car(20.0, -20.0, 0.0, 10.0)]);
        assert!(axis_aligned_oracle(&s, &t));
        assert_eq!(score_no_collision(&s, &t), 0.0);
    }

    #[test]
    fn following_at_equal_speed_keeps_ttc() {
        let t = straight(10.0);
        let s = scene(vec![car(30.0, 0.0, 10.0, 0.0)]);
        assert_eq!(score_no_collision(&s, &t), 1.0);
        assert_eq!(score_ttc(&s, &t), 1.0);
        // closing at 20 m/s from 30 m trips the one-second projection before contact
        let s = scene(vec![car(50.0, 0.0, -10.0, 0.0)]);
        assert_eq!(score_ttc(&s, &t), 0.0);
    }

    #[test]
    fn drivable_area_boundary_is_closed() {
        let s = scene(vec![]);
        assert_eq!(score_drivable_area(&s, &straight(5.0)), 1.0);
        let mut s2 = s.clone();
        s2.corridor.half_width = 2.0;
        let pts: Vec<_> = (1..=HORIZON).map(|i| (i as f64 * 0.5, 2.0 * i as f64 / 40.0)).collect();
        let edge = Trajectory::from_positions(&pts).unwrap();
        assert_eq!(score_drivable_area(&s2, &edge), 1.0);
    }

    #[test]
    fn straight_drive_leaves_curving_corridor() {
        // corridor bends left; lateral error at the end of a 40 m straight drive reaches ~3 m+
        let centerline: Vec<[f64; 2]> = (0..=60)
            .map(|i| {
                let x = i as f64 * 1.0;
                [x, 0.002 * x * x]
            })
            .collect();
        let s = Scene { corridor: Corridor { half_width: 2.0, centerline }, ..scene(vec![]) };
        let t = straight(10.0);
        let end = t.last();
        let d = s.corridor.project(end.x, end.y).distance;
        assert!(d > 2.0, "distance {d}");
        assert_eq!(score_drivable_area(&s, &t), 0.0);
    }

    #[test]
    fn comfort_limits() {
        let s = scene(vec![]);
        assert_eq!(score_comfort(&s, &straight(7.0)), 1.0);
        // gentle arc at 5 m/s (0.1 rad/s yaw rate)
        let arc = crate::geometry::arc_trajectory(-1, 5.0, 5.0, 0.1);
        assert_eq!(score_comfort(&s, &arc), 1.0);
        // a lateral jump of 2.9 m between two waypoints
        let pts: Vec<_> = (1..=HORIZON)
            .map(|i| (i as f64 * 0.5, if i > 20 { 2.9 } else { 0.0 }))
            .collect();
        assert_eq!(score_comfort(&s, &Trajectory::from_positions(&pts).unwrap()), 0.0);
    }

    #[test]
    fn progress_normalization() {
        let vocab = generate_vocabulary(VocabularySpec::small_test()).unwrap();
        let s = scene(vec![]);
        let scorer = ExpertScorer::new(&s, &vocab);
        // exhaustive max over the 25 entries
        let best = vocab
            .iter()
            .filter(|t| score_drivable_area(&s, t) == 1.0)
            .max_by(|a, b| raw_progress(&s, a).total_cmp(&raw_progress(&s, b)))
            .unwrap();
        assert_eq!(scorer.progress(best), 1.0);
        let half_speed = straight(best.last().x / 8.0);
        assert!((score_progress(&s, &half_speed, &vocab) - 0.5).abs() < 1e-9);
        let pts = vec![(0.0, 0.0); HORIZON];
        let parked = Trajectory::from_positions(&pts).unwrap();
        assert_eq!(score_progress(&s, &parked, &vocab), 0.0);
    }

    #[test]
    fn pdm_formula() {
        assert_eq!(pdm_score(&SubScores::ONES), 1.0);
        assert_eq!(pdm_score(&SubScores { nc: 0.0, ..SubScores::ONES }), 0.0);
        let s = SubScores { nc: 1.0, dac: 1.0, ep: 0.8, c: 1.0, ttc: 0.5 };
        assert!((pdm_score(&s) - 8.5 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn expert_bundles_the_five_scores() {
        let vocab = generate_vocabulary(VocabularySpec::small_test()).unwrap();
        let s = scene(vec![car(25.0, 0.5, 2.0, 0.0), car(12.0, -6.0, 0.0, 2.0)]);
        let all = score_vocabulary(&s, &vocab);
        for (t, sub) in vocab.iter().zip(&all) {
            let expected = SubScores {
                nc: score_no_collision(&s, t),
                dac: score_drivable_area(&s, t),
                ep: score_progress(&s, t, &vocab),
                c: score_comfort(&s, t),
                ttc: score_ttc(&s, t),
            };
            assert_eq!(*sub, expected);
            assert_eq!(expert_score(&s, t, &vocab), expected);
            if sub.nc == 0.0 {
                assert_eq!(sub.ttc, 0.0);
            }
        }
    }

    #[test]
    fn empty_scene_best_centerline_trajectory_scores_one() {
        let vocab = generate_vocabulary(VocabularySpec::small_test()).unwrap();
        let s = scene(vec![]);
        let fastest_straight = vocab.get(2 * 5 + 4);
        assert_eq!(expert_score(&s, fastest_straight, &vocab), SubScores::ONES);
        let blocked = scene(vec![car(30.0, 0.0, 0.0, 0.0)]);
        let sub = expert_score(&blocked, fastest_straight, &vocab);
        assert_eq!(sub.nc, 0.0);
        assert_eq!(pdm_score(&sub), 0.0);
    }
}
