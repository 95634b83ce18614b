//! Frozen featurizers feeding the score decoder.

use crate::geometry::{Trajectory, Waypoint, DT, HORIZON};
use crate::worldsim::Scene;

pub const SCENE_FEATURES: usize = 32;
pub const TRAJECTORY_FEATURES: usize = 16;
pub const INPUT_FEATURES: usize = SCENE_FEATURES + TRAJECTORY_FEATURES;
/// Bumped whenever the layout below changes; recorded in checkpoints.
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

const OBSTACLE_SLOTS: usize = 3;
const CURVATURE_LOOKAHEAD: f64 = 60.0;
const SAMPLED_WAYPOINTS: [usize; 5] = [4, 9, 19, 29, 39];

/// Layout: `[speed, accel, cmd_left, cmd_straight, cmd_right, half_width,
/// curvature x5, (dx, dy, vx, vy, hl, hw) x3 nearest obstacles, 0, 0, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFeatures(pub [f64; SCENE_FEATURES]);

/// Layout: `[(x, y) at waypoints 4, 9, 19, 29, 39, final heading, mean speed,
/// mean |curvature|, 0, 0, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFeatures(pub [f64; TRAJECTORY_FEATURES]);

pub fn encode_scene(scene: &Scene) -> SceneFeatures {
    let mut f = [0.0; SCENE_FEATURES];
    f[0] = scene.ego.speed / 10.0;
    f[1] = scene.ego.acceleration / 5.0;
    f[2..5].copy_from_slice(&scene.ego.command.one_hot());
    f[5] = scene.corridor.half_width / 5.0;
    let start = scene.corridor.project(0.0, 0.0).arc;
    for i in 0..5 {
        let s = start + CURVATURE_LOOKAHEAD * i as f64 / 4.0;
        f[6 + i] = 20.0 * scene.corridor.curvature_at(s);
    }
    let mut nearest: Vec<_> = scene.obstacles.iter().collect();
    nearest.sort_by(|a, b| a.x.hypot(a.y).total_cmp(&b.x.hypot(b.y)));
    for (slot, o) in nearest.iter().take(OBSTACLE_SLOTS).enumerate() {
        let base = 11 + 6 * slot;
        f[base..base + 6].copy_from_slice(&[
            o.x / 30.0,
            o.y / 10.0,
            o.vx / 10.0,
            o.vy / 10.0,
            o.hl / 3.0,
            o.hw / 3.0,
        ]);
    }
    SceneFeatures(f)
}

pub fn encode_trajectory(traj: &Trajectory) -> TrajectoryFeatures {
    let mut f = [0.0; TRAJECTORY_FEATURES];
    let wps = traj.waypoints();
    for (slot, &i) in SAMPLED_WAYPOINTS.iter().enumerate() {
        f[2 * slot] = wps[i].x / 30.0;
        f[2 * slot + 1] = wps[i].y / 10.0;
    }
    f[10] = traj.last().heading;
    let mut prev = Waypoint::ORIGIN;
    let mut length = 0.0;
    let mut turning = 0.0;
    for w in wps {
        length += w.distance(&prev);
        turning += crate::geometry::wrap_angle(w.heading - prev.heading).abs();
        prev = *w;
    }
    let duration = HORIZON as f64 * DT;
    f[11] = length / duration / 10.0;
    f[12] = if length > 1e-9 { 10.0 * turning / length } else { 0.0 };
    TrajectoryFeatures(f)
}

/// Concatenates scene and trajectory features into one decoder input row.
pub fn input_row(scene: &SceneFeatures, traj: &TrajectoryFeatures) -> [f64; INPUT_FEATURES] {
    let mut row = [0.0; INPUT_FEATURES];
    row[..SCENE_FEATURES].copy_from_slice(&scene.0);
    row[SCENE_FEATURES..].copy_from_slice(&traj.0);
    row
}
