use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{pdm_score, score_vocabulary, Category, Command, Corridor, EgoStatus, Obstacle, Scene};
use crate::error::{Error, Result};
use crate::geometry::{generate_vocabulary, PlanningVocabulary, VocabularySpec};

const CORRIDOR_START: f64 = -10.0;
const CORRIDOR_LENGTH: f64 = 140.0;
const CORRIDOR_STEP: f64 = 2.0;
/// Frames per episode in a stream; obstacles persist within an episode.
pub const EPISODE_LENGTH: usize = 8;
const MAX_ATTEMPTS: u64 = 64;

/// Knobs shared by scene and stream generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneOptions {
    /// Expected number of extra random obstacles scattered in the corridor ahead.
    pub obstacle_density: f64,
}

impl Default for SceneOptions {
    fn default() -> Self {
        SceneOptions { obstacle_density: 0.0 }
    }
}

/// Weighted category mix for streams.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMix(pub Vec<(Category, f64)>);

impl CategoryMix {
    pub fn uniform(categories: &[Category]) -> Self {
        CategoryMix(categories.iter().map(|&c| (c, 1.0)).collect())
    }

    pub fn all() -> Self {
        CategoryMix::uniform(&Category::ALL)
    }

    fn pick(&self, rng: &mut impl Rng) -> Category {
        let total: f64 = self.0.iter().map(|(_, w)| w).sum();
        let mut u = rng.random_range(0.0..total);
        for &(c, w) in &self.0 {
            if u < w {
                return c;
            }
            u -= w;
        }
        self.0.last().unwrap().0
    }
}

struct CorridorShape {
    offset: f64,
    straight: f64,
    curvature: f64,
    half_width: f64,
}

impl CorridorShape {
    fn build(&self) -> Corridor {
        let n = (CORRIDOR_LENGTH / CORRIDOR_STEP) as usize;
        let (mut x, mut y, mut h) = (CORRIDOR_START, self.offset, 0.0f64);
        let mut centerline = vec![[x, y]];
        for i in 0..n {
            let s = CORRIDOR_START + i as f64 * CORRIDOR_STEP;
            let k = if s >= self.straight { self.curvature } else { 0.0 };
            // midpoint heading keeps the polyline on the arc
            let mid = h + 0.5 * k * CORRIDOR_STEP;
            x += CORRIDOR_STEP * mid.cos();
            y += CORRIDOR_STEP * mid.sin();
            h += k * CORRIDOR_STEP;
            centerline.push([x, y]);
        }
        Corridor { half_width: self.half_width, centerline }
    }
}

/// Point at arc length `s` (measured from x = 0 along the centerline), shifted by
/// `lateral` meters to the left of the centerline.
fn along(corridor: &Corridor, s: f64, lateral: f64) -> (f64, f64) {
    let s = s - CORRIDOR_START;
    let mut acc = 0.0;
    for seg in corridor.centerline.windows(2) {
        let ([ax, ay], [bx, by]) = (seg[0], seg[1]);
        let len = (bx - ax).hypot(by - ay);
        if acc + len >= s {
            let t = (s - acc) / len;
            let (ux, uy) = ((bx - ax) / len, (by - ay) / len);
            return (ax + t * (bx - ax) - uy * lateral, ay + t * (by - ay) + ux * lateral);
        }
        acc += len;
    }
    let [x, y] = *corridor.centerline.last().unwrap();
    (x, y + lateral)
}

fn command_for(curvature: f64, straight: f64) -> Command {
    let heading_at_50 = curvature * (50.0 - straight).max(0.0);
    if heading_at_50 > 0.35 {
        Command::Left
    } else if heading_at_50 < -0.35 {
        Command::Right
    } else {
        Command::Straight
    }
}

fn vehicle(x: f64, y: f64, vx: f64, vy: f64) -> Obstacle {
    Obstacle { x, y, vx, vy, hl: 2.25, hw: 1.0 }
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) { 1.0 } else { -1.0 }
}

fn draft(category: Category, rng: &mut ChaCha8Rng, opts: &SceneOptions) -> (EgoStatus, Corridor, Vec<Obstacle>) {
    let speed = rng.random_range(3.0..12.0);
    let acceleration = rng.random_range(-1.0..1.0);
    let offset = rng.random_range(-0.5..0.5);
    let mut obstacles = Vec::new();
    let shape = match category {
        Category::None => {
            let shape = CorridorShape {
                offset,
                straight: rng.random_range(0.0..20.0),
                curvature: rng.random_range(-0.01..0.01),
                half_width: rng.random_range(2.0..3.5),
            };
            let c = shape.build();
            for _ in 0..rng.random_range(0..=2) {
                let (x, y) = along(&c, rng.random_range(15.0..60.0), rng.random_range(-0.5..0.5));
                obstacles.push(vehicle(x, y, rng.random_range(0.0..10.0), 0.0));
            }
            shape
        }
        Category::Roundabout => {
            let shape = CorridorShape {
                offset,
                straight: rng.random_range(5.0..15.0),
                curvature: sign(rng) * rng.random_range(0.03..0.05),
                half_width: rng.random_range(3.0..4.0),
            };
            let side = sign(rng);
            let x = rng.random_range(18.0..35.0);
            let vy = -side * rng.random_range(3.0..6.0);
            obstacles.push(vehicle(x, side * rng.random_range(8.0..18.0), 0.0, vy));
            shape
        }
        Category::YellowLight => {
            let shape = CorridorShape { offset, straight: 200.0, curvature: 0.0, half_width: 2.5 };
            let x = rng.random_range(25.0..40.0);
            let side = sign(rng);
            let vy = -side * rng.random_range(6.0..10.0);
            let t_cross = rng.random_range(1.0..4.0);
            obstacles.push(vehicle(x, -vy * t_cross, 0.0, vy));
            obstacles.push(vehicle(x, -vy * (t_cross + 1.5), 0.0, vy));
            shape
        }
        Category::ExitRamp => {
            let shape = CorridorShape {
                offset,
                straight: rng.random_range(10.0..25.0),
                curvature: -rng.random_range(0.015..0.03),
                half_width: rng.random_range(2.0..3.0),
            };
            let c = shape.build();
            if rng.random_bool(0.5) {
                let (x, y) = along(&c, rng.random_range(20.0..45.0), 0.0);
                obstacles.push(vehicle(x, y, rng.random_range(2.0..6.0), 0.0));
            }
            shape
        }
        Category::UnprotectedLeft => {
            let shape = CorridorShape {
                offset,
                straight: rng.random_range(10.0..20.0),
                curvature: rng.random_range(0.03..0.05),
                half_width: rng.random_range(2.5..3.5),
            };
            let x = rng.random_range(30.0..50.0);
            obstacles.push(vehicle(x, rng.random_range(-1.0..2.0), -rng.random_range(5.0..10.0), 0.0));
            shape
        }
        Category::EnterRamp => {
            let shape = CorridorShape {
                offset,
                straight: rng.random_range(0.0..10.0),
                curvature: rng.random_range(0.005..0.015),
                half_width: rng.random_range(2.5..3.5),
            };
            let x = rng.random_range(8.0..20.0);
            let y = -rng.random_range(4.0..6.0);
            obstacles.push(vehicle(x, y, speed + rng.random_range(-1.0..1.0), rng.random_range(0.5..1.5)));
            shape
        }
        Category::UncommonSign => {
            let shape = CorridorShape {
                offset,
                straight: 200.0,
                curvature: 0.0,
                half_width: rng.random_range(2.5..3.5),
            };
            let x = rng.random_range(20.0..40.0);
            let hw = rng.random_range(0.8..1.5);
            obstacles.push(Obstacle { x, y: rng.random_range(-1.0..1.0), vx: 0.0, vy: 0.0, hl: 0.5, hw });
            shape
        }
        Category::Overtake => {
            let shape = CorridorShape { offset: 0.0, straight: 200.0, curvature: 0.0, half_width: rng.random_range(4.0..5.0) };
            let x = rng.random_range(15.0..30.0);
            obstacles.push(vehicle(x, rng.random_range(-0.8..0.8), rng.random_range(1.0..3.0), 0.0));
            shape
        }
        Category::NoLaneArea => {
            let shape = CorridorShape {
                offset,
                straight: 200.0,
                curvature: 0.0,
                half_width: rng.random_range(6.0..8.0),
            };
            for _ in 0..rng.random_range(2..=4) {
                let x = rng.random_range(10.0..50.0);
                obstacles.push(vehicle(x, rng.random_range(-6.0..6.0), 0.0, 0.0));
            }
            shape
        }
        Category::BadWeather => {
            let shape = CorridorShape {
                offset,
                straight: rng.random_range(0.0..30.0),
                curvature: rng.random_range(-0.015..0.015),
                half_width: rng.random_range(1.8..2.5),
            };
            let c = shape.build();
            for _ in 0..rng.random_range(1..=3) {
                let (x, y) = along(&c, rng.random_range(12.0..55.0), rng.random_range(-0.8..0.8));
                obstacles.push(vehicle(x, y, rng.random_range(0.0..4.0), rng.random_range(-0.3..0.3)));
            }
            shape
        }
        Category::Yield => {
            let shape = CorridorShape {
                offset,
                straight: rng.random_range(10.0..40.0),
                curvature: rng.random_range(-0.01..0.01),
                half_width: rng.random_range(2.0..3.5),
            };
            let side = sign(rng);
            let x = rng.random_range(15.0..35.0);
            let vy = -side * rng.random_range(0.8..2.0);
            obstacles.push(Obstacle { x, y: side * rng.random_range(3.0..6.0), vx: 0.0, vy, hl: 0.3, hw: 0.3 });
            shape
        }
    };
    let corridor = shape.build();
    // extra scatter: Poisson-distributed count via exponential gaps
    let mut budget = opts.obstacle_density;
    while budget > 0.0 {
        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        budget += u.ln();
        if budget <= 0.0 {
            break;
        }
        let (x, y) = along(&corridor, rng.random_range(10.0..60.0), rng.random_range(-2.5..2.5));
        obstacles.push(vehicle(x, y, rng.random_range(-3.0..6.0), rng.random_range(-1.0..1.0)));
    }
    let command = command_for(shape.curvature, shape.straight);
    (EgoStatus { speed, acceleration, command }, corridor, obstacles)
}

fn test_vocabulary() -> &'static PlanningVocabulary {
    static VOCAB: OnceLock<PlanningVocabulary> = OnceLock::new();
    VOCAB.get_or_init(|| generate_vocabulary(VocabularySpec::small_test()).unwrap())
}

fn category_salt(category: Category) -> u64 {
    0x9e37_79b9_7f4a_7c15u64.wrapping_mul(category.index() as u64 + 1)
}

/// Deterministic scene for `(category, seed)`.
///
/// Drafts are redrawn until at least one entry of the 25-entry test vocabulary scores
/// a positive PDMS; after the attempt budget the obstacles are dropped.
pub fn generate_scene_with(category: Category, seed: u64, opts: &SceneOptions) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ category_salt(category));
    let vocab = test_vocabulary();
    let mut last = None;
    for _ in 0..MAX_ATTEMPTS {
        let (ego, corridor, obstacles) = draft(category, &mut rng, opts);
        let scene = Scene { ego, corridor, obstacles, category, seed, frame_index: 0 };
        if score_vocabulary(&scene, vocab).iter().any(|s| pdm_score(s) > 0.0) {
            return scene;
        }
        last = Some(scene);
    }
    let mut scene = last.unwrap();
    scene.obstacles.clear();
    scene
}

pub fn generate_scene(category: Category, seed: u64) -> Scene {
    generate_scene_with(category, seed, &SceneOptions::default())
}

fn episode_seed(seed: u64, episode: usize) -> u64 {
    if episode == 0 {
        seed
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(episode as u64);
        rng.random()
    }
}

/// A stream of `n_frames` scenes with consecutive frame indices.
///
/// Frames come in episodes of [`EPISODE_LENGTH`]: the first frame of an episode is a
/// fresh scene and each later frame perturbs its predecessor's kinematics, keeping the
/// obstacle set.
pub fn generate_stream(
    n_frames: usize,
    mix: &CategoryMix,
    seed: u64,
    opts: &SceneOptions,
) -> Result<Vec<Scene>> {
    generate_episodes(n_frames, mix, seed, opts, EPISODE_LENGTH)
}

/// `n` independent scenes (episodes of one frame), e.g. for training sets.
pub fn generate_scenes(n: usize, mix: &CategoryMix, seed: u64, opts: &SceneOptions) -> Result<Vec<Scene>> {
    generate_episodes(n, mix, seed, opts, 1)
}

fn generate_episodes(
    n_frames: usize,
    mix: &CategoryMix,
    seed: u64,
    opts: &SceneOptions,
    episode_length: usize,
) -> Result<Vec<Scene>> {
    if mix.0.is_empty() || mix.0.iter().any(|(_, w)| !(*w >= 0.0)) || mix.0.iter().all(|(_, w)| *w == 0.0) {
        return Err(Error::InvalidParameter("category mix needs a positive weight".into()));
    }
    let mut picker = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let pos_noise = Normal::new(0.0, 0.2).unwrap();
    let vel_noise = Normal::new(0.0, 0.1).unwrap();
    let mut frames: Vec<Scene> = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let scene = if i % episode_length == 0 {
            let category = mix.pick(&mut picker);
            generate_scene_with(category, episode_seed(seed, i / episode_length), opts)
        } else {
            let mut s = frames[i - 1].clone();
            for o in &mut s.obstacles {
                o.x += pos_noise.sample(&mut jitter);
                o.y += pos_noise.sample(&mut jitter);
                o.vx += vel_noise.sample(&mut jitter);
                o.vy += vel_noise.sample(&mut jitter);
            }
            s.ego.speed = (s.ego.speed + vel_noise.sample(&mut jitter)).clamp(0.0, 20.0);
            s
        };
        frames.push(Scene { frame_index: i as u64, ..scene });
    }
    Ok(frames)
}
