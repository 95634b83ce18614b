use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{wrap_angle, Trajectory, Waypoint, DT, HORIZON};
use crate::error::{Error, Result};

pub const VOCAB_FORMAT_VERSION: u32 = 1;
pub const MIN_SPEED: f64 = 1.0;
pub const MAX_SPEED: f64 = 15.0;
/// Largest yaw rate of the arc grid in rad/s (2 rad of heading change over the horizon).
pub const MAX_YAW_RATE: f64 = 0.5;
/// Bound on the longitudinal acceleration of jittered fill entries.
const MAX_FILL_ACCEL: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabularySpec {
    pub k: usize,
    pub speed_levels: usize,
    pub curvature_levels: usize,
    pub seed: u64,
}

impl Default for VocabularySpec {
    fn default() -> Self {
        VocabularySpec { k: 512, speed_levels: 8, curvature_levels: 21, seed: 0 }
    }
}

impl VocabularySpec {
    /// The 5 x 5 grid used throughout the tests.
    pub fn small_test() -> Self {
        VocabularySpec { k: 25, speed_levels: 5, curvature_levels: 5, seed: 0 }
    }

    fn check(&self) -> Result<()> {
        if self.k < 25 {
            return Err(Error::InvalidParameter(format!("k must be >= 25, got {}", self.k)));
        }
        if self.speed_levels < 2 {
            return Err(Error::InvalidParameter("speed_levels must be >= 2".into()));
        }
        if self.curvature_levels < 5 || self.curvature_levels % 2 == 0 {
            return Err(Error::InvalidParameter(
                "curvature_levels must be odd and >= 5".into(),
            ));
        }
        let grid = self.speed_levels * self.curvature_levels;
        if self.k < grid {
            return Err(Error::InvalidParameter(format!(
                "k = {} is smaller than the {grid}-entry arc grid",
                self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningVocabulary {
    pub spec: VocabularySpec,
    trajectories: Vec<Trajectory>,
}

impl PlanningVocabulary {
    pub fn new(spec: VocabularySpec, trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.len() != spec.k {
            return Err(Error::InvalidParameter(format!(
                "header says k = {}, found {} trajectories",
                spec.k,
                trajectories.len()
            )));
        }
        for (i, t) in trajectories.iter().enumerate() {
            if t.id != i as i64 {
                return Err(Error::InvalidParameter(format!(
                    "trajectory at position {i} has id {}",
                    t.id
                )));
            }
            t.validate()?;
        }
        Ok(PlanningVocabulary { spec, trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn get(&self, id: usize) -> &Trajectory {
        &self.trajectories[id]
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.trajectories.iter()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Constant-curvature arc with a linear speed ramp from `v_start` to `v_end`.
///
/// Curvature is `yaw_rate / mean_speed`, so the heading change over the horizon
/// equals `yaw_rate * 4 s` regardless of the speed profile.
pub fn arc_trajectory(id: i64, v_start: f64, v_end: f64, yaw_rate: f64) -> Trajectory {
    let duration = HORIZON as f64 * DT;
    let accel = (v_end - v_start) / duration;
    let mean_speed = 0.5 * (v_start + v_end);
    let kappa = yaw_rate / mean_speed;
    let waypoints = (1..=HORIZON)
        .map(|i| {
            let t = i as f64 * DT;
            let s = v_start * t + 0.5 * accel * t * t;
            let theta = kappa * s;
            if kappa.abs() < 1e-12 {
                Waypoint::new(s, 0.0, 0.0)
            } else {
                Waypoint::new(
                    theta.sin() / kappa,
                    (1.0 - theta.cos()) / kappa,
                    wrap_angle(theta),
                )
            }
        })
        .collect();
    Trajectory { id, waypoints }
}

/// Builds a vocabulary of constant-curvature arcs.
///
/// The first `speed_levels * curvature_levels` entries form a grid of constant
/// speeds in `[1, 15]` m/s and yaw rates symmetric about zero (curvature-major:
/// `id = curvature_index * speed_levels + speed_index`). The remaining entries are
/// deterministic jittered copies of grid cells with a gentle speed ramp.
pub fn generate_vocabulary(spec: VocabularySpec) -> Result<PlanningVocabulary> {
    spec.check()?;
    let speeds: Vec<f64> = linspace(MIN_SPEED, MAX_SPEED, spec.speed_levels).collect();
    let yaw_rates: Vec<f64> =
        linspace(-MAX_YAW_RATE, MAX_YAW_RATE, spec.curvature_levels).collect();
    let mut trajectories = Vec::with_capacity(spec.k);
    for &w in &yaw_rates {
        for &v in &speeds {
            let w = if w.abs() < 1e-12 { 0.0 } else { w };
            trajectories.push(arc_trajectory(trajectories.len() as i64, v, v, w));
        }
    }

    let speed_step = (MAX_SPEED - MIN_SPEED) / (spec.speed_levels - 1) as f64;
    let yaw_step = 2.0 * MAX_YAW_RATE / (spec.curvature_levels - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    while trajectories.len() < spec.k {
        let v = speeds[rng.random_range(0..speeds.len())];
        let w = yaw_rates[rng.random_range(0..yaw_rates.len())];
        let v_start =
            (v + speed_step * rng.random_range(-0.5..0.5)).clamp(MIN_SPEED, MAX_SPEED);
        let ramp = HORIZON as f64 * DT * MAX_FILL_ACCEL * rng.random_range(-1.0..1.0);
        let v_end = (v_start + ramp).clamp(MIN_SPEED, MAX_SPEED);
        let w = (w + yaw_step * rng.random_range(-0.5..0.5)).clamp(-MAX_YAW_RATE, MAX_YAW_RATE);
        trajectories.push(arc_trajectory(trajectories.len() as i64, v_start, v_end, w));
    }
    PlanningVocabulary::new(spec, trajectories)
}

/// Writes the vocabulary cache: a header line followed by one line per trajectory
/// holding the id and 40 `x y heading` triples with 6 fractional digits.
pub fn write_vocabulary<W: Write>(vocab: &PlanningVocabulary, mut out: W) -> Result<()> {
    let s = &vocab.spec;
    writeln!(
        out,
        "format_version={VOCAB_FORMAT_VERSION} k={} speed_levels={} curvature_levels={} seed={}",
        s.k, s.speed_levels, s.curvature_levels, s.seed
    )?;
    let mut line = String::new();
    for t in vocab.iter() {
        line.clear();
        write!(line, "{}", t.id).unwrap();
        for w in t.waypoints() {
            write!(line, " {:.6} {:.6} {:.6}", w.x, w.y, w.heading).unwrap();
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn parse_header(line: &str) -> Result<VocabularySpec> {
    let mut version = None;
    let (mut k, mut speeds, mut curvs, mut seed) = (None, None, None, None);
    for field in line.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("malformed header field `{field}`"),
        })?;
        let parse = |v: &str| {
            v.parse::<u64>().map_err(|e| Error::Parse { line: 1, message: format!("{key}: {e}") })
        };
        match key {
            "format_version" => version = Some(parse(value)? as u32),
            "k" => k = Some(parse(value)? as usize),
            "speed_levels" => speeds = Some(parse(value)? as usize),
            "curvature_levels" => curvs = Some(parse(value)? as usize),
            "seed" => seed = Some(parse(value)?),
            other => {
                return Err(Error::Parse { line: 1, message: format!("unknown header key `{other}`") })
            }
        }
    }
    let missing = |name: &str| Error::Parse { line: 1, message: format!("missing `{name}`") };
    let version = version.ok_or_else(|| missing("format_version"))?;
    if version != VOCAB_FORMAT_VERSION {
        return Err(Error::SchemaVersion { expected: VOCAB_FORMAT_VERSION, found: version });
    }
    Ok(VocabularySpec {
        k: k.ok_or_else(|| missing("k"))?,
        speed_levels: speeds.ok_or_else(|| missing("speed_levels"))?,
        curvature_levels: curvs.ok_or_else(|| missing("curvature_levels"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
    })
}

/// Reads a vocabulary cache written by [`write_vocabulary`], validating every trajectory.
pub fn read_vocabulary<R: BufRead>(input: R) -> Result<PlanningVocabulary> {
    let mut lines = input.lines();
    let header = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })??;
    let spec = parse_header(&header)?;
    let mut trajectories = Vec::with_capacity(spec.k);
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = n + 2;
        let err = |message: String| Error::Parse { line: lineno, message };
        let mut fields = line.split_whitespace();
        let id: i64 = fields
            .next()
            .ok_or_else(|| err("missing id".into()))?
            .parse()
            .map_err(|e| err(format!("id: {e}")))?;
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|e| err(format!("{f}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != 3 * HORIZON {
            return Err(err(format!("expected {} values, got {}", 3 * HORIZON, values.len())));
        }
        let waypoints = values.chunks(3).map(|c| Waypoint::new(c[0], c[1], c[2])).collect();
        trajectories.push(Trajectory::new(id, waypoints).map_err(|e| err(e.to_string()))?);
    }
    PlanningVocabulary::new(spec, trajectories)
}
