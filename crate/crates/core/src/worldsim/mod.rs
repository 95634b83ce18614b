//! Synthetic bird's-eye-view scenes and the rule-based expert scorer.

mod generate;
mod io;
mod scoring;

pub use generate::{
    generate_scene, generate_scene_with, generate_scenes, generate_stream, CategoryMix, SceneOptions, EPISODE_LENGTH,
};
pub use io::{read_scenes, write_scenes, SCENE_FORMAT_VERSION};
pub use scoring::{
    expert_score, pdm_score, score_comfort, score_drivable_area, score_no_collision,
    score_progress, score_ttc, score_vocabulary, ExpertScorer, EGO_HALF_LENGTH, EGO_HALF_WIDTH,
    MAX_ACCEL, MAX_JERK,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Left,
    Straight,
    Right,
}

impl Command {
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            Command::Left => [1.0, 0.0, 0.0],
            Command::Straight => [0.0, 1.0, 0.0],
            Command::Right => [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoStatus {
    pub speed: f64,
    pub acceleration: f64,
    pub command: Command,
}

/// Axis-aligned box moving at constant velocity in the ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    /// Half length along x.
    pub hl: f64,
    /// Half width along y.
    pub hw: f64,
}

impl Obstacle {
    pub fn at(&self, t: f64) -> (f64, f64) {
        (self.x + self.vx * t, self.y + self.vy * t)
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

/// Drivable corridor: every point within `half_width` of the centerline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub half_width: f64,
    pub centerline: Vec<[f64; 2]>,
}

/// Closest point on a polyline.
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    pub distance: f64,
    /// Arc length of the closest point from the first centerline vertex.
    pub arc: f64,
}

impl Corridor {
    pub fn project(&self, x: f64, y: f64) -> Projection {
        let mut best = Projection { distance: f64::INFINITY, arc: 0.0 };
        let mut s0 = 0.0;
        for seg in self.centerline.windows(2) {
            let ([ax, ay], [bx, by]) = (seg[0], seg[1]);
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            let len = len2.sqrt();
            let t = (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0);
            let (px, py) = (ax + t * dx, ay + t * dy);
            let d = (x - px).hypot(y - py);
            if d < best.distance {
                best = Projection { distance: d, arc: s0 + t * len };
            }
            s0 += len;
        }
        best
    }

    pub fn length(&self) -> f64 {
        self.centerline
            .windows(2)
            .map(|s| (s[1][0] - s[0][0]).hypot(s[1][1] - s[0][1]))
            .sum()
    }

    /// Signed curvature of the centerline near arc length `s` (turning angle per meter).
    pub fn curvature_at(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        let pts = &self.centerline;
        for i in 1..pts.len().saturating_sub(1) {
            let l0 = (pts[i][0] - pts[i - 1][0]).hypot(pts[i][1] - pts[i - 1][1]);
            let l1 = (pts[i + 1][0] - pts[i][0]).hypot(pts[i + 1][1] - pts[i][1]);
            if acc + l0 >= s || i + 2 == pts.len() {
                let h0 = (pts[i][1] - pts[i - 1][1]).atan2(pts[i][0] - pts[i - 1][0]);
                let h1 = (pts[i + 1][1] - pts[i][1]).atan2(pts[i + 1][0] - pts[i][0]);
                return crate::geometry::wrap_angle(h1 - h0) / (0.5 * (l0 + l1));
            }
            acc += l0;
        }
        0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(1.5..=8.0).contains(&self.half_width) {
            return Err(Error::InvalidParameter(format!(
                "corridor half_width {} outside [1.5, 8]",
                self.half_width
            )));
        }
        if self.centerline.len() < 2 {
            return Err(Error::InvalidParameter("centerline needs at least 2 points".into()));
        }
        for seg in self.centerline.windows(2) {
            let d = (seg[1][0] - seg[0][0]).hypot(seg[1][1] - seg[0][1]);
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter("centerline arc length must increase".into()));
            }
        }
        Ok(())
    }
}

/// Scenario taxonomy; `None` marks ordinary driving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "RDBT")]
    Roundabout,
    #[serde(rename = "YLLT")]
    YellowLight,
    #[serde(rename = "EXR")]
    ExitRamp,
    #[serde(rename = "UNPL")]
    UnprotectedLeft,
    #[serde(rename = "ENR")]
    EnterRamp,
    #[serde(rename = "UNTS")]
    UncommonSign,
    #[serde(rename = "OTLC")]
    Overtake,
    #[serde(rename = "NLA")]
    NoLaneArea,
    #[serde(rename = "BWTH")]
    BadWeather,
    #[serde(rename = "YLD")]
    Yield,
    #[serde(rename = "NONE")]
    None,
}

impl Category {
    /// All categories in report order, `None` last.
    pub const ALL: [Category; 11] = [
        Category::Roundabout,
        Category::YellowLight,
        Category::ExitRamp,
        Category::UnprotectedLeft,
        Category::EnterRamp,
        Category::UncommonSign,
        Category::Overtake,
        Category::NoLaneArea,
        Category::BadWeather,
        Category::Yield,
        Category::None,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Category::Roundabout => "RDBT",
            Category::YellowLight => "YLLT",
            Category::ExitRamp => "EXR",
            Category::UnprotectedLeft => "UNPL",
            Category::EnterRamp => "ENR",
            Category::UncommonSign => "UNTS",
            Category::Overtake => "OTLC",
            Category::NoLaneArea => "NLA",
            Category::BadWeather => "BWTH",
            Category::Yield => "YLD",
            Category::None => "NONE",
        }
    }

    pub fn index(self) -> usize {
        Category::ALL.iter().position(|&c| c == self).unwrap()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub ego: EgoStatus,
    pub corridor: Corridor,
    pub obstacles: Vec<Obstacle>,
    pub category: Category,
    pub seed: u64,
    pub frame_index: u64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=20.0).contains(&self.ego.speed) || self.ego.acceleration.abs() > 5.0 {
            return Err(Error::InvalidParameter("ego status out of range".into()));
        }
        self.corridor.validate()?;
        for o in &self.obstacles {
            if !(o.hl > 0.0 && o.hw > 0.0) || o.speed() > 25.0 {
                return Err(Error::InvalidParameter(format!("invalid obstacle {o:?}")));
            }
        }
        Ok(())
    }
}

/// Expert sub-scores, each in `[0, 1]`. Array order is `[nc, dac, ep, c, ttc]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SubScores {
    pub nc: f64,
    pub dac: f64,
    pub ep: f64,
    pub c: f64,
    pub ttc: f64,
}

impl SubScores {
    pub const ONES: SubScores = SubScores { nc: 1.0, dac: 1.0, ep: 1.0, c: 1.0, ttc: 1.0 };

    pub fn to_array(self) -> [f64; 5] {
        [self.nc, self.dac, self.ep, self.c, self.ttc]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        SubScores { nc: a[0], dac: a[1], ep: a[2], c: a[3], ttc: a[4] }
    }
}
