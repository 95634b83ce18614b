//! Resolved run configuration: defaults, then `CENTAUR_SIM_SEED`, then the config file,
//! then command-line flags.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use centaur_sim::deploy::{DeploymentConfig, Strategy, UpdateMode};
use centaur_sim::evalharness::DEFAULT_THRESHOLDS;
use centaur_sim::geometry::VocabularySpec;
use centaur_sim::scorer::{Optimizer, TrainConfig};
use centaur_sim::uncertainty::{Measure, UncertaintyConfig};
use centaur_sim::worldsim::{Category, CategoryMix, SceneOptions};
use centaur_sim::{Error, Result};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Episodes of consecutive frames.
    Stream,
    /// Independent single-frame scenes.
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub scenes: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub n_scenes: usize,
    pub layout: Layout,
    pub categories: Vec<Category>,
    pub density: f64,
    pub k: usize,
    pub speed_levels: usize,
    pub curvature_levels: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: String,
    pub imitation_weight: f64,
    pub strategy: Strategy,
    pub measure: Measure,
    pub eta: f64,
    pub buffer: usize,
    pub threshold: f64,
    pub fallback_size: usize,
    pub mode: UpdateMode,
    pub m: usize,
    pub tau: f64,
    pub tau_regression: f64,
    pub n_samples: usize,
    pub thresholds: Vec<f64>,
    pub plot_frames: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let deploy = DeploymentConfig::default();
        let unc = UncertaintyConfig::default();
        let vocab = VocabularySpec::default();
        RunConfig {
            seed: 0,
            jobs: 1,
            out: PathBuf::from("out"),
            scenes: None,
            reference: None,
            vocab: None,
            checkpoint: None,
            n_scenes: 200,
            layout: Layout::Stream,
            categories: Category::ALL.to_vec(),
            density: 0.0,
            k: vocab.k,
            speed_levels: vocab.speed_levels,
            curvature_levels: vocab.curvature_levels,
            epochs: 40,
            lr: 1e-3,
            batch_size: 8,
            optimizer: "adam".into(),
            imitation_weight: 0.01,
            strategy: deploy.strategy,
            measure: unc.measure,
            eta: deploy.eta,
            buffer: deploy.buffer,
            threshold: deploy.threshold,
            fallback_size: deploy.fallback_size,
            mode: deploy.mode,
            m: unc.m,
            tau: unc.tau,
            tau_regression: unc.tau_regression,
            n_samples: unc.n_samples,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            plot_frames: 4,
        }
    }
}

fn invalid(key: &str, value: &str) -> Error {
    Error::InvalidParameter(format!("bad value {value:?} for {key}"))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| invalid(key, value))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

fn join<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn path_or_empty(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Sets one key; the keys are exactly those printed by [`RunConfig::render`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || (!value.is_empty()).then(|| PathBuf::from(value));
        match key {
            "seed" => self.seed = parse(key, value)?,
            "jobs" => self.jobs = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "scenes" => self.scenes = path(),
            "reference" => self.reference = path(),
            "vocab" => self.vocab = path(),
            "checkpoint" => self.checkpoint = path(),
            "n_scenes" => self.n_scenes = parse(key, value)?,
            "layout" => {
                self.layout = match value {
                    "stream" => Layout::Stream,
                    "independent" => Layout::Independent,
                    _ => return Err(invalid(key, value)),
                }
            }
            "categories" => {
                self.categories = if value == "all" {
                    Category::ALL.to_vec()
                } else {
                    value.split(',').map(Category::from_str).collect::<Result<_>>()?
                }
            }
            "density" => self.density = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "speed_levels" => self.speed_levels = parse(key, value)?,
            "curvature_levels" => self.curvature_levels = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "optimizer" => match value {
                "adam" | "gd" => self.optimizer = value.into(),
                _ => return Err(invalid(key, value)),
            },
            "imitation_weight" => self.imitation_weight = parse(key, value)?,
            "strategy" => self.strategy = value.parse()?,
            "measure" => self.measure = value.parse()?,
            "eta" => self.eta = parse(key, value)?,
            "buffer" => self.buffer = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "fallback_size" => self.fallback_size = parse(key, value)?,
            "mode" => {
                self.mode = match value {
                    "persistent" => UpdateMode::Persistent,
                    "reset_per_frame" => UpdateMode::ResetPerFrame,
                    _ => return Err(invalid(key, value)),
                }
            }
            "m" => self.m = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "tau_regression" => self.tau_regression = parse(key, value)?,
            "n_samples" => self.n_samples = parse(key, value)?,
            "thresholds" => self.thresholds = parse_list(key, value)?,
            "plot_frames" => self.plot_frames = parse(key, value)?,
            _ => return Err(Error::InvalidParameter(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` config file; `format_version` must come first.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        let mut version_seen = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: n + 1, message: format!("expected key=value, got {line:?}") })?;
            let (key, value) = (key.trim(), value.trim());
            if !version_seen {
                if key != "format_version" {
                    return Err(Error::Parse { line: n + 1, message: "format_version must be the first key".into() });
                }
                let found: u32 = parse(key, value)?;
                if found != CONFIG_FORMAT_VERSION {
                    return Err(Error::SchemaVersion { expected: CONFIG_FORMAT_VERSION, found });
                }
                version_seen = true;
                continue;
            }
            self.set(key, value).map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
        }
        if !version_seen {
            return Err(Error::Parse { line: 1, message: "missing format_version".into() });
        }
        Ok(())
    }

    /// Every key in a form accepted back by [`RunConfig::apply_file`].
    pub fn render(&self) -> String {
        let optimizer = &self.optimizer;
        let layout = match self.layout {
            Layout::Stream => "stream",
            Layout::Independent => "independent",
        };
        let mode = match self.mode {
            UpdateMode::Persistent => "persistent",
            UpdateMode::ResetPerFrame => "reset_per_frame",
        };
        let categories = join(&self.categories.iter().map(|c| c.code()).collect::<Vec<_>>());
        let lines = [
            format!("format_version={CONFIG_FORMAT_VERSION}"),
            format!("seed={}", self.seed),
            format!("jobs={}", self.jobs),
            format!("out={}", self.out.display()),
            format!("scenes={}", path_or_empty(&self.scenes)),
            format!("reference={}", path_or_empty(&self.reference)),
            format!("vocab={}", path_or_empty(&self.vocab)),
            format!("checkpoint={}", path_or_empty(&self.checkpoint)),
            format!("n_scenes={}", self.n_scenes),
            format!("layout={layout}"),
            format!("categories={categories}"),
            format!("density={:?}", self.density),
            format!("k={}", self.k),
            format!("speed_levels={}", self.speed_levels),
            format!("curvature_levels={}", self.curvature_levels),
            format!("epochs={}", self.epochs),
            format!("lr={:?}", self.lr),
            format!("batch_size={}", self.batch_size),
            format!("optimizer={optimizer}"),
            format!("imitation_weight={:?}", self.imitation_weight),
            format!("strategy={}", self.strategy),
            format!("measure={}", self.measure),
            format!("eta={:?}", self.eta),
            format!("buffer={}", self.buffer),
            format!("threshold={:?}", self.threshold),
            format!("fallback_size={}", self.fallback_size),
            format!("mode={mode}"),
            format!("m={}", self.m),
            format!("tau={:?}", self.tau),
            format!("tau_regression={:?}", self.tau_regression),
            format!("n_samples={}", self.n_samples),
            format!("thresholds={}", join(&self.thresholds.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>())),
            format!("plot_frames={}", self.plot_frames),
        ];
        lines.join("\n") + "\n"
    }

    pub fn vocabulary_spec(&self) -> VocabularySpec {
        VocabularySpec { k: self.k, speed_levels: self.speed_levels, curvature_levels: self.curvature_levels, seed: self.seed }
    }

    pub fn scene_options(&self) -> SceneOptions {
        SceneOptions { obstacle_density: self.density }
    }

    pub fn category_mix(&self) -> CategoryMix {
        CategoryMix::uniform(&self.categories)
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.epochs, self.lr, self.seed);
        cfg.batch_size = self.batch_size;
        cfg.imitation_weight = self.imitation_weight;
        cfg.optimizer = if self.optimizer == "adam" { Optimizer::adam() } else { Optimizer::GradientDescent };
        cfg
    }

    pub fn deployment_config(&self, strategy: Strategy) -> DeploymentConfig {
        DeploymentConfig {
            strategy,
            eta: self.eta,
            buffer: self.buffer,
            threshold: self.threshold,
            fallback_size: self.fallback_size,
            mode: self.mode,
            uncertainty: UncertaintyConfig {
                m: self.m,
                tau: self.tau,
                tau_regression: self.tau_regression,
                n_samples: self.n_samples,
                measure: self.measure,
            },
        }
    }
}
