//! Browser bindings: a scene with its scored vocabulary, the entropy of cluster
//! masses, and a few test-time training steps on an untrained planner.

use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use centaur_sim::deploy::{compute_uncertainty_gradient, ttt_step, GradientBuffer};
use centaur_sim::geometry::{generate_vocabulary, lateral_endpoint, PlanningVocabulary, VocabularySpec};
use centaur_sim::scorer::{encode_scene, DecoderParams, PlannerParams, DEFAULT_LAYER_SIZES};
use centaur_sim::uncertainty::{normalized_entropy, CandidateSet, UncertaintyConfig};
use centaur_sim::worldsim::{generate_scene, pdm_score, score_vocabulary, Category};
use centaur_sim::{Error, Result};

/// Demo vocabulary: 7 speeds x 9 yaw rates.
fn demo_vocabulary() -> Result<PlanningVocabulary> {
    generate_vocabulary(VocabularySpec { k: 63, speed_levels: 7, curvature_levels: 9, seed: 0 })
}

#[derive(Serialize)]
pub struct TrajectoryView {
    pub id: usize,
    pub points: Vec<[f64; 2]>,
    pub lateral_endpoint: f64,
    pub pdms: f64,
    pub cluster: usize,
}

#[derive(Serialize)]
pub struct SceneView {
    pub category: String,
    pub half_width: f64,
    pub centerline: Vec<[f64; 2]>,
    /// `[x, y, half_length, half_width]` at t = 0.
    pub obstacles: Vec<[f64; 4]>,
    pub trajectories: Vec<TrajectoryView>,
    /// Cluster entropy of the expert PDMS over the vocabulary.
    pub expert_entropy: f64,
}

pub fn scene_view(category: &str, seed: u64) -> Result<SceneView> {
    let category = Category::from_str(category)?;
    let scene = generate_scene(category, seed);
    let vocab = demo_vocabulary()?;
    let cands = CandidateSet::from_ids(&vocab, (0..vocab.len()).collect())?;
    let pdms: Vec<f64> = score_vocabulary(&scene, &vocab).iter().map(pdm_score).collect();
    let mut mass = [0.0; 5];
    for (p, label) in pdms.iter().zip(cands.assignment.labels()) {
        mass[label.index()] += p;
    }
    let expert_entropy = normalized_entropy(&mass).map(|(h, _)| h).unwrap_or(0.0);
    let trajectories = vocab
        .iter()
        .zip(&pdms)
        .zip(cands.assignment.labels())
        .enumerate()
        .map(|(id, ((t, &pdms), label))| TrajectoryView {
            id,
            points: t.waypoints().iter().map(|w| [w.x, w.y]).collect(),
            lateral_endpoint: lateral_endpoint(t),
            pdms,
            cluster: label.index(),
        })
        .collect();
    Ok(SceneView {
        category: category.code().to_string(),
        half_width: scene.corridor.half_width,
        centerline: scene.corridor.centerline.clone(),
        obstacles: scene.obstacles.iter().map(|o| [o.x, o.y, o.hl, o.hw]).collect(),
        trajectories,
        expert_entropy,
    })
}

#[derive(Serialize)]
pub struct TttTrace {
    /// Cluster entropy before each step and after the last one.
    pub entropy: Vec<f64>,
}

/// Steps an untrained planner on one scene, each step using the gradient of the
/// previous evaluation, and records the cluster entropy along the way.
pub fn ttt_trace(category: &str, seed: u64, eta: f64, steps: usize) -> Result<TttTrace> {
    if !(eta > 0.0) || steps == 0 || steps > 200 {
        return Err(Error::InvalidParameter("need eta > 0 and 1..=200 steps".into()));
    }
    let scene = generate_scene(Category::from_str(category)?, seed);
    let vocab = Arc::new(demo_vocabulary()?);
    let cands = CandidateSet::from_ids(&vocab, (0..vocab.len()).collect())?;
    let feats = encode_scene(&scene);
    let cfg = UncertaintyConfig::default();
    let mut params = PlannerParams::new(DecoderParams::init(&DEFAULT_LAYER_SIZES, seed), seed);
    let mut buffer = GradientBuffer::new(4)?;
    let mut entropy = Vec::with_capacity(steps + 1);
    for step in 0..steps {
        let g = compute_uncertainty_gradient(&params, &feats, &cands, &cfg)?;
        entropy.push(g.value);
        buffer.push(g.decoder, step as u64)?;
        params.decoder = ttt_step(&params.decoder, &buffer, eta)?;
    }
    entropy.push(compute_uncertainty_gradient(&params, &feats, &cands, &cfg)?.value);
    Ok(TttTrace { entropy })
}

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Scene geometry and the expert-scored demo vocabulary as JSON.
#[wasm_bindgen(js_name = sceneView)]
pub fn scene_view_js(category: &str, seed: u32) -> std::result::Result<String, JsValue> {
    let view = scene_view(category, u64::from(seed)).map_err(js_err)?;
    serde_json::to_string(&view).map_err(js_err)
}

/// Shannon entropy of nonnegative cluster masses after normalization.
#[wasm_bindgen(js_name = clusterEntropy)]
pub fn cluster_entropy_js(masses: Vec<f64>) -> std::result::Result<f64, JsValue> {
    normalized_entropy(&masses).map(|(h, _)| h).map_err(js_err)
}

/// Cluster entropy over repeated test-time training steps, as JSON.
#[wasm_bindgen(js_name = tttTrace)]
pub fn ttt_trace_js(category: &str, seed: u32, eta: f64, steps: u32) -> std::result::Result<String, JsValue> {
    let trace = ttt_trace(category, u64::from(seed), eta, steps as usize).map_err(js_err)?;
    serde_json::to_string(&trace).map_err(js_err)
}
