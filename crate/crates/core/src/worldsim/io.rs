//! Scene files: one JSON object per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Category, Corridor, EgoStatus, Obstacle, Scene};
use crate::error::{Error, Result};

pub const SCENE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRecord {
    format_version: u32,
    category: Category,
    seed: u64,
    frame_index: u64,
    ego: EgoStatus,
    corridor: Corridor,
    obstacles: Vec<Obstacle>,
}

pub fn write_scenes<W: Write>(scenes: &[Scene], mut out: W) -> Result<()> {
    for s in scenes {
        let record = SceneRecord {
            format_version: SCENE_FORMAT_VERSION,
            category: s.category,
            seed: s.seed,
            frame_index: s.frame_index,
            ego: s.ego,
            corridor: s.corridor.clone(),
            obstacles: s.obstacles.clone(),
        };
        serde_json::to_writer(&mut out, &record)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_scenes<R: BufRead>(input: R) -> Result<Vec<Scene>> {
    let mut scenes = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SceneRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
        if record.format_version != SCENE_FORMAT_VERSION {
            return Err(Error::SchemaVersion {
                expected: SCENE_FORMAT_VERSION,
                found: record.format_version,
            });
        }
        let scene = Scene {
            ego: record.ego,
            corridor: record.corridor,
            obstacles: record.obstacles,
            category: record.category,
            seed: record.seed,
            frame_index: record.frame_index,
        };
        scene.validate().map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
        scenes.push(scene);
    }
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsim::{generate_stream, CategoryMix, SceneOptions};

    #[test]
    fn stream_round_trips_exactly() {
        let stream = generate_stream(20, &CategoryMix::all(), 3, &SceneOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_scenes(&stream, &mut buf).unwrap();
        assert_eq!(read_scenes(buf.as_slice()).unwrap(), stream);
        let first = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
        let v: serde_json::Value = serde_json::from_str(&first).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["category", "corridor", "ego", "format_version", "frame_index", "obstacles", "seed"]
        );
    }

    #[test]
    fn rejects_other_versions() {
        let stream = generate_stream(1, &CategoryMix::all(), 3, &SceneOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_scenes(&stream, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("\"format_version\":1", "\"format_version\":9");
        assert!(matches!(read_scenes(text.as_bytes()), Err(Error::SchemaVersion { found: 9, .. })));
    }
}
