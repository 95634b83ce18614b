//! Text checkpoints for planner parameters. Values are written with 17
//! significant digits, which round-trips every f64 exactly.

use std::io::{BufRead, Write};

use super::decoder::{DecoderParams, InputNormalizer, PlannerParams};
use super::features::{FEATURE_LAYOUT_VERSION, INPUT_FEATURES};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(" ")
}

pub fn save_checkpoint<W: Write>(params: &PlannerParams, mut out: W) -> Result<()> {
    let sizes: Vec<String> = params.decoder.sizes().iter().map(|s| s.to_string()).collect();
    writeln!(out, "format_version={CHECKPOINT_FORMAT_VERSION}")?;
    writeln!(out, "layer_sizes={}", sizes.join(","))?;
    writeln!(out, "feature_layout_version={FEATURE_LAYOUT_VERSION}")?;
    writeln!(out, "seed={}", params.seed)?;
    writeln!(out, "input_mean={}", join(&params.normalizer.mean))?;
    writeln!(out, "input_scale={}", join(&params.normalizer.scale))?;
    writeln!(out, "parameters")?;
    for v in params.decoder.flatten() {
        writeln!(out, "{v:.16e}")?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_floats(line: usize, s: &str, expected: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| parse_err(line, format!("{t}: {e}"))))
        .collect::<Result<_>>()?;
    if v.len() != expected {
        return Err(parse_err(line, format!("expected {expected} values, found {}", v.len())));
    }
    Ok(v)
}

pub fn load_checkpoint<R: BufRead>(input: R) -> Result<PlannerParams> {
    let mut lines = input.lines().enumerate();
    let mut header = |key: &str| -> Result<(usize, String)> {
        let (i, line) = lines.next().ok_or_else(|| parse_err(0, format!("missing {key}")))?;
        let line = line?;
        let value = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| parse_err(i + 1, format!("expected {key}=")))?;
        Ok((i + 1, value.to_string()))
    };
    let (ln, v) = header("format_version")?;
    let version: u32 = v.parse().map_err(|_| parse_err(ln, "bad format_version"))?;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::SchemaVersion { expected: CHECKPOINT_FORMAT_VERSION, found: version });
    }
    let (ln, v) = header("layer_sizes")?;
    let sizes: Vec<usize> = v
        .split(',')
        .map(|t| t.parse().map_err(|_| parse_err(ln, "bad layer size")))
        .collect::<Result<_>>()?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(parse_err(ln, "need at least two positive layer sizes"));
    }
    let (ln, v) = header("feature_layout_version")?;
    let layout: u32 = v.parse().map_err(|_| parse_err(ln, "bad feature_layout_version"))?;
    if layout != FEATURE_LAYOUT_VERSION {
        return Err(Error::SchemaVersion { expected: FEATURE_LAYOUT_VERSION, found: layout });
    }
    let (ln, v) = header("seed")?;
    let seed: u64 = v.parse().map_err(|_| parse_err(ln, "bad seed"))?;
    let (ln, v) = header("input_mean")?;
    let mean = parse_floats(ln, &v, INPUT_FEATURES)?;
    let (ln, v) = header("input_scale")?;
    let scale = parse_floats(ln, &v, INPUT_FEATURES)?;
    let (ln, marker) = lines.next().ok_or_else(|| parse_err(0, "missing parameters"))?;
    if marker? != "parameters" {
        return Err(parse_err(ln + 1, "expected parameters"));
    }
    let mut flat = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: f64 = line.trim().parse().map_err(|_| parse_err(i + 1, "bad parameter value"))?;
        if !v.is_finite() {
            return Err(parse_err(i + 1, "non-finite parameter"));
        }
        flat.push(v);
    }
    let decoder = DecoderParams::unflatten(&sizes, &flat)?;
    Ok(PlannerParams { normalizer: InputNormalizer { mean, scale }, decoder, seed })
}
