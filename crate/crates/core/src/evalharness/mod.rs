//! Benchmark runs, failure identification and report emission.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deploy::{run_deployment, DeploymentConfig, FallbackSet, FrameRecord, Planner, Strategy};
use crate::error::{Error, Result};
use crate::uncertainty::Measure;
use crate::worldsim::{pdm_score, score_vocabulary, Category, Scene, SubScores};

/// Default failure-identification threshold grid.
pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.2, 0.5, 0.8, 1.1, 1.4];

/// Sum by recursive halving, so the result does not depend on how work was split.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}

/// Mean sub-scores and PDMS in percent over a group of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub label: String,
    pub frames: usize,
    pub nc: f64,
    pub dac: f64,
    pub ep: f64,
    pub c: f64,
    pub ttc: f64,
    pub pdms: f64,
}

impl ScoreRow {
    pub const CSV_HEADER: &'static str = "label,frames,nc,dac,ep,c,ttc,pdms";

    pub fn from_scores(label: &str, scores: &[(SubScores, f64)]) -> Self {
        let col = |f: &dyn Fn(&(SubScores, f64)) -> f64| 100.0 * mean(&scores.iter().map(f).collect::<Vec<_>>());
        ScoreRow {
            label: label.to_string(),
            frames: scores.len(),
            nc: col(&|s| s.0.nc),
            dac: col(&|s| s.0.dac),
            ep: col(&|s| s.0.ep),
            c: col(&|s| s.0.c),
            ttc: col(&|s| s.0.ttc),
            pdms: col(&|s| s.1),
        }
    }

    fn values(&self) -> [f64; 6] {
        [self.nc, self.dac, self.ep, self.c, self.ttc, self.pdms]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub strategy: Strategy,
    pub measure: Measure,
    pub records: Vec<FrameRecord>,
    pub overall: ScoreRow,
    /// Per category code, in taxonomy order; categories absent from the stream are omitted.
    pub categories: Vec<ScoreRow>,
    /// Per-frame expert argmax over the vocabulary.
    pub human: ScoreRow,
}

impl BenchmarkResult {
    /// Overall, human and per-category rows, in emission order.
    pub fn summary_rows(&self) -> Vec<ScoreRow> {
        let mut rows = vec![self.overall.clone(), self.human.clone()];
        rows.extend(self.categories.iter().cloned());
        rows
    }
}

fn category_of(record: &FrameRecord) -> Category {
    Category::from_str(&record.category).unwrap_or(Category::None)
}

fn category_rows(records: &[FrameRecord]) -> Vec<ScoreRow> {
    Category::ALL
        .iter()
        .filter_map(|&cat| {
            let scores: Vec<(SubScores, f64)> =
                records.iter().filter(|r| category_of(r) == cat).map(|r| (r.sub, r.pdms)).collect();
            (!scores.is_empty()).then(|| ScoreRow::from_scores(cat.code(), &scores))
        })
        .collect()
}

/// Expert sub-scores of the best vocabulary member per frame.
pub fn human_oracle(stream: &[Scene], planner: &Planner) -> Vec<(SubScores, f64)> {
    stream
        .par_iter()
        .map(|scene| {
            score_vocabulary(scene, &planner.vocab)
                .into_iter()
                .map(|s| (s, pdm_score(&s)))
                .fold((SubScores::ONES, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        })
        .collect()
}

/// Aggregates already computed deployment records.
pub fn summarize(records: Vec<FrameRecord>, cfg: &DeploymentConfig, human: &[(SubScores, f64)]) -> Result<BenchmarkResult> {
    if records.is_empty() {
        return Err(Error::EmptyStream);
    }
    let scores: Vec<(SubScores, f64)> = records.iter().map(|r| (r.sub, r.pdms)).collect();
    Ok(BenchmarkResult {
        strategy: cfg.strategy,
        measure: cfg.uncertainty.measure,
        overall: ScoreRow::from_scores("overall", &scores),
        categories: category_rows(&records),
        human: ScoreRow::from_scores("human", human),
        records,
    })
}

pub fn evaluate(
    stream: &[Scene],
    planner: &Planner,
    fallback: Option<&FallbackSet>,
    cfg: &DeploymentConfig,
) -> Result<BenchmarkResult> {
    let records = run_deployment(stream, planner, fallback, cfg)?;
    summarize(records, cfg, &human_oracle(stream, planner))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureClassification {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tpr: f64,
    pub accuracy: f64,
}

impl FailureClassification {
    fn from_predictions(threshold: f64, pairs: impl Iterator<Item = (bool, bool)>) -> Self {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (failed, flagged) in pairs {
            match (failed, flagged) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (false, false) => tn += 1,
                (true, false) => fn_ += 1,
            }
        }
        let total = tp + fp + tn + fn_;
        FailureClassification {
            threshold,
            tp,
            fp,
            tn,
            fn_,
            tpr: if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 },
            accuracy: if total == 0 { 0.0 } else { (tp + tn) as f64 / total as f64 },
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn is_failure(r: &FrameRecord) -> bool {
    r.pdms == 0.0
}

/// Flags frames whose uncertainty exceeds `threshold` as predicted failures of the
/// planner that produced `records` (a base-planner run).
pub fn classify_failures(records: &[FrameRecord], threshold: f64) -> FailureClassification {
    FailureClassification::from_predictions(threshold, records.iter().map(|r| (is_failure(r), r.uncertainty > threshold)))
}

/// Flags every frame.
pub fn select_all(records: &[FrameRecord]) -> FailureClassification {
    FailureClassification::from_predictions(f64::NEG_INFINITY, records.iter().map(|r| (is_failure(r), true)))
}

/// Flags no frame.
pub fn select_none(records: &[FrameRecord]) -> FailureClassification {
    FailureClassification::from_predictions(f64::INFINITY, records.iter().map(|r| (is_failure(r), false)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSweep {
    pub rows: Vec<FailureClassification>,
    pub select_all: FailureClassification,
    pub select_none: FailureClassification,
    pub failure_rate: f64,
}

/// One classification per threshold; thresholds must be strictly increasing.
pub fn sweep_thresholds(records: &[FrameRecord], thresholds: &[f64]) -> Result<FailureSweep> {
    if records.is_empty() {
        return Err(Error::EmptyStream);
    }
    if thresholds.is_empty() || thresholds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("thresholds must be nonempty and strictly increasing".into()));
    }
    let rows: Vec<FailureClassification> = thresholds.iter().map(|&t| classify_failures(records, t)).collect();
    assert!(rows.windows(2).all(|w| w[1].tpr <= w[0].tpr), "TPR must not increase with the threshold");
    let failures = records.iter().filter(|r| is_failure(r)).count();
    Ok(FailureSweep {
        rows,
        select_all: select_all(records),
        select_none: select_none(records),
        failure_rate: failures as f64 / records.len() as f64,
    })
}

/// PDMS per category code plus the overall mean, as a one-row table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub label: String,
    /// `(code, frames, PDMS percent)` in taxonomy order.
    pub cells: Vec<(String, usize, f64)>,
    pub overall: f64,
}

impl CategoryReport {
    pub fn markdown(&self) -> String {
        let mut out = String::from("| Method |");
        for (code, _, _) in &self.cells {
            let _ = write!(out, " {code} |");
        }
        out.push_str(" Overall |\n|---|");
        for _ in &self.cells {
            out.push_str("---:|");
        }
        out.push_str("---:|\n");
        let _ = write!(out, "| {} |", self.label);
        for (_, _, v) in &self.cells {
            let _ = write!(out, " {v:.1} |");
        }
        let _ = writeln!(out, " {:.1} |", self.overall);
        out
    }
}

pub fn category_report(result: &BenchmarkResult) -> CategoryReport {
    CategoryReport {
        label: result.strategy.to_string(),
        cells: category_rows(&result.records).into_iter().map(|r| (r.label, r.frames, r.pdms)).collect(),
        overall: result.overall.pdms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::InvalidParameter(format!("unknown report format {s:?}"))),
        }
    }
}

/// Markdown table in NC, DAC, EP, C, TTC, PDMS order with one decimal.
pub fn markdown_table(rows: &[ScoreRow]) -> String {
    let mut out = String::from("| Method | NC | DAC | EP | C | TTC | PDMS |\n|---|---:|---:|---:|---:|---:|---:|\n");
    for r in rows {
        let _ = write!(out, "| {} |", r.label);
        for v in r.values() {
            let _ = write!(out, " {v:.1} |");
        }
        out.push('\n');
    }
    out
}

pub fn write_summary_csv<W: Write>(rows: &[ScoreRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: BufRead>(input: R) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if headers != ScoreRow::CSV_HEADER {
        return Err(Error::Parse { line: 1, message: format!("unexpected header {headers:?}") });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes `result` as summary CSV, full JSON or a markdown table.
pub fn emit_report<W: Write>(result: &BenchmarkResult, format: ReportFormat, mut out: W) -> Result<()> {
    match format {
        ReportFormat::Csv => write_summary_csv(&result.summary_rows(), out),
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, result)?;
            writeln!(out)?;
            Ok(())
        }
        ReportFormat::Markdown => {
            out.write_all(markdown_table(&result.summary_rows()).as_bytes())?;
            Ok(())
        }
    }
}

pub fn read_json_report<R: BufRead>(input: R) -> Result<BenchmarkResult> {
    Ok(serde_json::from_reader(input)?)
}
