//! Subcommand implementations. Every output lands in the configured output directory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use centaur_sim::deploy::{build_fallback_set, mean_expert_pdms, run_deployment, FallbackSet, Planner, Strategy};
use centaur_sim::evalharness::{
    category_report, emit_report, evaluate, markdown_table, sweep_thresholds, FailureClassification, ReportFormat,
};
use centaur_sim::geometry::{generate_vocabulary, read_vocabulary, write_vocabulary, PlanningVocabulary};
use centaur_sim::scorer::{load_checkpoint, save_checkpoint, train_with, TrainingDataset};
use centaur_sim::uncertainty::CandidateSet;
use centaur_sim::worldsim::{generate_scenes, generate_stream, read_scenes, write_scenes, Scene};
use centaur_sim::Error;

use crate::config::{Layout, RunConfig};
use crate::plot::frame_svg;

/// A command failure reduced to a stable kind and a message.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { kind: e.kind(), message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn missing(what: String) -> Failure {
    Failure { kind: "missing-path", message: what }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(missing(format!("{} does not exist", path.display()))),
        Err(e) => Err(e.into()),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    let mut text = String::new();
    std::io::Read::read_to_string(&mut open(path)?, &mut text)?;
    Ok(text)
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| missing(format!("{key} is required for this command")))
}

fn create(cfg: &RunConfig, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = cfg.out.join(name);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let file = File::create(&path)?;
    Ok((path, BufWriter::new(file)))
}

fn load_scenes(path: &Option<PathBuf>, key: &str) -> Result<Vec<Scene>> {
    let scenes = read_scenes(open(required(path, key)?)?)?;
    if scenes.is_empty() {
        return Err(Error::EmptyStream.into());
    }
    Ok(scenes)
}

fn load_vocab(cfg: &RunConfig) -> Result<PlanningVocabulary> {
    Ok(read_vocabulary(open(required(&cfg.vocab, "vocab")?)?)?)
}

pub fn gen_scenes(cfg: &RunConfig) -> Result<()> {
    let (mix, opts) = (cfg.category_mix(), cfg.scene_options());
    let scenes = match cfg.layout {
        Layout::Stream => generate_stream(cfg.n_scenes, &mix, cfg.seed, &opts)?,
        Layout::Independent => generate_scenes(cfg.n_scenes, &mix, cfg.seed, &opts)?,
    };
    let (path, mut out) = create(cfg, "scenes.jsonl")?;
    write_scenes(&scenes, &mut out)?;
    out.flush()?;
    println!("wrote {} scenes to {}", scenes.len(), path.display());
    Ok(())
}

pub fn gen_vocab(cfg: &RunConfig) -> Result<()> {
    let vocab = generate_vocabulary(cfg.vocabulary_spec())?;
    let (path, mut out) = create(cfg, "vocab.txt")?;
    write_vocabulary(&vocab, &mut out)?;
    out.flush()?;
    println!("wrote {} trajectories to {}", vocab.len(), path.display());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let scenes = load_scenes(&cfg.scenes, "scenes")?;
    let vocab = load_vocab(cfg)?;
    let data = TrainingDataset::build(&scenes, &vocab)?;
    let outcome = train_with(&data, &cfg.train_config())?;
    let (path, mut out) = create(cfg, "checkpoint.txt")?;
    save_checkpoint(&outcome.params, &mut out)?;
    out.flush()?;
    let (_, mut losses) = create(cfg, "train_losses.csv")?;
    writeln!(losses, "epoch,loss")?;
    for (epoch, loss) in outcome.epoch_losses.iter().enumerate() {
        writeln!(losses, "{epoch},{loss}")?;
    }
    losses.flush()?;
    println!(
        "trained on {} scenes; loss {} -> {}; checkpoint {}",
        scenes.len(),
        outcome.epoch_losses[0],
        outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}

/// Planner, fallback set and test stream shared by eval, failure-id and plot.
struct Setup {
    planner: Planner,
    fallback: FallbackSet,
    stream: Vec<Scene>,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    let stream = load_scenes(&cfg.scenes, "scenes")?;
    let reference = load_scenes(&cfg.reference, "reference")?;
    let vocab = Arc::new(load_vocab(cfg)?);
    let params = load_checkpoint(open(required(&cfg.checkpoint, "checkpoint")?)?)?;
    let weights = mean_expert_pdms(&vocab, &reference)?;
    let candidates = CandidateSet::sample(&vocab, &weights, cfg.m, cfg.seed)?;
    let fallback = build_fallback_set(&vocab, &reference, cfg.fallback_size)?;
    Ok(Setup { planner: Planner::new(params, vocab, candidates), fallback, stream })
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let s = setup(cfg)?;
    let dcfg = cfg.deployment_config(cfg.strategy);
    let result = evaluate(&s.stream, &s.planner, Some(&s.fallback), &dcfg)?;
    let (_, mut records) = create(cfg, "records.csv")?;
    centaur_sim::deploy::write_records_csv(&result.records, &mut records)?;
    records.flush()?;
    for (name, format) in [("report.csv", ReportFormat::Csv), ("report.json", ReportFormat::Json)] {
        let (_, mut out) = create(cfg, name)?;
        emit_report(&result, format, &mut out)?;
        out.flush()?;
    }
    let table = markdown_table(&result.summary_rows());
    let categories = category_report(&result).markdown();
    let (_, mut md) = create(cfg, "report.md")?;
    write!(md, "{table}\n{categories}")?;
    md.flush()?;
    print!("{table}\n{categories}");
    Ok(())
}

fn classification_row(label: &str, c: &FailureClassification) -> String {
    format!("{label},{},{},{},{},{},{},{}", c.threshold, c.tp, c.fp, c.tn, c.fn_, c.tpr, c.accuracy)
}

pub fn failure_id(cfg: &RunConfig) -> Result<()> {
    let s = setup(cfg)?;
    // Failure labels always come from the base planner.
    let records = run_deployment(&s.stream, &s.planner, None, &cfg.deployment_config(Strategy::None))?;
    let sweep = sweep_thresholds(&records, &cfg.thresholds)?;
    let (_, mut csv) = create(cfg, "sweep.csv")?;
    writeln!(csv, "rule,threshold,tp,fp,tn,fn,tpr,accuracy")?;
    for row in &sweep.rows {
        writeln!(csv, "{}", classification_row(&cfg.measure.to_string(), row))?;
    }
    writeln!(csv, "{}", classification_row("select_all", &sweep.select_all))?;
    writeln!(csv, "{}", classification_row("select_none", &sweep.select_none))?;
    csv.flush()?;
    let mut md = format!(
        "failure rate {:.1}% over {} frames\n\n| Rule | Threshold | TPR | Acc. |\n|---|---:|---:|---:|\n",
        100.0 * sweep.failure_rate,
        records.len()
    );
    let mut line = |label: &str, t: String, c: &FailureClassification| {
        md.push_str(&format!("| {label} | {t} | {:.1} | {:.1} |\n", 100.0 * c.tpr, 100.0 * c.accuracy));
    };
    for row in &sweep.rows {
        line(&cfg.measure.to_string(), format!("{}", row.threshold), row);
    }
    line("select all", "-".into(), &sweep.select_all);
    line("select none", "-".into(), &sweep.select_none);
    let (_, mut out) = create(cfg, "sweep.md")?;
    out.write_all(md.as_bytes())?;
    out.flush()?;
    print!("{md}");
    Ok(())
}

pub fn plot(cfg: &RunConfig) -> Result<()> {
    let s = setup(cfg)?;
    let ucfg = cfg.deployment_config(Strategy::None).uncertainty;
    for scene in s.stream.iter().take(cfg.plot_frames) {
        let svg = frame_svg(&s.planner, scene, &ucfg)?;
        let (path, mut out) = create(cfg, &format!("plots/frame_{:05}.svg", scene.frame_index))?;
        out.write_all(svg.as_bytes())?;
        out.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
