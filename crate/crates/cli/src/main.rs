//! `centaur-sim` command-line entry point.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use centaur_sim::Error;
use commands::Failure;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "centaur-sim", version, about = "Test-time training laboratory for scoring planners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a scene file.
    GenScenes,
    /// Generate a planning vocabulary.
    GenVocab,
    /// Train a planner checkpoint.
    Train,
    /// Run a deployment strategy and write reports.
    Eval,
    /// Sweep failure-identification thresholds over a base-planner run.
    FailureId,
    /// Write per-frame score scatter plots as SVG.
    Plot,
}

/// Flags override the config file; each maps to the config key of the same name.
#[derive(Args)]
struct Flags {
    /// key=value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; defaults to $CENTAUR_SIM_SEED, then 0
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<String>,
    /// Worker threads; outputs do not depend on it
    #[arg(long, global = true)]
    jobs: Option<String>,
    /// Scene file (JSON lines)
    #[arg(long, global = true)]
    scenes: Option<String>,
    /// Scenes used for candidate weights and the fallback set
    #[arg(long, global = true)]
    reference: Option<String>,
    /// Vocabulary file
    #[arg(long, global = true)]
    vocab: Option<String>,
    /// Checkpoint file
    #[arg(long, global = true)]
    checkpoint: Option<String>,
    /// Number of scenes to generate
    #[arg(long, global = true)]
    n_scenes: Option<String>,
    /// stream or independent
    #[arg(long, global = true)]
    layout: Option<String>,
    /// Comma-separated category codes or all
    #[arg(long, global = true)]
    categories: Option<String>,
    /// Expected extra obstacles per scene
    #[arg(long, global = true)]
    density: Option<String>,
    /// Vocabulary size
    #[arg(long, global = true)]
    k: Option<String>,
    /// Training epochs
    #[arg(long, global = true)]
    epochs: Option<String>,
    /// Training learning rate
    #[arg(long, global = true)]
    lr: Option<String>,
    /// adam or gd
    #[arg(long, global = true)]
    optimizer: Option<String>,
    /// Weight of the imitation loss
    #[arg(long, global = true)]
    imitation_weight: Option<String>,
    /// none, ttt, ttt_gated or fallback
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Uncertainty measure
    #[arg(long, global = true)]
    measure: Option<String>,
    /// Test-time learning rate
    #[arg(long, global = true)]
    eta: Option<String>,
    /// Gradient buffer capacity
    #[arg(long, global = true)]
    buffer: Option<String>,
    /// Fallback and gate threshold
    #[arg(long, global = true)]
    threshold: Option<String>,
    /// Comma-separated failure thresholds
    #[arg(long, global = true)]
    thresholds: Option<String>,
    /// persistent or reset_per_frame
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Number of sampled candidates
    #[arg(long, global = true)]
    m: Option<String>,
    /// Number of frames to plot
    #[arg(long, global = true)]
    plot_frames: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("out", &self.out),
            ("jobs", &self.jobs),
            ("scenes", &self.scenes),
            ("reference", &self.reference),
            ("vocab", &self.vocab),
            ("checkpoint", &self.checkpoint),
            ("n_scenes", &self.n_scenes),
            ("layout", &self.layout),
            ("categories", &self.categories),
            ("density", &self.density),
            ("k", &self.k),
            ("epochs", &self.epochs),
            ("lr", &self.lr),
            ("optimizer", &self.optimizer),
            ("imitation_weight", &self.imitation_weight),
            ("strategy", &self.strategy),
            ("measure", &self.measure),
            ("eta", &self.eta),
            ("buffer", &self.buffer),
            ("threshold", &self.threshold),
            ("thresholds", &self.thresholds),
            ("mode", &self.mode),
            ("m", &self.m),
            ("plot_frames", &self.plot_frames),
        ]
    }
}

fn resolve(flags: &Flags) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Ok(seed) = std::env::var("CENTAUR_SIM_SEED") {
        cfg.set("seed", &seed)?;
    }
    if let Some(path) = &flags.config {
        let text = commands::read_text(path)?;
        cfg.apply_file(&text)?;
    }
    if let Some(seed) = &flags.seed {
        cfg.set("seed", seed)?;
    }
    for (key, value) in flags.pairs() {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if cfg.jobs == 0 {
        return Err(Error::InvalidParameter("jobs must be at least 1".into()).into());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve(&cli.flags)?;
    print!("{}", cfg.render());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::GenScenes => commands::gen_scenes(&cfg),
        Command::GenVocab => commands::gen_vocab(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::FailureId => commands::failure_id(&cfg),
        Command::Plot => commands::plot(&cfg),
    })
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = std::io::Write::write_all(&mut std::io::stdout(), e.render().to_string().as_bytes());
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("error kind=usage message=\"{}\"", one_line(&first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message=\"{}\"", e.kind, one_line(&e.message).replace('"', "'"));
            ExitCode::FAILURE
        }
    }
}
