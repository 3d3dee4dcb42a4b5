//! Command-line front end. Exit codes: 0 success, 1 usage or config error,
//! 2 I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, FileConfig};
use crate::embedding::{default_corpus_scene, generate_corpus, train, EmbeddingError, EmbeddingParams};
use crate::eval::{calibrate_learned_model, run_benchmark, run_oracle_check, EvalError};
use crate::mass::AnchorMode;
use crate::pipeline::{free_align, EdgeModel, GraphBuffer};
use crate::sim::io::{export_frames, group_by_agent, import_frames, read_json, write_json, FrameIoError};
use crate::sim::{generate_scenario, AgentId, OdometryTrack, SimError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<FrameIoError> for CliError {
    fn from(e: FrameIoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "graphalign",
    version,
    about = "Pose-free spatial and temporal alignment of multi-agent detections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of the command's main random stream.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AnchorArg {
    Multi,
    Single,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Trained edge-embedding checkpoint; handcrafted features when absent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Edge match threshold for the learned features. Calibrated on a
    /// held-out corpus when omitted.
    #[arg(long, requires = "checkpoint")]
    match_threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario: frames.jsonl, truth.json, odometry.json.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the learned edge features: embedding.json, loss.csv, train_report.json.
    TrainEmbedding {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        corpus_size: Option<usize>,
    },
    /// Align one collaborator frame against an ego history: alignment.json.
    Align {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        odometry: PathBuf,
        #[arg(long, default_value = "agent0")]
        ego: String,
        #[arg(long, default_value = "agent1")]
        collaborator: String,
        /// Ego frame index treated as "now"; the last frame by default.
        #[arg(long)]
        ego_frame: Option<usize>,
        /// Collaborator frame index of the message; the ego frame by default.
        #[arg(long)]
        capture_frame: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Run seeded benchmark trials: report.json, trials.csv and the trusted-pose baseline.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum)]
        anchor_mode: Option<AnchorArg>,
        /// Falsify advertised poses by this many meters.
        #[arg(long)]
        attack: Option<f64>,
        /// Count rejected trials as errors in error_rate.
        #[arg(long)]
        rejected_as_errors: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Compare subgraph search with exhaustive search on small instances.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instances: Option<usize>,
    },
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let cfg = match path {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn say(line: &str) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn edge_model(model: &ModelArgs, cfg: &FileConfig) -> Result<EdgeModel, CliError> {
    let Some(path) = &model.checkpoint else {
        return Ok(EdgeModel::Handcrafted);
    };
    if !path.exists() {
        return Err(CliError::Io(format!("{}: no such file", path.display())));
    }
    let params = EmbeddingParams::load(path)?;
    match model.match_threshold {
        Some(threshold) if threshold > 0.0 && threshold.is_finite() => Ok(EdgeModel::Learned { params, threshold }),
        Some(t) => Err(CliError::Config(format!("match threshold must be positive, got {t}"))),
        None => Ok(calibrate_learned_model(
            params,
            &default_corpus_scene(),
            cfg.training.corpus_size / 2,
            cfg.training.seed.wrapping_add(1),
        )?),
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate { common } => simulate(common),
        Command::TrainEmbedding {
            common,
            epochs,
            corpus_size,
        } => train_embedding(common, epochs, corpus_size),
        Command::Align {
            common,
            frames,
            odometry,
            ego,
            collaborator,
            ego_frame,
            capture_frame,
            model,
        } => align(
            common,
            &frames,
            &odometry,
            &ego,
            &collaborator,
            ego_frame,
            capture_frame,
            &model,
        ),
        Command::Bench {
            common,
            trials,
            anchor_mode,
            attack,
            rejected_as_errors,
            model,
        } => bench(common, trials, anchor_mode, attack, rejected_as_errors, &model),
        Command::OracleCheck { common, instances } => oracle_check(common, instances),
    }
}

fn simulate(common: Common) -> Result<(), CliError> {
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.scenario.seed = s;
    }
    cfg.scenario.validate()?;
    let s = generate_scenario(&cfg.scenario)?;
    prepare_out(&common.out)?;
    export_frames(&s.all_frames(), &common.out.join("frames.jsonl"), true)?;
    write_json(&s.truth, &common.out.join("truth.json"))?;
    write_json(&s.odometry, &common.out.join("odometry.json"))?;
    say(&format!(
        "simulated {} agents x {} frames into {}",
        cfg.scenario.num_agents,
        cfg.scenario.duration,
        common.out.display()
    ));
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    corpus_size: usize,
    epochs: usize,
    initial_loss: f64,
    final_loss: f64,
    /// Edge match threshold calibrated on a held-out corpus.
    match_threshold: f64,
}

fn train_embedding(common: Common, epochs: Option<usize>, corpus_size: Option<usize>) -> Result<(), CliError> {
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.training.seed = s;
    }
    if let Some(e) = epochs {
        cfg.training.epochs = e;
    }
    if let Some(n) = corpus_size {
        cfg.training.corpus_size = n;
    }
    cfg.validate()?;
    if cfg.training.corpus_size == 0 {
        return Err(CliError::Config("corpus_size must be positive".into()));
    }
    let scene = default_corpus_scene();
    let corpus = generate_corpus(&scene, cfg.training.corpus_size, cfg.training.seed)?;
    let init = EmbeddingParams::init(cfg.embedding.clone())?;
    let (params, report) = train(&corpus, init, &cfg.training)?;
    let model = calibrate_learned_model(
        params.clone(),
        &scene,
        (cfg.training.corpus_size / 2).max(1),
        cfg.training.seed.wrapping_add(1),
    )?;
    let EdgeModel::Learned { threshold, .. } = model else {
        unreachable!("calibration yields a learned model")
    };
    prepare_out(&common.out)?;
    let ckpt = common.out.join("embedding.json");
    params
        .save(&ckpt)
        .map_err(|e| CliError::Io(format!("{}: {e}", ckpt.display())))?;
    write_text(&common.out.join("loss.csv"), &report.to_csv())?;
    write_json(
        &TrainSummary {
            corpus_size: corpus.len(),
            epochs: cfg.training.epochs,
            initial_loss: report.initial_loss,
            final_loss: report.final_loss,
            match_threshold: threshold,
        },
        &common.out.join("train_report.json"),
    )?;
    say(&format!(
        "loss {:.4} -> {:.4}, match threshold {threshold:.4}",
        report.initial_loss, report.final_loss
    ));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn align(
    common: Common,
    frames: &Path,
    odometry: &Path,
    ego: &str,
    collaborator: &str,
    ego_frame: Option<usize>,
    capture_frame: Option<usize>,
    model: &ModelArgs,
) -> Result<(), CliError> {
    let cfg = load_config(common.config.as_deref())?;
    cfg.validate()?;
    let pipe = cfg.pipeline_config();
    let by_agent = group_by_agent(import_frames(frames)?);
    let tracks: Vec<OdometryTrack> = read_json(odometry)?;
    let stream = |name: &str| {
        by_agent
            .get(&AgentId(name.to_owned()))
            .ok_or_else(|| CliError::Config(format!("agent {name} has no frames in {}", frames.display())))
    };
    let ego_frames = stream(ego)?;
    let col_frames = stream(collaborator)?;
    let track = tracks
        .iter()
        .find(|t| t.agent.0 == ego)
        .ok_or_else(|| CliError::Config(format!("agent {ego} has no odometry in {}", odometry.display())))?;
    let now = ego_frame.unwrap_or(ego_frames.len() - 1);
    let capture = capture_frame.unwrap_or(now);
    if now >= ego_frames.len() || now >= track.increments.len() {
        return Err(CliError::Config(format!("ego frame {now} is out of range")));
    }
    let message = col_frames
        .get(capture)
        .ok_or_else(|| CliError::Config(format!("capture frame {capture} is out of range")))?;

    let model = edge_model(model, &cfg)?;
    let mut buffer = GraphBuffer::new(pipe.buffer_len, pipe.tau_ms, model);
    let first = now.saturating_sub(pipe.buffer_len);
    for (f, inc) in ego_frames[first..=now].iter().zip(&track.increments[first..=now]) {
        buffer
            .push_frame(&f.without_truth(), inc)
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let advertised = ego_frames[now].local_time - message.local_time;
    let result = free_align(&buffer, &message.without_truth(), Some(advertised), &pipe);
    prepare_out(&common.out)?;
    write_json(&result, &common.out.join("alignment.json"))?;
    match result.aligned() {
        Some(a) => say(&format!(
            "aligned: dx={:.3} dy={:.3} dtheta_deg={:.3} latency_ms={} psi={}",
            a.relative_pose.tx,
            a.relative_pose.ty,
            a.relative_pose.rotation.to_degrees(),
            a.latency_estimate_ms,
            a.subgraph.size()
        )),
        None => say("rejected"),
    }
    Ok(())
}

fn bench(
    common: Common,
    trials: Option<usize>,
    anchor_mode: Option<AnchorArg>,
    attack: Option<f64>,
    rejected_as_errors: bool,
    model: &ModelArgs,
) -> Result<(), CliError> {
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.bench.seed = s;
    }
    if let Some(t) = trials {
        cfg.bench.trials = t;
    }
    if let Some(m) = anchor_mode {
        cfg.mass.anchor_mode = match m {
            AnchorArg::Multi => AnchorMode::Multi,
            AnchorArg::Single => AnchorMode::Single,
        };
    }
    if let Some(m) = attack {
        if !(m.is_finite() && m >= 0.0) {
            return Err(CliError::Config(format!(
                "attack magnitude must be nonnegative, got {m}"
            )));
        }
        cfg.scenario.pose_attack = m > 0.0;
        if m > 0.0 {
            cfg.scenario.pose_attack_magnitude = m;
        }
    }
    cfg.bench.rejected_as_errors |= rejected_as_errors;
    cfg.validate()?;
    let model = edge_model(model, &cfg)?;
    let out = run_benchmark(&cfg.scenario, &cfg.pipeline_config(), &cfg.bench, &model)?;
    prepare_out(&common.out)?;
    out.report.write_json(&common.out.join("report.json"))?;
    out.report.write_csv(&common.out.join("trials.csv"))?;
    out.baseline.write_json(&common.out.join("baseline_report.json"))?;
    out.baseline.write_csv(&common.out.join("baseline_trials.csv"))?;
    say(&format!("pipeline: {}", out.report.summary_line()));
    say(&format!("trusted-pose baseline: {}", out.baseline.summary_line()));
    Ok(())
}

fn oracle_check(common: Common, instances: Option<usize>) -> Result<(), CliError> {
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.oracle.seed = s;
    }
    if let Some(n) = instances {
        cfg.oracle.instances = n;
    }
    let report = run_oracle_check(&cfg.oracle, &cfg.mass)?;
    prepare_out(&common.out)?;
    write_json(&report, &common.out.join("oracle_report.json"))?;
    say(&format!(
        "instances={} exact={:.4} within_one={:.4}",
        report.instances, report.exact_rate, report.within_one_rate
    ));
    Ok(())
}
