use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rayon::prelude::*;

use adl_core::config::{self, ConfigError, RunConfig, CORPUS_ENV};
use adl_core::corpus::{generate_synthetic, load_corpus_data, CorpusError, SynthSpec};
use adl_core::evaluation::{evaluate, EvalReport, LoocvReport};
use adl_core::fusion::{mask_dimension, FusionError, Granularity};
use adl_core::hhmm::{HmmError, ModelFile};
use adl_core::pipeline::{
    corpus_activities, decode, descriptor_dump, featurize, loocv, segments_csv, sweep, sweep_csv,
    timeline_csv, train, FeaturizedVideo, PipelineError,
};

/// Activity recognition in wearable-camera recordings.
#[derive(Parser)]
#[command(name = "adl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the viewpoint segmentation of every video (segments.csv)
    Segment(Common),
    /// Write the 60-column descriptor dump of every video (descriptors.csv)
    Featurize(Common),
    /// Train a model on the corpus and write model.json
    Train(TrainArgs),
    /// Decode every video with a trained model (timeline.csv)
    Decode(DecodeArgs),
    /// Score decoded timelines, or run leave-one-video-out cross-validation
    Evaluate(EvaluateArgs),
    /// Cross-validate all 63 description spaces for every topology
    Sweep(Common),
    /// Generate a synthetic corpus into the output directory
    Synth(SynthArgs),
}

// Values are read back through `ArgMatches` so that the config file can
// take precedence over built-in defaults but not over explicit flags.
#[allow(dead_code)]
#[derive(Args)]
struct Common {
    /// Flat key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus root [default: $ADL_CORPUS]
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Description space, `+`-joined from htpe,hc,rm,audio,cld,loc
    #[arg(long, default_value = config::DEFAULT_MASK)]
    mask: String,
    /// Observation unit: frame or segment
    #[arg(long, default_value = config::DEFAULT_GRANULARITY)]
    granularity: String,
    /// States per activity (comma list for sweep; 3, 5 or 7)
    #[arg(long, default_value = config::DEFAULT_M)]
    m: String,
    /// States of the reject class (comma list for sweep; 1, 3, 5, 7 or 9)
    #[arg(long = "m-none", id = "m_none", value_name = "M_NONE", default_value = config::DEFAULT_M_NONE)]
    m_none: String,
    /// Gaussians per state (comma list for sweep)
    #[arg(long, default_value = config::DEFAULT_GAUSSIANS)]
    gaussians: String,
    /// Initial self-loop probability
    #[arg(long = "loop", id = "loop", value_name = "LOOP", default_value_t = config::DEFAULT_LOOP)]
    loop_prob: f64,
    /// Viterbi beam width in log units
    #[arg(long, default_value_t = config::DEFAULT_BEAM)]
    beam: f64,
    /// Mixture weight below which a component is removed
    #[arg(long, default_value_t = config::DEFAULT_PRUNE)]
    prune: f64,
    /// Initialization: flat or viterbi-align
    #[arg(long, default_value = config::DEFAULT_INIT)]
    init: String,
    /// Random seed
    #[arg(long, default_value_t = config::DEFAULT_SEED)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = config::DEFAULT_OUT)]
    out: PathBuf,
    /// Minimal scene overlap s of a viewpoint segment
    #[arg(long, default_value_t = adl_core::segmentation::DEFAULT_OVERLAP)]
    s: f64,
    /// Maximum Baum-Welch iterations
    #[arg(long, default_value_t = config::DEFAULT_ITERATIONS)]
    iterations: usize,
    /// Report the conventional F1 (twice the printed F-score)
    #[arg(long = "f1-conventional", id = "f1_conventional")]
    f1_conventional: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Leave this video out of training
    #[arg(long)]
    holdout: Option<String>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    common: Common,
    /// Model file [default: <out>/model.json]
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Run leave-one-video-out cross-validation instead of scoring timelines
    #[arg(long)]
    loocv: bool,
    /// Directory holding <video>/timeline.csv [default: <out>]
    #[arg(long)]
    timelines: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Number of videos
    #[arg(long, default_value_t = SynthSpec::default().videos)]
    videos: usize,
    /// Frames per video
    #[arg(long, default_value_t = SynthSpec::default().frames)]
    frames: usize,
    /// Activities including the reject class
    #[arg(long, default_value_t = SynthSpec::default().activities)]
    activities: usize,
    /// Noise multiplier (0 emits exact activity profiles)
    #[arg(long, default_value_t = SynthSpec::default().spread)]
    spread: f64,
    /// Contrast between activity profiles, in [0, 1]
    #[arg(long, default_value_t = SynthSpec::default().separation)]
    separation: f64,
    /// Fraction of outlier motion blocks
    #[arg(long, default_value_t = SynthSpec::default().outlier_fraction)]
    outliers: f64,
    /// Frame width in pixels
    #[arg(long, default_value_t = SynthSpec::default().width)]
    width: usize,
    /// Frame height in pixels
    #[arg(long, default_value_t = SynthSpec::default().height)]
    height: usize,
}

enum CliError {
    Input(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidSpec(_) => CliError::Input(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<HmmError> for CliError {
    fn from(e: HmmError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Fusion(_) | PipelineError::ModelMismatch { .. } => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl ToString) -> CliError {
    CliError::Runtime(format!("{}: {}", path.display(), e.to_string()))
}

/// Resolved configuration plus the keys that were set explicitly.
struct Resolved {
    config: RunConfig,
    explicit: HashSet<&'static str>,
}

fn resolve(matches: &ArgMatches) -> Result<Resolved, CliError> {
    let mut config = RunConfig::default();
    let mut explicit = HashSet::new();
    if let Ok(root) = std::env::var(CORPUS_ENV) {
        if !root.is_empty() {
            config.corpus = Some(PathBuf::from(root));
        }
    }
    if let Some(path) = matches.get_one::<PathBuf>("config") {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        config.apply_file(&text)?;
        for line in text.lines() {
            if let Some((k, _)) = line.split('#').next().unwrap_or("").split_once('=') {
                let k = k.trim().replace('-', "_");
                if let Some(key) = RunConfig::KEYS.iter().find(|key| **key == k) {
                    explicit.insert(*key);
                }
            }
        }
    }
    for key in RunConfig::KEYS {
        if matches.value_source(key) != Some(ValueSource::CommandLine) {
            continue;
        }
        let raw = matches
            .get_raw(key)
            .and_then(|mut v| v.next_back())
            .map(|v| v.to_string_lossy().into_owned())
            .unwrap_or_else(|| "true".to_string());
        config.set(key, &raw)?;
        explicit.insert(key);
    }
    config.validate()?;
    Ok(Resolved { config, explicit })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn featurized_corpus(config: &RunConfig) -> Result<Vec<FeaturizedVideo>, CliError> {
    let root = config.corpus_root()?;
    let videos = load_corpus_data(&root)?;
    if videos.is_empty() {
        return Err(CliError::Input(format!(
            "corpus at {} has no videos",
            root.display()
        )));
    }
    Ok(videos
        .par_iter()
        .map(|v| featurize(v, config.overlap))
        .collect::<Result<Vec<_>, _>>()?)
}

fn write_reports(
    out: &Path,
    reports: &[EvalReport],
    summary: &LoocvReport,
    f1: bool,
) -> Result<(), CliError> {
    for r in reports {
        write(&out.join(&r.fold).join("report.csv"), &r.to_csv(f1))?;
    }
    write(&out.join("summary.csv"), &summary.summary_csv())?;
    println!("median_accuracy={}", summary.median_accuracy);
    Ok(())
}

/// Per-observation labels from a frame-indexed timeline file.
fn read_timeline(
    path: &Path,
    video: &FeaturizedVideo,
    granularity: Granularity,
) -> Result<Vec<String>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let n = video.frame_count();
    let mut frames: Vec<Option<String>> = vec![None; n];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let num = |i: usize| -> Result<usize, CliError> {
            rec.get(i)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| io_err(path, format!("bad row {:?}", rec.as_slice())))
        };
        let (start, end) = (num(0)?, num(1)?);
        let activity = rec.get(2).unwrap_or_default().to_string();
        if start > end || end >= n {
            return Err(io_err(
                path,
                format!("interval {start}-{end} outside {n} frames"),
            ));
        }
        for f in &mut frames[start..=end] {
            *f = Some(activity.clone());
        }
    }
    let frames: Vec<String> = frames
        .into_iter()
        .enumerate()
        .map(|(t, l)| l.ok_or_else(|| io_err(path, format!("frame {t} not covered"))))
        .collect::<Result<_, _>>()?;
    Ok(match granularity {
        Granularity::Frame => frames,
        Granularity::Segment => video
            .segments
            .iter()
            .map(|s| frames[s.t_min].clone())
            .collect(),
    })
}

fn run(command: &Command, matches: &ArgMatches) -> Result<(), CliError> {
    let Resolved { config, explicit } = resolve(matches)?;
    let out = config.out.clone();
    match command {
        Command::Segment(_) => {
            for v in featurized_corpus(&config)? {
                write(&out.join(&v.id).join("segments.csv"), &segments_csv(&v))?;
            }
        }
        Command::Featurize(_) => {
            for v in featurized_corpus(&config)? {
                write(
                    &out.join(&v.id).join("descriptors.csv"),
                    &descriptor_dump(&v, config.granularity),
                )?;
            }
        }
        Command::Train(args) => {
            mask_dimension(config.mask, config.granularity)?;
            let topology = config.single_topology()?;
            let videos = featurized_corpus(&config)?;
            let train_set: Vec<&FeaturizedVideo> = videos
                .iter()
                .filter(|v| args.holdout.as_deref() != Some(v.id.as_str()))
                .collect();
            if train_set.is_empty() {
                return Err(CliError::Input("no training videos left".into()));
            }
            let model = train(
                &train_set,
                config.mask,
                config.granularity,
                &config.hhmm(topology),
            )?;
            let file = ModelFile::new(model, Some(config.mask), Some(config.granularity));
            fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            file.save(&out.join("model.json"))?;
        }
        Command::Decode(args) => {
            let path = args.model.clone().unwrap_or_else(|| out.join("model.json"));
            let file = ModelFile::load(&path)?;
            let mask = match file.mask {
                Some(m) if explicit.contains("mask") && m != config.mask => {
                    return Err(PipelineError::ModelMismatch {
                        trained: m.to_string(),
                        requested: config.mask.to_string(),
                    }
                    .into())
                }
                Some(m) => m,
                None => config.mask,
            };
            let granularity = match file.granularity {
                Some(g) if explicit.contains("granularity") && g != config.granularity => {
                    return Err(PipelineError::ModelMismatch {
                        trained: g.to_string(),
                        requested: config.granularity.to_string(),
                    }
                    .into())
                }
                Some(g) => g,
                None => config.granularity,
            };
            for v in featurized_corpus(&config)? {
                let timeline = decode(&file.model, &v, mask, granularity, config.beam)?;
                write(
                    &out.join(&v.id).join("timeline.csv"),
                    &timeline_csv(&timeline, &v, granularity),
                )?;
            }
        }
        Command::Evaluate(args) => {
            let videos = featurized_corpus(&config)?;
            if args.loocv {
                mask_dimension(config.mask, config.granularity)?;
                let report = loocv(&videos, &config.experiment(config.single_topology()?))?;
                write_reports(&out, &report.folds, &report, config.f1_conventional)?;
            } else {
                let dir = args.timelines.clone().unwrap_or_else(|| out.clone());
                let activities = corpus_activities(&videos);
                let mut reports = Vec::new();
                for v in &videos {
                    let pred = read_timeline(
                        &dir.join(&v.id).join("timeline.csv"),
                        v,
                        config.granularity,
                    )?;
                    let report = evaluate(&v.id, &pred, v.labels(config.granularity), &activities)
                        .map_err(|e| CliError::Runtime(e.to_string()))?;
                    reports.push(report);
                }
                let summary = LoocvReport::from_folds(reports.clone());
                write_reports(&out, &reports, &summary, config.f1_conventional)?;
            }
        }
        Command::Sweep(_) => {
            let videos = featurized_corpus(&config)?;
            let topologies = config.topologies();
            let rows = sweep(&videos, &topologies, &config.experiment(topologies[0]))?;
            write(
                &out.join("sweep_summary.csv"),
                &sweep_csv(&rows, config.granularity),
            )?;
        }
        Command::Synth(args) => {
            let spec = SynthSpec {
                activities: args.activities,
                videos: args.videos,
                frames: args.frames,
                width: args.width,
                height: args.height,
                spread: args.spread,
                separation: args.separation,
                outlier_fraction: args.outliers,
                ..SynthSpec::default()
            };
            spec.validate()?;
            fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            generate_synthetic(&out, config.seed, &spec)?;
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            eprintln!("error[input]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error[input]: {}", one_line(&e.to_string()));
            return ExitCode::from(2);
        }
    };
    let sub = matches
        .subcommand()
        .map(|(_, m)| m)
        .expect("subcommand is required");
    match run(&cli.command, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(m)) => {
            eprintln!("error[input]: {}", one_line(&m));
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error[runtime]: {}", one_line(&m));
            ExitCode::from(1)
        }
    }
}
