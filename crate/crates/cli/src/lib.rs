//! The `scene` command: dataset building, head training, evaluation,
//! inference, latency benchmarking and artifact inspection.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 internal error.

pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, CommandFactory, Parser, Subcommand};

use scene_core::audio::{apply_gain, read_wav};
use scene_core::dataset::{
    build_mixed_dataset, labelled_clips, BuildConfig, DirSink, SourcesDescriptor, Split, DEFAULT_SPLIT_RATIOS,
};
use scene_core::eval::{evaluate_clips, gain_sweep_eval, latency_benchmark, time_load, GainPoint};
use scene_core::features::write_patch;
use scene_core::model::{calibrate_batch_norm, mobilenet, ArchConfig, Init, ModelWeights, Network, INIT_STD};
use scene_core::train::train_head;
use scene_core::{Classifier, DatasetManifest, Frontend, LogMelPatch, SceneLabel};

pub use config::{Aggregate, CommandConfig, Format};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "SCENE_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "scene", version, about = "Acoustic scene recognition toolkit")]
pub struct Cli {
    /// JSON config file; flags override its values
    #[arg(long, global = true, env = CONFIG_ENV, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream in the run
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on worker threads
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log filter when RUST_LOG is unset (error, warn, info, debug, trace)
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mix speech into environment corpora and write clips plus manifest
    BuildDataset(BuildDatasetArgs),
    /// Train the classifier head on a built dataset
    Train(TrainArgs),
    /// Score one split and write mAP, PR curves and the confusion matrix
    Eval(EvalArgs),
    /// Score the windows of one WAV file
    Infer(InferArgs),
    /// Time inference against clip duration and fit a line
    Bench(BenchArgs),
    /// Print the layer table of a weights file
    InspectModel(InspectModelArgs),
    /// Dump the log-mel patches of a WAV file
    InspectFeatures(InspectFeaturesArgs),
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    /// Corpus descriptor (sources.json)
    #[arg(long, value_name = "FILE")]
    pub sources: Option<PathBuf>,
    /// Output directory for clips/, manifest.json and manifest.csv
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Train, validation and test fractions, comma separated
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub split_ratios: Option<Vec<f64>>,
    /// Cap on leftover speech clips kept as interfering_speakers
    #[arg(long)]
    pub interfering_speakers_quota: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory produced by build-dataset
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Starting weights; a calibrated random backbone when omitted
    #[arg(long, value_name = "FILE")]
    pub backbone: Option<PathBuf>,
    /// Training clips used to calibrate a random backbone
    #[arg(long)]
    pub calibration_clips: Option<usize>,
    /// Output directory for weights, history and config
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Storage precision of the written weights (f32 or f16)
    #[arg(long)]
    pub dtype: Option<scene_core::model::DType>,
    /// Initial learning rate
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Several initial rates, comma separated; each trains into its own directory
    #[arg(long, value_delimiter = ',')]
    pub learning_rates: Option<Vec<f64>>,
    /// Upper bound on epochs
    #[arg(long)]
    pub max_epochs: Option<u32>,
    /// Windows per optimiser step
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Turn off gain, noise and stretch augmentation
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Weights file
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Dataset directory produced by build-dataset
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Split to score (train, validation, test)
    #[arg(long)]
    pub split: Option<String>,
    /// Output directory for report.json and the CSV/SVG views
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Gain applied to every clip before scoring, in dB
    #[arg(long, allow_negative_numbers = true)]
    pub gain_db: Option<f64>,
    /// Also sweep gain from -20 to +20 dB in 5 dB steps
    #[arg(long)]
    pub sweep: bool,
    /// Also sweep these gains in dB, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub sweep_gains_db: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Weights file
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// 16 kHz mono PCM16 input
    #[arg(long, value_name = "FILE")]
    pub wav: Option<PathBuf>,
    /// Gain applied before scoring, in dB
    #[arg(long, allow_negative_numbers = true)]
    pub gain_db: Option<f64>,
    /// Clip-level summary across windows
    #[arg(long, value_enum)]
    pub aggregate: Option<Aggregate>,
    /// Output format on stdout
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Weights file; a random network when omitted
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Clip durations in seconds, comma separated and increasing
    #[arg(long, value_delimiter = ',')]
    pub durations_s: Option<Vec<f64>>,
    /// Timed runs per duration
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Output directory for latency.csv and latency.json
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectModelArgs {
    /// Weights file
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Output format on stdout (text or json)
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Also trace activation shapes through the network
    #[arg(long)]
    pub shapes: bool,
}

#[derive(Debug, Args)]
pub struct InspectFeaturesArgs {
    /// 16 kHz mono PCM16 input
    #[arg(long, value_name = "FILE")]
    pub wav: PathBuf,
    /// Directory for patch_NNN.bin dumps and summary.txt
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Marks a failure caused by how the command was invoked.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> anyhow::Result<T> {
    v.clone()
        .ok_or_else(|| usage(format!("missing --{flag} (or set it in the config file)")))
}

fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<scene_core::Error>() {
            return if e.is_data_error() { EXIT_DATA } else { EXIT_INTERNAL };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_DATA;
        }
    }
    EXIT_INTERNAL
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status. Errors go to stderr.
pub fn execute_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            code
        }
    }
}

/// Layers defaults, the config file and global flags.
fn base_config(cli: &Cli) -> anyhow::Result<CommandConfig> {
    let mut cfg = match &cli.config {
        Some(p) => CommandConfig::from_file(p).map_err(|e| usage(format!("{e:#}")))?,
        None => CommandConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(l) = &cli.log_level {
        cfg.log_level = l.clone();
    }
    Ok(cfg)
}

fn init_runtime(cfg: &CommandConfig) -> anyhow::Result<()> {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .or_else(|_| tracing_subscriber::EnvFilter::try_new(&cfg.log_level))
        .map_err(|e| usage(format!("bad log level `{}`: {e}", cfg.log_level)))?;
    // a second call in the same process keeps the first subscriber
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .try_init();
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            tracing::warn!("thread pool already initialised; --threads ignored");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = base_config(&cli)?;
    let Cli { command, .. } = cli;
    match command {
        Command::BuildDataset(a) => {
            let o = &mut cfg.build_dataset;
            o.sources = a.sources.or(o.sources.take());
            o.out = a.out.or(o.out.take());
            if let Some(r) = a.split_ratios {
                o.split_ratios = Some([r[0], r[1], r[2]]);
            }
            o.interfering_speakers_quota = a.interfering_speakers_quota.or(o.interfering_speakers_quota);
            init_runtime(&cfg)?;
            build_dataset(&cfg)
        }
        Command::Train(a) => {
            let o = &mut cfg.train;
            o.dataset = a.dataset.or(o.dataset.take());
            o.backbone = a.backbone.or(o.backbone.take());
            o.out = a.out.or(o.out.take());
            if let Some(n) = a.calibration_clips {
                o.calibration_clips = n;
            }
            if let Some(d) = a.dtype {
                o.dtype = d;
            }
            if let Some(lr) = a.learning_rate {
                o.params.learning_rate = lr;
            }
            if let Some(lrs) = a.learning_rates {
                o.learning_rates = lrs;
            }
            if let Some(n) = a.max_epochs {
                o.params.max_epochs = n;
            }
            if let Some(n) = a.batch_size {
                o.params.batch_size = n;
            }
            if a.no_augment {
                o.params.augmentation = scene_core::dataset::AugmentationConfig::disabled();
            }
            o.params.seed = cfg.seed;
            o.params.augmentation.rng_seed = cfg.seed;
            init_runtime(&cfg)?;
            train(&cfg)
        }
        Command::Eval(a) => {
            let o = &mut cfg.eval;
            o.model = a.model.or(o.model.take());
            o.dataset = a.dataset.or(o.dataset.take());
            o.out = a.out.or(o.out.take());
            if let Some(s) = a.split {
                o.split = s;
            }
            if let Some(g) = a.gain_db {
                o.gain_db = g;
            }
            if let Some(g) = a.sweep_gains_db {
                o.sweep_gains_db = g;
            } else if a.sweep {
                o.sweep_gains_db = config::default_sweep();
            }
            init_runtime(&cfg)?;
            eval(&cfg)
        }
        Command::Infer(a) => {
            let o = &mut cfg.infer;
            o.model = a.model.or(o.model.take());
            o.wav = a.wav.or(o.wav.take());
            if let Some(g) = a.gain_db {
                o.gain_db = g;
            }
            if let Some(x) = a.aggregate {
                o.aggregate = x;
            }
            if let Some(f) = a.format {
                o.format = f;
            }
            init_runtime(&cfg)?;
            infer(&cfg)
        }
        Command::Bench(a) => {
            let o = &mut cfg.bench;
            o.model = a.model.or(o.model.take());
            o.out = a.out.or(o.out.take());
            if let Some(d) = a.durations_s {
                o.durations_s = d;
            }
            if let Some(r) = a.repeats {
                o.repeats = r;
            }
            init_runtime(&cfg)?;
            bench(&cfg)
        }
        Command::InspectModel(a) => {
            init_runtime(&cfg)?;
            inspect_model(&a, &cfg)
        }
        Command::InspectFeatures(a) => {
            init_runtime(&cfg)?;
            inspect_features(&a, &cfg)
        }
    }
}

fn build_dataset(cfg: &CommandConfig) -> anyhow::Result<()> {
    let o = &cfg.build_dataset;
    let sources = required(&o.sources, "sources")?;
    let out = required(&o.out, "out")?;
    let (desc, base) = SourcesDescriptor::load(&sources)?;
    let inputs = desc.resolve(&base)?;
    let build = BuildConfig {
        seed: cfg.seed,
        split_ratios: o.split_ratios.unwrap_or(DEFAULT_SPLIT_RATIOS),
        interfering_speakers_quota: o.interfering_speakers_quota,
    };
    let sink = DirSink::new(&out)?;
    let manifest = build_mixed_dataset(&inputs, &build, &sink)?;
    manifest.save(&out)?;
    cfg.write_resolved(&out)?;
    let mut stdout = std::io::stdout().lock();
    for (label, counts) in manifest.split_counts() {
        writeln!(stdout, "{:<28} {:>6} {:>6} {:>6}", label.as_str(), counts[0], counts[1], counts[2])?;
    }
    writeln!(stdout, "{} clips written to {}", manifest.clips.len(), out.display())?;
    Ok(())
}

fn load_manifest(dir: &Path) -> anyhow::Result<DatasetManifest> {
    Ok(DatasetManifest::load(dir.join("manifest.json"))?)
}

fn random_backbone(seed: u64, calibration: &[LogMelPatch]) -> anyhow::Result<ModelWeights> {
    let mut m = mobilenet(&ArchConfig::with_labels(SceneLabel::names()), Init::Random { seed, std: INIT_STD })?;
    if !calibration.is_empty() {
        calibrate_batch_norm(&mut m, calibration)?;
    }
    Ok(m)
}

fn train(cfg: &CommandConfig) -> anyhow::Result<()> {
    let o = &cfg.train;
    let dataset = required(&o.dataset, "dataset")?;
    let out = required(&o.out, "out")?;
    let manifest = load_manifest(&dataset)?;
    let train_clips = labelled_clips(&manifest, &dataset, Split::Train);
    let val_clips = labelled_clips(&manifest, &dataset, Split::Validation);
    let backbone = match &o.backbone {
        Some(p) => ModelWeights::load(p)?,
        None => {
            tracing::warn!("no --backbone given; calibrating a random network on {} clips", o.calibration_clips);
            let frontend = Frontend::new(cfg.frontend.clone())?;
            let mut patches = Vec::new();
            for clip in train_clips.iter().take(o.calibration_clips) {
                patches.extend(frontend.patches(&clip.load()?)?);
            }
            random_backbone(cfg.seed, &patches)?
        }
    };
    let rates = if o.learning_rates.is_empty() { vec![o.params.learning_rate] } else { o.learning_rates.clone() };
    let sweep = rates.len() > 1;
    let mut summary = String::from("learning_rate,best_epoch,epochs,best_val_map\n");
    for lr in rates {
        let params = scene_core::train::TrainConfig { learning_rate: lr, ..o.params.clone() };
        let outcome = train_head(&train_clips, &val_clips, &backbone, &cfg.frontend, &params)?;
        let dir = if sweep { out.join(format!("lr_{lr:e}")) } else { out.clone() };
        outcome.save(&dir, &params, o.dtype)?;
        let best = outcome
            .history
            .epochs
            .iter()
            .find(|e| e.epoch == outcome.best_epoch)
            .map_or(f64::NAN, |e| e.val_map);
        summary.push_str(&format!("{lr:e},{},{},{best}\n", outcome.best_epoch, outcome.history.epochs.len()));
        println!("lr {lr:e}: best epoch {} val mAP {best:.4} -> {}", outcome.best_epoch, dir.display());
    }
    if sweep {
        std::fs::write(out.join("sweep.csv"), summary)?;
    }
    cfg.write_resolved(&out)
}

fn class_labels(m: &ModelWeights) -> Vec<String> {
    if m.labels.len() == m.class_count {
        m.labels.clone()
    } else {
        (0..m.class_count).map(|i| format!("class_{i}")).collect()
    }
}

fn eval(cfg: &CommandConfig) -> anyhow::Result<()> {
    let o = &cfg.eval;
    let model_path = required(&o.model, "model")?;
    let dataset = required(&o.dataset, "dataset")?;
    let split: Split = o.split.parse().map_err(|e: scene_core::Error| usage(e.to_string()))?;
    let out = o.out.clone().unwrap_or_else(|| dataset.join(format!("eval_{split}")));
    let model = ModelWeights::load(&model_path)?;
    let manifest = load_manifest(&dataset)?;
    let clips = labelled_clips(&manifest, &dataset, split);
    if clips.is_empty() {
        return Err(scene_core::Error::Dataset(format!("split {split} holds no clips")).into());
    }
    let labels = class_labels(&model);
    let classifier = Classifier::new(&model, cfg.frontend.clone())?;
    let report = evaluate_clips(&clips, &classifier, &labels, o.gain_db)?;
    report.save(&out)?;
    println!(
        "{split}: {} clips, {} windows, mAP {:.4}, accuracy {:.4}",
        clips.len(),
        report.window_count,
        report.map,
        report.accuracy
    );
    if !o.sweep_gains_db.is_empty() {
        let points = gain_sweep_eval(&clips, &classifier, &labels, &o.sweep_gains_db)?;
        write_sweep(&out, &points)?;
        for p in &points {
            println!("{:+6.1} dB  mAP {:.4}  accuracy {:.4}", p.gain_db, p.map, p.accuracy);
        }
    }
    cfg.write_resolved(&out)
}

fn write_sweep(dir: &Path, points: &[GainPoint]) -> anyhow::Result<()> {
    let mut csv = String::from("gain_db,map,accuracy\n");
    for p in points {
        csv.push_str(&format!("{},{},{}\n", p.gain_db, p.map, p.accuracy));
    }
    std::fs::write(dir.join("gain_sweep.csv"), csv)?;
    std::fs::write(dir.join("gain_sweep.json"), serde_json::to_string_pretty(points)?)?;
    Ok(())
}

/// Clip-level summary over window scores.
pub fn aggregate(rows: &[Vec<f32>], how: Aggregate) -> Option<Vec<f64>> {
    let c = rows.first()?.len();
    let mut sum = vec![0.0f64; c];
    for r in rows {
        for (s, &v) in sum.iter_mut().zip(r) {
            *s += v as f64;
        }
    }
    match how {
        Aggregate::None => None,
        Aggregate::Mean => Some(sum.iter().map(|s| s / rows.len() as f64).collect()),
        Aggregate::Softmax => {
            let max = sum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = sum.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = e.iter().sum();
            Some(e.iter().map(|v| v / z).collect())
        }
    }
}

fn infer(cfg: &CommandConfig) -> anyhow::Result<()> {
    let o = &cfg.infer;
    let model = ModelWeights::load(required(&o.model, "model")?)?;
    let wav = required(&o.wav, "wav")?;
    let mut audio = read_wav(&wav)?;
    if o.gain_db != 0.0 {
        audio = apply_gain(&audio, o.gain_db)?;
    }
    let classifier = Classifier::new(&model, cfg.frontend.clone())?;
    let windows = classifier.infer_clip(&audio)?;
    let labels = class_labels(&model);
    let hop_s = cfg.frontend.hop_samples() as f64 / cfg.frontend.sample_rate_hz as f64;
    let rows: Vec<Vec<f32>> = windows.iter().map(|w| w.scores.clone()).collect();
    let clip = aggregate(&rows, o.aggregate);
    let mut out = std::io::stdout().lock();
    match o.format {
        Format::Json => {
            let doc = serde_json::json!({
                "wav": wav,
                "gain_db": o.gain_db,
                "labels": labels,
                "windows": windows.iter().map(|w| serde_json::json!({
                    "window_index": w.window_index,
                    "start_s": w.window_index as f64 * hop_s,
                    "scores": w.scores,
                    "top": labels[w.argmax()],
                })).collect::<Vec<_>>(),
                "aggregate": clip.as_ref().map(|v| serde_json::json!({
                    "method": o.aggregate,
                    "scores": v,
                })),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
        Format::Csv => {
            writeln!(out, "window_index,start_s,{}", labels.join(","))?;
            for w in &windows {
                let vals: Vec<String> = w.scores.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{},{},{}", w.window_index, w.window_index as f64 * hop_s, vals.join(","))?;
            }
            if let Some(v) = &clip {
                let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                writeln!(out, "clip,,{}", vals.join(","))?;
            }
        }
        Format::Text => {
            for w in &windows {
                let top = w.argmax();
                writeln!(
                    out,
                    "{:>3} {:>7.2}s  {:<28} {:.4}",
                    w.window_index,
                    w.window_index as f64 * hop_s,
                    labels[top],
                    w.scores[top]
                )?;
            }
            if let Some(v) = &clip {
                let top = (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
                writeln!(out, "clip ({:?}): {} {:.4}", o.aggregate, labels[top], v[top])?;
            }
        }
    }
    Ok(())
}

fn bench(cfg: &CommandConfig) -> anyhow::Result<()> {
    let o = &cfg.bench;
    let out = required(&o.out, "out")?;
    let (model, load_ms) = match &o.model {
        Some(p) => {
            let (m, ms) = time_load(|| ModelWeights::load(p))?;
            (m, Some(ms))
        }
        None => (random_backbone(cfg.seed, &[])?, None),
    };
    let classifier = Classifier::new(&model, cfg.frontend.clone())?;
    let report = latency_benchmark(&classifier, &o.durations_s, o.repeats, load_ms)
        .map_err(|e| match e {
            scene_core::Error::InvalidArgument { .. } => usage(e.to_string()),
            other => other.into(),
        })?;
    report.save(&out)?;
    for t in &report.timings {
        println!("{:>6.1} s  {:>9.2} ms", t.seconds, t.mean_ms);
    }
    println!(
        "latency = {:.3} ms/s x duration + {:.3} ms (R^2 {:.4})",
        report.fit.slope, report.fit.intercept, report.fit.r_squared
    );
    if let Some(l) = load_ms {
        println!("model load {l:.3} ms");
    }
    cfg.write_resolved(&out)
}

fn inspect_model(a: &InspectModelArgs, cfg: &CommandConfig) -> anyhow::Result<()> {
    let m = ModelWeights::load(&a.model)?;
    let shapes = if a.shapes {
        let frontend = Frontend::new(cfg.frontend.clone())?;
        let silence = scene_core::Waveform::silence(frontend.config().window_samples(), cfg.frontend.sample_rate_hz);
        let patch = frontend.patches(&silence)?.remove(0);
        let net = Network::new(&m)?;
        Some(net.trace_shapes(&patch)?.into_iter().map(|(n, s)| (n.to_string(), s)).collect::<Vec<_>>())
    } else {
        None
    };
    let mut out = std::io::stdout().lock();
    if a.format == Some(Format::Json) {
        let doc = serde_json::json!({
            "dtype": m.dtype,
            "class_count": m.class_count,
            "bn_epsilon": m.bn_epsilon,
            "parameters": m.parameter_count(),
            "labels": m.labels,
            "layers": m.layers.iter().map(|l| serde_json::json!({
                "kind": l.kind,
                "kernel": l.kernel,
                "stride": l.stride,
                "in_channels": l.in_channels,
                "out_channels": l.out_channels,
                "parameters": l.parameter_count(),
            })).collect::<Vec<_>>(),
            "shapes": shapes,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        return Ok(());
    }
    writeln!(out, "dtype {}  classes {}  bn epsilon {}", m.dtype, m.class_count, m.bn_epsilon)?;
    writeln!(out, "{:>3}  {:<16} {:>6} {:>6} {:>6} {:>6} {:>9}", "#", "kind", "kernel", "stride", "in", "out", "params")?;
    for (i, l) in m.layers.iter().enumerate() {
        writeln!(
            out,
            "{i:>3}  {:<16} {:>6} {:>6} {:>6} {:>6} {:>9}",
            format!("{:?}", l.kind),
            format!("{}x{}", l.kernel[0], l.kernel[1]),
            l.stride,
            l.in_channels,
            l.out_channels,
            l.parameter_count()
        )?;
    }
    writeln!(out, "total parameters {}", m.parameter_count())?;
    if !m.labels.is_empty() {
        writeln!(out, "labels {}", m.labels.join(", "))?;
    }
    for (name, s) in shapes.unwrap_or_default() {
        writeln!(out, "{name:<20} {}x{}x{}", s[0], s[1], s[2])?;
    }
    Ok(())
}

fn inspect_features(a: &InspectFeaturesArgs, cfg: &CommandConfig) -> anyhow::Result<()> {
    let audio = read_wav(&a.wav)?;
    let frontend = Frontend::new(cfg.frontend.clone())?;
    let patches = frontend.patches(&audio)?;
    let mut summary = format!(
        "{}: {} samples, {} windows of {}x{}\nwindow start_s min max mean\n",
        a.wav.display(),
        audio.len(),
        patches.len(),
        cfg.frontend.patch_frames,
        cfg.frontend.mel_bands
    );
    for (i, p) in patches.iter().enumerate() {
        summary.push_str(&format!(
            "{i} {:.2} {:.4} {:.4} {:.4}\n",
            p.source_window_start_s,
            p.min(),
            p.max(),
            p.mean()
        ));
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))?;
        for (i, p) in patches.iter().enumerate() {
            let path = dir.join(format!("patch_{i:03}.bin"));
            let f = std::fs::File::create(&path).with_context(|| format!("create {}", path.display()))?;
            write_patch(p, std::io::BufWriter::new(f))?;
        }
        std::fs::write(dir.join("summary.txt"), &summary)?;
    }
    print!("{summary}");
    Ok(())
}

/// Every long flag the parser accepts for `sub`, global flags included.
pub fn long_flags(sub: &str) -> anyhow::Result<Vec<String>> {
    let cmd = Cli::command();
    let mut flags: Vec<String> = cmd.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect();
    let sc = cmd
        .get_subcommands()
        .find(|c| c.get_name() == sub)
        .ok_or_else(|| anyhow!("no subcommand {sub}"))?;
    flags.extend(sc.get_arguments().filter_map(|a| a.get_long().map(str::to_string)));
    Ok(flags)
}

pub fn subcommand_names() -> Vec<String> {
    Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect()
}
