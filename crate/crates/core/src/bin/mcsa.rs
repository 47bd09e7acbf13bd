use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mcsa::config::Overrides;
use mcsa::data::{
    generate_synthetic, load_dataset, materialize_split, plan_split, read_feature, SplitMode,
    SplitPlan, SynthSpec,
};
use mcsa::gradcheck::{gradient_check, TOLERANCE};
use mcsa::model_io::{load_model, save_model};
use mcsa::trainer::{evaluate, train_lower, train_upper, TrainConfig};
use mcsa::{predict, snapshot, Error, FeatureSample, Result, StreamConfig};

/// Multi-channel self-attention action recognition over precomputed features.
///
/// Exit status: 0 success, 1 I/O failure, 2 usage or configuration error,
/// 3 malformed file, 4 numeric failure.
#[derive(Parser)]
#[command(name = "mcsa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (feature files + manifest.json) to a directory.
    GenSynth(GenSynthArgs),
    /// Train the lower stream on the trimmed samples of a manifest.
    TrainTrimmed(TrainTrimmedArgs),
    /// Train the upper stream on untrimmed samples, transferring from a lower model.
    TrainUntrimmed(TrainUntrimmedArgs),
    /// Print the accuracy of a model on every sample of a manifest as JSON.
    Eval(EvalArgs),
    /// Print the predicted class name for one feature file.
    Predict(PredictArgs),
    /// Print TD / G / TD+G bucket counts, or a concrete assignment of a manifest, as JSON.
    SplitPlan(SplitPlanArgs),
    /// Check analytic gradients against finite differences on a tiny random model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 50)]
    videos_per_class: usize,
    /// Spatial feature size s.
    #[arg(long, default_value_t = 32)]
    s: usize,
    /// Temporal feature size t.
    #[arg(long, default_value_t = 32)]
    t: usize,
    /// Frames per video G.
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 2.0)]
    snr: f64,
    /// Fraction of frames carrying the action in untrimmed videos.
    #[arg(long, default_value_t = 1.0)]
    signal_fraction: f64,
    /// Generate untrimmed videos (signal in one segment).
    #[arg(long)]
    untrimmed: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the class prototypes; share it across train/test sets.
    #[arg(long, default_value_t = 0)]
    prototype_seed: u64,
    /// Prefix for video ids and file names.
    #[arg(long, default_value = "")]
    prefix: String,
}

/// Training options. Unset flags fall back to the config file, then to the
/// defaults shown.
#[derive(Args)]
struct TrainFlags {
    /// Flat TOML file with any of the keys below (snake_case).
    #[arg(long)]
    config: Option<PathBuf>,
    /// [default: 0.0001]
    #[arg(long)]
    learning_rate: Option<f64>,
    /// L2 coefficient applied every step [default: 0.0005]
    #[arg(long)]
    weight_decay: Option<f64>,
    /// [default: 1000]
    #[arg(long)]
    lr_decay_every: Option<usize>,
    /// Learning-rate multiplier every lr_decay_every iterations [default: 1.0, off]
    #[arg(long)]
    lr_decay_factor: Option<f64>,
    /// Weight of the MMD transfer term [default: 1.0]
    #[arg(long)]
    lambda_mmd: Option<f64>,
    /// Weight of the attention regularizer [default: 0.1]
    #[arg(long)]
    lambda_reg: Option<f64>,
    /// Weight of the cross-entropy term [default: 1.0]
    #[arg(long)]
    lambda_ce: Option<f64>,
    /// [default: 8]
    #[arg(long)]
    batch_size: Option<usize>,
    /// [default: 5000]
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Seed for initialization and shuffling [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Threads for per-sample gradients; results do not depend on it [default: 1]
    #[arg(long)]
    jobs: Option<usize>,
    /// Hidden width a of the spatial attention channels [default: 64]
    #[arg(long)]
    spatial_hidden: Option<usize>,
    /// Hidden width b of the temporal attention channels [default: 64]
    #[arg(long)]
    temporal_hidden: Option<usize>,
    /// Fixed MMD base bandwidth [default: median heuristic]
    #[arg(long)]
    kernel_bandwidth: Option<f64>,
}

impl TrainFlags {
    fn resolve(&self) -> Result<Overrides> {
        let flags = Overrides {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            lr_decay_every: self.lr_decay_every,
            lr_decay_factor: self.lr_decay_factor,
            lambda_mmd: self.lambda_mmd,
            lambda_reg: self.lambda_reg,
            lambda_ce: self.lambda_ce,
            batch_size: self.batch_size,
            max_iterations: self.max_iterations,
            seed: self.seed,
            jobs: self.jobs,
            init_from_snapshot: None,
            kernel_bandwidth: self.kernel_bandwidth,
            spatial_hidden: self.spatial_hidden,
            temporal_hidden: self.temporal_hidden,
        };
        let file = match &self.config {
            Some(path) => Overrides::load(path)?,
            None => Overrides::default(),
        };
        Ok(flags.over(&file))
    }
}

#[derive(Args)]
struct TrainTrimmedArgs {
    /// Dataset manifest; only its trimmed samples are used.
    #[arg(long)]
    manifest: PathBuf,
    /// Optional manifest scored after training.
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long, default_value = "lower.model.json")]
    model_out: PathBuf,
    #[arg(long, default_value = "lower.report.json")]
    report_out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct TrainUntrimmedArgs {
    /// Dataset manifest; only its untrimmed samples are used.
    #[arg(long)]
    manifest: PathBuf,
    /// Lower-stream model file providing the transfer snapshot.
    #[arg(long)]
    lower: PathBuf,
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long, default_value = "upper.model.json")]
    model_out: PathBuf,
    #[arg(long, default_value = "upper.report.json")]
    report_out: PathBuf,
    /// Start the classifier parameters at the lower model's values.
    #[arg(long)]
    init_from_snapshot: bool,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// MCSF feature file.
    #[arg(long)]
    feature: PathBuf,
}

#[derive(Args)]
struct SplitPlanArgs {
    /// td, g or td+g.
    #[arg(long, default_value = "td+g")]
    mode: String,
    /// Samples per class used for the counts.
    #[arg(long, default_value_t = 10)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Assign the samples of this manifest instead of printing counts.
    #[arg(long, requires_all = ["seen", "unseen"])]
    manifest: Option<PathBuf>,
    /// Comma-separated trimmed class names (with --manifest).
    #[arg(long, value_delimiter = ',')]
    trimmed_classes: Vec<String>,
    /// Comma-separated seen untrimmed class names (with --manifest).
    #[arg(long, value_delimiter = ',')]
    seen: Vec<String>,
    /// Comma-separated unseen untrimmed class names (with --manifest).
    #[arg(long, value_delimiter = ',')]
    unseen: Vec<String>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn load_split(
    path: &Path,
    trimmed: bool,
) -> Result<(Vec<String>, StreamConfig, Vec<FeatureSample>)> {
    let (manifest, samples) = load_dataset(path)?;
    let samples: Vec<FeatureSample> = samples
        .into_iter()
        .filter(|s| s.trimmed == trimmed)
        .collect();
    if samples.is_empty() {
        let kind = if trimmed { "trimmed" } else { "untrimmed" };
        return Err(Error::Config(format!(
            "{} has no {kind} samples",
            path.display()
        )));
    }
    let config = StreamConfig::new(
        manifest.dims.s,
        manifest.dims.t,
        manifest.dims.g,
        manifest.classes.len(),
    );
    Ok((manifest.classes, config, samples))
}

fn load_validation(path: Option<&Path>) -> Result<Vec<FeatureSample>> {
    match path {
        Some(p) => Ok(load_dataset(p)?.1),
        None => Ok(Vec::new()),
    }
}

fn summarize(report: &mcsa::TrainReport) {
    eprintln!(
        "{} iterations in {:.1}s, train accuracy {:.4}{}",
        report.iterations(),
        report.wall_seconds,
        report.final_train_acc,
        report
            .final_val_acc
            .map(|a| format!(", validation accuracy {a:.4}"))
            .unwrap_or_default()
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth(a) => {
            let spec = SynthSpec {
                classes: a.classes,
                videos_per_class: a.videos_per_class,
                s: a.s,
                t: a.t,
                g: a.frames,
                snr: a.snr,
                signal_fraction: a.signal_fraction,
                trimmed: !a.untrimmed,
                seed: a.seed,
                prototype_seed: a.prototype_seed,
                prefix: a.prefix,
            };
            let manifest = generate_synthetic(&spec, &a.out)?;
            println!("{}", a.out.join("manifest.json").display());
            eprintln!(
                "{} samples, {} classes",
                manifest.samples.len(),
                manifest.classes.len()
            );
        }
        Command::TrainTrimmed(a) => {
            let overrides = a.train.resolve()?;
            let (classes, base, data) = load_split(&a.manifest, true)?;
            let config = overrides.train_config(&TrainConfig::default());
            let validation = load_validation(a.validation.as_deref())?;
            let (model, report) =
                train_lower(overrides.stream_config(base), &data, &validation, &config)?;
            save_model(&a.model_out, &model, &classes)?;
            write_json(&a.report_out, &report)?;
            summarize(&report);
        }
        Command::TrainUntrimmed(a) => {
            let mut overrides = a.train.resolve()?;
            if a.init_from_snapshot {
                overrides.init_from_snapshot = Some(true);
            }
            let (classes, _, data) = load_split(&a.manifest, false)?;
            let (lower, lower_classes) = load_model(&a.lower)?;
            if lower_classes.len() != classes.len() {
                return Err(Error::Config(format!(
                    "lower model has {} classes, manifest has {}",
                    lower_classes.len(),
                    classes.len()
                )));
            }
            let config = overrides.train_config(&TrainConfig::default());
            let validation = load_validation(a.validation.as_deref())?;
            let snap = snapshot(&lower);
            // attention widths follow the lower model unless overridden
            let model_config = overrides.stream_config(lower.config);
            let (model, report) = train_upper(model_config, &data, &validation, &snap, &config)?;
            save_model(&a.model_out, &model, &classes)?;
            write_json(&a.report_out, &report)?;
            summarize(&report);
        }
        Command::Eval(a) => {
            let (model, _) = load_model(&a.model)?;
            let (_, samples) = load_dataset(&a.manifest)?;
            let accuracy = evaluate(&model, &samples)?;
            let correct = (accuracy * samples.len() as f64).round() as usize;
            println!(
                "{}",
                json!({"accuracy": accuracy, "correct": correct, "samples": samples.len()})
            );
        }
        Command::Predict(a) => {
            let (model, classes) = load_model(&a.model)?;
            let sample = read_feature(&a.feature)?;
            let class = predict(&model, &sample)?;
            println!("{}", classes[class]);
        }
        Command::SplitPlan(a) => {
            let mode: SplitMode = a.mode.parse()?;
            match a.manifest {
                None => {
                    let plan =
                        if a.trimmed_classes.is_empty() && a.seen.is_empty() && a.unseen.is_empty()
                        {
                            SplitPlan::reference(mode, a.seed)
                        } else {
                            plan_split(&a.trimmed_classes, &a.seen, &a.unseen, mode, a.seed)?
                        };
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&plan.counts(a.per_class))?
                    );
                }
                Some(path) => {
                    let manifest = mcsa::data::DatasetManifest::load(&path)?;
                    let plan = plan_split(&a.trimmed_classes, &a.seen, &a.unseen, mode, a.seed)?;
                    let (train, test) = materialize_split(&plan, &manifest)?;
                    let mut buckets = serde_json::Map::new();
                    for b in mcsa::data::Bucket::ALL {
                        let ids: Vec<&str> = train
                            .iter()
                            .chain(&test)
                            .filter(|x| x.bucket == b)
                            .map(|x| x.record.video_id.as_str())
                            .collect();
                        buckets.insert(b.name().to_string(), json!(ids));
                    }
                    let out = json!({
                        "mode": mode.to_string(),
                        "seed": a.seed,
                        "train_total": train.len(),
                        "test_total": test.len(),
                        "buckets": buckets,
                    });
                    println!("{}", serde_json::to_string_pretty(&out)?);
                }
            }
        }
        Command::Gradcheck(a) => {
            let report = gradient_check(a.seed)?;
            let out = json!({
                "seed": a.seed,
                "max_relative_error": report.combined,
                "tolerance": TOLERANCE,
                "components": {
                    "loss1": report.loss1,
                    "loss2": report.loss2,
                    "loss3": report.loss3,
                    "loss4": report.loss4,
                    "combined": report.combined,
                },
                "parameters": report.parameters,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            if report.combined > TOLERANCE {
                return Err(Error::Numeric(format!(
                    "gradient error {:.3e} exceeds {TOLERANCE:e}",
                    report.combined
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
