//! Command-line driver for the classification toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use objclass::config::PipelineConfig;
use objclass::pipeline;
use objclass::synth::SceneSpec;
use objclass::Error;

#[derive(Parser)]
#[command(
    name = "objclass",
    about = "Object-based classification of multispectral raster imagery",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every pipeline-driven subcommand.
#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// Configuration file (key=value with [section] headers)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra overrides as section.key=value, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Print the resolved configuration and exit
    #[arg(long)]
    print_config: bool,
    /// Seed for every stochastic stage
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Scene specification JSON; flags below override nothing when given
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 5)]
    bands: usize,
    #[arg(long, default_value_t = 4)]
    classes: u16,
    /// Per-band mean offset between consecutive classes
    #[arg(long, default_value_t = 2.0)]
    mean_step: f64,
    /// Shared per-band standard deviation
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 3)]
    region_scale: usize,
    /// Fraction of pixels drawn from another class
    #[arg(long, default_value_t = 0.0)]
    salt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    /// Also write samples.csv with this many pixels per class
    #[arg(long)]
    samples_per_class: Option<usize>,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    raster: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Spectral distance threshold; omit for the data-driven default
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    min_size: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    raster: Option<PathBuf>,
    /// Reference labels to sample training pixels from
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Training samples CSV (alternative to --labels)
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Where to store the trained model header
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    raster: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// mindist|mahalanobis|maxlik|pipiped|fspace|svm|svrf
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Relabel each segmented object by its plurality class
    #[arg(long)]
    relabel_objects: bool,
    /// Append CA relaxation as threshold,ceiling,steps
    #[arg(long, value_name = "T,CEIL,STEPS")]
    ca: Option<String>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    predicted: PathBuf,
    /// Report JSON destination
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "predicted")]
    method: String,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    raster: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene with ground truth
    Synth(SynthArgs),
    /// Region-growing segmentation of a raster
    Segment(SegmentArgs),
    /// Train an SVM model and save it
    Train(TrainArgs),
    /// Classify a raster with one method
    Classify(ClassifyArgs),
    /// Genetic-algorithm hyperparameter search
    Tune(TuneArgs),
    /// Compare a predicted label map against reference labels
    Evaluate(EvaluateArgs),
    /// Run all seven methods and tabulate accuracy
    Benchmark(BenchmarkArgs),
}

fn push(overrides: &mut Vec<(String, String)>, key: &str, value: impl ToString) {
    overrides.push((key.to_string(), value.to_string()));
}

fn push_path(overrides: &mut Vec<(String, String)>, key: &str, value: &Option<PathBuf>) {
    if let Some(path) = value {
        push(overrides, key, path.display().to_string());
    }
}

fn parse_sets(common: &CommonOpts, overrides: &mut Vec<(String, String)>) -> Result<(), Error> {
    for item in &common.sets {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {item:?}")))?;
        overrides.push((key.trim().to_string(), value.trim().to_string()));
    }
    if let Some(seed) = common.seed {
        push(overrides, "pipeline.seed", seed);
        push(overrides, "ga.seed", seed);
    }
    Ok(())
}

fn resolve_config(
    common: &CommonOpts,
    overrides: Vec<(String, String)>,
) -> Result<Option<PipelineConfig>, Error> {
    let cfg = PipelineConfig::load(common.config.as_ref(), &overrides)?;
    if common.print_config {
        print!("{}", cfg.to_text());
        return Ok(None);
    }
    Ok(Some(cfg))
}

fn run() -> Result<(), Error> {
    match Cli::parse().command {
        Command::Synth(args) => {
            let spec = match &args.spec {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    serde_json::from_str::<SceneSpec>(&text)
                        .map_err(|e| Error::Config(format!("bad scene spec: {e}")))?
                }
                None => {
                    let mut spec = SceneSpec::graded(
                        args.width,
                        args.height,
                        args.bands,
                        args.classes,
                        args.mean_step,
                        args.sigma,
                        args.region_scale,
                        args.salt,
                        args.seed,
                    );
                    spec.resolution_m = args.resolution;
                    spec
                }
            };
            pipeline::run_synth(&spec, &args.out, args.samples_per_class)
        }
        Command::Segment(args) => {
            let mut overrides = Vec::new();
            push_path(&mut overrides, "paths.raster", &args.raster);
            push_path(&mut overrides, "paths.output", &args.out);
            if let Some(t) = args.threshold {
                push(&mut overrides, "segmentation.threshold", t);
            }
            if let Some(m) = args.min_size {
                push(&mut overrides, "segmentation.min_size", m);
            }
            parse_sets(&args.common, &mut overrides)?;
            match resolve_config(&args.common, overrides)? {
                Some(cfg) => pipeline::run_segment(&cfg),
                None => Ok(()),
            }
        }
        Command::Train(args) => {
            let mut overrides = Vec::new();
            push_path(&mut overrides, "paths.raster", &args.raster);
            push_path(&mut overrides, "paths.labels", &args.labels);
            push_path(&mut overrides, "paths.samples", &args.samples);
            push_path(&mut overrides, "paths.model", &args.model);
            push_path(&mut overrides, "paths.output", &args.out);
            push(&mut overrides, "pipeline.method", "svm");
            if let Some(v) = args.per_class {
                push(&mut overrides, "pipeline.samples_per_class", v);
            }
            if let Some(v) = args.mu {
                push(&mut overrides, "kernel.mu", v);
            }
            if let Some(v) = args.c {
                push(&mut overrides, "kernel.c", v);
            }
            parse_sets(&args.common, &mut overrides)?;
            match resolve_config(&args.common, overrides)? {
                Some(cfg) => {
                    if cfg.paths.model.is_none() {
                        return Err(Error::Config(
                            "train requires --model for the saved model".into(),
                        ));
                    }
                    pipeline::run_pipeline(&cfg).map(|_| ())
                }
                None => Ok(()),
            }
        }
        Command::Classify(args) => {
            let mut overrides = Vec::new();
            push_path(&mut overrides, "paths.raster", &args.raster);
            push_path(&mut overrides, "paths.labels", &args.labels);
            push_path(&mut overrides, "paths.samples", &args.samples);
            push_path(&mut overrides, "paths.model", &args.model);
            push_path(&mut overrides, "paths.output", &args.out);
            if let Some(m) = &args.method {
                push(&mut overrides, "pipeline.method", m);
            }
            if let Some(v) = args.per_class {
                push(&mut overrides, "pipeline.samples_per_class", v);
            }
            if let Some(v) = args.mu {
                push(&mut overrides, "kernel.mu", v);
            }
            if let Some(v) = args.c {
                push(&mut overrides, "kernel.c", v);
            }
            if let Some(v) = args.beta {
                push(&mut overrides, "svrf.beta", v);
            }
            if args.relabel_objects {
                push(&mut overrides, "pipeline.relabel_objects", true);
            }
            if let Some(ca) = &args.ca {
                let parts: Vec<&str> = ca.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::Config(
                        "--ca expects threshold,ceiling,steps".into(),
                    ));
                }
                push(&mut overrides, "ca.enabled", true);
                push(&mut overrides, "ca.threshold", parts[0]);
                push(&mut overrides, "ca.ceiling", parts[1]);
                push(&mut overrides, "ca.steps", parts[2]);
            }
            parse_sets(&args.common, &mut overrides)?;
            match resolve_config(&args.common, overrides)? {
                Some(cfg) => pipeline::run_pipeline(&cfg).map(|_| ()),
                None => Ok(()),
            }
        }
        Command::Tune(args) => {
            let mut overrides = Vec::new();
            push_path(&mut overrides, "paths.samples", &args.samples);
            push_path(&mut overrides, "paths.output", &args.out);
            if let Some(v) = args.population {
                push(&mut overrides, "ga.population", v);
            }
            if let Some(v) = args.generations {
                push(&mut overrides, "ga.generations", v);
            }
            if let Some(v) = args.folds {
                push(&mut overrides, "ga.folds", v);
            }
            parse_sets(&args.common, &mut overrides)?;
            match resolve_config(&args.common, overrides)? {
                Some(cfg) => pipeline::run_tune(&cfg).map(|_| ()),
                None => Ok(()),
            }
        }
        Command::Evaluate(args) => pipeline::run_evaluate(
            &args.reference,
            &args.predicted,
            args.out.as_deref(),
            &args.method,
        )
        .map(|_| ()),
        Command::Benchmark(args) => {
            let mut overrides = Vec::new();
            push_path(&mut overrides, "paths.raster", &args.raster);
            push_path(&mut overrides, "paths.labels", &args.labels);
            push_path(&mut overrides, "paths.output", &args.out);
            if let Some(v) = args.per_class {
                push(&mut overrides, "pipeline.samples_per_class", v);
            }
            if let Some(v) = args.mu {
                push(&mut overrides, "kernel.mu", v);
            }
            if let Some(v) = args.c {
                push(&mut overrides, "kernel.c", v);
            }
            if let Some(v) = args.beta {
                push(&mut overrides, "svrf.beta", v);
            }
            parse_sets(&args.common, &mut overrides)?;
            match resolve_config(&args.common, overrides)? {
                Some(cfg) => pipeline::run_benchmark(&cfg).map(|_| ()),
                None => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
