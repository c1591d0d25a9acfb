//! `segquality`: segment-wise quality estimation for LiDAR segmentation.

mod commands;
mod config;
mod corpus;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use segquality::meta::{ModelKind, Task};

use crate::commands::{InferArgs, MetricsArgs, ScoreSource};
use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "segquality", version, about = "Segment-wise prediction quality for LiDAR semantic segmentation")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Classify,
    Regress,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Gbt,
    Linear,
}

/// Options shared by everything that trains models.
#[derive(Args)]
struct ModelOpts {
    /// classify: false-positive detection; regress: adjusted IoU.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Cross-validation folds (whole groups per fold).
    #[arg(long)]
    folds: Option<usize>,
    /// Boosting rounds.
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic frames with mock network outputs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames: Option<u32>,
        /// Number of contiguous frame groups (cross-validation units).
        #[arg(long)]
        groups: Option<u32>,
    },
    /// Compute segment metric vectors and build the meta dataset.
    Metrics {
        /// Data directory with dataset.toml and manifest.csv.
        #[arg(long)]
        data: PathBuf,
        /// Binary dataset output; a CSV copy is written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Per-segment CSV with sizes, IoU and bounding boxes.
        #[arg(long)]
        segments: Option<PathBuf>,
        /// Directory for PGM/CSV dumps of every heatmap.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Minimum projected points per segment.
        #[arg(long)]
        sp_min: Option<usize>,
        /// Ignore label files; the dataset has no targets.
        #[arg(long)]
        no_labels: bool,
        /// Auxiliary per-pixel heatmap read from frames/<stem>.<NAME>.aux.
        #[arg(long = "aux", value_name = "NAME")]
        aux: Vec<String>,
        /// Disable horizontal wraparound in segment adjacency.
        #[arg(long)]
        no_wrap: bool,
    },
    /// Train a meta model on the whole dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// CSV of the training loss per boosting round.
        #[arg(long)]
        loss: Option<PathBuf>,
        #[command(flatten)]
        model: ModelOpts,
    },
    /// Grouped cross-validation report, or scores of a trained model.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Evaluate this model instead of cross-validating.
        #[arg(long)]
        model: Option<PathBuf>,
        /// CSV of out-of-fold predictions.
        #[arg(long)]
        oof: Option<PathBuf>,
        #[command(flatten)]
        opts: ModelOpts,
    },
    /// Greedy forward metric selection.
    Select {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15)]
        max_metrics: usize,
        /// Score candidates on training folds instead of validation.
        #[arg(long)]
        on_training: bool,
        #[command(flatten)]
        opts: ModelOpts,
    },
    /// Reliability bins, MCE and ECE of false-positive probabilities.
    Calibrate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Classifier to score the dataset with; default is out-of-fold CV.
        #[arg(long, conflicts_with = "scores")]
        model: Option<PathBuf>,
        /// CSV with `probability` and `label` columns.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Bin the raw FP probability instead of the predicted-class confidence.
        #[arg(long)]
        raw: bool,
        #[command(flatten)]
        opts: ModelOpts,
    },
    /// Predict segment quality for frames without reading labels.
    Infer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// False-positive classifier.
        #[arg(long)]
        classifier: Option<PathBuf>,
        /// Adjusted-IoU regressor.
        #[arg(long)]
        regressor: Option<PathBuf>,
        #[arg(long)]
        sp_min: Option<usize>,
        #[arg(long = "aux", value_name = "NAME")]
        aux: Vec<String>,
        #[arg(long)]
        no_wrap: bool,
    },
}

impl ModelOpts {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(t) = self.task {
            cfg.task = match t {
                TaskArg::Classify => Task::Classify,
                TaskArg::Regress => Task::Regress,
            };
        }
        if let Some(k) = self.kind {
            cfg.kind = match k {
                KindArg::Gbt => ModelKind::Gbt,
                KindArg::Linear => ModelKind::Linear,
            };
        }
        if let Some(f) = self.folds {
            cfg.folds = f;
        }
        if let Some(r) = self.rounds {
            cfg.gbt.rounds = r;
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if cfg.threads > 0 {
        // read once when the worker pool starts
        std::env::set_var("RAYON_NUM_THREADS", cfg.threads.to_string());
    }
    match cli.command {
        Command::Synth { out, frames, groups } => {
            let frames = frames.unwrap_or(cfg.synth.frames);
            let groups = groups.unwrap_or(cfg.synth.groups);
            commands::synth(&cfg, &out, frames, groups)
        }
        Command::Metrics { data, out, segments, dump, sp_min, no_labels, aux, no_wrap } => {
            cfg.sp_min = sp_min.unwrap_or(cfg.sp_min);
            cfg.wrap &= !no_wrap;
            commands::metrics(&cfg, &MetricsArgs { data, out, segments, dump, no_labels, aux })
        }
        Command::Train { dataset, out, loss, model } => {
            model.apply(&mut cfg);
            commands::train(&cfg, &dataset, &out, loss.as_deref())
        }
        Command::Eval { dataset, out, model, oof, opts } => {
            opts.apply(&mut cfg);
            commands::eval(&cfg, &dataset, model.as_deref(), &out, oof.as_deref())
        }
        Command::Select { dataset, out, max_metrics, on_training, opts } => {
            opts.apply(&mut cfg);
            commands::select(&cfg, &dataset, max_metrics, on_training, &out)
        }
        Command::Calibrate { dataset, out, model, scores, raw, opts } => {
            opts.apply(&mut cfg);
            let source = match (&model, &scores) {
                (Some(m), _) => ScoreSource::Model(m),
                (None, Some(s)) => ScoreSource::Scores(s),
                (None, None) => ScoreSource::CrossValidation,
            };
            commands::calibrate(&cfg, dataset.as_deref(), source, raw, &out)
        }
        Command::Infer { data, out, classifier, regressor, sp_min, aux, no_wrap } => {
            cfg.sp_min = sp_min.unwrap_or(cfg.sp_min);
            cfg.wrap &= !no_wrap;
            commands::infer(&cfg, &InferArgs { data, classifier, regressor, out, aux })
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
