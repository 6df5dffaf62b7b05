//! Command-line front end: one subcommand per pipeline stage plus a
//! `pipeline` command chaining them end to end under a single config.
//!
//! Every subcommand reads and writes only the documented CSV/JSON/NIfTI
//! formats, so stages are usable standalone with files produced by any
//! other tool honoring those formats. Errors exit nonzero with one
//! machine-parsable line: `error: <module>/<Code>: <message>`.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod pipeline;

use config::Granularity;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Volume(#[from] entroscan::volume::VolumeError),
    #[error(transparent)]
    Entropy(#[from] entroscan::entropy::EntropyError),
    #[error(transparent)]
    Learn(#[from] entroscan::learner::LearnError),
    #[error(transparent)]
    Ensemble(#[from] entroscan::ensemble::EnsembleError),
    #[error(transparent)]
    Metrics(#[from] entroscan::metrics::MetricsError),
    #[error(transparent)]
    Dataset(#[from] entroscan::dataset::DatasetError),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Module-prefixed machine code for the one-line error output.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Volume(e) => e.code(),
            Self::Entropy(e) => e.code(),
            Self::Learn(e) => e.code(),
            Self::Ensemble(e) => e.code(),
            Self::Metrics(e) => e.code(),
            Self::Dataset(e) => e.code(),
            Self::Config(_) => "cli/ConfigError",
            Self::Input(_) => "cli/InputError",
            Self::Io(_) => "cli/Io",
            Self::Json(_) => "cli/Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "entroscan",
    version,
    about = "Classify volumetric scans via entropy-sampled slices and ensembles"
)]
pub struct Cli {
    /// Root seed for every stage that draws randomness.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Pipeline config file (TOML); used by the pipeline subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled dataset (volumes plus manifest).
    Synth {
        /// Output directory for .nii files and manifest.csv.
        #[arg(long)]
        out_dir: PathBuf,
        /// Scans per class as AD,MCI,CN.
        #[arg(long, default_value = "8,14,13")]
        per_class: String,
        /// Volume extents as nx,ny,nz.
        #[arg(long, default_value = "24,24,64")]
        extents: String,
    },
    /// Print the parsed header of a NIfTI-1 file.
    Inspect {
        #[arg(long)]
        input: PathBuf,
    },
    /// Score slices by entropy and mark the selected sample set.
    Sample {
        /// Single volume to sample.
        #[arg(long, conflicts_with = "manifest")]
        input: Option<PathBuf>,
        /// Manifest of volumes to sample per scan.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// max1, topN (e.g. top50), or all.
        #[arg(long, default_value = "top50")]
        strategy: String,
        /// Leading slices to drop before ranking (35 suits scans with
        /// empty lead-in frames).
        #[arg(long, default_value_t = 0)]
        trim_head: usize,
        #[arg(long, default_value_t = 0)]
        trim_tail: usize,
        #[arg(long, default_value_t = 256)]
        bins: usize,
        #[arg(long, default_value = "z")]
        axis: String,
        /// Output CSV: scan_id,slice_index,entropy_bits,selected.
        #[arg(long)]
        out: PathBuf,
    },
    /// Resize and normalize selected slices into a features CSV.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        /// Sampling manifest restricting which slices are kept; without
        /// it every slice is processed.
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Target dims as HxW.
        #[arg(long, default_value = "224x224")]
        target: String,
        #[arg(long, default_value = "minmax")]
        normalization: String,
        #[arg(long, default_value = "z")]
        axis: String,
        /// Output features CSV; a .json sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified scan-level train/test split of a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.75)]
        train_fraction: f64,
        #[arg(long)]
        out_train: PathBuf,
        #[arg(long)]
        out_test: PathBuf,
    },
    /// Train the built-in linear softmax learner on a features CSV.
    TrainBase {
        #[arg(long)]
        features: PathBuf,
        /// Manifest providing labels; also restricts which scans train.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0.001)]
        learning_rate: f64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        /// Output model JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a features CSV with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Restrict to scans listed in this manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        model_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate an externally produced prediction CSV and rewrite it in
    /// canonical form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank models by macro recall from eval reports and keep the top k.
    SelectTop {
        /// Eval report JSONs, one per model.
        #[arg(long, num_args = 1.., required = true)]
        evals: Vec<PathBuf>,
        #[arg(short, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the stacking meta-learner and score a prediction set.
    Stack {
        /// Three prediction CSVs over the training samples.
        #[arg(long, num_args = 3)]
        train_bases: Vec<PathBuf>,
        /// Three prediction CSVs over the samples to score.
        #[arg(long, num_args = 3)]
        predict_bases: Vec<PathBuf>,
        /// Manifest providing training labels.
        #[arg(long)]
        manifest: PathBuf,
        /// Base model ids in order; defaults to train-base file stems.
        #[arg(long, num_args = 3)]
        model_ids: Option<Vec<String>>,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0.001)]
        learning_rate: f64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Majority-vote three prediction CSVs.
    Vote {
        #[arg(long, num_args = 3)]
        bases: Vec<PathBuf>,
        /// Base model ids; defaults to file stems.
        #[arg(long, num_args = 3)]
        model_ids: Option<Vec<String>>,
        /// Output CSV: id,vote_1,vote_2,vote_3,decision,tie.
        #[arg(long)]
        out: PathBuf,
        /// Also write the voters' mean softmax as a prediction CSV (the
        /// score surface used for ROC).
        #[arg(long)]
        out_scores: Option<PathBuf>,
    },
    /// Compute metrics for predictions (or vote decisions) against a
    /// labelled manifest.
    Eval {
        #[arg(long, conflicts_with = "votes")]
        preds: Option<PathBuf>,
        #[arg(long)]
        votes: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Model id recorded in the report; defaults to the input stem.
        #[arg(long)]
        model_id: Option<String>,
        #[arg(long, default_value = "slice")]
        granularity: Granularity,
        #[arg(long)]
        out_report: PathBuf,
        #[arg(long)]
        out_confusion: Option<PathBuf>,
    },
    /// One-vs-all ROC curves per class from a prediction CSV.
    Roc {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "slice")]
        granularity: Granularity,
        /// Curves are written as <prefix>_AD.csv, _MCI.csv, _CN.csv.
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Run the whole chain: synth, sample, preprocess, split, train,
    /// select-top, stack/vote, eval, roc.
    Pipeline {
        /// Working directory for all artifacts; overrides the
        /// ENTROSCAN_WORK_DIR env var and the config file.
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth {
            out_dir,
            per_class,
            extents,
        } => commands::cmd_synth(&out_dir, &per_class, &extents, seed.unwrap_or(0)),
        Command::Inspect { input } => commands::cmd_inspect(&input),
        Command::Sample {
            input,
            manifest,
            strategy,
            trim_head,
            trim_tail,
            bins,
            axis,
            out,
        } => commands::cmd_sample(
            input.as_deref(),
            manifest.as_deref(),
            &strategy,
            trim_head,
            trim_tail,
            bins,
            &axis,
            &out,
        ),
        Command::Preprocess {
            manifest,
            samples,
            target,
            normalization,
            axis,
            out,
        } => commands::cmd_preprocess(
            &manifest,
            samples.as_deref(),
            &target,
            &normalization,
            &axis,
            &out,
        ),
        Command::Split {
            manifest,
            train_fraction,
            out_train,
            out_test,
        } => commands::cmd_split(
            &manifest,
            train_fraction,
            seed.unwrap_or(0),
            &out_train,
            &out_test,
        ),
        Command::TrainBase {
            features,
            manifest,
            epochs,
            learning_rate,
            batch_size,
            out,
        } => {
            let config = entroscan::learner::TrainConfig {
                epochs,
                learning_rate,
                batch_size,
                seed: seed.unwrap_or(0),
            };
            commands::cmd_train_base(&features, &manifest, &config, &out)
        }
        Command::Predict {
            model,
            features,
            manifest,
            model_id,
            out,
        } => commands::cmd_predict(&model, &features, manifest.as_deref(), &model_id, &out),
        Command::Ingest {
            input,
            model_id,
            out,
        } => commands::cmd_ingest(&input, &model_id, &out),
        Command::SelectTop { evals, k, out } => commands::cmd_select_top(&evals, k, &out),
        Command::Stack {
            train_bases,
            predict_bases,
            manifest,
            model_ids,
            epochs,
            learning_rate,
            batch_size,
            out_model,
            out,
        } => {
            let config = entroscan::learner::TrainConfig {
                epochs,
                learning_rate,
                batch_size,
                seed: seed.unwrap_or(0),
            };
            commands::cmd_stack(
                &train_bases,
                &predict_bases,
                &manifest,
                model_ids.as_deref(),
                &config,
                &out_model,
                &out,
            )
        }
        Command::Vote {
            bases,
            model_ids,
            out,
            out_scores,
        } => commands::cmd_vote(&bases, model_ids.as_deref(), &out, out_scores.as_deref()),
        Command::Eval {
            preds,
            votes,
            manifest,
            model_id,
            granularity,
            out_report,
            out_confusion,
        } => commands::cmd_eval(
            preds.as_deref(),
            votes.as_deref(),
            &manifest,
            model_id.as_deref(),
            granularity,
            &out_report,
            out_confusion.as_deref(),
        ),
        Command::Roc {
            preds,
            manifest,
            granularity,
            out_prefix,
        } => commands::cmd_roc(&preds, &manifest, granularity, &out_prefix),
        Command::Pipeline { work_dir } => {
            pipeline::run_pipeline(cli.config.as_deref(), seed, work_dir.as_deref())
        }
    }
}
