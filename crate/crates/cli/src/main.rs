//! `smr`: file-composed stages of the receptiveness pipeline.
//!
//! ```text
//! smr gen --spec battery --seed 7 --out data/
//! smr seqmatch --matrix data/battery-0.smrm --L 4 --out seq.smrm
//! smr label --matrix data/battery-0.smrm --seq seq.smrm --truth data/battery-0.truth.csv --out labels.csv
//! smr attrs --matrix data/battery-0.smrm --labels labels.csv --out attrs.csv
//! smr train --attrs attrs.csv --half first --out model.json
//! smr predict --model model.json --attrs attrs.csv --out preds.csv
//! smr filter --seq seq.smrm --preds preds.csv --out decisions.csv
//! smr eval --seq seq.smrm --truth data/battery-0.truth.csv --decisions decisions.csv --half second --out report.json
//! ```
//!
//! Every command also writes a manifest with input/output hashes. Failures
//! print `smr: <Category>: <message>` on one line and exit with status 1.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use smr_core::{Result, SmrError};

#[derive(Parser, Debug)]
#[command(name = "smr", version, about = "Predict and filter sequence-matching failures in place recognition")]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    flags: ConfigFlags,

    #[command(subcommand)]
    command: Command,
}

/// Overrides for configuration fields; lists are accepted by `ablate` only.
#[derive(Args, Debug, Default)]
struct ConfigFlags {
    #[arg(long = "seq-len", visible_alias = "L", global = true, value_name = "N[,N...]")]
    seq_len: Option<String>,
    #[arg(long = "rank-depth", visible_alias = "K", global = true)]
    rank_depth: Option<String>,
    #[arg(long, visible_alias = "W", global = true)]
    window: Option<String>,
    #[arg(long, global = true)]
    epsilon: Option<String>,
    #[arg(long, global = true)]
    tolerance: Option<String>,
    #[arg(long = "trust-threshold", visible_alias = "tau", global = true, value_name = "T[,T...]")]
    trust_threshold: Option<String>,
    #[arg(long = "restoration-threshold", visible_alias = "rho", global = true)]
    restoration_threshold: Option<String>,
    #[arg(long = "restoration-depth", global = true)]
    restoration_depth: Option<String>,
    #[arg(long, global = true)]
    folds: Option<String>,
    #[arg(long = "smote-neighbors", global = true)]
    smote_neighbors: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long = "learning-rate", global = true)]
    learning_rate: Option<String>,
    #[arg(long = "l2-alpha", global = true)]
    l2_alpha: Option<String>,
    #[arg(long = "batch-size", global = true)]
    batch_size: Option<String>,
    #[arg(long = "max-epochs", global = true)]
    max_epochs: Option<String>,
    #[arg(long, global = true)]
    patience: Option<String>,
}

impl ConfigFlags {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("seq_len", self.seq_len.clone()),
            ("rank_depth", self.rank_depth.clone()),
            ("window", self.window.clone()),
            ("epsilon", self.epsilon.clone()),
            ("tolerance", self.tolerance.clone()),
            ("trust_threshold", self.trust_threshold.clone()),
            ("restoration_threshold", self.restoration_threshold.clone()),
            ("restoration_depth", self.restoration_depth.clone()),
            ("folds", self.folds.clone()),
            ("smote_neighbors", self.smote_neighbors.clone()),
            ("seed", self.seed.clone()),
            ("learning_rate", self.learning_rate.clone()),
            ("l2_alpha", self.l2_alpha.clone()),
            ("batch_size", self.batch_size.clone()),
            ("max_epochs", self.max_epochs.clone()),
            ("patience", self.patience.clone()),
        ]
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
pub enum Half {
    All,
    First,
    Second,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
pub enum OutFormat {
    Binary,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic scenarios with ground truth.
    Gen {
        /// `battery`, `clean`, or a JSON file holding one spec or a list.
        #[arg(long, default_value = "battery")]
        spec: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        /// Size of the `clean` scenario.
        #[arg(long, default_value_t = 600)]
        size: usize,
        #[arg(long, value_enum, default_value = "binary")]
        format: OutFormat,
    },
    /// Sequence-match a distance matrix.
    Seqmatch {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write ranked matches as CSV.
        #[arg(long)]
        matches: Option<PathBuf>,
    },
    /// Extract attributes for every query with a full history.
    Attrs {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Labels CSV whose classes fill the label column of rank-0 rows.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Label queries by single-frame and sequence-matched correctness.
    Label {
        #[arg(long)]
        matrix: PathBuf,
        /// Sequence matrix; computed from --matrix when absent.
        #[arg(long)]
        seq: Option<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oversample and train the predictor on labelled attribute files.
    Train {
        #[arg(long, required = true, num_args = 1..)]
        attrs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Which half of each file's queries to train on.
        #[arg(long, value_enum, default_value = "all")]
        half: Half,
        /// Attribute subset, e.g. `a1,a4`.
        #[arg(long, value_delimiter = ',')]
        attributes: Vec<String>,
        /// Also report stratified k-fold macro F1.
        #[arg(long)]
        cv: bool,
    },
    /// Class probabilities for rank-0 attribute rows.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        attrs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove (and optionally restore) sequence-matched matches.
    Filter {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        restore: bool,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        attrs: Option<PathBuf>,
    },
    /// Precision-recall evaluation, or comparison of two reports.
    Eval {
        #[arg(long)]
        seq: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        decisions: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        half: Half,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        filtered: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pr_csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Sweep sequence lengths, trust thresholds and attribute subsets on a battery.
    Ablate {
        #[arg(long, default_value = "battery")]
        spec: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        /// Also train one predictor per single attribute.
        #[arg(long)]
        attributes: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p)?),
        None => None,
    };
    let env_seed = std::env::var(config::SEED_ENV).ok();
    let cfg = config::resolve(file.as_deref(), env_seed.as_deref(), &cli.flags.pairs())?;
    if !matches!(cli.command, Command::Ablate { .. }) {
        cfg.require_single()?;
    }
    match cli.command {
        Command::Gen { spec, out, noise_scale, size, format } => commands::gen(&cfg, &spec, &out, noise_scale, size, format),
        Command::Seqmatch { matrix, out, matches } => commands::seqmatch(&cfg, &matrix, &out, matches.as_deref()),
        Command::Attrs { matrix, out, labels } => commands::attrs(&cfg, &matrix, &out, labels.as_deref()),
        Command::Label { matrix, seq, truth, out } => commands::label(&cfg, &matrix, seq.as_deref(), &truth, &out),
        Command::Train { attrs, out, half, attributes, cv } => commands::train(&cfg, &attrs, &out, half, &attributes, cv),
        Command::Predict { model, attrs, out } => commands::predict(&cfg, &model, &attrs, &out),
        Command::Filter { seq, preds, out, restore, model, attrs } => {
            commands::filter(&cfg, &seq, &preds, &out, restore, model.as_deref(), attrs.as_deref())
        }
        Command::Eval { seq, truth, decisions, half, baseline, filtered, out, pr_csv, svg } => match (baseline, filtered) {
            (Some(b), Some(f)) => commands::compare(&cfg, &b, &f, &out),
            (None, None) => {
                let (seq, truth) = seq.zip(truth).ok_or_else(|| {
                    SmrError::Config("eval needs --seq and --truth, or --baseline and --filtered".into())
                })?;
                commands::eval(&cfg, &seq, &truth, decisions.as_deref(), half, &out, pr_csv.as_deref(), svg.as_deref())
            }
            _ => Err(SmrError::Config("--baseline and --filtered go together".into())),
        },
        Command::Ablate { spec, out, noise_scale, attributes } => commands::ablate(&cfg, &spec, &out, noise_scale, attributes),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("smr: {}: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
