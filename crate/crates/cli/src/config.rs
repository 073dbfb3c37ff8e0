//! Run configuration: defaults, a flat `key=value` file, `SMR_SEED`, then flags.

use serde::Serialize;
use smr_core::attributes::SmoothingParams;
use smr_core::filters::FilterConfig;
use smr_core::mlp::TrainConfig;
use smr_core::pipeline::PipelineConfig;
use smr_core::{Result, SmrError};

pub const SEED_ENV: &str = "SMR_SEED";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub seq_len: usize,
    pub rank_depth: usize,
    pub window: usize,
    pub epsilon: f64,
    pub tolerance: usize,
    pub trust_threshold: f64,
    pub restoration_threshold: f64,
    pub restoration_depth: usize,
    pub folds: usize,
    pub smote_neighbors: usize,
    pub seed: u64,
    pub train: TrainConfig,
    /// Every value given for the sequence length; only `ablate` accepts more than one.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub seq_len_sweep: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trust_threshold_sweep: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let filter = FilterConfig::default();
        Self {
            seq_len: 4,
            rank_depth: 3,
            window: 2,
            epsilon: 1e-9,
            tolerance: 2,
            trust_threshold: filter.trust_threshold,
            restoration_threshold: filter.restoration_threshold,
            restoration_depth: filter.restoration_depth,
            folds: 5,
            smote_neighbors: 5,
            seed: 0,
            train: TrainConfig::default(),
            seq_len_sweep: Vec::new(),
            trust_threshold_sweep: Vec::new(),
        }
    }
}

fn normalize_key(key: &str) -> String {
    key.trim().chars().filter(|c| *c != '-' && *c != '_').flat_map(char::to_lowercase).collect()
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| SmrError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let out = value.split(',').map(|v| parse(key, v)).collect::<Result<Vec<T>>>()?;
    if out.is_empty() {
        return Err(SmrError::Config(format!("{key} needs a value")));
    }
    Ok(out)
}

impl RunConfig {
    /// Set one field by name. Dashes, underscores and case are ignored, and
    /// the short names `L`, `K`, `W`, `t`, `tau` and `rho` are accepted.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match normalize_key(key).as_str() {
            "seqlen" | "l" => {
                let v: Vec<usize> = parse_list(key, value)?;
                self.seq_len = v[0];
                self.seq_len_sweep = v;
            }
            "rankdepth" | "k" => self.rank_depth = parse(key, value)?,
            "window" | "w" => self.window = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "tolerance" | "t" => self.tolerance = parse(key, value)?,
            "trustthreshold" | "tau" => {
                let v: Vec<f64> = parse_list(key, value)?;
                self.trust_threshold = v[0];
                self.trust_threshold_sweep = v;
            }
            "restorationthreshold" | "rho" => self.restoration_threshold = parse(key, value)?,
            "restorationdepth" | "kr" => self.restoration_depth = parse(key, value)?,
            "folds" => self.folds = parse(key, value)?,
            "smoteneighbors" => self.smote_neighbors = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "hiddenlayers" => self.train.hidden_layers = parse_list(key, value)?,
            "learningrate" => self.train.learning_rate = parse(key, value)?,
            "l2alpha" => self.train.l2_alpha = parse(key, value)?,
            "batchsize" => self.train.batch_size = parse(key, value)?,
            "maxepochs" => self.train.max_epochs = parse(key, value)?,
            "patience" => self.train.patience = parse(key, value)?,
            "mindelta" => self.train.min_delta = parse(key, value)?,
            _ => return Err(SmrError::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a flat `key=value` file; `#` starts a comment.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SmrError::Config(format!("config line {}: expected key=value", n + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len_sweep.iter().chain([&self.seq_len]).any(|&l| l == 0) {
            return Err(SmrError::Config("sequence length must be at least 1".into()));
        }
        if self.rank_depth == 0 {
            return Err(SmrError::Config("rank depth must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(SmrError::Config("folds must be at least 2".into()));
        }
        for &tau in self.trust_threshold_sweep.iter().chain([&self.trust_threshold]) {
            self.filter_with(tau).validate()?;
        }
        self.smoothing().validate()?;
        self.train_config().validate()
    }

    /// Reject sweeps for commands that run a single configuration.
    pub fn require_single(&self) -> Result<()> {
        if self.seq_len_sweep.len() > 1 || self.trust_threshold_sweep.len() > 1 {
            return Err(SmrError::Config("value lists are only accepted by ablate".into()));
        }
        Ok(())
    }

    pub fn smoothing(&self) -> SmoothingParams {
        SmoothingParams { window: self.window, epsilon: self.epsilon }
    }

    pub fn filter_with(&self, trust_threshold: f64) -> FilterConfig {
        FilterConfig {
            trust_threshold,
            restoration_depth: self.restoration_depth,
            restoration_threshold: self.restoration_threshold,
        }
    }

    pub fn filter(&self) -> FilterConfig {
        self.filter_with(self.trust_threshold)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    /// Attribute and match depth covering both the ranks and restoration.
    pub fn working_depth(&self) -> usize {
        self.pipeline().working_depth()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            seq_len: self.seq_len,
            rank_depth: self.rank_depth,
            smoothing: self.smoothing(),
            filter: self.filter(),
            train: self.train_config(),
            smote_neighbors: self.smote_neighbors,
            ..PipelineConfig::default()
        }
    }
}

/// Layer the sources in order: defaults, file, environment seed, flags.
pub fn resolve(file: Option<&str>, env_seed: Option<&str>, flags: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(text) = file {
        cfg.apply_file(text)?;
    }
    if let Some(seed) = env_seed {
        cfg.set("seed", seed).map_err(|_| SmrError::Config(format!("{SEED_ENV} is not an integer: {seed:?}")))?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
