//! Four-class MLP predictor of sequence-matching outcomes.
//!
//! ReLU hidden layers, softmax output, mean cross-entropy plus an L2 penalty
//! on the weight matrices, trained with Adam on seeded mini-batches.

mod cv;
mod network;
mod smote;

pub use cv::{confusion_matrix, macro_f1, per_class_f1, stratified_folds, stratified_kfold_f1, KFoldReport};
pub use network::{Gradients, MlpModel, MODEL_FORMAT_VERSION};
pub use smote::smote_oversample;

use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeVector, ATTRIBUTE_COUNT};
use crate::error::{Result, SmrError};
use crate::labeling::{Outcome, OutcomeLabel, CLASS_COUNT};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    /// Coefficient of the `sum(W^2)` penalty.
    pub l2_alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Mini-batch size; `0` trains full-batch.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a `min_delta` improvement in training loss before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![128, 128, 128],
            learning_rate: 1e-4,
            l2_alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 200,
            max_epochs: 200,
            patience: 20,
            min_delta: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning rate", self.learning_rate),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("adam eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SmrError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(SmrError::Config("adam betas must be below 1".into()));
        }
        if self.l2_alpha.is_nan() || self.l2_alpha < 0.0 || self.min_delta < 0.0 {
            return Err(SmrError::Config("l2 alpha and min delta must be non-negative".into()));
        }
        if self.max_epochs == 0 || self.hidden_layers.contains(&0) {
            return Err(SmrError::Config("epochs and layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Which of the four attributes feed the network, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSelection(pub Vec<usize>);

impl Default for FeatureSelection {
    fn default() -> Self {
        Self::all()
    }
}

impl FeatureSelection {
    pub fn all() -> Self {
        Self((0..ATTRIBUTE_COUNT).collect())
    }

    pub fn single(index: usize) -> Self {
        Self(vec![index])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn project(&self, attrs: &AttributeVector) -> Vec<f64> {
        let v = attrs.values();
        self.0.iter().map(|&i| v[i]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() || self.0.iter().any(|&i| i >= ATTRIBUTE_COUNT) {
            return Err(SmrError::Config(format!("invalid attribute selection {:?}", self.0)));
        }
        Ok(())
    }
}

/// A labelled feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub class: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, class: usize) -> Self {
        Self { features, class }
    }

    pub fn from_attributes(attrs: &AttributeVector, label: &OutcomeLabel, selection: &FeatureSelection) -> Self {
        Self::new(selection.project(attrs), label.class.index())
    }
}

/// Class probabilities for one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionScores {
    pub query: usize,
    pub probs: [f64; CLASS_COUNT],
    pub predicted: usize,
    /// Probability that the sequence-matched match is wrong.
    pub removal_score: f64,
}

impl PredictionScores {
    pub fn from_probs(query: usize, probs: [f64; CLASS_COUNT]) -> Self {
        let predicted = probs
            .iter()
            .enumerate()
            .fold(0, |best, (i, &p)| if p > probs[best] { i } else { best });
        Self {
            query,
            probs,
            predicted,
            removal_score: probs[Outcome::Degraded.index()] + probs[Outcome::IncorrectBoth.index()],
        }
    }

    /// Certain prediction of `class`; stands in for the predictor with true labels.
    pub fn one_hot(query: usize, class: Outcome) -> Self {
        let mut probs = [0.0; CLASS_COUNT];
        probs[class.index()] = 1.0;
        Self::from_probs(query, probs)
    }

    /// Probability that the sequence-matched match is correct.
    pub fn keep_confidence(&self) -> f64 {
        self.probs[Outcome::CorrectBoth.index()] + self.probs[Outcome::Rescued.index()]
    }
}

pub const PREDICTIONS_CSV_HEADER: &str = "query,p0,p1,p2,p3,predicted,removal_score";

pub fn predictions_to_csv(preds: &[PredictionScores]) -> String {
    let mut out = format!("{PREDICTIONS_CSV_HEADER}\n");
    for p in preds {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.query, p.probs[0], p.probs[1], p.probs[2], p.probs[3], p.predicted, p.removal_score
        ));
    }
    out
}

/// Parse predictions; the derived columns are recomputed from the probabilities.
pub fn predictions_from_csv(text: &str) -> Result<Vec<PredictionScores>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == PREDICTIONS_CSV_HEADER => {}
        other => return Err(SmrError::Format(format!("bad predictions header {other:?}"))),
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let bad = || SmrError::Format(format!("predictions line {}: {line:?}", n + 2));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 7 {
                return Err(bad());
            }
            let mut probs = [0.0; CLASS_COUNT];
            for (c, p) in probs.iter_mut().enumerate() {
                *p = f[c + 1].parse().map_err(|_| bad())?;
            }
            Ok(PredictionScores::from_probs(f[0].parse().map_err(|_| bad())?, probs))
        })
        .collect()
}

pub fn class_counts(samples: &[Sample]) -> [usize; CLASS_COUNT] {
    let mut c = [0; CLASS_COUNT];
    for s in samples {
        c[s.class] += 1;
    }
    c
}

/// Train a fresh network on `samples` (no oversampling is applied here).
pub fn train(samples: &[Sample], cfg: &TrainConfig) -> Result<MlpModel> {
    network::train(samples, cfg)
}

pub fn predict(model: &MlpModel, attrs: &AttributeVector) -> PredictionScores {
    let x = model.selection.project(attrs);
    PredictionScores::from_probs(attrs.query, model.probabilities(&x))
}
