//! End-to-end runs over in-memory scenarios: sequence matching, attributes,
//! labels, training, filtering and evaluation.
//!
//! Experiments train on the first half of every scenario's queries (pooled)
//! and evaluate on the second half.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::attributes::{extract_all, AttributeTable, SmoothingParams};
use crate::error::{Result, SmrError};
use crate::eval::{baseline_matches, compare_systems, EvalReport, ReductionRow, ScoredMatch};
use crate::filters::{remove_matches, restore_matches, FilterConfig, MatchDecision, ModelScorer};
use crate::labeling::{label_queries, Outcome, OutcomeLabel};
use crate::matrixio::{DistanceMatrix, GroundTruth};
use crate::mlp::{macro_f1, predict, smote_oversample, train, FeatureSelection, MlpModel, PredictionScores, Sample, TrainConfig};
use crate::seqmatch::{best_matches, sequence_match, MatchSet, SeqDistanceMatrix};
use crate::synth::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seq_len: usize,
    /// Ranks of attributes and matches kept per query.
    pub rank_depth: usize,
    pub smoothing: SmoothingParams,
    pub filter: FilterConfig,
    pub train: TrainConfig,
    pub smote_neighbors: usize,
    pub selection: FeatureSelection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seq_len: 4,
            rank_depth: 3,
            smoothing: SmoothingParams::default(),
            filter: FilterConfig::default(),
            train: TrainConfig::default(),
            smote_neighbors: 5,
            selection: FeatureSelection::all(),
        }
    }
}

impl PipelineConfig {
    /// Depth needed by both attribute ranks and restoration candidates.
    pub fn working_depth(&self) -> usize {
        self.rank_depth.max(self.filter.required_depth())
    }
}

/// Everything derived from one matrix before any model is involved.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub matrix: DistanceMatrix,
    pub truth: GroundTruth,
    pub seq: SeqDistanceMatrix,
    pub matches: MatchSet,
    pub table: AttributeTable,
    pub labels: Vec<OutcomeLabel>,
}

pub fn prepare(name: &str, matrix: DistanceMatrix, truth: GroundTruth, cfg: &PipelineConfig) -> Result<Prepared> {
    let seq = sequence_match(&matrix, cfg.seq_len)?;
    let matches = best_matches(&seq, cfg.working_depth())?;
    let table = extract_all(&matrix, cfg.seq_len, cfg.working_depth(), &cfg.smoothing)?;
    let labels = label_queries(&matrix, &seq, &truth)?;
    Ok(Prepared {
        name: name.to_string(),
        matrix,
        truth,
        seq,
        matches,
        table,
        labels,
    })
}

pub fn prepare_battery(scenarios: &[Scenario], cfg: &PipelineConfig) -> Result<Vec<Prepared>> {
    scenarios
        .par_iter()
        .map(|s| prepare(s.name(), s.matrix.clone(), s.truth.clone(), cfg))
        .collect()
}

impl Prepared {
    pub fn first_query(&self) -> usize {
        self.seq.valid_from
    }

    /// Labelled queries split into training and test halves.
    pub fn split(&self) -> (Range<usize>, Range<usize>) {
        let (lo, hi) = (self.first_query(), self.matrix.cols());
        let mid = lo + (hi - lo) / 2;
        (lo..mid, mid..hi)
    }

    pub fn label(&self, query: usize) -> Option<&OutcomeLabel> {
        query.checked_sub(self.first_query()).and_then(|i| self.labels.get(i))
    }

    pub fn samples(&self, queries: Range<usize>, selection: &FeatureSelection) -> Vec<Sample> {
        queries
            .filter_map(|j| {
                let attrs = self.table.get(j, 0)?;
                let label = self.label(j)?;
                Some(Sample::from_attributes(attrs, label, selection))
            })
            .collect()
    }

    /// Rank-0 predictions for every labelled query.
    pub fn predictions(&self, model: &MlpModel) -> Vec<PredictionScores> {
        self.table
            .queries()
            .map(|j| predict(model, self.table.get(j, 0).expect("rank 0 is always extracted")))
            .collect()
    }

    /// True-label predictions.
    pub fn oracle_predictions(&self) -> Vec<PredictionScores> {
        self.labels.iter().map(|l| PredictionScores::one_hot(l.query, l.class)).collect()
    }
}

/// Oversample then train on the pooled training halves.
pub fn train_pooled(prepared: &[Prepared], cfg: &PipelineConfig) -> Result<MlpModel> {
    cfg.selection.validate()?;
    let samples: Vec<Sample> = prepared
        .iter()
        .flat_map(|p| p.samples(p.split().0, &cfg.selection))
        .collect();
    let balanced = smote_oversample(&samples, cfg.smote_neighbors, cfg.train.seed)?;
    let mut model = train(&balanced, &cfg.train)?.with_selection(cfg.selection.clone())?;
    model.trained_on = format!(
        "{} scenarios, {} samples ({} after oversampling), L={}",
        prepared.len(),
        samples.len(),
        balanced.len(),
        cfg.seq_len
    );
    Ok(model)
}

/// Macro F1 of rank-0 class predictions on the pooled test halves.
pub fn test_macro_f1(prepared: &[Prepared], model: &MlpModel) -> f64 {
    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    for p in prepared {
        for s in p.samples(p.split().1, &model.selection) {
            truth.push(s.class);
            pred.push(model.predict_class(&s.features));
        }
    }
    macro_f1(&truth, &pred)
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioResult {
    pub name: String,
    pub baseline: EvalReport,
    pub filtered: EvalReport,
    pub restored: EvalReport,
    pub removal: ReductionRow,
    pub restoration: ReductionRow,
    pub removed: usize,
    pub restored_count: usize,
}

/// Test-half matches of the three systems: sequence matching alone, with
/// removal, and with removal plus restoration.
#[derive(Debug, Clone)]
pub struct SystemMatches {
    pub baseline: Vec<ScoredMatch>,
    pub removed: Vec<ScoredMatch>,
    pub restored: Vec<ScoredMatch>,
}

pub fn system_matches(
    p: &Prepared,
    preds: &[PredictionScores],
    model: Option<&MlpModel>,
    cfg: &PipelineConfig,
) -> Result<SystemMatches> {
    let (_, test) = p.split();
    let removed = remove_matches(&p.matches, p.first_query(), preds, &cfg.filter)?;
    let restored = match model {
        Some(model) => {
            let scorer = ModelScorer { model, table: &p.table };
            restore_matches(&removed, &p.matches, &scorer, &cfg.filter)?
        }
        None => removed.clone(),
    };
    let in_test = |d: &&MatchDecision| test.contains(&d.query);
    Ok(SystemMatches {
        baseline: baseline_matches(&p.matches, test.start),
        removed: removed.iter().filter(in_test).map(ScoredMatch::from_decision).collect(),
        restored: restored.iter().filter(in_test).map(ScoredMatch::from_decision).collect(),
    })
}

/// Filter one scenario with the given predictions and score its test half.
pub fn filter_and_evaluate(
    p: &Prepared,
    preds: &[PredictionScores],
    model: Option<&MlpModel>,
    cfg: &PipelineConfig,
) -> Result<ScenarioResult> {
    let m = system_matches(p, preds, model, cfg)?;
    let (baseline, filtered, removal) = compare_systems(&p.name, &m.baseline, &m.removed, &p.truth)?;
    let (_, restored, restoration) = compare_systems(&p.name, &m.baseline, &m.restored, &p.truth)?;
    let changed = |a: &[ScoredMatch]| a.iter().zip(&m.removed).filter(|(x, y)| x.reference.is_some() && y.reference.is_none()).count();
    Ok(ScenarioResult {
        name: p.name.clone(),
        baseline,
        filtered,
        restored,
        removal,
        restoration,
        removed: m.removed.iter().filter(|s| s.reference.is_none()).count(),
        restored_count: changed(&m.restored),
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentReport {
    pub seq_len: usize,
    pub trust_threshold: f64,
    pub test_macro_f1: f64,
    pub scenarios: Vec<ScenarioResult>,
    pub mean_reduction_percent: f64,
    /// Share of scenarios whose filtered AOC is at most the baseline AOC.
    pub improved_share: f64,
    pub mean_baseline_auc: f64,
    pub mean_filtered_auc: f64,
}

impl ExperimentReport {
    pub fn from_results(seq_len: usize, trust_threshold: f64, test_macro_f1: f64, scenarios: Vec<ScenarioResult>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(SmrError::Data("experiment has no scenarios".into()));
        }
        let n = scenarios.len() as f64;
        let mean = |f: &dyn Fn(&ScenarioResult) -> f64| scenarios.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            seq_len,
            trust_threshold,
            test_macro_f1,
            mean_reduction_percent: mean(&|s| s.removal.reduction_percent),
            improved_share: mean(&|s| f64::from(u8::from(s.removal.filtered_aoc <= s.removal.baseline_aoc))),
            mean_baseline_auc: mean(&|s| s.removal.baseline_auc),
            mean_filtered_auc: mean(&|s| s.removal.filtered_auc),
            scenarios,
        })
    }
}

/// Train on the battery's first halves and filter the second halves.
pub fn run_experiment(prepared: &[Prepared], cfg: &PipelineConfig) -> Result<(MlpModel, ExperimentReport)> {
    let model = train_pooled(prepared, cfg)?;
    let report = evaluate_model(prepared, &model, cfg)?;
    Ok((model, report))
}

pub fn evaluate_model(prepared: &[Prepared], model: &MlpModel, cfg: &PipelineConfig) -> Result<ExperimentReport> {
    let results = prepared
        .iter()
        .map(|p| filter_and_evaluate(p, &p.predictions(model), Some(model), cfg))
        .collect::<Result<Vec<_>>>()?;
    ExperimentReport::from_results(cfg.seq_len, cfg.filter.trust_threshold, test_macro_f1(prepared, model), results)
}

/// Count of labelled queries whose sequence-matched match is wrong / right
/// among those a set of decisions removed.
pub fn removal_audit(p: &Prepared, decisions: &[MatchDecision]) -> (usize, usize) {
    let mut wrong = 0;
    let mut right = 0;
    for d in decisions.iter().filter(|d| d.final_ref.is_none()) {
        if let Some(l) = p.label(d.query) {
            if l.class.incorrect_after() {
                wrong += 1;
            } else {
                right += 1;
            }
        }
    }
    (wrong, right)
}

/// Labelled queries whose sequence-matched match is wrong.
pub fn false_positive_count(p: &Prepared) -> usize {
    p.labels.iter().filter(|l| Outcome::incorrect_after(l.class)).count()
}
