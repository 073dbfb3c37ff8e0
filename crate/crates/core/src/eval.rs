//! Precision-recall curves, area under/over the curve and reduction tables.
//!
//! A query counts as a true positive when its accepted match lies within
//! ground-truth tolerance, a false positive when it is accepted and wrong,
//! and a false negative otherwise (rejected by the threshold or removed by a
//! filter). Every query has a true match, so `FN = N - TP - FP`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmrError};
use crate::filters::MatchDecision;
use crate::matrixio::GroundTruth;
use crate::seqmatch::MatchSet;

/// One query's proposed match; `reference == None` means it was removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredMatch {
    pub query: usize,
    pub reference: Option<usize>,
    /// Higher is more confident.
    pub confidence: f64,
}

impl ScoredMatch {
    pub fn from_decision(d: &MatchDecision) -> Self {
        Self {
            query: d.query,
            reference: d.final_ref,
            confidence: -d.distance,
        }
    }
}

/// Best matches of queries `from..`, scored by negated distance.
pub fn baseline_matches(matches: &MatchSet, from: usize) -> Vec<ScoredMatch> {
    (from..matches.queries())
        .map(|j| ScoredMatch {
            query: j,
            reference: Some(matches.best_ref(j)),
            confidence: -matches.best_score(j),
        })
        .collect()
}

pub fn decision_matches(decisions: &[MatchDecision], from: usize) -> Vec<ScoredMatch> {
    decisions.iter().filter(|d| d.query >= from).map(ScoredMatch::from_decision).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

impl PrPoint {
    pub fn f1(&self) -> f64 {
        let s = self.precision + self.recall;
        if s > 0.0 {
            2.0 * self.precision * self.recall / s
        } else {
            0.0
        }
    }
}

/// Points in sweep order: thresholds descending, recall non-decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub max_recall: f64,
    pub queries: usize,
}

/// Sweep a threshold over every distinct confidence of the accepted matches.
pub fn pr_curve(matches: &[ScoredMatch], gt: &GroundTruth) -> Result<PrCurve> {
    if matches.is_empty() {
        return Err(SmrError::Data("cannot build a PR curve from zero queries".into()));
    }
    let mut accepted: Vec<(f64, bool)> = Vec::with_capacity(matches.len());
    for m in matches {
        if !m.confidence.is_finite() {
            return Err(SmrError::Data(format!("query {} has confidence {}", m.query, m.confidence)));
        }
        if m.query >= gt.len() {
            return Err(SmrError::Data(format!("query {} has no ground truth", m.query)));
        }
        if let Some(r) = m.reference {
            accepted.push((m.confidence, gt.is_correct(m.query, r)));
        }
    }
    accepted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n = matches.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::new();
    for (k, &(score, correct)) in accepted.iter().enumerate() {
        if correct {
            tp += 1;
        } else {
            fp += 1;
        }
        if accepted.get(k + 1).is_some_and(|next| next.0 == score) {
            continue;
        }
        points.push(PrPoint {
            threshold: score,
            precision: tp as f64 / (tp + fp) as f64,
            recall: if tp == 0 { 0.0 } else { tp as f64 / (n - fp as f64) },
        });
    }
    let max_recall = points.last().map_or(0.0, |p| p.recall);
    Ok(PrCurve { points, max_recall, queries: matches.len() })
}

/// Trapezoidal area under precision over recall `[0, range]`. The first
/// point's precision is held flat down to recall 0.
fn integrate(curve: &PrCurve, range: f64) -> f64 {
    let Some(first) = curve.points.first() else {
        return 0.0;
    };
    let mut area = 0.0;
    let (mut r0, mut p0) = (0.0, first.precision);
    for p in &curve.points {
        if p.recall >= range {
            if p.recall > r0 {
                let t = (range - r0) / (p.recall - r0);
                let p_at = p0 + t * (p.precision - p0);
                area += 0.5 * (p0 + p_at) * (range - r0);
            }
            return area;
        }
        area += 0.5 * (p0 + p.precision) * (p.recall - r0);
        (r0, p0) = (p.recall, p.precision);
    }
    area
}

/// Area under and over the curve up to `min(max_recall, recall_cap)`;
/// `auc + aoc` equals that range.
pub fn auc_aoc(curve: &PrCurve, recall_cap: f64) -> Result<(f64, f64)> {
    if !(recall_cap > 0.0 && recall_cap <= 1.0) {
        return Err(SmrError::Range(format!("recall cap must lie in (0, 1], got {recall_cap}")));
    }
    let range = curve.max_recall.min(recall_cap);
    let auc = integrate(curve, range);
    Ok((auc, range - auc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OperatingPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<PrPoint> for OperatingPoint {
    fn from(p: PrPoint) -> Self {
        Self { threshold: p.threshold, precision: p.precision, recall: p.recall, f1: p.f1() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub name: String,
    pub queries: usize,
    pub max_recall: f64,
    /// Upper end of the integration range.
    pub integration_range: f64,
    pub auc_at_max_recall: f64,
    pub aoc_at_max_recall: f64,
    pub max_recall_point: Option<OperatingPoint>,
    pub best_f1_point: Option<OperatingPoint>,
    pub reduction_percent: Option<f64>,
}

/// Evaluate a curve integrated up to `recall_cap` (or its own max recall).
pub fn evaluate_curve(name: &str, curve: &PrCurve, recall_cap: Option<f64>) -> EvalReport {
    let range = curve.max_recall.min(recall_cap.unwrap_or(1.0)).max(0.0);
    let auc = integrate(curve, range);
    let best = curve
        .points
        .iter()
        .copied()
        .fold(None, |b: Option<PrPoint>, p| match b {
            Some(b) if b.f1() >= p.f1() => Some(b),
            _ => Some(p),
        });
    EvalReport {
        name: name.to_string(),
        queries: curve.queries,
        max_recall: curve.max_recall,
        integration_range: range,
        auc_at_max_recall: auc,
        aoc_at_max_recall: range - auc,
        max_recall_point: curve.points.last().copied().map(Into::into),
        best_f1_point: best.map(Into::into),
        reduction_percent: None,
    }
}

/// `100 * (base - filtered) / base`; a zero baseline reports 0.
pub fn reduction_percent(baseline_aoc: f64, filtered_aoc: f64) -> f64 {
    if baseline_aoc == 0.0 {
        0.0
    } else {
        100.0 * (baseline_aoc - filtered_aoc) / baseline_aoc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReductionRow {
    pub name: String,
    pub recall_cap: f64,
    pub baseline_auc: f64,
    pub filtered_auc: f64,
    pub baseline_aoc: f64,
    pub filtered_aoc: f64,
    pub reduction_percent: f64,
}

pub fn compare_reports(baseline: &EvalReport, filtered: &EvalReport) -> ReductionRow {
    ReductionRow {
        name: filtered.name.clone(),
        recall_cap: filtered.integration_range,
        baseline_auc: baseline.auc_at_max_recall,
        filtered_auc: filtered.auc_at_max_recall,
        baseline_aoc: baseline.aoc_at_max_recall,
        filtered_aoc: filtered.aoc_at_max_recall,
        reduction_percent: reduction_percent(baseline.aoc_at_max_recall, filtered.aoc_at_max_recall),
    }
}

/// Evaluate both systems up to the filtered system's max recall.
pub fn compare_systems(
    name: &str,
    baseline: &[ScoredMatch],
    filtered: &[ScoredMatch],
    gt: &GroundTruth,
) -> Result<(EvalReport, EvalReport, ReductionRow)> {
    let filt_curve = pr_curve(filtered, gt)?;
    let base_curve = pr_curve(baseline, gt)?;
    let mut filt = evaluate_curve(name, &filt_curve, None);
    let base = evaluate_curve("baseline", &base_curve, Some(filt.max_recall));
    let row = compare_reports(&base, &filt);
    filt.reduction_percent = Some(row.reduction_percent);
    Ok((base, filt, row))
}

pub fn curve_to_csv(curve: &PrCurve) -> String {
    let mut out = String::from("threshold,precision,recall\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.precision, p.recall);
    }
    out
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24}{}", "system", self.name);
        let _ = writeln!(out, "{:<24}{}", "queries", self.queries);
        let _ = writeln!(out, "{:<24}{:.4}", "max recall", self.max_recall);
        let _ = writeln!(out, "{:<24}{:.4}", "integration range", self.integration_range);
        let _ = writeln!(out, "{:<24}{:.4}", "PR AUC", self.auc_at_max_recall);
        let _ = writeln!(out, "{:<24}{:.4}", "PR AOC", self.aoc_at_max_recall);
        if let Some(p) = self.best_f1_point {
            let _ = writeln!(out, "{:<24}P {:.4}  R {:.4}  F1 {:.4}", "best F1", p.precision, p.recall, p.f1);
        }
        if let Some(r) = self.reduction_percent {
            let _ = writeln!(out, "{:<24}{:.2}%", "AOC reduction", r);
        }
        out
    }
}

/// Fixed-width rows of a reduction table.
pub fn reduction_table(rows: &[ReductionRow]) -> String {
    let mut out = format!(
        "{:<28}{:>10}{:>12}{:>12}{:>12}\n",
        "scenario", "recall", "AOC base", "AOC filt", "reduction"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<28}{:>10.4}{:>12.4}{:>12.4}{:>11.2}%",
            r.name, r.recall_cap, r.baseline_aoc, r.filtered_aoc, r.reduction_percent
        );
    }
    out
}
