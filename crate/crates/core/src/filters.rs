//! Match removal and restoration driven by predictor outputs.

use std::fmt;
use std::str::FromStr;

use crate::attributes::AttributeTable;
use crate::error::{Result, SmrError};
use crate::matrixio::GroundTruth;
use crate::mlp::{predict, MlpModel, PredictionScores};
use crate::seqmatch::MatchSet;

pub const DECISIONS_CSV_HEADER: &str = "query,original_ref,verdict,final_ref,removal_score";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Minimum removal score that discards a match.
    pub trust_threshold: f64,
    /// How many next-ranked candidates restoration looks at.
    pub restoration_depth: usize,
    /// Minimum keep-confidence for a candidate to be restored. Values above
    /// 1 switch restoration off.
    pub restoration_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            trust_threshold: 0.5,
            restoration_depth: 3,
            restoration_threshold: 0.91,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.trust_threshold) {
            return Err(SmrError::Config(format!(
                "trust threshold must lie in [0, 1], got {}",
                self.trust_threshold
            )));
        }
        if !(self.restoration_threshold >= 0.0 && self.restoration_threshold.is_finite()) {
            return Err(SmrError::Config(format!(
                "restoration threshold must be a non-negative number, got {}",
                self.restoration_threshold
            )));
        }
        if self.restoration_depth == 0 {
            return Err(SmrError::Config("restoration depth must be at least 1".into()));
        }
        Ok(())
    }

    /// Match-set depth needed for restoration (best match plus candidates).
    pub fn required_depth(&self) -> usize {
        self.restoration_depth + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Kept,
    Removed,
    Restored,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Kept => "kept",
            Verdict::Removed => "removed",
            Verdict::Restored => "restored",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = SmrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kept" => Ok(Verdict::Kept),
            "removed" => Ok(Verdict::Removed),
            "restored" => Ok(Verdict::Restored),
            other => Err(SmrError::Format(format!("unknown verdict {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchDecision {
    pub query: usize,
    pub original_ref: usize,
    pub verdict: Verdict,
    pub final_ref: Option<usize>,
    /// Sequence distance of the final match, or of the original one when removed.
    pub distance: f64,
    pub removal_score: f64,
    /// Keep-confidence of each restoration candidate, ranks `1..=K_r`.
    pub restore_scores: Vec<f64>,
}

impl MatchDecision {
    fn kept(matches: &MatchSet, query: usize, removal_score: f64) -> Self {
        Self {
            query,
            original_ref: matches.best_ref(query),
            verdict: Verdict::Kept,
            final_ref: Some(matches.best_ref(query)),
            distance: matches.best_score(query),
            removal_score,
            restore_scores: Vec::new(),
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.final_ref.is_some()
    }
}

fn index_predictions(preds: &[PredictionScores], queries: usize) -> Result<Vec<Option<&PredictionScores>>> {
    let mut by_query = vec![None; queries];
    for p in preds {
        let slot = by_query.get_mut(p.query).ok_or_else(|| {
            SmrError::Coverage(format!("prediction for query {} outside 0..{queries}", p.query))
        })?;
        *slot = Some(p);
    }
    Ok(by_query)
}

/// First filter: drop every best match whose removal score reaches `τ`.
///
/// Queries before `valid_from` have no full sequence history and pass
/// through as kept.
pub fn remove_matches(
    matches: &MatchSet,
    valid_from: usize,
    preds: &[PredictionScores],
    cfg: &FilterConfig,
) -> Result<Vec<MatchDecision>> {
    cfg.validate()?;
    let by_query = index_predictions(preds, matches.queries())?;
    (0..matches.queries())
        .map(|j| {
            if j < valid_from {
                return Ok(MatchDecision::kept(matches, j, 0.0));
            }
            let p = by_query[j].ok_or_else(|| SmrError::Coverage(format!("no prediction for query {j}")))?;
            let mut d = MatchDecision::kept(matches, j, p.removal_score);
            if p.removal_score >= cfg.trust_threshold {
                d.verdict = Verdict::Removed;
                d.final_ref = None;
            }
            Ok(d)
        })
        .collect()
}

/// Keep-confidence of the `rank`-th ranked candidate of a query.
pub trait CandidateScorer {
    fn keep_confidence(&self, query: usize, rank: usize) -> Result<f64>;
}

/// Scores candidates with the trained predictor on rank-aligned attributes.
pub struct ModelScorer<'a> {
    pub model: &'a MlpModel,
    pub table: &'a AttributeTable,
}

impl CandidateScorer for ModelScorer<'_> {
    fn keep_confidence(&self, query: usize, rank: usize) -> Result<f64> {
        let attrs = self
            .table
            .get(query, rank)
            .ok_or_else(|| SmrError::Coverage(format!("no attributes for query {query} rank {rank}")))?;
        Ok(predict(self.model, attrs).keep_confidence())
    }
}

/// Ground-truth scorer: confidence 1 for a correct candidate, 0 otherwise.
pub struct OracleScorer<'a> {
    pub matches: &'a MatchSet,
    pub truth: &'a GroundTruth,
}

impl CandidateScorer for OracleScorer<'_> {
    fn keep_confidence(&self, query: usize, rank: usize) -> Result<f64> {
        let reference = *self
            .matches
            .ranked_refs(query)
            .get(rank)
            .ok_or_else(|| SmrError::Coverage(format!("query {query} has no rank-{rank} candidate")))?;
        Ok(if self.truth.is_correct(query, reference) { 1.0 } else { 0.0 })
    }
}

/// Second filter: replace a removed match with the next-ranked candidate
/// that the predictor trusts most, provided its keep-confidence reaches `ρ`.
pub fn restore_matches(
    decisions: &[MatchDecision],
    matches: &MatchSet,
    scorer: &dyn CandidateScorer,
    cfg: &FilterConfig,
) -> Result<Vec<MatchDecision>> {
    cfg.validate()?;
    if matches.depth < cfg.required_depth() {
        return Err(SmrError::Coverage(format!(
            "restoration over {} candidates needs match depth {}, got {}",
            cfg.restoration_depth,
            cfg.required_depth(),
            matches.depth
        )));
    }
    decisions
        .iter()
        .map(|d| {
            if d.verdict != Verdict::Removed {
                return Ok(d.clone());
            }
            let scores = (1..=cfg.restoration_depth)
                .map(|rank| scorer.keep_confidence(d.query, rank))
                .collect::<Result<Vec<f64>>>()?;
            let best = scores
                .iter()
                .enumerate()
                .fold(0, |b, (i, &s)| if s > scores[b] { i } else { b });
            let mut out = d.clone();
            if scores[best] >= cfg.restoration_threshold {
                let rank = best + 1;
                out.verdict = Verdict::Restored;
                out.final_ref = Some(matches.ranked_refs(d.query)[rank]);
                out.distance = matches.ranked_scores(d.query)[rank];
            }
            out.restore_scores = scores;
            Ok(out)
        })
        .collect()
}

pub fn decisions_to_csv(decisions: &[MatchDecision]) -> String {
    let mut out = String::from(DECISIONS_CSV_HEADER);
    out.push('\n');
    for d in decisions {
        let final_ref = d.final_ref.map(|r| r.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            d.query, d.original_ref, d.verdict, final_ref, d.removal_score
        ));
    }
    out
}

/// Parsed decision row; the CSV carries no distances or candidate scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRow {
    pub query: usize,
    pub original_ref: usize,
    pub verdict: Verdict,
    pub final_ref: Option<usize>,
    pub removal_score: f64,
}

pub fn decisions_from_csv(text: &str) -> Result<Vec<DecisionRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == DECISIONS_CSV_HEADER => {}
        other => return Err(SmrError::Format(format!("bad decisions header {other:?}"))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let bad = || SmrError::Format(format!("decisions line {}: {line:?}", n + 2));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let final_ref = match f[3] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad())?),
            };
            Ok(DecisionRow {
                query: f[0].parse().map_err(|_| bad())?,
                original_ref: f[1].parse().map_err(|_| bad())?,
                verdict: f[2].parse()?,
                final_ref,
                removal_score: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::Outcome;
    use crate::matrixio::DistanceMatrix;
    use crate::seqmatch::best_matches;
    use proptest::prelude::*;

    fn toy_matches(q: usize, depth: usize) -> MatchSet {
        // reference j is best for query j, then j+1, j+2, ...
        let d = DistanceMatrix::from_fn(q + depth, q, |i, j| {
            if i >= j {
                (i - j) as f64
            } else {
                100.0
            }
        })
        .unwrap();
        best_matches(&d, depth).unwrap()
    }

    fn preds_with(scores: &[f64], from: usize) -> Vec<PredictionScores> {
        scores
            .iter()
            .enumerate()
            .map(|(k, &s)| PredictionScores::from_probs(from + k, [1.0 - s, s, 0.0, 0.0]))
            .collect()
    }

    struct Fixed(Vec<f64>);

    impl CandidateScorer for Fixed {
        fn keep_confidence(&self, _query: usize, rank: usize) -> Result<f64> {
            Ok(self.0[rank - 1])
        }
    }

    #[test]
    fn full_trust_threshold_keeps_everything() {
        let m = toy_matches(10, 4);
        let preds = preds_with(&[0.2, 0.999, 0.5, 0.0, 0.7, 0.3, 0.9], 3);
        let cfg = FilterConfig { trust_threshold: 1.0, ..FilterConfig::default() };
        let d = remove_matches(&m, 3, &preds, &cfg).unwrap();
        assert!(d.iter().all(|d| d.verdict == Verdict::Kept && d.final_ref == Some(d.query)));
    }

    #[test]
    fn zero_threshold_removes_every_scored_query() {
        let m = toy_matches(10, 4);
        let preds = preds_with(&[0.0; 7], 3);
        let cfg = FilterConfig { trust_threshold: 0.0, ..FilterConfig::default() };
        let d = remove_matches(&m, 3, &preds, &cfg).unwrap();
        assert!(d[..3].iter().all(|d| d.verdict == Verdict::Kept));
        assert!(d[3..].iter().all(|d| d.verdict == Verdict::Removed && d.final_ref.is_none()));
    }

    #[test]
    fn missing_prediction_is_a_coverage_error() {
        let m = toy_matches(10, 4);
        let preds = preds_with(&[0.1; 6], 3);
        let err = remove_matches(&m, 3, &preds, &FilterConfig::default()).unwrap_err();
        assert!(matches!(err, SmrError::Coverage(_)));
    }

    #[test]
    fn oracle_predictions_remove_exactly_the_wrong_class() {
        let m = toy_matches(8, 4);
        let classes = [0, 1, 2, 3, 3, 0, 1];
        let preds: Vec<_> = classes
            .iter()
            .enumerate()
            .map(|(k, &c)| PredictionScores::one_hot(k + 1, Outcome::from_index(c).unwrap()))
            .collect();
        let d = remove_matches(&m, 1, &preds, &FilterConfig::default()).unwrap();
        let removed: Vec<usize> = d.iter().filter(|d| d.verdict == Verdict::Removed).map(|d| d.query).collect();
        assert_eq!(removed, vec![2, 4, 5, 7]);
    }

    #[test]
    fn restores_the_most_trusted_candidate() {
        let m = toy_matches(5, 4);
        let preds = preds_with(&[0.1, 0.1, 0.8, 0.1, 0.1], 0);
        let removed = remove_matches(&m, 0, &preds, &FilterConfig::default()).unwrap();
        let cfg = FilterConfig { restoration_threshold: 0.9, ..FilterConfig::default() };
        let out = restore_matches(&removed, &m, &Fixed(vec![0.2, 0.95, 0.4]), &cfg).unwrap();
        assert_eq!(out[2].verdict, Verdict::Restored);
        assert_eq!(out[2].final_ref, Some(m.ranked_refs(2)[2]));
        assert_eq!(out[2].distance, m.ranked_scores(2)[2]);
        assert_eq!(out[2].restore_scores, vec![0.2, 0.95, 0.4]);
        for k in [0, 1, 3, 4] {
            assert_eq!(out[k], removed[k]);
        }
    }

    #[test]
    fn unreachable_restoration_threshold_changes_nothing() {
        let m = toy_matches(6, 4);
        let preds = preds_with(&[0.9, 0.1, 0.8, 0.6, 0.2, 0.95], 0);
        let removed = remove_matches(&m, 0, &preds, &FilterConfig::default()).unwrap();
        let cfg = FilterConfig { restoration_threshold: 1.0 + f64::EPSILON, ..FilterConfig::default() };
        let out = restore_matches(&removed, &m, &Fixed(vec![1.0; 3]), &cfg).unwrap();
        for (a, b) in out.iter().zip(&removed) {
            assert_eq!((a.verdict, a.final_ref), (b.verdict, b.final_ref));
        }
    }

    #[test]
    fn restoration_needs_enough_candidates() {
        let m = toy_matches(6, 3);
        let removed = remove_matches(&m, 0, &preds_with(&[0.9; 6], 0), &FilterConfig::default()).unwrap();
        let err = restore_matches(&removed, &m, &Fixed(vec![1.0; 3]), &FilterConfig::default()).unwrap_err();
        assert!(matches!(err, SmrError::Coverage(_)));
    }

    #[test]
    fn oracle_restoration_only_picks_correct_candidates() {
        let m = toy_matches(12, 4);
        // truth sits two ranks down for even queries, far away for odd ones
        let mapping: Vec<usize> = (0..12).map(|j| if j % 2 == 0 { j + 2 } else { (j + 7) % 12 }).collect();
        let gt = GroundTruth::new(mapping, 0);
        let removed = remove_matches(&m, 0, &preds_with(&[1.0; 12], 0), &FilterConfig::default()).unwrap();
        let out = restore_matches(&removed, &m, &OracleScorer { matches: &m, truth: &gt }, &FilterConfig::default()).unwrap();
        for d in &out {
            match d.verdict {
                Verdict::Restored => assert!(gt.is_correct(d.query, d.final_ref.unwrap())),
                v => assert_eq!(v, Verdict::Removed),
            }
        }
        assert_eq!(out.iter().filter(|d| d.verdict == Verdict::Restored).count(), 6);
    }

    #[test]
    fn csv_round_trip() {
        let m = toy_matches(5, 4);
        let preds = preds_with(&[0.25, 0.75, 0.5, 0.125, 1.0], 0);
        let d = remove_matches(&m, 0, &preds, &FilterConfig::default()).unwrap();
        let text = decisions_to_csv(&d);
        assert!(text.starts_with("query,original_ref,verdict,final_ref,removal_score\n0,0,kept,0,0.25\n"));
        let rows = decisions_from_csv(&text).unwrap();
        for (r, d) in rows.iter().zip(&d) {
            assert_eq!((r.query, r.original_ref, r.verdict, r.final_ref), (d.query, d.original_ref, d.verdict, d.final_ref));
            assert_eq!(r.removal_score, d.removal_score);
        }
        assert!(decisions_from_csv("query,verdict\n").is_err());
        assert!(decisions_from_csv(&text.replace("kept", "maybe")).is_err());
    }

    #[test]
    fn config_bounds() {
        assert!(FilterConfig { trust_threshold: 1.5, ..FilterConfig::default() }.validate().is_err());
        assert!(FilterConfig { restoration_depth: 0, ..FilterConfig::default() }.validate().is_err());
        assert!(FilterConfig { restoration_threshold: -0.1, ..FilterConfig::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn removed_set_shrinks_as_tau_grows(
            scores in proptest::collection::vec(0.0f64..=1.0, 1..60),
            t1 in 0.0f64..=1.0,
            t2 in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let m = toy_matches(scores.len(), 1);
            let preds = preds_with(&scores, 0);
            let run = |tau| {
                let cfg = FilterConfig { trust_threshold: tau, ..FilterConfig::default() };
                remove_matches(&m, 0, &preds, &cfg)
                    .unwrap()
                    .into_iter()
                    .filter(|d| d.verdict == Verdict::Removed)
                    .map(|d| d.query)
                    .collect::<std::collections::BTreeSet<_>>()
            };
            prop_assert!(run(hi).is_subset(&run(lo)));
        }
    }
}
