//! Four-class outcome labels: was the best match correct before and after
//! sequence matching?

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmrError};
use crate::matrixio::{DistanceMatrix, GroundTruth};
use crate::seqmatch::{lowest_k, SeqDistanceMatrix};

pub const CLASS_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    /// correct before and after sequence matching
    CorrectBoth = 0,
    /// correct before, incorrect after
    Degraded = 1,
    /// incorrect before, correct after
    Rescued = 2,
    /// incorrect before and after
    IncorrectBoth = 3,
}

impl Outcome {
    pub const ALL: [Outcome; CLASS_COUNT] = [
        Outcome::CorrectBoth,
        Outcome::Degraded,
        Outcome::Rescued,
        Outcome::IncorrectBoth,
    ];

    pub fn from_correctness(before: bool, after: bool) -> Self {
        match (before, after) {
            (true, true) => Outcome::CorrectBoth,
            (true, false) => Outcome::Degraded,
            (false, true) => Outcome::Rescued,
            (false, false) => Outcome::IncorrectBoth,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Classes whose sequence-matched match is wrong; the removal targets.
    pub fn incorrect_after(self) -> bool {
        matches!(self, Outcome::Degraded | Outcome::IncorrectBoth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutcomeLabel {
    pub query: usize,
    pub class: Outcome,
    pub correct_before: bool,
    pub correct_after: bool,
}

fn argmin_column(m: &DistanceMatrix, col: usize) -> usize {
    lowest_k(m.column(col), 1)[0].1
}

/// Label every query with full sequence history (`j >= L - 1`).
pub fn label_queries(matrix: &DistanceMatrix, seq: &SeqDistanceMatrix, gt: &GroundTruth) -> Result<Vec<OutcomeLabel>> {
    if matrix.rows() != seq.rows() || matrix.cols() != seq.cols() {
        return Err(SmrError::Shape(format!(
            "distance matrix is {}x{}, sequence matrix is {}x{}",
            matrix.rows(),
            matrix.cols(),
            seq.rows(),
            seq.cols()
        )));
    }
    if gt.len() != matrix.cols() {
        return Err(SmrError::Shape(format!(
            "ground truth covers {} queries, matrix has {}",
            gt.len(),
            matrix.cols()
        )));
    }
    gt.validate_against(matrix)?;
    Ok((seq.valid_from..matrix.cols())
        .map(|j| {
            let before = gt.is_correct(j, argmin_column(matrix, j));
            let after = gt.is_correct(j, argmin_column(seq.matrix(), j));
            OutcomeLabel {
                query: j,
                class: Outcome::from_correctness(before, after),
                correct_before: before,
                correct_after: after,
            }
        })
        .collect())
}

/// Per-class counts, indexed by [`Outcome::index`].
pub fn class_histogram(labels: &[OutcomeLabel]) -> [usize; CLASS_COUNT] {
    let mut h = [0; CLASS_COUNT];
    for l in labels {
        h[l.class.index()] += 1;
    }
    h
}

pub const LABELS_CSV_HEADER: &str = "query,class,correct_before,correct_after";

pub fn labels_to_csv(labels: &[OutcomeLabel]) -> String {
    let mut out = format!("{LABELS_CSV_HEADER}\n");
    for l in labels {
        out.push_str(&format!(
            "{},{},{},{}\n",
            l.query,
            l.class.index(),
            u8::from(l.correct_before),
            u8::from(l.correct_after)
        ));
    }
    out
}

pub fn labels_from_csv(text: &str) -> Result<Vec<OutcomeLabel>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == LABELS_CSV_HEADER => {}
        other => return Err(SmrError::Format(format!("bad labels header {other:?}"))),
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let bad = || SmrError::Format(format!("labels line {}: {line:?}", n + 2));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let flag = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad()),
            };
            let class = f[1].parse().ok().and_then(Outcome::from_index).ok_or_else(bad)?;
            let (before, after) = (flag(f[2])?, flag(f[3])?);
            if Outcome::from_correctness(before, after) != class {
                return Err(bad());
            }
            Ok(OutcomeLabel {
                query: f[0].parse().map_err(|_| bad())?,
                class,
                correct_before: before,
                correct_after: after,
            })
        })
        .collect()
}
