//! Identity-kernel sequence matching and best-match extraction.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Result, SmrError};
use crate::matrixio::DistanceMatrix;

/// Sequence distance matrix: each cell sums `L` diagonal entries of the
/// single-frame matrix ending at that cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqDistanceMatrix {
    matrix: DistanceMatrix,
    pub seq_len: usize,
    /// First query column whose scores have full kernel support.
    pub valid_from: usize,
}

impl SeqDistanceMatrix {
    pub fn matrix(&self) -> &DistanceMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DistanceMatrix {
        self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix.get(row, col)
    }

    /// Reinterpret a stored matrix (tagged `seq:L=<L>`) as a sequence matrix.
    pub fn from_tagged(matrix: DistanceMatrix) -> Result<Self> {
        let seq_len = matrix
            .meta
            .get("seq")
            .and_then(|v| v.strip_prefix("L="))
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| SmrError::Format("matrix lacks a seq:L=<L> tag".into()))?;
        Ok(Self {
            matrix,
            seq_len,
            valid_from: seq_len.saturating_sub(1),
        })
    }
}

impl AsRef<DistanceMatrix> for SeqDistanceMatrix {
    fn as_ref(&self) -> &DistanceMatrix {
        &self.matrix
    }
}

impl AsRef<DistanceMatrix> for DistanceMatrix {
    fn as_ref(&self) -> &DistanceMatrix {
        self
    }
}

/// Convolve `matrix` with an `L x L` identity kernel.
///
/// Cells where the kernel overhangs the top or left edge sum the available
/// diagonal terms and rescale by `L / terms`, keeping them on the same scale
/// as interior cells.
pub fn sequence_match(matrix: &DistanceMatrix, seq_len: usize) -> Result<SeqDistanceMatrix> {
    let (rows, cols) = (matrix.rows(), matrix.cols());
    if seq_len == 0 || seq_len > rows.min(cols) {
        return Err(SmrError::Range(format!(
            "sequence length {seq_len} must lie in 1..={}",
            rows.min(cols)
        )));
    }
    let src = matrix.values();
    let mut out = vec![0.0; rows * cols];
    out.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
        for (j, cell) in row.iter_mut().enumerate() {
            let terms = seq_len.min(i + 1).min(j + 1);
            let mut sum = 0.0;
            for x in 0..terms {
                sum += src[(i - x) * cols + (j - x)];
            }
            *cell = if terms < seq_len {
                sum * seq_len as f64 / terms as f64
            } else {
                sum
            };
        }
    });
    let mut result = DistanceMatrix::new(rows, cols, out)?;
    result.meta = matrix.meta.clone();
    result.meta.insert("seq".into(), format!("L={seq_len}"));
    Ok(SeqDistanceMatrix {
        matrix: result,
        seq_len,
        valid_from: seq_len - 1,
    })
}

/// Per-query ranking of the lowest-scoring references.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub depth: usize,
    ranked: Vec<Vec<usize>>,
    scores: Vec<Vec<f64>>,
}

impl MatchSet {
    pub fn queries(&self) -> usize {
        self.ranked.len()
    }

    pub fn best_ref(&self, query: usize) -> usize {
        self.ranked[query][0]
    }

    pub fn best_score(&self, query: usize) -> f64 {
        self.scores[query][0]
    }

    /// References for `query` in ascending score order, `depth` long.
    pub fn ranked_refs(&self, query: usize) -> &[usize] {
        &self.ranked[query]
    }

    pub fn ranked_scores(&self, query: usize) -> &[f64] {
        &self.scores[query]
    }
}

/// Lexicographic (score, index) order: lower score first, ties to the lower index.
#[inline]
pub(crate) fn score_order(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Indices of the `k` smallest values, ascending, ties broken by index.
pub(crate) fn lowest_k(values: impl Iterator<Item = f64>, k: usize) -> Vec<(f64, usize)> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (idx, v) in values.enumerate() {
        if best.len() == k {
            if score_order((v, idx), best[k - 1]) != Ordering::Less {
                continue;
            }
            best.pop();
        }
        let pos = best.partition_point(|&e| score_order(e, (v, idx)) == Ordering::Less);
        best.insert(pos, (v, idx));
    }
    best
}

/// Rank the `depth` best references for every query column.
pub fn best_matches(matrix: &impl AsRef<DistanceMatrix>, depth: usize) -> Result<MatchSet> {
    let m = matrix.as_ref();
    if depth == 0 || depth > m.rows() {
        return Err(SmrError::Range(format!(
            "rank depth {depth} must lie in 1..={}",
            m.rows()
        )));
    }
    let (ranked, scores) = (0..m.cols())
        .into_par_iter()
        .map(|j| {
            let top = lowest_k(m.column(j), depth);
            (
                top.iter().map(|e| e.1).collect::<Vec<_>>(),
                top.iter().map(|e| e.0).collect::<Vec<_>>(),
            )
        })
        .unzip();
    Ok(MatchSet {
        depth,
        ranked,
        scores,
    })
}
