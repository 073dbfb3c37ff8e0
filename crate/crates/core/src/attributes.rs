//! Per-query attributes computed from a normalized query slice.
//!
//! All four attributes are ratios over the diagonal-entries matrix, whose
//! row `i` holds the candidate alignment `slice(i + l, l)` for `l in 0..L`.
//! Row `i` of that matrix therefore ends at reference `i + L - 1` and its sum
//! equals the sequence score of that reference (up to normalization).
//!
//! | attribute | numerator | denominator |
//! |-----------|-----------|-------------|
//! | `a1` minimum sum rate | history sum of the r-th best diagonal (by history mean) | history sum of the r-th best row (by history mean) + eps |
//! | `a2` minimum value rate | r-th lowest value of the current column | current-column value of the r-th best diagonal (by sum) + eps |
//! | `a3` global block sum rate | history sum of the r-th best diagonal | row sum of its block-mean row |
//! | `a4` global group sum rate | history sum of the r-th best diagonal | row sum of its windowed-mean row |
//!
//! "History" means the `L - 1` columns preceding the current query.

use std::fmt::Write as _;
use std::io::{self, Read, Write};

use rayon::prelude::*;

use crate::error::{Result, SmrError};
use crate::matrixio::{normalize_slice, slice_query, DistanceMatrix, QuerySlice};
use crate::seqmatch::score_order;

pub const ATTRIBUTE_COUNT: usize = 4;
pub const ATTRIBUTE_NAMES: [&str; ATTRIBUTE_COUNT] = ["a1", "a2", "a3", "a4"];
pub const ATTRIBUTES_CSV_HEADER: &str = "query,rank,a1,a2,a3,a4,label";
const RECORD_MAGIC: &[u8; 4] = b"SMRA";

/// Diagonal alignments of a query slice: `(R - L + 1) x L`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    pub source_query: usize,
}

impl DiagonalMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    fn history_sum(&self, row: usize) -> f64 {
        self.row(row)[..self.cols - 1].iter().sum()
    }

    fn row_sum(&self, row: usize) -> f64 {
        self.row(row).iter().sum()
    }
}

/// Smoothing window and ratio stabilizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams {
    /// Rows averaged on each side of a diagonal for the group mean.
    pub window: usize,
    pub epsilon: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            window: 2,
            epsilon: 1e-9,
        }
    }
}

impl SmoothingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(SmrError::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// The four attributes of one query at one rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeVector {
    pub query: usize,
    pub rank: usize,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

impl AttributeVector {
    pub fn values(&self) -> [f64; ATTRIBUTE_COUNT] {
        [self.a1, self.a2, self.a3, self.a4]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

pub fn diagonal_entries(slice: &QuerySlice) -> Result<DiagonalMatrix> {
    let (r, l) = (slice.rows(), slice.seq_len);
    if r < l {
        return Err(SmrError::Range(format!(
            "slice has {r} rows, fewer than sequence length {l}"
        )));
    }
    let rows = r - l + 1;
    let mut values = Vec::with_capacity(rows * l);
    for i in 0..rows {
        for c in 0..l {
            values.push(slice.get(i + c, c));
        }
    }
    Ok(DiagonalMatrix {
        rows,
        cols: l,
        values,
        source_query: slice.query,
    })
}

/// Indices ordered by ascending key, ties to the lower index.
fn ascending_order(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_unstable_by(|&a, &b| score_order((keys[a], a), (keys[b], b)));
    idx
}

fn history_mean(row: &[f64]) -> f64 {
    let hist = &row[..row.len() - 1];
    if hist.is_empty() {
        0.0
    } else {
        hist.iter().sum::<f64>() / hist.len() as f64
    }
}

/// Rankings shared by all four attributes, computed once per slice.
struct SliceRanking {
    /// diagonal rows by mean over the history columns
    diag_by_mean: Vec<usize>,
    /// slice rows by mean over the history columns
    rows_by_mean: Vec<usize>,
    /// diagonal rows by full-row sum
    diag_by_sum: Vec<usize>,
    /// current-column values, ascending
    current_sorted: Vec<f64>,
}

impl SliceRanking {
    fn new(slice: &QuerySlice, dm: &DiagonalMatrix) -> Self {
        let diag_means: Vec<f64> = (0..dm.rows()).map(|i| history_mean(dm.row(i))).collect();
        let row_means: Vec<f64> = (0..slice.rows()).map(|i| history_mean(slice.row(i))).collect();
        let diag_sums: Vec<f64> = (0..dm.rows()).map(|i| dm.row_sum(i)).collect();
        let last = slice.seq_len - 1;
        let mut current_sorted: Vec<f64> = (0..slice.rows()).map(|i| slice.get(i, last)).collect();
        current_sorted.sort_unstable_by(f64::total_cmp);
        Self {
            diag_by_mean: ascending_order(&diag_means),
            rows_by_mean: ascending_order(&row_means),
            diag_by_sum: ascending_order(&diag_sums),
            current_sorted,
        }
    }
}

fn check_rank(rank: usize, dm: &DiagonalMatrix) -> Result<()> {
    if rank >= dm.rows() {
        return Err(SmrError::Range(format!(
            "rank {rank} exceeds the {} available diagonal rows",
            dm.rows()
        )));
    }
    Ok(())
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn a1(slice: &QuerySlice, dm: &DiagonalMatrix, rank: usize, eps: f64, ord: &SliceRanking) -> f64 {
    let d_star = ord.diag_by_mean[rank];
    let h_star = ord.rows_by_mean[rank];
    let hist = slice.seq_len - 1;
    let den: f64 = slice.row(h_star)[..hist].iter().sum();
    dm.history_sum(d_star) / (den + eps)
}

fn a2(dm: &DiagonalMatrix, rank: usize, eps: f64, ord: &SliceRanking) -> f64 {
    let i_star = ord.diag_by_sum[rank];
    ord.current_sorted[rank] / (dm.get(i_star, dm.cols() - 1) + eps)
}

/// Mean of all entries in the tiled block of `block_len` rows containing `row`.
fn block_mean(dm: &DiagonalMatrix, row: usize, block_len: usize) -> f64 {
    let start = row / block_len * block_len;
    let end = (start + block_len).min(dm.rows());
    let sum: f64 = (start..end).map(|i| dm.row_sum(i)).sum();
    sum / ((end - start) * dm.cols()) as f64
}

fn a3(dm: &DiagonalMatrix, rank: usize, seq_len: usize, ord: &SliceRanking) -> f64 {
    let i_star = ord.diag_by_sum[rank];
    let mu = block_mean(dm, i_star, seq_len);
    let den: f64 = (0..dm.cols()).map(|_| mu).sum();
    ratio_or_zero(dm.history_sum(i_star), den)
}

/// Column-wise mean over the rows `row - window ..= row + window`, clipped.
fn group_row(dm: &DiagonalMatrix, row: usize, window: usize) -> Vec<f64> {
    let lo = row.saturating_sub(window);
    let hi = (row + window).min(dm.rows() - 1);
    let n = (hi - lo + 1) as f64;
    (0..dm.cols())
        .map(|c| (lo..=hi).map(|m| dm.get(m, c)).sum::<f64>() / n)
        .collect()
}

fn a4(dm: &DiagonalMatrix, rank: usize, window: usize, ord: &SliceRanking) -> f64 {
    let i_star = ord.diag_by_sum[rank];
    let den: f64 = group_row(dm, i_star, window).iter().sum();
    ratio_or_zero(dm.history_sum(i_star), den)
}

pub fn minimum_sum_rate(slice: &QuerySlice, dm: &DiagonalMatrix, rank: usize, params: &SmoothingParams) -> Result<f64> {
    check_rank(rank, dm)?;
    Ok(a1(slice, dm, rank, params.epsilon, &SliceRanking::new(slice, dm)))
}

pub fn minimum_value_rate(slice: &QuerySlice, dm: &DiagonalMatrix, rank: usize, params: &SmoothingParams) -> Result<f64> {
    check_rank(rank, dm)?;
    Ok(a2(dm, rank, params.epsilon, &SliceRanking::new(slice, dm)))
}

fn diag_sum_ranking(dm: &DiagonalMatrix) -> SliceRanking {
    let sums: Vec<f64> = (0..dm.rows()).map(|i| dm.row_sum(i)).collect();
    SliceRanking {
        diag_by_mean: Vec::new(),
        rows_by_mean: Vec::new(),
        diag_by_sum: ascending_order(&sums),
        current_sorted: Vec::new(),
    }
}

pub fn global_block_sum_rate(dm: &DiagonalMatrix, rank: usize, seq_len: usize) -> Result<f64> {
    if seq_len == 0 || dm.rows() < seq_len {
        return Err(SmrError::Range(format!(
            "{} diagonal rows cannot hold a block of {seq_len}",
            dm.rows()
        )));
    }
    check_rank(rank, dm)?;
    Ok(a3(dm, rank, seq_len, &diag_sum_ranking(dm)))
}

pub fn global_group_sum_rate(dm: &DiagonalMatrix, rank: usize, params: &SmoothingParams) -> Result<f64> {
    check_rank(rank, dm)?;
    Ok(a4(dm, rank, params.window, &diag_sum_ranking(dm)))
}

/// The block-smoothed diagonal matrix: every entry replaced by the mean of
/// its tile of `seq_len` consecutive rows (the last tile may be shorter).
pub fn block_smoothed(dm: &DiagonalMatrix, seq_len: usize) -> DiagonalMatrix {
    let mut values = Vec::with_capacity(dm.values.len());
    for i in 0..dm.rows() {
        let mu = block_mean(dm, i, seq_len);
        values.extend(std::iter::repeat_n(mu, dm.cols()));
    }
    DiagonalMatrix { values, ..dm.clone() }
}

/// The group-smoothed diagonal matrix: each row averaged with up to
/// `window` neighbours on either side.
pub fn group_smoothed(dm: &DiagonalMatrix, window: usize) -> DiagonalMatrix {
    let values = (0..dm.rows()).flat_map(|i| group_row(dm, i, window)).collect();
    DiagonalMatrix { values, ..dm.clone() }
}

/// Attributes for ranks `0..depth` of one normalized slice.
pub fn extract_attributes(slice: &QuerySlice, depth: usize, params: &SmoothingParams) -> Result<Vec<AttributeVector>> {
    if !slice.normalized {
        return Err(SmrError::Data(format!(
            "slice for query {} must be normalized before attribute extraction",
            slice.query
        )));
    }
    if depth == 0 {
        return Err(SmrError::Range("rank depth must be at least 1".into()));
    }
    let dm = diagonal_entries(slice)?;
    if dm.rows() < slice.seq_len {
        return Err(SmrError::Range(format!(
            "{} reference rows are too few for blocks of {} diagonals",
            slice.rows(),
            slice.seq_len
        )));
    }
    check_rank(depth - 1, &dm)?;
    let ord = SliceRanking::new(slice, &dm);
    Ok((0..depth)
        .map(|rank| AttributeVector {
            query: slice.query,
            rank,
            a1: a1(slice, &dm, rank, params.epsilon, &ord),
            a2: a2(&dm, rank, params.epsilon, &ord),
            a3: a3(&dm, rank, slice.seq_len, &ord),
            a4: a4(&dm, rank, params.window, &ord),
        })
        .collect())
}

/// Attributes for every query of a matrix that has a full history window.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    pub depth: usize,
    first: usize,
    /// `rows[j - first]` holds ranks `0..depth` of query `j`.
    rows: Vec<Vec<AttributeVector>>,
}

impl AttributeTable {
    /// Rebuild a table from exported rows covering consecutive queries with
    /// the same ranks `0..depth` each.
    pub fn from_records(records: &[AttributeRecord]) -> Result<Self> {
        let first = records
            .iter()
            .map(|r| r.attrs.query)
            .min()
            .ok_or_else(|| SmrError::Coverage("no attribute rows".into()))?;
        let last = records.iter().map(|r| r.attrs.query).max().unwrap_or(first);
        let mut rows: Vec<Vec<AttributeVector>> = vec![Vec::new(); last - first + 1];
        let mut sorted: Vec<&AttributeRecord> = records.iter().collect();
        sorted.sort_by_key(|r| (r.attrs.query, r.attrs.rank));
        for r in sorted {
            let row = &mut rows[r.attrs.query - first];
            if r.attrs.rank != row.len() {
                return Err(SmrError::Coverage(format!(
                    "query {} has rank {} where rank {} was expected",
                    r.attrs.query,
                    r.attrs.rank,
                    row.len()
                )));
            }
            row.push(r.attrs);
        }
        let depth = rows[0].len();
        if let Some((k, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != depth) {
            return Err(SmrError::Coverage(format!(
                "query {} has {} ranks, query {first} has {depth}",
                first + k,
                rows[k].len()
            )));
        }
        Ok(Self { depth, first, rows })
    }

    pub fn first_query(&self) -> usize {
        self.first
    }

    pub fn queries(&self) -> std::ops::Range<usize> {
        self.first_query()..self.first_query() + self.rows.len()
    }

    pub fn get(&self, query: usize, rank: usize) -> Option<&AttributeVector> {
        query
            .checked_sub(self.first_query())
            .and_then(|i| self.rows.get(i))
            .and_then(|r| r.get(rank))
    }

    pub fn ranks(&self, query: usize) -> Option<&[AttributeVector]> {
        query
            .checked_sub(self.first_query())
            .and_then(|i| self.rows.get(i))
            .map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AttributeVector> {
        self.rows.iter().flatten()
    }
}

/// Slice, normalize and extract `depth` ranks for every query `j >= L - 1`.
pub fn extract_all(matrix: &DistanceMatrix, seq_len: usize, depth: usize, params: &SmoothingParams) -> Result<AttributeTable> {
    params.validate()?;
    if seq_len == 0 || seq_len > matrix.cols() {
        return Err(SmrError::Range(format!(
            "sequence length {seq_len} must lie in 1..={}",
            matrix.cols()
        )));
    }
    let rows = (seq_len - 1..matrix.cols())
        .into_par_iter()
        .map(|j| {
            let slice = normalize_slice(slice_query(matrix, j, seq_len)?);
            extract_attributes(&slice, depth, params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttributeTable { depth, first: seq_len - 1, rows })
}

// ---------------------------------------------------------------------------
// Export

/// One exported attribute row with an optional class label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeRecord {
    pub attrs: AttributeVector,
    pub label: Option<u8>,
}

pub fn attributes_to_csv(records: &[AttributeRecord]) -> String {
    let mut out = String::from(ATTRIBUTES_CSV_HEADER);
    out.push('\n');
    for rec in records {
        let a = &rec.attrs;
        let _ = write!(out, "{},{},{},{},{},{},", a.query, a.rank, a.a1, a.a2, a.a3, a.a4);
        if let Some(l) = rec.label {
            let _ = write!(out, "{l}");
        }
        out.push('\n');
    }
    out
}

pub fn attributes_from_csv(text: &str) -> Result<Vec<AttributeRecord>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| SmrError::Format("empty attributes file".into()))?;
    let header = header.trim();
    if header != ATTRIBUTES_CSV_HEADER && header != "query,rank,a1,a2,a3,a4" {
        return Err(SmrError::Format(format!("unexpected attributes header {header:?}")));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() < 6 || f.len() > 7 {
            return Err(SmrError::Format(format!("attributes line {}: {} fields", n + 2, f.len())));
        }
        let bad = |what: &str| SmrError::Format(format!("attributes line {}: bad {what}", n + 2));
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let attrs = AttributeVector {
            query: f[0].parse().map_err(|_| bad("query"))?,
            rank: f[1].parse().map_err(|_| bad("rank"))?,
            a1: num(f[2], "a1")?,
            a2: num(f[3], "a2")?,
            a3: num(f[4], "a3")?,
            a4: num(f[5], "a4")?,
        };
        let label = match f.get(6) {
            Some(s) if !s.is_empty() => {
                let l: u8 = s.parse().map_err(|_| bad("label"))?;
                if l > 3 {
                    return Err(bad("label"));
                }
                Some(l)
            }
            _ => None,
        };
        out.push(AttributeRecord { attrs, label });
    }
    Ok(out)
}

/// Binary stream: `"SMRA" | u16 version | u32 count | count x record`, where
/// a record is `u32 query | u32 rank | 4 x f64 | i8 label (-1 = none)`.
pub fn write_attribute_records(records: &[AttributeRecord], mut w: impl Write) -> io::Result<()> {
    w.write_all(RECORD_MAGIC)?;
    w.write_all(&1u16.to_le_bytes())?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    for rec in records {
        w.write_all(&(rec.attrs.query as u32).to_le_bytes())?;
        w.write_all(&(rec.attrs.rank as u32).to_le_bytes())?;
        for v in rec.attrs.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[rec.label.map_or(-1i8, |l| l as i8) as u8])?;
    }
    Ok(())
}

pub fn read_attribute_records(mut r: impl Read) -> Result<Vec<AttributeRecord>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 10 || &bytes[..4] != RECORD_MAGIC {
        return Err(SmrError::Format("bad attribute stream header".into()));
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    const REC: usize = 4 + 4 + 32 + 1;
    if bytes.len() != 10 + count * REC {
        return Err(SmrError::Format(format!(
            "attribute stream declares {count} records, has {} bytes",
            bytes.len() - 10
        )));
    }
    Ok(bytes[10..]
        .chunks_exact(REC)
        .map(|c| {
            let f = |o: usize| f64::from_le_bytes(c[o..o + 8].try_into().unwrap());
            AttributeRecord {
                attrs: AttributeVector {
                    query: u32::from_le_bytes(c[0..4].try_into().unwrap()) as usize,
                    rank: u32::from_le_bytes(c[4..8].try_into().unwrap()) as usize,
                    a1: f(8),
                    a2: f(16),
                    a3: f(24),
                    a4: f(32),
                },
                label: match c[40] as i8 {
                    l if l < 0 => None,
                    l => Some(l as u8),
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-9;

    fn slice(rows: usize, len: usize, vals: Vec<f64>) -> QuerySlice {
        assert_eq!(vals.len(), rows * len);
        QuerySlice::from_values(rows + len, len, vals).unwrap()
    }

    fn random_slice(rng: &mut ChaCha8Rng, rows: usize, len: usize) -> QuerySlice {
        let vals = (0..rows * len).map(|_| rng.random_range(0.05..2.0)).collect();
        normalize_slice(slice(rows, len, vals))
    }

    // Literal oracles: they walk the slice directly and rank by full sorts,
    // sharing nothing with the implementation above.

    fn oracle_diag(s: &QuerySlice, i: usize, c: usize) -> f64 {
        s.get(i + c, c)
    }

    fn rank_by(keys: Vec<f64>, r: usize) -> usize {
        let mut v: Vec<(f64, usize)> = keys.into_iter().enumerate().map(|(i, k)| (k, i)).collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        v[r].1
    }

    fn oracle_attrs(s: &QuerySlice, r: usize, w: usize) -> [f64; 4] {
        let l = s.seq_len;
        let n = s.rows() - l + 1;
        let mut dmean = vec![0.0; n];
        let mut dsum = vec![0.0; n];
        for i in 0..n {
            for c in 0..l {
                if c < l - 1 {
                    dmean[i] += oracle_diag(s, i, c) / (l - 1) as f64;
                }
                dsum[i] += oracle_diag(s, i, c);
            }
        }
        let mut hmean = vec![0.0; s.rows()];
        for (i, m) in hmean.iter_mut().enumerate() {
            for c in 0..l - 1 {
                *m += s.get(i, c) / (l - 1) as f64;
            }
        }
        let d_star = rank_by(dmean, r);
        let h_star = rank_by(hmean, r);
        let i_star = rank_by(dsum, r);
        let hist = |i: usize| (0..l - 1).map(|c| oracle_diag(s, i, c)).sum::<f64>();

        let a1 = hist(d_star) / ((0..l - 1).map(|c| s.get(h_star, c)).sum::<f64>() + EPS);

        let mut last: Vec<f64> = (0..s.rows()).map(|i| s.get(i, l - 1)).collect();
        last.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let a2 = last[r] / (oracle_diag(s, i_star, l - 1) + EPS);

        // tiles of l rows, last one clipped
        let mut block = vec![0.0; n];
        let mut start = 0;
        while start < n {
            let end = (start + l).min(n);
            let mut total = 0.0;
            for m in start..end {
                for c in 0..l {
                    total += oracle_diag(s, m, c);
                }
            }
            for b in block.iter_mut().take(end).skip(start) {
                *b = total / ((end - start) * l) as f64;
            }
            start = end;
        }
        let a3 = hist(i_star) / (block[i_star] * l as f64);

        let mut group_sum = 0.0;
        for c in 0..l {
            let mut acc = 0.0;
            let mut cnt = 0;
            for m in 0..n {
                if m + w >= i_star && m <= i_star + w {
                    acc += oracle_diag(s, m, c);
                    cnt += 1;
                }
            }
            group_sum += acc / cnt as f64;
        }
        let a4 = hist(i_star) / group_sum;
        [a1, a2, a3, a4]
    }

    #[test]
    fn diagonal_of_small_slice() {
        let s = slice(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let dm = diagonal_entries(&s).unwrap();
        assert_eq!((dm.rows(), dm.cols()), (2, 2));
        assert_eq!(dm.row(0), &[1.0, 4.0]);
        assert_eq!(dm.row(1), &[3.0, 6.0]);
    }

    #[test]
    fn square_slice_gives_main_diagonal() {
        let s = slice(3, 3, (0..9).map(f64::from).collect());
        let dm = diagonal_entries(&s).unwrap();
        assert_eq!(dm.rows(), 1);
        assert_eq!(dm.row(0), &[0.0, 4.0, 8.0]);
        assert!(diagonal_entries(&slice(2, 3, vec![0.0; 6])).is_err());
    }

    #[test]
    fn diagonal_matches_index_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let s = random_slice(&mut rng, 40, 4);
        let dm = diagonal_entries(&s).unwrap();
        assert_eq!(dm.rows(), 37);
        for i in 0..37 {
            for c in 0..4 {
                assert_eq!(dm.get(i, c), oracle_diag(&s, i, c));
            }
        }
    }

    #[test]
    fn sum_rate_of_constant_slice() {
        let c = 0.7;
        let s = slice(6, 3, vec![c; 18]);
        let dm = diagonal_entries(&s).unwrap();
        let v = minimum_sum_rate(&s, &dm, 0, &SmoothingParams::default()).unwrap();
        assert_eq!(v, 2.0 * c / (2.0 * c + EPS));
    }

    #[test]
    fn sum_rate_with_zero_diagonal() {
        // diagonal row 0 runs (0,0),(1,1),(2,2) and is zero; every row mean >= 0.5
        let s = slice(4, 3, vec![0.0, 1.0, 0.9, 1.0, 0.0, 0.9, 0.5, 0.5, 0.0, 0.6, 0.7, 0.9]);
        let dm = diagonal_entries(&s).unwrap();
        assert_eq!(minimum_sum_rate(&s, &dm, 0, &SmoothingParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn value_rate_same_cell() {
        // current column [0.5, 0.1, 0.9] with L = 2: diagonal rows are
        // (0,0)->(1,1) and (1,0)->(2,1); row 0 ends on the 0.1 cell
        let s = slice(3, 2, vec![0.05, 0.5, 0.6, 0.1, 0.6, 0.9]);
        let dm = diagonal_entries(&s).unwrap();
        let v = minimum_value_rate(&s, &dm, 0, &SmoothingParams::default()).unwrap();
        assert_eq!(v, 0.1 / (0.1 + EPS));
    }

    #[test]
    fn value_rate_constant_last_column() {
        let s = slice(5, 2, vec![0.3, 0.4, 0.1, 0.4, 0.9, 0.4, 0.2, 0.4, 0.5, 0.4]);
        let dm = diagonal_entries(&s).unwrap();
        let p = SmoothingParams::default();
        for r in 0..3 {
            let v = minimum_value_rate(&s, &dm, r, &p).unwrap();
            assert_eq!(v, 0.4 / (0.4 + EPS));
        }
    }

    #[test]
    fn block_rate_constant_and_two_rows() {
        let s = slice(8, 3, vec![0.25; 24]);
        let dm = diagonal_entries(&s).unwrap();
        let v = global_block_sum_rate(&dm, 0, 3).unwrap();
        assert!((v - 2.0 / 3.0).abs() <= 1e-12);

        let dm = DiagonalMatrix {
            rows: 2,
            cols: 2,
            values: vec![1.0, 1.0, 3.0, 3.0],
            source_query: 0,
        };
        assert_eq!(global_block_sum_rate(&dm, 0, 2).unwrap(), 0.25);
        assert!(global_block_sum_rate(&dm, 0, 3).is_err());
    }

    #[test]
    fn group_rate_constant_and_zero_window() {
        let s = slice(9, 4, vec![0.5; 36]);
        let dm = diagonal_entries(&s).unwrap();
        for w in [0, 1, 2, 7] {
            let p = SmoothingParams { window: w, epsilon: EPS };
            assert!((global_group_sum_rate(&dm, 0, &p).unwrap() - 0.75).abs() <= 1e-12);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_slice(&mut rng, 20, 4);
        let dm = diagonal_entries(&s).unwrap();
        let p = SmoothingParams { window: 0, epsilon: EPS };
        assert_eq!(group_smoothed(&dm, 0), dm);
        let sums: Vec<f64> = (0..dm.rows()).map(|i| dm.row(i).iter().sum()).collect();
        let i_star = rank_by(sums, 0);
        let expected = dm.row(i_star)[..3].iter().sum::<f64>() / dm.row(i_star).iter().sum::<f64>();
        assert!((global_group_sum_rate(&dm, 0, &p).unwrap() - expected).abs() <= 1e-12);
    }

    #[test]
    fn zero_denominators_yield_zero() {
        let s = normalize_slice(slice(7, 3, vec![0.0; 21]));
        let attrs = extract_attributes(&s, 2, &SmoothingParams::default()).unwrap();
        for a in attrs {
            assert!(a.is_finite());
            assert_eq!(a.a3, 0.0);
            assert_eq!(a.a4, 0.0);
        }
    }

    #[test]
    fn smoothing_matrices_have_expected_rows() {
        let dm = DiagonalMatrix {
            rows: 5,
            cols: 2,
            values: vec![1.0, 1.0, 3.0, 3.0, 5.0, 5.0, 7.0, 7.0, 9.0, 9.0],
            source_query: 0,
        };
        let b = block_smoothed(&dm, 2);
        assert_eq!(b.row(0), &[2.0, 2.0]);
        assert_eq!(b.row(3), &[6.0, 6.0]);
        assert_eq!(b.row(4), &[9.0, 9.0]);
        let g = group_smoothed(&dm, 1);
        assert_eq!(g.row(0), &[2.0, 2.0]);
        assert_eq!(g.row(2), &[5.0, 5.0]);
        assert_eq!(g.row(4), &[8.0, 8.0]);
    }

    #[test]
    fn constant_slice_closed_form() {
        let s = normalize_slice(slice(12, 4, vec![3.0; 48]));
        let a = extract_attributes(&s, 1, &SmoothingParams::default()).unwrap();
        assert_eq!(a.len(), 1);
        assert!((a[0].a1 - 3.0 / (3.0 + EPS)).abs() <= 1e-12);
        assert!((a[0].a2 - 1.0 / (1.0 + EPS)).abs() <= 1e-12);
        assert!((a[0].a3 - 0.75).abs() <= 1e-12);
        assert!((a[0].a4 - 0.75).abs() <= 1e-12);
    }

    #[test]
    fn unnormalized_slice_is_rejected() {
        let s = slice(6, 2, vec![1.0; 12]);
        assert!(matches!(
            extract_attributes(&s, 1, &SmoothingParams::default()),
            Err(SmrError::Data(_))
        ));
    }

    #[test]
    fn components_match_oracles_on_random_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let p = SmoothingParams::default();
        for _ in 0..1000 {
            let l = rng.random_range(2..7);
            let rows = rng.random_range(2 * l..60);
            let s = random_slice(&mut rng, rows, l);
            let dm = diagonal_entries(&s).unwrap();
            let attrs = extract_attributes(&s, 3, &p).unwrap();
            for (r, a) in attrs.iter().enumerate() {
                let o = oracle_attrs(&s, r, p.window);
                assert!(a.is_finite());
                for (got, want) in a.values().iter().zip(o) {
                    assert!((got - want).abs() <= 1e-9, "rank {r}: {got} vs {want}");
                }
                assert_eq!(minimum_sum_rate(&s, &dm, r, &p).unwrap(), a.a1);
                assert_eq!(minimum_value_rate(&s, &dm, r, &p).unwrap(), a.a2);
                assert_eq!(global_block_sum_rate(&dm, r, l).unwrap(), a.a3);
                assert_eq!(global_group_sum_rate(&dm, r, &p).unwrap(), a.a4);
            }
        }
    }

    #[test]
    fn rank_bounds_are_checked() {
        let s = normalize_slice(slice(5, 2, vec![1.0; 10]));
        let dm = diagonal_entries(&s).unwrap();
        let p = SmoothingParams::default();
        assert!(minimum_sum_rate(&s, &dm, 4, &p).is_err());
        assert!(extract_attributes(&s, 5, &p).is_err());
        assert!(extract_attributes(&s, 4, &p).is_ok());
    }

    #[test]
    fn csv_and_binary_export() {
        let recs = vec![
            AttributeRecord {
                attrs: AttributeVector { query: 3, rank: 0, a1: 0.5, a2: 1.25, a3: 0.75, a4: 0.1 },
                label: Some(2),
            },
            AttributeRecord {
                attrs: AttributeVector { query: 3, rank: 1, a1: 0.3, a2: 0.2, a3: 0.1, a4: 1e-7 },
                label: None,
            },
        ];
        let text = attributes_to_csv(&recs);
        assert!(text.starts_with(ATTRIBUTES_CSV_HEADER));
        assert_eq!(attributes_from_csv(&text).unwrap(), recs);

        let mut buf = Vec::new();
        write_attribute_records(&recs, &mut buf).unwrap();
        assert_eq!(read_attribute_records(buf.as_slice()).unwrap(), recs);
        assert!(read_attribute_records(&buf[..buf.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn rank_prefix_is_stable(seed in 0u64..10_000, k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_slice(&mut rng, 24, 4);
            let p = SmoothingParams::default();
            let short = extract_attributes(&s, k, &p).unwrap();
            let long = extract_attributes(&s, 6, &p).unwrap();
            prop_assert_eq!(&short[..], &long[..k]);
        }

        #[test]
        fn scale_does_not_change_attributes(seed in 0u64..10_000, alpha in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<f64> = (0..30 * 4).map(|_| rng.random_range(0.05..2.0)).collect();
            let scaled: Vec<f64> = raw.iter().map(|v| v * alpha).collect();
            let p = SmoothingParams::default();
            let a = extract_attributes(&normalize_slice(slice(30, 4, raw)), 3, &p).unwrap();
            let b = extract_attributes(&normalize_slice(slice(30, 4, scaled)), 3, &p).unwrap();
            for (x, y) in a.iter().zip(&b) {
                for (u, v) in x.values().iter().zip(y.values()) {
                    prop_assert!((u - v).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn constant_slice_attributes_independent_of_rows(rows in 8usize..80, c in 0.01f64..10.0) {
            let p = SmoothingParams::default();
            let a = extract_attributes(&normalize_slice(slice(rows, 4, vec![c; rows * 4])), 1, &p).unwrap();
            let b = extract_attributes(&normalize_slice(slice(8, 4, vec![c; 32])), 1, &p).unwrap();
            for (u, v) in a[0].values().iter().zip(b[0].values()) {
                prop_assert!((u - v).abs() <= 1e-12);
            }
        }
    }
}
