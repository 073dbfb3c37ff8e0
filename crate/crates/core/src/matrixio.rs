//! Distance matrices, ground truth and per-query slices.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "SMRM" | version: u16 = 1 | rows: u32 | cols: u32 | rows*cols f32, row-major
//! [ "META" | len: u32 | len bytes of UTF-8 "key=value\n" lines ]   (optional)
//! ```
//!
//! Lower values mean more similar. Entries may be negative but must be finite.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Result, SmrError};

pub const MAGIC: &[u8; 4] = b"SMRM";
pub const META_MAGIC: &[u8; 4] = b"META";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

/// On-disk encoding of a [`DistanceMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

impl MatrixFormat {
    /// Guess the format from a file extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

/// Dense `rows x cols` matrix of reference-vs-query distances, row-major.
///
/// Row `i` is reference frame `i`, column `j` is query frame `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

impl DistanceMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(SmrError::Shape(format!(
                "matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(SmrError::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(SmrError::Format(format!(
                "non-finite entry at row {}, col {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            meta: BTreeMap::new(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self::new(rows, cols, values)
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.values[i * self.cols + col])
    }

    /// Entry-wise multiply by a constant.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = Self::new(
            self.rows,
            self.cols,
            self.values.iter().map(|v| v * factor).collect(),
        )?;
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Restrict to a contiguous range of query columns.
    pub fn columns(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.cols {
            return Err(SmrError::Range(format!(
                "column range {range:?} outside 0..{}",
                self.cols
            )));
        }
        let width = range.end - range.start;
        let mut values = Vec::with_capacity(self.rows * width);
        for i in 0..self.rows {
            let row = &self.values[i * self.cols..(i + 1) * self.cols];
            values.extend_from_slice(&row[range.clone()]);
        }
        let mut out = Self::new(self.rows, width, values)?;
        out.meta = self.meta.clone();
        Ok(out)
    }
}

/// Reference index of the true match for each query, plus a frame tolerance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    mapping: Vec<usize>,
    pub tolerance: usize,
}

impl GroundTruth {
    pub fn new(mapping: Vec<usize>, tolerance: usize) -> Self {
        Self { mapping, tolerance }
    }

    /// The one-to-one `g(j) = j` correspondence.
    pub fn identity(len: usize, tolerance: usize) -> Self {
        Self::new((0..len).collect(), tolerance)
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn reference_for(&self, query: usize) -> usize {
        self.mapping[query]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn with_tolerance(&self, tolerance: usize) -> Self {
        Self::new(self.mapping.clone(), tolerance)
    }

    /// Whether proposing `reference` for `query` counts as a correct match.
    pub fn is_correct(&self, query: usize, reference: usize) -> bool {
        self.mapping[query].abs_diff(reference) <= self.tolerance
    }

    /// Check that every query has a true reference inside `0..rows` and that
    /// the mapping covers exactly `cols` queries.
    pub fn validate_against(&self, matrix: &DistanceMatrix) -> Result<()> {
        if self.mapping.len() != matrix.cols() {
            return Err(SmrError::Shape(format!(
                "ground truth covers {} queries, matrix has {}",
                self.mapping.len(),
                matrix.cols()
            )));
        }
        if let Some((j, &g)) = self
            .mapping
            .iter()
            .enumerate()
            .find(|(_, &g)| g >= matrix.rows())
        {
            return Err(SmrError::Range(format!(
                "query {j} maps to reference {g}, matrix has {} rows",
                matrix.rows()
            )));
        }
        Ok(())
    }
}

/// The `R x L` window of a distance matrix ending at query `j`.
///
/// Column `L - 1` is the current query; columns `0..L-1` are its
/// predecessors, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySlice {
    pub query: usize,
    pub seq_len: usize,
    rows: usize,
    values: Vec<f64>,
    pub normalized: bool,
}

impl QuerySlice {
    /// Build a slice directly from row-major `rows x seq_len` values.
    pub fn from_values(query: usize, seq_len: usize, values: Vec<f64>) -> Result<Self> {
        if seq_len == 0 || values.is_empty() || !values.len().is_multiple_of(seq_len) {
            return Err(SmrError::Shape(format!(
                "{} values do not form rows of length {seq_len}",
                values.len()
            )));
        }
        Ok(Self {
            query,
            seq_len,
            rows: values.len() / seq_len,
            values,
            normalized: false,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.seq_len + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.seq_len..(row + 1) * self.seq_len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Copy out the window of `seq_len` columns ending at `query`.
pub fn slice_query(matrix: &DistanceMatrix, query: usize, seq_len: usize) -> Result<QuerySlice> {
    if seq_len == 0 {
        return Err(SmrError::Range("sequence length must be at least 1".into()));
    }
    if seq_len > matrix.rows() {
        return Err(SmrError::Range(format!(
            "sequence length {seq_len} exceeds {} reference rows",
            matrix.rows()
        )));
    }
    if query >= matrix.cols() || query + 1 < seq_len {
        return Err(SmrError::Range(format!(
            "query {query} has no full history of {seq_len} frames in {} columns",
            matrix.cols()
        )));
    }
    let start = query + 1 - seq_len;
    let mut values = Vec::with_capacity(matrix.rows() * seq_len);
    for r in 0..matrix.rows() {
        let base = r * matrix.cols() + start;
        values.extend_from_slice(&matrix.values()[base..base + seq_len]);
    }
    Ok(QuerySlice {
        query,
        seq_len,
        rows: matrix.rows(),
        values,
        normalized: false,
    })
}

/// Divide every entry by the slice's largest absolute value.
///
/// An all-zero slice is returned unchanged (but flagged normalized).
pub fn normalize_slice(mut slice: QuerySlice) -> QuerySlice {
    let max = slice.max_abs();
    if max > 0.0 {
        slice.values.iter_mut().for_each(|v| *v /= max);
    }
    slice.normalized = true;
    slice
}

// ---------------------------------------------------------------------------
// Binary and CSV codecs

pub fn encode_binary(matrix: &DistanceMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * matrix.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.rows as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.cols as u32).to_le_bytes());
    for v in &matrix.values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    if !matrix.meta.is_empty() {
        let mut text = String::new();
        for (k, v) in &matrix.meta {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        out.extend_from_slice(META_MAGIC);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<DistanceMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(SmrError::Format(format!(
            "file too short for header: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(SmrError::Format("bad magic, expected SMRM".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(SmrError::Format(format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(SmrError::Format(format!("empty dimensions {rows}x{cols}")));
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| SmrError::Format("dimension overflow".into()))?;
    let payload_end = HEADER_LEN + 4 * count;
    if bytes.len() < payload_end {
        return Err(SmrError::Format(format!(
            "header declares {rows}x{cols} = {count} floats, payload has {} bytes",
            bytes.len() - HEADER_LEN
        )));
    }
    let mut values = Vec::with_capacity(count);
    for (idx, chunk) in bytes[HEADER_LEN..payload_end].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(SmrError::Format(format!(
                "non-finite entry at row {}, col {}",
                idx / cols,
                idx % cols
            )));
        }
        values.push(v as f64);
    }
    let mut matrix = DistanceMatrix::new(rows, cols, values)?;

    let rest = &bytes[payload_end..];
    if !rest.is_empty() {
        if rest.len() < 8 || &rest[0..4] != META_MAGIC {
            return Err(SmrError::Format(format!(
                "header declares {rows}x{cols} = {count} floats, found {} trailing bytes",
                rest.len()
            )));
        }
        let len = u32::from_le_bytes(rest[4..8].try_into().unwrap()) as usize;
        if rest.len() != 8 + len {
            return Err(SmrError::Format("metadata length mismatch".into()));
        }
        let text = std::str::from_utf8(&rest[8..])
            .map_err(|_| SmrError::Format("metadata is not UTF-8".into()))?;
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SmrError::Format(format!("bad metadata line {line:?}")))?;
            matrix.meta.insert(k.to_string(), v.to_string());
        }
    }
    Ok(matrix)
}

pub fn encode_csv(matrix: &DistanceMatrix) -> String {
    let mut out = String::new();
    for i in 0..matrix.rows {
        let row = &matrix.values[i * matrix.cols..(i + 1) * matrix.cols];
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_csv(text: &str) -> Result<DistanceMatrix> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for (j, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                SmrError::Format(format!("row {i}, col {j}: cannot parse {cell:?}"))
            })?;
            if !v.is_finite() {
                return Err(SmrError::Format(format!("non-finite entry at row {i}, col {j}")));
            }
            values.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(SmrError::Format(format!(
                    "row {i} has {count} values, expected {c}"
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| SmrError::Format("empty csv matrix".into()))?;
    DistanceMatrix::new(rows, cols, values)
}

pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<DistanceMatrix> {
    let path = path.as_ref();
    match format {
        MatrixFormat::Binary => decode_binary(&fs::read(path)?),
        MatrixFormat::Csv => decode_csv(&fs::read_to_string(path)?),
    }
}

pub fn save_matrix(matrix: &DistanceMatrix, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        MatrixFormat::Binary => fs::write(path, encode_binary(matrix))?,
        MatrixFormat::Csv => fs::write(path, encode_csv(matrix))?,
    }
    Ok(())
}

/// Read a `query,reference` CSV. The tolerance is not part of the file.
pub fn load_ground_truth(path: impl AsRef<Path>, tolerance: usize) -> Result<GroundTruth> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut pairs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if n == 0 {
            if line.replace(' ', "") != "query,reference" {
                return Err(SmrError::Format(format!(
                    "ground truth header must be \"query,reference\", got {line:?}"
                )));
            }
            continue;
        }
        let (q, r) = line
            .split_once(',')
            .ok_or_else(|| SmrError::Format(format!("line {n}: expected two fields")))?;
        let q: usize = q
            .trim()
            .parse()
            .map_err(|_| SmrError::Format(format!("line {n}: bad query index")))?;
        let r: usize = r
            .trim()
            .parse()
            .map_err(|_| SmrError::Format(format!("line {n}: bad reference index")))?;
        pairs.push((q, r));
    }
    pairs.sort_unstable();
    for (expected, &(q, _)) in pairs.iter().enumerate() {
        if q != expected {
            return Err(SmrError::Format(format!(
                "ground truth must list every query once; missing or duplicate query {expected}"
            )));
        }
    }
    Ok(GroundTruth::new(pairs.into_iter().map(|(_, r)| r).collect(), tolerance))
}

pub fn save_ground_truth(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "query,reference")?;
    for (q, r) in gt.mapping.iter().enumerate() {
        writeln!(w, "{q},{r}")?;
    }
    w.flush()?;
    Ok(())
}
