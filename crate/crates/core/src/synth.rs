//! Seeded synthetic distance matrices with known ground truth.
//!
//! Query `j` truly matches reference `j`. Each query column is a flat
//! background of 1 plus Gaussian noise, with a wide valley centred on the
//! true reference. Alias bands add narrow, deeper diagonal valleys at a wrong
//! reference offset, which pull sequence matching away from the truth, and
//! bursts erase the true valley for a run of queries. Noise is drawn from
//! `ChaCha8Rng` in column-major order, and every entry is rounded to `f32`
//! so scenarios survive the binary format unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmrError};
use crate::matrixio::{DistanceMatrix, GroundTruth};

/// Smallest distance the generator emits.
const FLOOR: f64 = 1e-3;
/// Rows on each side of a valley centre that receive any depth.
const REACH: f64 = 3.0;

/// A false diagonal trajectory: query `query_start + k` sees a valley at
/// reference `ref_start + k` for `k < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AliasBand {
    pub ref_start: usize,
    pub query_start: usize,
    pub len: usize,
    pub strength: f64,
    pub width: f64,
}

/// Queries `start..start + len` lose their true valley.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Burst {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioSpec {
    pub name: String,
    pub refs: usize,
    pub queries: usize,
    pub noise_sigma: f64,
    pub valley_depth: f64,
    /// Gaussian width of the true valley, in reference frames.
    pub valley_width: f64,
    /// Per-query valley depth is `valley_depth * U(1 - jitter, 1 + jitter)`.
    pub depth_jitter: f64,
    pub alias_bands: Vec<AliasBand>,
    pub bursts: Vec<Burst>,
    pub tolerance: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn clean(name: &str, size: usize, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            refs: size,
            queries: size,
            noise_sigma: 0.0,
            valley_depth: 0.4,
            valley_width: 2.0,
            depth_jitter: 0.0,
            alias_bands: Vec::new(),
            bursts: Vec::new(),
            tolerance: 2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SmrError::Spec(format!("{}: {msg}", self.name)));
        if self.refs != self.queries {
            return bad(format!("needs as many references as queries, got {}x{}", self.refs, self.queries));
        }
        if self.queries == 0 {
            return bad("empty scenario".into());
        }
        let non_negative = [
            ("noise sigma", self.noise_sigma),
            ("valley depth", self.valley_depth),
        ];
        for (what, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{what} must be non-negative, got {v}"));
            }
        }
        if !(self.valley_width > 0.0 && self.valley_width.is_finite()) {
            return bad(format!("valley width must be positive, got {}", self.valley_width));
        }
        if !(0.0..=1.0).contains(&self.depth_jitter) {
            return bad(format!("depth jitter must lie in [0, 1], got {}", self.depth_jitter));
        }
        for b in &self.alias_bands {
            if b.ref_start + b.len > self.refs || b.query_start + b.len > self.queries {
                return bad(format!("alias band {b:?} leaves the matrix"));
            }
            if !(b.strength >= 0.0 && b.strength.is_finite() && b.width > 0.0 && b.width.is_finite()) {
                return bad(format!("alias band {b:?} needs non-negative strength and positive width"));
            }
        }
        for b in &self.bursts {
            if b.start + b.len > self.queries {
                return bad(format!("burst {b:?} leaves the matrix"));
            }
        }
        Ok(())
    }
}

fn add_valley(column: &mut [f64], centre: f64, depth: f64, width: f64) {
    let reach = (REACH * width).ceil();
    let lo = (centre - reach).max(0.0) as usize;
    let hi = ((centre + reach) as usize).min(column.len() - 1);
    for (i, v) in column.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let d = i as f64 - centre;
        *v -= depth * (-d * d / (2.0 * width * width)).exp();
    }
}

/// Build the matrix and its identity ground truth.
pub fn generate(spec: &ScenarioSpec) -> Result<(DistanceMatrix, GroundTruth)> {
    spec.validate()?;
    let (r, q) = (spec.refs, spec.queries);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| SmrError::Spec(e.to_string()))?;

    let mut burst = vec![false; q];
    for b in &spec.bursts {
        burst[b.start..b.start + b.len].iter_mut().for_each(|x| *x = true);
    }

    let mut columns = vec![0.0; r * q];
    for (j, column) in columns.chunks_mut(r).enumerate() {
        let jitter = if spec.depth_jitter > 0.0 {
            rng.random_range(1.0 - spec.depth_jitter..=1.0 + spec.depth_jitter)
        } else {
            1.0
        };
        for v in column.iter_mut() {
            *v = 1.0 + noise.sample(&mut rng);
        }
        if !burst[j] {
            add_valley(column, j as f64, spec.valley_depth * jitter, spec.valley_width);
        }
        for b in &spec.alias_bands {
            if (b.query_start..b.query_start + b.len).contains(&j) {
                let centre = (b.ref_start + j - b.query_start) as f64;
                add_valley(column, centre, b.strength, b.width);
            }
        }
    }
    let matrix = DistanceMatrix::from_fn(r, q, |i, j| columns[j * r + i].max(FLOOR) as f32 as f64)?
        .with_meta("synth", spec.name.clone())
        .with_meta("seed", spec.seed.to_string());
    Ok((matrix, GroundTruth::identity(q, spec.tolerance)))
}

/// A generated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub matrix: DistanceMatrix,
    pub truth: GroundTruth,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.spec.name
    }
}

pub const BATTERY_SIZE: usize = 600;
pub const BATTERY_SCENARIOS: usize = 8;

/// Place `count` non-overlapping `(start, len)` runs inside `margin..limit - margin`.
fn place_runs(rng: &mut ChaCha8Rng, count: usize, lens: std::ops::RangeInclusive<usize>, limit: usize, margin: usize, taken: &mut Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < 10_000 {
        attempts += 1;
        let len = rng.random_range(lens.clone());
        let start = rng.random_range(margin..limit - margin - len);
        // keep a gap of `margin` frames so tails do not run into the next event
        let clash = taken
            .iter()
            .any(|&(s, l)| start < s + l + margin && s < start + len + margin);
        if !clash {
            taken.push((start, len));
            out.push((start, len));
        }
    }
    out
}

/// Specs of the fixed battery. `noise_scale` multiplies every scenario's
/// noise sigma without changing its layout.
pub fn battery_specs(seed: u64, noise_scale: f64) -> Vec<ScenarioSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = BATTERY_SIZE;
    (0..BATTERY_SCENARIOS)
        .map(|k| {
            let noise_sigma = [0.04, 0.06, 0.08, 0.1][k % 4];
            let mut taken = Vec::new();
            let alias_bands = place_runs(&mut rng, 5 + k % 3, 6..=24, n, 12, &mut taken)
                .into_iter()
                .map(|(start, len)| {
                    // alias at least 60 frames away from the truth
                    let ref_start = loop {
                        let r = rng.random_range(0..=n - len);
                        if r.abs_diff(start) >= 60 {
                            break r;
                        }
                    };
                    AliasBand {
                        ref_start,
                        query_start: start,
                        len,
                        strength: rng.random_range(0.45..0.8),
                        width: rng.random_range(0.5..2.5),
                    }
                })
                .collect();
            let bursts = place_runs(&mut rng, 4 + k % 2, 1..=3, n, 12, &mut taken)
                .into_iter()
                .map(|(start, len)| Burst { start, len })
                .collect();
            ScenarioSpec {
                name: format!("battery-{k}"),
                refs: n,
                queries: n,
                noise_sigma: noise_sigma * noise_scale,
                valley_depth: 0.35,
                valley_width: rng.random_range(1.5..3.0),
                depth_jitter: 0.5,
                alias_bands,
                bursts,
                tolerance: 2,
                seed: seed.wrapping_mul(1000).wrapping_add(k as u64),
            }
        })
        .collect()
}

pub fn generate_all(specs: &[ScenarioSpec]) -> Result<Vec<Scenario>> {
    specs
        .iter()
        .map(|spec| {
            let (matrix, truth) = generate(spec)?;
            Ok(Scenario { spec: spec.clone(), matrix, truth })
        })
        .collect()
}

pub fn scenario_battery(seed: u64) -> Result<Vec<Scenario>> {
    generate_all(&battery_specs(seed, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BatteryManifest {
    pub seed: u64,
    pub scenarios: Vec<BatteryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BatteryEntry {
    pub matrix_file: String,
    pub truth_file: String,
    pub spec: ScenarioSpec,
}

/// Fraction of queries whose single-frame best match is within tolerance.
pub fn single_frame_accuracy(matrix: &DistanceMatrix, truth: &GroundTruth) -> f64 {
    let hits = (0..matrix.cols())
        .filter(|&j| {
            let best = matrix
                .column(j)
                .enumerate()
                .fold((f64::INFINITY, 0), |b, (i, v)| if v < b.0 { (v, i) } else { b })
                .1;
            truth.is_correct(j, best)
        })
        .count();
    hits as f64 / matrix.cols() as f64
}
