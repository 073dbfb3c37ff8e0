use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{class_counts, Sample};
use crate::error::{Result, SmrError};
use crate::labeling::CLASS_COUNT;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices (into `members`) of the `k` nearest same-class neighbours of
/// `members[at]`, excluding itself; ties to the lower index.
fn nearest(samples: &[Sample], members: &[usize], at: usize, k: usize) -> Vec<usize> {
    let origin = &samples[members[at]].features;
    let mut d: Vec<(f64, usize)> = members
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != at)
        .map(|(m, &i)| (sq_dist(origin, &samples[i].features), m))
        .collect();
    d.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|e| e.1).collect()
}

/// Oversample every present class up to the majority count.
///
/// Originals come first and are returned unchanged. Each synthetic row is
/// `x + u * (x_nn - x)` with `u ~ U(0, 1)`, where `x` cycles through the
/// class members and `x_nn` is one of its `neighbors` nearest same-class
/// points (clipped to class size - 1).
pub fn smote_oversample(samples: &[Sample], neighbors: usize, seed: u64) -> Result<Vec<Sample>> {
    if neighbors == 0 {
        return Err(SmrError::Config("SMOTE needs at least one neighbour".into()));
    }
    let counts = class_counts(samples);
    if let Some(c) = (0..CLASS_COUNT).find(|&c| counts[c] == 1) {
        return Err(SmrError::Data(format!(
            "class {c} has a single sample; SMOTE needs at least two"
        )));
    }
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = samples.to_vec();
    for (class, &count) in counts.iter().enumerate() {
        let missing = target - count;
        if count == 0 || missing == 0 {
            continue;
        }
        let members: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].class == class).collect();
        let k = neighbors.min(members.len() - 1);
        let neighbour_lists: Vec<Vec<usize>> =
            (0..members.len()).map(|m| nearest(samples, &members, m, k)).collect();
        for n in 0..missing {
            let at = n % members.len();
            let nn = neighbour_lists[at][rng.random_range(0..k)];
            let u: f64 = rng.random();
            let x = &samples[members[at]].features;
            let y = &samples[members[nn]].features;
            let features = x.iter().zip(y).map(|(a, b)| a + u * (b - a)).collect();
            out.push(Sample::new(features, class));
        }
    }
    Ok(out)
}
