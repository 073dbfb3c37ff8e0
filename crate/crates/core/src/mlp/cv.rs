use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{class_counts, smote_oversample, train, Sample, TrainConfig};
use crate::error::{Result, SmrError};
use crate::labeling::CLASS_COUNT;

/// `matrix[truth][predicted]` counts.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize]) -> [[usize; CLASS_COUNT]; CLASS_COUNT] {
    let mut m = [[0; CLASS_COUNT]; CLASS_COUNT];
    for (&t, &p) in truth.iter().zip(predicted) {
        m[t][p] += 1;
    }
    m
}

/// F1 per class; a class never predicted and never present scores 0.
pub fn per_class_f1(truth: &[usize], predicted: &[usize]) -> [f64; CLASS_COUNT] {
    let m = confusion_matrix(truth, predicted);
    let mut out = [0.0; CLASS_COUNT];
    for (c, f1) in out.iter_mut().enumerate() {
        let tp = m[c][c];
        let actual: usize = m[c].iter().sum();
        let predicted: usize = (0..CLASS_COUNT).map(|t| m[t][c]).sum();
        if tp > 0 {
            *f1 = 2.0 * tp as f64 / (actual + predicted) as f64;
        }
    }
    out
}

/// Unweighted mean of the four per-class F1 scores.
pub fn macro_f1(truth: &[usize], predicted: &[usize]) -> f64 {
    per_class_f1(truth, predicted).iter().sum::<f64>() / CLASS_COUNT as f64
}

/// Assign each sample a fold in `0..folds` so that every class is spread
/// over the folds as evenly as possible (counts differ by at most one).
pub fn stratified_folds(samples: &[Sample], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(SmrError::Config(format!("need at least 2 folds, got {folds}")));
    }
    let counts = class_counts(samples);
    if let Some(c) = (0..CLASS_COUNT).find(|&c| counts[c] > 0 && counts[c] < folds) {
        return Err(SmrError::Data(format!(
            "class {c} has {} samples, fewer than {folds} folds",
            counts[c]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; samples.len()];
    let mut offset = 0;
    for class in 0..CLASS_COUNT {
        let mut members: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].class == class).collect();
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            assignment[i] = (offset + pos) % folds;
        }
        offset += members.len();
    }
    Ok(assignment)
}

#[derive(Debug, Clone, Serialize)]
pub struct KFoldReport {
    pub fold_f1: Vec<f64>,
    pub mean_f1: f64,
}

/// Stratified k-fold macro F1. Oversampling is applied to each training
/// split only; validation folds keep their natural class balance.
pub fn stratified_kfold_f1(samples: &[Sample], cfg: &TrainConfig, folds: usize, smote_neighbors: usize) -> Result<KFoldReport> {
    let assignment = stratified_folds(samples, folds, cfg.seed)?;
    let mut fold_f1 = Vec::with_capacity(folds);
    for fold in 0..folds {
        let (valid, train_set): (Vec<_>, Vec<_>) = samples
            .iter()
            .zip(&assignment)
            .partition(|(_, &f)| f == fold);
        let train_set: Vec<Sample> = train_set.into_iter().map(|(s, _)| s.clone()).collect();
        let balanced = smote_oversample(&train_set, smote_neighbors, cfg.seed.wrapping_add(fold as u64))?;
        let model = train(&balanced, cfg)?;
        let truth: Vec<usize> = valid.iter().map(|(s, _)| s.class).collect();
        let pred: Vec<usize> = valid.iter().map(|(s, _)| model.predict_class(&s.features)).collect();
        fold_f1.push(macro_f1(&truth, &pred));
    }
    let mean_f1 = fold_f1.iter().sum::<f64>() / folds as f64;
    Ok(KFoldReport { fold_f1, mean_f1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_from_confusion_counts() {
        // class 0: tp 2, fp 1, fn 0 -> 4/5; class 1: tp 1, fp 0, fn 1 -> 2/3
        let truth = [0, 0, 1, 1];
        let pred = [0, 0, 0, 1];
        let f = per_class_f1(&truth, &pred);
        assert!((f[0] - 0.8).abs() < 1e-15);
        assert!((f[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f[2], 0.0);
        assert!((macro_f1(&truth, &pred) - (0.8 + 2.0 / 3.0) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn constant_prediction_on_balanced_set() {
        let truth: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let pred = vec![2; 40];
        // class 2: precision 1/4, recall 1 -> F1 = 0.4
        assert!((macro_f1(&truth, &pred) - 0.4 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn folds_keep_class_proportions() {
        let samples: Vec<Sample> = (0..103).map(|i| Sample::new(vec![i as f64], [0, 0, 0, 1, 2, 3, 3][i % 7])).collect();
        let a = stratified_folds(&samples, 5, 3).unwrap();
        for class in 0..4 {
            let per_fold: Vec<usize> = (0..5)
                .map(|f| (0..103).filter(|&i| a[i] == f && samples[i].class == class).count())
                .collect();
            let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
            assert!(hi - lo <= 1, "class {class}: {per_fold:?}");
        }
    }

    #[test]
    fn too_few_samples_for_folds() {
        let samples: Vec<Sample> = (0..9).map(|i| Sample::new(vec![0.0], if i < 7 { 0 } else { 1 })).collect();
        assert!(matches!(stratified_folds(&samples, 3, 0), Err(SmrError::Data(_))));
        assert!(stratified_folds(&samples, 2, 0).is_ok());
        assert!(matches!(stratified_folds(&samples, 1, 0), Err(SmrError::Config(_))));
    }
}
