//! Stratified splitting and k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gbdt::{GbdtModel, GbdtParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{classification_report, ClassificationReport};

fn shuffled_by_class(y: &[usize], n_classes: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        by_class[c].push(i);
    }
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    by_class
}

/// Fold id per sample. Each class is shuffled and dealt round-robin, the
/// dealing position carrying over between classes so fold sizes stay even.
pub fn stratified_folds(y: &[usize], n_classes: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidParameter("folds must be at least 2".into()));
    }
    if y.len() < folds {
        return Err(Error::InvalidParameter(format!("{} samples cannot fill {folds} folds", y.len())));
    }
    let mut out = vec![0; y.len()];
    let mut next = 0;
    for (c, members) in shuffled_by_class(y, n_classes, seed).iter().enumerate() {
        if !members.is_empty() && members.len() < folds {
            log::warn!("class {c} has {} samples, fewer than {folds} folds", members.len());
        }
        for &i in members {
            out[i] = next % folds;
            next += 1;
        }
    }
    Ok(out)
}

/// Stratified train/test index split.
pub fn stratified_split(y: &[usize], n_classes: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in shuffled_by_class(y, n_classes, seed) {
        let k = (members.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub report: ClassificationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    /// Report over the concatenated out-of-fold predictions.
    pub pooled: ClassificationReport,
    pub mean_accuracy: f64,
}

fn take_rows(x: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_rows(&idx.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>())
}

pub fn cross_validate(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    folds: usize,
    seed: u64,
    params: &GbdtParams,
) -> Result<CvReport> {
    let ids = stratified_folds(y, n_classes, folds, seed)?;
    cross_validate_with_folds(x, y, n_classes, &ids, params)
}

/// Cross-validation over caller-supplied fold ids.
pub fn cross_validate_with_folds(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    fold_ids: &[usize],
    params: &GbdtParams,
) -> Result<CvReport> {
    if fold_ids.len() != y.len() || x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: fold_ids.len().min(x.rows()),
        });
    }
    let n_folds = fold_ids.iter().copied().max().map_or(0, |m| m + 1);
    let results: Vec<Result<(FoldResult, Vec<(usize, usize)>)>> = (0..n_folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..y.len()).filter(|&i| fold_ids[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| fold_ids[i] == f).collect();
            let ty: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let model = GbdtModel::train(&take_rows(x, &train), &ty, n_classes, params)?;
            let mut pairs = Vec::with_capacity(test.len());
            for &i in &test {
                pairs.push((i, model.predict(x.row(i))?.0));
            }
            let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let truth: Vec<usize> = test.iter().map(|&i| y[i]).collect();
            Ok((
                FoldResult {
                    fold: f,
                    train_size: train.len(),
                    test_size: test.len(),
                    report: classification_report(&pred, &truth, n_classes)?,
                },
                pairs,
            ))
        })
        .collect();
    let mut folds = Vec::new();
    let mut pooled_pairs = Vec::new();
    for r in results {
        let (fold, pairs) = r?;
        folds.push(fold);
        pooled_pairs.extend(pairs);
    }
    pooled_pairs.sort_unstable();
    let pred: Vec<usize> = pooled_pairs.iter().map(|p| p.1).collect();
    let truth: Vec<usize> = pooled_pairs.iter().map(|p| y[p.0]).collect();
    let mean_accuracy = folds.iter().map(|f| f.report.accuracy).sum::<f64>() / folds.len().max(1) as f64;
    Ok(CvReport {
        pooled: classification_report(&pred, &truth, n_classes)?,
        folds,
        mean_accuracy,
    })
}
