//! Frame-level classification metrics and boundary detection scores.

use serde::{Deserialize, Serialize};

use crate::data_model::Action;
use crate::error::{Error, Result};

/// A ratio whose denominator may be empty. Undefined values read as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub undefined: bool,
}

impl Ratio {
    pub fn new(num: f64, den: f64) -> Self {
        if den > 0.0 {
            Self {
                value: num / den,
                undefined: false,
            }
        } else {
            Self {
                value: 0.0,
                undefined: true,
            }
        }
    }

    fn f1(p: Ratio, r: Ratio) -> Ratio {
        Ratio::new(2.0 * p.value * r.value, p.value + r.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
    pub jaccard: Ratio,
    /// Ground-truth count.
    pub support: usize,
    pub predicted: usize,
}

/// Confusion-matrix report. Macro averages cover classes that occur in the
/// prediction or the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// `confusion[truth][pred]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassStats>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Mean per-class intersection over union.
    pub jaccard: f64,
    pub included: Vec<bool>,
}

pub fn classification_report(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<ClassificationReport> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &g) in pred.iter().zip(truth) {
        if p >= n_classes || g >= n_classes {
            return Err(Error::Validation(format!("label out of range for {n_classes} classes")));
        }
        confusion[g][p] += 1;
    }
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let mut per_class = Vec::with_capacity(n_classes);
    let mut included = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let tp = confusion[c][c] as f64;
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..n_classes).map(|g| confusion[g][c]).sum();
        let precision = Ratio::new(tp, predicted as f64);
        let recall = Ratio::new(tp, support as f64);
        per_class.push(ClassStats {
            precision,
            recall,
            f1: Ratio::f1(precision, recall),
            jaccard: Ratio::new(tp, (support + predicted) as f64 - tp),
            support,
            predicted,
        });
        included.push(support + predicted > 0);
    }
    let macro_of = |f: &dyn Fn(&ClassStats) -> f64| {
        let vals: Vec<f64> = per_class.iter().zip(&included).filter(|(_, i)| **i).map(|(s, _)| f(s)).collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    Ok(ClassificationReport {
        accuracy: Ratio::new(correct as f64, pred.len() as f64).value,
        macro_precision: macro_of(&|s| s.precision.value),
        macro_recall: macro_of(&|s| s.recall.value),
        macro_f1: macro_of(&|s| s.f1.value),
        jaccard: macro_of(&|s| s.jaccard.value),
        confusion,
        per_class,
        included,
    })
}

pub type FrameMetrics = ClassificationReport;

/// Frame-level metrics over the four actions.
pub fn frame_metrics(pred: &[Action], truth: &[Action]) -> Result<FrameMetrics> {
    let p: Vec<usize> = pred.iter().map(|a| a.index()).collect();
    let g: Vec<usize> = truth.iter().map(|a| a.index()).collect();
    classification_report(&p, &g, Action::ALL.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMetrics {
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
    pub matched: usize,
    pub predicted: usize,
    pub truth: usize,
    pub tolerance: usize,
}

/// One-to-one matching of predicted to true boundaries within `tolerance`
/// frames. Both lists are sorted first; on a line the left-to-right greedy
/// match is a maximum matching.
pub fn boundary_metrics(pred: &[usize], truth: &[usize], tolerance: usize) -> BoundaryMetrics {
    let mut p = pred.to_vec();
    let mut g = truth.to_vec();
    p.sort_unstable();
    g.sort_unstable();
    let (mut i, mut j, mut matched) = (0, 0, 0);
    while i < p.len() && j < g.len() {
        if p[i].abs_diff(g[j]) <= tolerance {
            matched += 1;
            i += 1;
            j += 1;
        } else if p[i] < g[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    let precision = Ratio::new(matched as f64, p.len() as f64);
    let recall = Ratio::new(matched as f64, g.len() as f64);
    BoundaryMetrics {
        precision,
        recall,
        f1: Ratio::f1(precision, recall),
        matched,
        predicted: p.len(),
        truth: g.len(),
        tolerance,
    }
}
