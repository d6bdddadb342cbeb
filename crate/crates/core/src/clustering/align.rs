//! Mapping cluster ids to action names.

use serde::{Deserialize, Serialize};

use crate::data_model::{Action, InstrumentClass};
use crate::error::{Error, Result};
use crate::hungarian;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Action per cluster; `None` for clusters left out of the matching.
    pub mapping: Vec<Option<Action>>,
    /// Per-frame predicted actions after mapping (unmapped clusters give NoAction).
    pub mapped: Vec<Action>,
    /// `contingency[c][a]`: frames of cluster `c` labeled `a`.
    pub contingency: Vec<[usize; 4]>,
}

/// One-to-one cluster-to-action mapping that maximizes the number of
/// frames whose mapped cluster equals the true action.
pub fn align_clusters(frame_clusters: &[usize], k: usize, truth: &[Action]) -> Result<Alignment> {
    if frame_clusters.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: frame_clusters.len(),
        });
    }
    let mut contingency = vec![[0usize; 4]; k];
    for (&c, a) in frame_clusters.iter().zip(truth) {
        if c >= k {
            return Err(Error::Validation(format!("cluster id {c} out of range for k = {k}")));
        }
        contingency[c][a.index()] += 1;
    }
    let max = contingency.iter().flatten().copied().max().unwrap_or(0) as f64;
    let cost: Vec<Vec<f64>> = contingency
        .iter()
        .map(|row| row.iter().map(|&v| max - v as f64).collect())
        .collect();
    let mapping: Vec<Option<Action>> = hungarian::solve(&cost)
        .into_iter()
        .map(|a| a.and_then(Action::from_index))
        .collect();
    for (c, m) in mapping.iter().enumerate() {
        if m.is_none() {
            log::warn!("cluster {c} has no action under one-to-one matching; labeling it NoAction");
        }
    }
    let mapped = frame_clusters
        .iter()
        .map(|&c| mapping[c].unwrap_or(Action::NoAction))
        .collect();
    Ok(Alignment {
        mapping,
        mapped,
        contingency,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticLabels {
    pub actions: Vec<Action>,
    /// Rules that had to fall back to the lowest cluster index.
    pub ties: Vec<String>,
}

/// Picks the lowest-index cluster among `candidates` maximizing `score`
/// and records a tie note when several share the best value.
fn pick(candidates: &[usize], score: impl Fn(usize) -> f64, rule: &str, ties: &mut Vec<String>) -> Option<usize> {
    let best = candidates.iter().copied().map(&score).fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = candidates.iter().copied().filter(|&c| score(c) == best).collect();
    if winners.len() > 1 {
        log::warn!("{rule}: clusters {winners:?} tie; taking {}", winners[0]);
        ties.push(format!("{rule}: clusters {winners:?} tie, took {}", winners[0]));
    }
    winners.first().copied()
}

/// Names clusters from their mean instrument presence: the most scissors
/// is Cutting, the least total presence is NoAction, then needle presence
/// separates NeedleDriving (higher) from KnotTying.
///
/// `mask` holds one presence column per entry of `instruments`.
pub fn semantic_label(mask: &Matrix, instruments: &[u32]) -> Result<SemanticLabels> {
    if mask.cols() != instruments.len() {
        return Err(Error::DimensionMismatch {
            expected: instruments.len(),
            got: mask.cols(),
        });
    }
    let class_of = |j: usize| InstrumentClass::from_index(instruments[j] as usize);
    let scissors = |c: usize| {
        (0..mask.cols())
            .filter(|&j| class_of(j).is_some_and(InstrumentClass::is_scissors))
            .map(|j| mask.get(c, j))
            .sum::<f64>()
    };
    let needle = |c: usize| {
        (0..mask.cols())
            .filter(|&j| class_of(j) == Some(InstrumentClass::Needle))
            .map(|j| mask.get(c, j))
            .sum::<f64>()
    };
    let total = |c: usize| mask.row(c).iter().sum::<f64>();

    let k = mask.rows();
    let mut remaining: Vec<usize> = (0..k).collect();
    let mut actions = vec![Action::KnotTying; k];
    let mut ties = Vec::new();
    if let Some(c) = pick(&remaining, scissors, "cutting", &mut ties) {
        actions[c] = Action::Cutting;
        remaining.retain(|&r| r != c);
    }
    if let Some(c) = pick(&remaining, |c| -total(c), "no action", &mut ties) {
        actions[c] = Action::NoAction;
        remaining.retain(|&r| r != c);
    }
    if let Some(c) = pick(&remaining, needle, "needle driving", &mut ties) {
        actions[c] = Action::NeedleDriving;
    }
    Ok(SemanticLabels { actions, ties })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn permuted_labels_align_perfectly() {
        let truth: Vec<Action> = (0..40).map(|t| Action::from_index(t / 10).unwrap()).collect();
        let clusters: Vec<usize> = (0..40).map(|t| [2, 0, 3, 1][t / 10]).collect();
        let a = align_clusters(&clusters, 4, &truth).unwrap();
        assert_eq!(a.mapped, truth);
    }

    #[test]
    fn split_cluster_takes_larger_overlap() {
        let truth = [
            Action::Cutting,
            Action::Cutting,
            Action::Cutting,
            Action::KnotTying,
        ];
        let a = align_clusters(&[0, 0, 0, 0], 1, &truth).unwrap();
        assert_eq!(a.mapping, vec![Some(Action::Cutting)]);
    }

    #[test]
    fn extra_clusters_become_no_action() {
        let truth = vec![Action::Cutting; 6];
        let a = align_clusters(&[0, 1, 2, 3, 4, 4], 5, &truth).unwrap();
        assert_eq!(a.mapping.iter().filter(|m| m.is_none()).count(), 1);
    }

    #[test]
    fn one_hot_masks_label_cleanly() {
        // instruments: scissors_c, needle_driver_c, needle_driver_s, needle
        let ids = [0, 2, 3, 4];
        let mask = Matrix::from_rows(&[
            [0.0, 1.0, 1.0, 0.0],
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 1.0, 1.0],
        ]);
        let s = semantic_label(&mask, &ids).unwrap();
        assert_eq!(
            s.actions,
            vec![Action::KnotTying, Action::Cutting, Action::NoAction, Action::NeedleDriving]
        );
        assert!(s.ties.is_empty());
    }

    #[test]
    fn equal_masks_tie_by_index() {
        let mask = Matrix::from_rows(&vec![[0.5, 0.5]; 4]);
        let s = semantic_label(&mask, &[0, 4]).unwrap();
        assert_eq!(s.actions[0], Action::Cutting);
        assert_eq!(s.actions[1], Action::NoAction);
        assert_eq!(s.actions[2], Action::NeedleDriving);
        assert_eq!(s.actions[3], Action::KnotTying);
        assert_eq!(s.ties.len(), 3);
    }

    proptest! {
        #[test]
        fn matches_permutation_search(table in prop::collection::vec(prop::collection::vec(0usize..20, 4), 4)) {
            let mut clusters = Vec::new();
            let mut truth = Vec::new();
            for (c, row) in table.iter().enumerate() {
                for (a, &n) in row.iter().enumerate() {
                    clusters.extend(std::iter::repeat_n(c, n));
                    truth.extend(std::iter::repeat_n(Action::from_index(a).unwrap(), n));
                }
            }
            let al = align_clusters(&clusters, 4, &truth).unwrap();
            let got: usize = al.mapping.iter().enumerate().map(|(c, a)| table[c][a.unwrap().index()]).sum();
            let best = permutations(4).iter().map(|p| (0..4).map(|c| table[c][p[c]]).sum::<usize>()).max().unwrap();
            prop_assert_eq!(got, best);
        }
    }
}
