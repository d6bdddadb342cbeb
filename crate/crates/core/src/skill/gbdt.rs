//! Multiclass gradient-boosted regression trees with a softmax link.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            rounds: 200,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidParameter("max_depth and min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Regression tree; `x[feature] <= threshold` goes left. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= s;
            }
        }
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn best_split(x: &Matrix, r: &[f64], idx: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let n = idx.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = idx.iter().map(|&i| r[i]).sum();
    let base = total * total / n as f64;
    let mut best: Option<(usize, f64, f64, usize)> = None;
    let mut sorted = idx.to_vec();
    for f in 0..x.cols() {
        sorted.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += r[sorted[k]];
            let (lo, hi) = (x.get(sorted[k], f), x.get(sorted[k + 1], f));
            let n_left = k + 1;
            if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (n - n_left) as f64 - base;
            if gain > 1e-12 && best.is_none_or(|b| gain > b.2) {
                best = Some((f, lo + (hi - lo) / 2.0, gain, n_left));
            }
        }
    }
    let (feature, threshold, gain, _) = best?;
    let (left, right) = idx.iter().partition(|&&i| x.get(i, feature) <= threshold);
    Some(SplitChoice {
        feature,
        threshold,
        gain,
        left,
        right,
    })
}

/// Newton step for the multiclass deviance.
fn leaf_value(r: &[f64], idx: &[usize], n_classes: usize) -> f64 {
    let num: f64 = idx.iter().map(|&i| r[i]).sum();
    let den: f64 = idx.iter().map(|&i| r[i].abs() * (1.0 - r[i].abs())).sum();
    if den < 1e-12 {
        return 0.0;
    }
    (n_classes as f64 - 1.0) / n_classes as f64 * num / den
}

fn fit_tree(x: &Matrix, r: &[f64], n_classes: usize, params: &GbdtParams, gains: &mut [f64]) -> Tree {
    let mut nodes = Vec::new();
    build(x, r, (0..x.rows()).collect(), 0, n_classes, params, gains, &mut nodes);
    Tree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn build(
    x: &Matrix,
    r: &[f64],
    idx: Vec<usize>,
    depth: usize,
    n_classes: usize,
    params: &GbdtParams,
    gains: &mut [f64],
    nodes: &mut Vec<Node>,
) -> usize {
    let me = nodes.len();
    nodes.push(Node::Leaf {
        value: leaf_value(r, &idx, n_classes),
    });
    if depth >= params.max_depth {
        return me;
    }
    if let Some(s) = best_split(x, r, &idx, params.min_samples_leaf) {
        gains[s.feature] += s.gain;
        let left = build(x, r, s.left, depth + 1, n_classes, params, gains, nodes);
        let right = build(x, r, s.right, depth + 1, n_classes, params, gains, nodes);
        nodes[me] = Node::Split {
            feature: s.feature,
            threshold: s.threshold,
            left,
            right,
        };
    }
    me
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Negative gradient of the log loss: one-hot label minus probability.
pub fn residuals(scores: &Matrix, y: &[usize]) -> Matrix {
    let k = scores.cols();
    let mut r = Matrix::zeros(scores.rows(), k);
    for (i, row) in scores.iter_rows().enumerate() {
        let p = softmax(row);
        for c in 0..k {
            r.set(i, c, (y[i] == c) as u8 as f64 - p[c]);
        }
    }
    r
}

pub fn log_loss(scores: &Matrix, y: &[usize]) -> f64 {
    let n = scores.rows().max(1) as f64;
    scores
        .iter_rows()
        .zip(y)
        .map(|(row, &c)| -softmax(row)[c].max(1e-300).ln())
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub n_features: usize,
    pub n_classes: usize,
    pub params: GbdtParams,
    /// `trees[round][class]`, leaf values already scaled by the step taken.
    pub trees: Vec<Vec<Tree>>,
    /// Training log loss before the first round and after each round.
    pub loss_history: Vec<f64>,
    /// Normalized split-gain importances.
    pub feature_importance: Vec<f64>,
}

impl GbdtModel {
    /// Fits `params.rounds` rounds. Each round's step is halved until the
    /// training loss does not increase (dropped after 20 halvings).
    pub fn train(x: &Matrix, y: &[usize], n_classes: usize, params: &GbdtParams) -> Result<Self> {
        params.validate()?;
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                got: y.len(),
            });
        }
        if !x.is_finite() {
            return Err(Error::Validation("non-finite training feature".into()));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
            return Err(Error::Validation(format!("label {bad} out of range for {n_classes} classes")));
        }
        let mut seen = vec![false; n_classes];
        y.iter().for_each(|&c| seen[c] = true);
        if seen.iter().filter(|s| **s).count() < 2 {
            return Err(Error::Validation("training data must contain at least two classes".into()));
        }

        let n = x.rows();
        let mut scores = Matrix::zeros(n, n_classes);
        let mut loss = log_loss(&scores, y);
        let mut loss_history = vec![loss];
        let mut trees = Vec::with_capacity(params.rounds);
        let mut gains = vec![0.0; x.cols()];
        for _ in 0..params.rounds {
            let r = residuals(&scores, y);
            let fitted: Vec<(Tree, Vec<f64>)> = (0..n_classes)
                .into_par_iter()
                .map(|c| {
                    let rc = r.column(c);
                    let mut g = vec![0.0; x.cols()];
                    let mut t = fit_tree(x, &rc, n_classes, params, &mut g);
                    t.scale(params.learning_rate);
                    (t, g)
                })
                .collect();
            let deltas: Vec<Vec<f64>> = fitted
                .iter()
                .map(|(t, _)| x.iter_rows().map(|row| t.predict(row)).collect())
                .collect();
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..=20 {
                let mut trial = scores.clone();
                for i in 0..n {
                    for c in 0..n_classes {
                        trial.set(i, c, trial.get(i, c) + step * deltas[c][i]);
                    }
                }
                let l = log_loss(&trial, y);
                if l <= loss {
                    accepted = Some((trial, l));
                    break;
                }
                step /= 2.0;
            }
            let mut round = Vec::with_capacity(n_classes);
            match accepted {
                Some((trial, l)) => {
                    scores = trial;
                    loss = l;
                    for (mut t, g) in fitted {
                        t.scale(step);
                        gains.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                        round.push(t);
                    }
                }
                None => {
                    for (mut t, _) in fitted {
                        t.scale(0.0);
                        round.push(t);
                    }
                }
            }
            trees.push(round);
            loss_history.push(loss);
        }
        let total: f64 = gains.iter().sum();
        let feature_importance = if total > 0.0 {
            gains.iter().map(|g| g / total).collect()
        } else {
            vec![0.0; x.cols()]
        };
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            n_features: x.cols(),
            n_classes,
            params: *params,
            trees,
            loss_history,
            feature_importance,
        })
    }

    pub fn decision(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut s = vec![0.0; self.n_classes];
        for round in &self.trees {
            for (c, t) in round.iter().enumerate() {
                s[c] += t.predict(x);
            }
        }
        Ok(s)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.decision(x)?))
    }

    /// Most probable class; ties go to the lower class index.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let p = self.predict_proba(x)?;
        let mut best = 0;
        for c in 1..p.len() {
            if p[c] > p[best] {
                best = c;
            }
        }
        Ok((best, p))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::Serde(e.to_string()))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}
