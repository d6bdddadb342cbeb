//! Prominence-based peak picking with minimum spacing.

use serde::{Deserialize, Serialize};

/// Picked boundaries, strictly increasing, with their prominences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundaries {
    pub tau: Vec<usize>,
    pub prominence: Vec<f64>,
    pub threshold: f64,
    pub d_min: usize,
}

impl Boundaries {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

/// Strict local maxima. A flat top counts once, at its middle sample
/// (left of center for even widths). Endpoints are never peaks.
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    if x.len() < 3 {
        return out;
    }
    let mut i = 1;
    while i < x.len() - 1 {
        if x[i - 1] < x[i] {
            let mut k = i;
            while k + 1 < x.len() && x[k + 1] == x[i] {
                k += 1;
            }
            if k + 1 < x.len() && x[k + 1] < x[i] {
                out.push((i + k) / 2);
                i = k + 1;
                continue;
            }
            i = k + 1;
            continue;
        }
        i += 1;
    }
    out
}

/// Sparse table for range minimum queries.
struct RangeMin {
    levels: Vec<Vec<f64>>,
}

impl RangeMin {
    fn new(x: &[f64]) -> Self {
        let mut levels = vec![x.to_vec()];
        let mut span = 1;
        while 2 * span <= x.len() {
            let prev = levels.last().expect("level");
            let next: Vec<f64> = (0..=x.len() - 2 * span).map(|i| prev[i].min(prev[i + span])).collect();
            levels.push(next);
            span *= 2;
        }
        Self { levels }
    }

    /// Minimum over `lo..=hi`.
    fn query(&self, lo: usize, hi: usize) -> f64 {
        let len = hi - lo + 1;
        let k = usize::BITS as usize - 1 - len.leading_zeros() as usize;
        self.levels[k][lo].min(self.levels[k][hi + 1 - (1 << k)])
    }
}

/// Prominence of each peak: its height minus the higher of the two
/// minima between it and the nearest strictly higher sample on each side
/// (or the signal end when there is none).
pub fn prominences(x: &[f64], peaks: &[usize]) -> Vec<f64> {
    if peaks.is_empty() {
        return Vec::new();
    }
    let n = x.len();
    // nearest strictly greater to the left / right via monotone stacks
    let mut left = vec![None; n];
    let mut stack: Vec<usize> = Vec::new();
    for i in 0..n {
        while stack.last().is_some_and(|&j| x[j] <= x[i]) {
            stack.pop();
        }
        left[i] = stack.last().copied();
        stack.push(i);
    }
    let mut right = vec![None; n];
    stack.clear();
    for i in (0..n).rev() {
        while stack.last().is_some_and(|&j| x[j] <= x[i]) {
            stack.pop();
        }
        right[i] = stack.last().copied();
        stack.push(i);
    }
    let rmq = RangeMin::new(x);
    peaks
        .iter()
        .map(|&p| {
            let lo = left[p].map_or(0, |l| l + 1);
            let hi = right[p].map_or(n - 1, |r| r - 1);
            let base = rmq.query(lo, p).max(rmq.query(p, hi));
            x[p] - base
        })
        .collect()
}

/// Keeps peaks with prominence at least `threshold`, then enforces the
/// spacing: visiting peaks from highest (earlier first on ties), a peak is
/// dropped if a kept one lies closer than `d_min`.
pub fn peak_pick(x: &[f64], threshold: f64, d_min: usize) -> Boundaries {
    let d_min = d_min.max(1);
    let peaks = local_maxima(x);
    let prom = prominences(x, &peaks);
    let candidates: Vec<(usize, f64)> = peaks
        .into_iter()
        .zip(prom)
        .filter(|&(_, p)| p >= threshold)
        .collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        x[candidates[b].0]
            .total_cmp(&x[candidates[a].0])
            .then(candidates[a].0.cmp(&candidates[b].0))
    });
    let mut keep = vec![false; candidates.len()];
    let mut kept_positions: std::collections::BTreeSet<usize> = std::collections::BTreeSet::new();
    for i in order {
        let p = candidates[i].0;
        let lo = p.saturating_sub(d_min - 1);
        if kept_positions.range(lo..p + d_min).next().is_none() {
            keep[i] = true;
            kept_positions.insert(p);
        }
    }
    let (tau, prominence) = candidates
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(c, _)| *c)
        .unzip();
    Boundaries {
        tau,
        prominence,
        threshold,
        d_min,
    }
}
