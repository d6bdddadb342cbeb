//! Lloyd's k-means with k-means++ seeding and seeded restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 4,
            restarts: 10,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Restart that produced the model.
    pub best_restart: usize,
    /// Objective after each assignment step of the selected restart.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point, ties to the lower index.
fn assign(points: &Matrix, centroids: &Matrix) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let labels = points
        .iter_rows()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (c, cen) in centroids.iter_rows().enumerate() {
                let d = sq_dist(p, cen);
                if d < best.1 {
                    best = (c, d);
                }
            }
            total += best.1;
            best.0
        })
        .collect();
    (labels, total)
}

/// Sum of squared distances of every point to its assigned centroid.
pub fn inertia(points: &Matrix, centroids: &Matrix, assignments: &[usize]) -> f64 {
    points
        .iter_rows()
        .zip(assignments)
        .map(|(p, &c)| sq_dist(p, centroids.row(c)))
        .sum()
}

fn means(points: &Matrix, labels: &[usize], k: usize, previous: &Matrix) -> Matrix {
    let d = points.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter_rows().zip(labels) {
        counts[c] += 1;
        for (s, v) in sums.row_mut(c).iter_mut().zip(p) {
            *s += v;
        }
    }
    let mut out = previous.clone();
    let mut empties = Vec::new();
    for c in 0..k {
        if counts[c] == 0 {
            empties.push(c);
        } else {
            for (o, s) in out.row_mut(c).iter_mut().zip(sums.row(c)) {
                *o = s / counts[c] as f64;
            }
        }
    }
    // an empty cluster restarts at the point farthest from its own centroid
    let mut taken = vec![false; points.rows()];
    for c in empties {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter_rows().enumerate() {
            if taken[i] || counts[labels[i]] <= 1 {
                continue;
            }
            let dist = sq_dist(p, out.row(labels[i]));
            if best.is_none_or(|(_, b)| dist > b) {
                best = Some((i, dist));
            }
        }
        if let Some((i, _)) = best {
            taken[i] = true;
            counts[labels[i]] -= 1;
            out.row_mut(c).copy_from_slice(points.row(i));
        }
    }
    out
}

fn plus_plus(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.rows();
    let mut centers = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter_rows().map(|p| sq_dist(p, points.row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if *w > 0.0 && r < *w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            // guard against rounding walking off the end onto a zero weight
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|w| *w > 0.0).expect("positive total");
            }
            pick
        } else {
            (0..n).find(|i| !centers.contains(i)).unwrap_or(0)
        };
        centers.push(next);
        for (i, p) in points.iter_rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points.row(next)));
        }
    }
    Matrix::from_rows(&centers.iter().map(|&i| points.row(i).to_vec()).collect::<Vec<_>>())
}

struct Run {
    centroids: Matrix,
    labels: Vec<usize>,
    inertia: f64,
    history: Vec<f64>,
}

fn lloyd(points: &Matrix, mut centroids: Matrix, max_iter: usize) -> Run {
    let k = centroids.rows();
    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    for _ in 0..max_iter {
        let (labels, j) = assign(points, &centroids);
        history.push(j);
        if previous.as_ref() == Some(&labels) {
            return Run {
                centroids,
                labels,
                inertia: j,
                history,
            };
        }
        centroids = means(points, &labels, k, &centroids);
        previous = Some(labels);
    }
    let (labels, j) = assign(points, &centroids);
    history.push(j);
    Run {
        centroids,
        labels,
        inertia: j,
        history,
    }
}

/// Lexicographic order of rows, used to make results independent of the
/// order segments are presented in.
fn canonical_order(points: &Matrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.rows()).collect();
    order.sort_by(|&a, &b| {
        points
            .row(a)
            .iter()
            .zip(points.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Best of `restarts` seeded k-means++ / Lloyd runs by inertia; ties go to
/// the lowest restart index.
pub fn kmeans(points: &Matrix, config: &KMeansConfig) -> Result<ClusterModel> {
    let n = points.rows();
    if config.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if config.k > n {
        return Err(Error::InvalidParameter(format!("k = {} exceeds {n} points", config.k)));
    }
    if config.restarts == 0 || config.max_iter == 0 {
        return Err(Error::InvalidParameter("restarts and max_iter must be at least 1".into()));
    }
    if !points.is_finite() {
        return Err(Error::Validation("non-finite clustering input".into()));
    }
    let order = canonical_order(points);
    let sorted = Matrix::from_rows(&order.iter().map(|&i| points.row(i).to_vec()).collect::<Vec<_>>());
    let runs: Vec<Run> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let init = plus_plus(&sorted, config.k, &mut rng);
            lloyd(&sorted, init, config.max_iter)
        })
        .collect();
    let (best_restart, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.inertia < a.1.inertia { b } else { a })
        .expect("at least one restart");
    let mut assignments = vec![0; n];
    for (pos, &orig) in order.iter().enumerate() {
        assignments[orig] = best.labels[pos];
    }
    Ok(ClusterModel {
        k: config.k,
        centroids: best.centroids,
        assignments,
        inertia: best.inertia,
        seed: config.seed,
        restarts: config.restarts,
        best_restart,
        inertia_history: best.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, prop_assume, proptest};

    fn cfg(k: usize, seed: u64) -> KMeansConfig {
        KMeansConfig {
            k,
            seed,
            ..Default::default()
        }
    }

    /// Minimum inertia over all assignments of points to two nonempty groups.
    fn brute_two(points: &[Vec<f64>]) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let mut total = 0.0;
            for side in [true, false] {
                let group: Vec<&Vec<f64>> = (0..n).filter(|i| (mask >> i & 1 == 1) == side).map(|i| &points[i]).collect();
                let d = points[0].len();
                let mean: Vec<f64> = (0..d).map(|j| group.iter().map(|p| p[j]).sum::<f64>() / group.len() as f64).collect();
                total += group.iter().map(|p| sq_dist(p, &mean)).sum::<f64>();
            }
            best = best.min(total);
        }
        best
    }

    #[test]
    fn separated_groups() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]]);
        let m = kmeans(&pts, &cfg(2, 1)).unwrap();
        assert_eq!(m.assignments[0], m.assignments[1]);
        assert_eq!(m.assignments[2], m.assignments[3]);
        assert_ne!(m.assignments[0], m.assignments[2]);
        assert!((m.inertia - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_is_global_mean() {
        let pts = Matrix::from_rows(&[[1.0], [2.0], [6.0]]);
        let m = kmeans(&pts, &cfg(1, 7)).unwrap();
        assert!((m.centroids.get(0, 0) - 3.0).abs() < 1e-12);
        assert!((m.inertia - 14.0).abs() < 1e-12);
    }

    #[test]
    fn k_larger_than_points_errors() {
        let pts = Matrix::from_rows(&[[1.0], [2.0]]);
        assert!(kmeans(&pts, &cfg(3, 0)).is_err());
        assert!(kmeans(&pts, &cfg(0, 0)).is_err());
    }

    #[test]
    fn duplicate_points_still_fill_clusters() {
        let pts = Matrix::from_rows(&[[1.0], [1.0], [1.0], [5.0]]);
        let m = kmeans(&pts, &cfg(3, 0)).unwrap();
        assert_eq!(m.assignments.len(), 4);
        assert!(m.inertia.abs() < 1e-12);
    }

    #[test]
    fn restarts_usually_find_the_optimal_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0;
        for case in 0..50 {
            let n = rng.random_range(3..=8);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
                .collect();
            let m = kmeans(&Matrix::from_rows(&pts), &cfg(2, case)).unwrap();
            let best = brute_two(&pts);
            assert!(m.inertia >= best - 1e-9);
            hits += ((m.inertia - best).abs() <= 1e-9) as usize;
        }
        assert!(hits >= 48, "{hits} of 50");
    }

    proptest! {
        #[test]
        fn never_below_brute_force_minimum(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 3..=8), seed in any::<u64>()) {
            let m = kmeans(&Matrix::from_rows(&pts), &cfg(2, seed)).unwrap();
            let best = brute_two(&pts);
            prop_assert!(m.inertia >= best - 1e-9);
        }

        #[test]
        fn history_is_nonincreasing_and_final_is_consistent(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4..40), seed in any::<u64>(), k in 1usize..5) {
            prop_assume!(k <= pts.len());
            let x = Matrix::from_rows(&pts);
            let m = kmeans(&x, &cfg(k, seed)).unwrap();
            for w in m.inertia_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
            prop_assert!((inertia(&x, &m.centroids, &m.assignments) - m.inertia).abs() < 1e-9);
            for (p, &c) in x.iter_rows().zip(&m.assignments) {
                let dc = sq_dist(p, m.centroids.row(c));
                for cen in m.centroids.iter_rows() {
                    prop_assert!(dc <= sq_dist(p, cen) + 1e-12);
                }
            }
        }

        #[test]
        fn order_invariant(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 4..30), seed in any::<u64>(), rot in 0usize..30) {
            let x = Matrix::from_rows(&pts);
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            perm.rotate_left(rot % pts.len());
            perm.reverse();
            let y = Matrix::from_rows(&perm.iter().map(|&i| pts[i].clone()).collect::<Vec<_>>());
            let a = kmeans(&x, &cfg(3.min(pts.len()), seed)).unwrap();
            let b = kmeans(&y, &cfg(3.min(pts.len()), seed)).unwrap();
            prop_assert_eq!(a.inertia, b.inertia);
            // same partition up to relabeling
            let mut relabel = std::collections::BTreeMap::new();
            for (pos, &orig) in perm.iter().enumerate() {
                let e = relabel.entry(b.assignments[pos]).or_insert(a.assignments[orig]);
                prop_assert_eq!(*e, a.assignments[orig]);
            }
        }

        #[test]
        fn deterministic_given_seed(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 4..20), seed in any::<u64>()) {
            let x = Matrix::from_rows(&pts);
            prop_assert_eq!(kmeans(&x, &cfg(2, seed)).unwrap(), kmeans(&x, &cfg(2, seed)).unwrap());
        }
    }
}
