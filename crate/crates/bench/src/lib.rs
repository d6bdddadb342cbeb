//! Seeded fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use microskill_core::Matrix;

/// Piecewise-constant regimes plus uniform noise, `t` rows by `d` columns.
pub fn regime_matrix(t: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(t, d);
    let mut center = vec![0.0; d];
    for row in 0..t {
        if row % 400 == 0 {
            center = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        }
        for (col, c) in center.iter().enumerate() {
            x.set(row, col, c + rng.random_range(-0.5..0.5));
        }
    }
    x
}

/// `n` points around three well-separated centers, with labels.
pub fn blobs(n: usize, d: usize, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(n, d);
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    for (row, &c) in labels.iter().enumerate() {
        for col in 0..d {
            let offset = if col == 0 { 5.0 * c as f64 } else { 0.0 };
            x.set(row, col, offset + rng.random_range(-1.0..1.0));
        }
    }
    (x, labels)
}
