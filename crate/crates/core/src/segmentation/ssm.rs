//! Cosine self-similarity, full and banded.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

fn row_norms(x: &Matrix) -> Vec<f64> {
    x.iter_rows().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

/// Cosine similarity of rows `i` and `j`. Zero rows are similar to nothing,
/// themselves included.
#[inline]
fn cosine(x: &Matrix, norms: &[f64], i: usize, j: usize) -> f64 {
    let (ni, nj) = (norms[i], norms[j]);
    if ni == 0.0 || nj == 0.0 {
        return 0.0;
    }
    if i == j {
        return 1.0;
    }
    let dot: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum();
    (dot / (ni * nj)).clamp(-1.0, 1.0)
}

pub const DEFAULT_FULL_CAP: usize = 10_000;

/// Dense `T × T` similarity matrix. Fails above `cap` rows; use
/// [`ssm_band`] for long sequences.
pub fn ssm(x: &Matrix, cap: usize) -> Result<Matrix> {
    let t = x.rows();
    if t > cap {
        return Err(Error::CapExceeded { len: t, cap });
    }
    let norms = row_norms(x);
    let mut s = Matrix::zeros(t, t);
    for i in 0..t {
        for j in i..t {
            let v = cosine(x, &norms, i, j);
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok(s)
}

/// Upper band of the similarity matrix: entry `(i, k)` holds `S(i, i + k)`
/// for `k` in `0..=width`. Entries past the end of the sequence are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimilarityBand {
    len: usize,
    width: usize,
    values: Vec<f64>,
}

impl SelfSimilarityBand {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Whether the band covers the whole matrix.
    pub fn full_matrix(&self) -> bool {
        self.len == 0 || self.width + 1 >= self.len
    }

    /// `S(i, j)` for `|i - j| <= width`; `None` outside the band.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        (b < self.len && b - a <= self.width).then(|| self.values[a * (self.width + 1) + (b - a)])
    }

    /// Row `i` of the band, offsets `0..=width`.
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.values[i * (self.width + 1)..(i + 1) * (self.width + 1)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Elementwise square in place.
    pub fn enhance(mut self) -> Self {
        self.values.par_iter_mut().for_each(|v| *v *= *v);
        self
    }

    pub fn from_full(s: &Matrix, width: usize) -> Self {
        let len = s.rows();
        let mut values = vec![0.0; len * (width + 1)];
        for i in 0..len {
            for k in 0..=width.min(len - 1 - i) {
                values[i * (width + 1) + k] = s.get(i, i + k);
            }
        }
        Self { len, width, values }
    }
}

/// Similarities with `|i - j| <= width`, using `O(T · width)` memory.
/// Every stored entry equals the corresponding full-matrix entry exactly.
pub fn ssm_band(x: &Matrix, width: usize) -> Result<SelfSimilarityBand> {
    if width == 0 {
        return Err(Error::InvalidParameter("band width must be at least 1".into()));
    }
    let len = x.rows();
    let norms = row_norms(x);
    let mut values = vec![0.0; len * (width + 1)];
    values
        .par_chunks_mut(width + 1)
        .enumerate()
        .for_each(|(i, row)| {
            for (k, slot) in row.iter_mut().enumerate() {
                if i + k < len {
                    *slot = cosine(x, &norms, i, i + k);
                }
            }
        });
    Ok(SelfSimilarityBand { len, width, values })
}

/// Elementwise square of a dense matrix.
pub fn enhance(s: &Matrix) -> Matrix {
    Matrix::from_vec(s.rows(), s.cols(), s.as_slice().iter().map(|v| v * v).collect())
}
