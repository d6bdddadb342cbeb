//! Kernel correlation along the diagonal of the enhanced similarity band.

use rayon::prelude::*;

use super::kernel::CheckerboardKernel;
use super::ssm::SelfSimilarityBand;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Novelty per frame. Frames closer than the kernel half-width to either
/// end carry 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NoveltyCurve {
    pub values: Vec<f64>,
    pub half_width: usize,
}

impl NoveltyCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Frames where the kernel fits entirely.
    pub fn valid_range(&self) -> std::ops::Range<usize> {
        let h = self.half_width;
        let t = self.values.len();
        if t < 2 * h {
            h..h
        } else {
            h..t - h
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

fn novelty_at(band: &SelfSimilarityBand, kernel: &CheckerboardKernel, t: usize) -> f64 {
    let h = kernel.half_width();
    let n = 2 * h;
    let mut diag = 0.0;
    let mut off = 0.0;
    for r in 0..n {
        let a = t + r - h;
        let krow = kernel.row(r);
        let brow = band.row(a);
        diag += krow[r] * brow[0];
        // kernel is symmetric, so each off-diagonal pair is counted once
        off += krow[r + 1..n].iter().zip(&brow[1..n - r]).map(|(w, s)| w * s).sum::<f64>();
    }
    diag + 2.0 * off
}

/// Correlates the kernel along the diagonal of an (already enhanced) band.
pub fn novelty(band: &SelfSimilarityBand, kernel: &CheckerboardKernel) -> Result<NoveltyCurve> {
    let h = kernel.half_width();
    if band.width() + 1 < 2 * h {
        return Err(Error::InvalidParameter(format!(
            "band width {} is narrower than the kernel reach {}",
            band.width(),
            2 * h - 1
        )));
    }
    let len = band.len();
    let mut values = vec![0.0; len];
    if len >= 2 * h {
        values[h..len - h]
            .par_iter_mut()
            .enumerate()
            .for_each(|(k, v)| *v = novelty_at(band, kernel, k + h));
    }
    Ok(NoveltyCurve { values, half_width: h })
}

/// Same computation from a dense (already enhanced) matrix.
pub fn novelty_full(s: &Matrix, kernel: &CheckerboardKernel) -> Result<NoveltyCurve> {
    novelty(&SelfSimilarityBand::from_full(s, 2 * kernel.half_width()), kernel)
}
