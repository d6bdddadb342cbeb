//! Gaussian-weighted checkerboard kernel.

use crate::error::{Error, Result};

/// Weights over offsets `i, j` in `[-h, h - 1]`, stored row-major with
/// index `(i + h) * 2h + (j + h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckerboardKernel {
    half_width: usize,
    sigma: f64,
    weights: Vec<f64>,
}

fn sign(i: isize) -> f64 {
    if i >= 0 {
        1.0
    } else {
        -1.0
    }
}

impl CheckerboardKernel {
    /// The Gaussian is centered between samples, at offset -1/2, so the
    /// four quadrants are mirror images and the weights sum to zero.
    pub fn new(half_width: usize, sigma: f64) -> Result<Self> {
        if half_width == 0 {
            return Err(Error::InvalidParameter("kernel half-width must be at least 1".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("kernel sigma must be positive, got {sigma}")));
        }
        let h = half_width as isize;
        let n = 2 * half_width;
        let mut weights = vec![0.0; n * n];
        for i in -h..h {
            for j in -h..h {
                let (a, b) = (i as f64 + 0.5, j as f64 + 0.5);
                let g = (-(a * a + b * b) / (2.0 * sigma * sigma)).exp();
                weights[((i + h) as usize) * n + (j + h) as usize] = g * sign(i) * sign(j);
            }
        }
        Ok(Self {
            half_width,
            sigma,
            weights,
        })
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weight(&self, i: isize, j: isize) -> f64 {
        let h = self.half_width as isize;
        assert!((-h..h).contains(&i) && (-h..h).contains(&j), "kernel offset out of range");
        self.weights[((i + h) as usize) * 2 * self.half_width + (j + h) as usize]
    }

    /// Kernel row for offset `i` (`i + h` as a zero-based index).
    pub(crate) fn row(&self, r: usize) -> &[f64] {
        let n = 2 * self.half_width;
        &self.weights[r * n..(r + 1) * n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}
