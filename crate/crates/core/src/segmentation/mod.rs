//! Action boundary detection from kinematic self-similarity.

pub mod kernel;
pub mod novelty;
pub mod peaks;
pub mod ssm;

use serde::{Deserialize, Serialize};

pub use kernel::CheckerboardKernel;
pub use novelty::{novelty, novelty_full, NoveltyCurve};
pub use peaks::{local_maxima, peak_pick, prominences, Boundaries};
pub use ssm::{enhance, ssm, ssm_band, SelfSimilarityBand, DEFAULT_FULL_CAP};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    /// Kernel half-width in seconds at the working rate.
    pub kernel_seconds: f64,
    /// Gaussian width in frames; defaults to half the kernel half-width.
    pub sigma: Option<f64>,
    /// Prominence threshold as a fraction of the novelty maximum.
    pub prominence_fraction: f64,
    /// Absolute threshold; overrides the fraction when set.
    pub prominence_threshold: Option<f64>,
    /// Minimum boundary spacing in seconds.
    pub min_distance_seconds: f64,
    /// Longest sequence for which the dense similarity matrix is built.
    pub full_matrix_cap: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            kernel_seconds: 3.0,
            sigma: None,
            prominence_fraction: 0.45,
            prominence_threshold: None,
            min_distance_seconds: 1.0,
            full_matrix_cap: DEFAULT_FULL_CAP,
        }
    }
}

/// Threshold floor so numerical noise on a flat curve is never a boundary.
pub const MIN_PROMINENCE: f64 = 1e-9;

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_seconds > 0.0) {
            return Err(Error::InvalidParameter("kernel_seconds must be positive".into()));
        }
        if self.sigma.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.prominence_fraction) {
            return Err(Error::InvalidParameter("prominence_fraction must lie in [0, 1]".into()));
        }
        if self.prominence_threshold.is_some_and(|t| !(t >= 0.0)) {
            return Err(Error::InvalidParameter("prominence_threshold must be nonnegative".into()));
        }
        if !(self.min_distance_seconds >= 0.0) {
            return Err(Error::InvalidParameter("min_distance_seconds must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn half_width(&self, fps: f64) -> usize {
        ((self.kernel_seconds * fps).round() as usize).max(1)
    }

    pub fn sigma_for(&self, half_width: usize) -> f64 {
        self.sigma.unwrap_or(half_width as f64 / 2.0)
    }

    pub fn d_min(&self, fps: f64) -> usize {
        ((self.min_distance_seconds * fps).round() as usize).max(1)
    }

    pub fn threshold(&self, novelty: &NoveltyCurve) -> f64 {
        self.prominence_threshold
            .unwrap_or(self.prominence_fraction * novelty.max())
            .max(MIN_PROMINENCE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Enhanced similarity band the novelty was computed from.
    pub band: SelfSimilarityBand,
    pub novelty: NoveltyCurve,
    pub boundaries: Boundaries,
}

/// Similarity band, contrast enhancement, kernel novelty and peak picking
/// over an already normalized feature matrix at `fps` frames per second.
pub fn segment(x: &Matrix, fps: f64, config: &SegmentationConfig) -> Result<Segmentation> {
    config.validate()?;
    let h = config.half_width(fps);
    let kernel = CheckerboardKernel::new(h, config.sigma_for(h))?;
    if x.rows() < 2 * h + 1 {
        log::warn!("sequence of {} frames is too short for kernel half-width {h}", x.rows());
    }
    let band = ssm_band(x, 2 * h)?.enhance();
    let curve = novelty(&band, &kernel)?;
    let boundaries = peak_pick(&curve.values, config.threshold(&curve), config.d_min(fps));
    Ok(Segmentation {
        band,
        novelty: curve,
        boundaries,
    })
}

/// Working-frame segments `[b_i, b_{i+1})` implied by the boundaries.
pub fn segments_from_boundaries(len: usize, tau: &[usize]) -> Vec<(usize, usize)> {
    let mut cuts = vec![0];
    cuts.extend(tau.iter().copied().filter(|&t| t > 0 && t < len));
    cuts.push(len);
    cuts.dedup();
    cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect()
}
