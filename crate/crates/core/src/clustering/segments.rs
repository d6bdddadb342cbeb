//! Per-segment summary vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Frames `start..end` of the working-rate sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub duration_s: f64,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

pub fn segments_from_bounds(bounds: &[(usize, usize)], fps: f64) -> Vec<Segment> {
    bounds
        .iter()
        .enumerate()
        .map(|(index, &(start, end))| Segment {
            index,
            start,
            end,
            duration_s: (end - start) as f64 / fps,
        })
        .collect()
}

/// Column means, population standard deviations and instrument presence
/// fractions, concatenated: `2d + m` values per segment.
pub fn segment_features(x: &Matrix, mask: &Matrix, segments: &[(usize, usize)]) -> Result<Matrix> {
    if mask.rows() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: mask.rows(),
        });
    }
    let (d, m) = (x.cols(), mask.cols());
    let mut out = Matrix::zeros(segments.len(), 2 * d + m);
    for (s, &(start, end)) in segments.iter().enumerate() {
        if start >= end || end > x.rows() {
            return Err(Error::Validation(format!(
                "segment {s} has invalid frame range {start}..{end} for {} frames",
                x.rows()
            )));
        }
        let n = (end - start) as f64;
        let row = out.row_mut(s);
        for j in 0..d {
            let mean = (start..end).map(|t| x.get(t, j)).sum::<f64>() / n;
            let var = (start..end).map(|t| (x.get(t, j) - mean).powi(2)).sum::<f64>() / n;
            row[j] = mean;
            row[d + j] = var.sqrt();
        }
        for k in 0..m {
            row[2 * d + k] = (start..end).map(|t| mask.get(t, k)).sum::<f64>() / n;
        }
    }
    Ok(out)
}
