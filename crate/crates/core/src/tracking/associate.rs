//! One-to-one matching of detections to predicted track boxes.

use serde::{Deserialize, Serialize};

use crate::data_model::{BBox, Detection};
use crate::error::{Error, Result};
use crate::hungarian;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationParams {
    pub iou_weight: f64,
    pub appearance_weight: f64,
    /// Pairs below this IoU are never matched.
    pub iou_gate: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self {
            iou_weight: 0.7,
            appearance_weight: 0.3,
            iou_gate: 0.3,
        }
    }
}

impl AssociationParams {
    pub fn validate(&self) -> Result<()> {
        if self.iou_weight < 0.0 || self.appearance_weight < 0.0 {
            return Err(Error::InvalidParameter("association weights must be nonnegative".into()));
        }
        if ((self.iou_weight + self.appearance_weight) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "association weights must sum to 1, got {} + {}",
                self.iou_weight, self.appearance_weight
            )));
        }
        if !(0.0..=1.0).contains(&self.iou_gate) {
            return Err(Error::InvalidParameter(format!("iou gate {} outside [0, 1]", self.iou_gate)));
        }
        Ok(())
    }
}

/// A track as seen by the association step.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTrack {
    pub bbox: BBox,
    pub appearance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// `(detection index, track index)` pairs, sorted by detection index.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_tracks: Vec<usize>,
}

pub(crate) fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Pair cost: weighted `1 - IoU` and `1 - cos`, or `1 - IoU` alone when
/// either side lacks an appearance vector.
pub fn pair_cost(det: &Detection, track: &PredictedTrack, params: &AssociationParams) -> Result<f64> {
    let iou_cost = 1.0 - det.bbox.iou(&track.bbox);
    match (&det.appearance, &track.appearance) {
        (Some(a), Some(b)) => {
            Ok(params.iou_weight * iou_cost + params.appearance_weight * cosine_distance(a, b)?)
        }
        _ => Ok(iou_cost),
    }
}

const GATED: f64 = 1e6;

/// Optimal assignment under the combined cost; gated pairs are rejected.
pub fn associate(
    detections: &[&Detection],
    tracks: &[PredictedTrack],
    params: &AssociationParams,
) -> Result<Association> {
    params.validate()?;
    let mut cost = vec![vec![0.0; tracks.len()]; detections.len()];
    for (i, d) in detections.iter().enumerate() {
        for (j, t) in tracks.iter().enumerate() {
            let c = pair_cost(d, t, params)?;
            cost[i][j] = if d.bbox.iou(&t.bbox) < params.iou_gate { GATED } else { c };
        }
    }
    let assignment = hungarian::solve(&cost);
    let mut out = Association::default();
    let mut track_used = vec![false; tracks.len()];
    for (i, a) in assignment.iter().enumerate() {
        match a {
            Some(j) if cost[i][*j] < GATED => {
                out.matches.push((i, *j));
                track_used[*j] = true;
            }
            _ => out.unmatched_detections.push(i),
        }
    }
    out.unmatched_tracks = (0..tracks.len()).filter(|&j| !track_used[j]).collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::InstrumentClass;

    fn det(b: BBox) -> Detection {
        Detection {
            frame: 0,
            class: InstrumentClass::Needle,
            bbox: b,
            confidence: 1.0,
            appearance: None,
        }
    }

    fn trk(b: BBox) -> PredictedTrack {
        PredictedTrack { bbox: b, appearance: None }
    }

    #[test]
    fn exact_overlap_matches_with_zero_iou_cost() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        let d = det(b);
        let t = trk(b);
        let p = AssociationParams::default();
        assert_eq!(pair_cost(&d, &t, &p).unwrap(), 0.0);
        let a = associate(&[&d], &[t], &p).unwrap();
        assert_eq!(a.matches, vec![(0, 0)]);
    }

    #[test]
    fn crossed_iou_point_one_and_point_nine() {
        // two detections, two tracks; IoU(d0,t0)=IoU(d1,t1)=0.1 and
        // IoU(d0,t1)=IoU(d1,t0)=0.9 on a shared axis
        let w = 100.0;
        let o9 = 0.9 * 2.0 * w / 1.9;
        let o1 = 0.1 * 2.0 * w / 1.1;
        let d0 = det(BBox::new(0.0, 0.0, w, 10.0));
        let t1 = trk(BBox::new(w - o9, 0.0, w, 10.0));
        let t0 = trk(BBox::new(w - o1, 0.0, w, 10.0));
        // d1 overlaps t0 by o9 and t1 by o1: place right of t0
        let d1 = det(BBox::new(t0.bbox.x + w - o9 + 0.0, 0.0, w, 10.0));
        let ious = [
            [d0.bbox.iou(&t0.bbox), d0.bbox.iou(&t1.bbox)],
            [d1.bbox.iou(&t0.bbox), d1.bbox.iou(&t1.bbox)],
        ];
        let p = AssociationParams {
            iou_gate: 0.0,
            ..Default::default()
        };
        let identity = (1.0 - ious[0][0]) + (1.0 - ious[1][1]);
        let crossed = (1.0 - ious[0][1]) + (1.0 - ious[1][0]);
        let r = associate(&[&d0, &d1], &[t0, t1], &p).unwrap();
        let expected = if crossed < identity {
            vec![(0, 1), (1, 0)]
        } else {
            vec![(0, 0), (1, 1)]
        };
        assert!((ious[0][1] - 0.9).abs() < 1e-9);
        assert!((ious[0][0] - 0.1).abs() < 1e-9);
        assert_eq!(r.matches, expected);
    }

    #[test]
    fn zero_iou_detection_is_unmatched() {
        let d = det(BBox::new(0.0, 0.0, 10.0, 10.0));
        let t = trk(BBox::new(100.0, 100.0, 10.0, 10.0));
        let r = associate(&[&d], &[t], &AssociationParams::default()).unwrap();
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_detections, vec![0]);
        assert_eq!(r.unmatched_tracks, vec![0]);
    }

    #[test]
    fn appearance_dimension_mismatch_errors() {
        let mut d = det(BBox::new(0.0, 0.0, 10.0, 10.0));
        d.appearance = Some(vec![1.0, 0.0]);
        let t = PredictedTrack {
            bbox: d.bbox,
            appearance: Some(vec![1.0, 0.0, 0.0]),
        };
        assert!(matches!(
            associate(&[&d], &[t], &AssociationParams::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn appearance_breaks_iou_ties() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        let mut d = det(b);
        d.appearance = Some(vec![1.0, 0.0]);
        let ta = PredictedTrack { bbox: b, appearance: Some(vec![0.0, 1.0]) };
        let tb = PredictedTrack { bbox: b, appearance: Some(vec![1.0, 0.0]) };
        let r = associate(&[&d], &[ta, tb], &AssociationParams::default()).unwrap();
        assert_eq!(r.matches, vec![(0, 1)]);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let p = AssociationParams {
            iou_weight: 0.5,
            appearance_weight: 0.2,
            iou_gate: 0.3,
        };
        assert!(p.validate().is_err());
    }
}
