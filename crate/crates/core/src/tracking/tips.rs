//! Tip localization by descriptor matching.

use crate::data_model::BBox;
use crate::error::{Error, Result};

/// A candidate tip point, local to its bounding box, with its shape descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct TipCandidate {
    pub point: [f64; 2],
    pub descriptor: Vec<f64>,
}

/// Reference tip descriptor for one instrument class.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDescriptor {
    pub descriptor: Vec<f64>,
}

impl ReferenceDescriptor {
    pub fn new(descriptor: Vec<f64>) -> Result<Self> {
        if norm(&descriptor) == 0.0 {
            return Err(Error::Degenerate("reference descriptor has zero norm".into()));
        }
        Ok(Self { descriptor })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipLocation {
    pub candidate: usize,
    pub similarity: f64,
    /// Global image coordinates.
    pub point: [f64; 2],
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Picks the candidate whose descriptor is most cosine-similar to the
/// reference and maps it into image coordinates via the box origin.
///
/// Ties keep the lowest candidate index.
pub fn localize_tip(candidates: &[TipCandidate], reference: &ReferenceDescriptor, bbox: &BBox) -> Result<TipLocation> {
    if candidates.is_empty() {
        return Err(Error::Degenerate("no tip candidates".into()));
    }
    let ref_norm = norm(&reference.descriptor);
    if ref_norm == 0.0 {
        return Err(Error::Degenerate("reference descriptor has zero norm".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        if c.descriptor.len() != reference.descriptor.len() {
            return Err(Error::DimensionMismatch {
                expected: reference.descriptor.len(),
                got: c.descriptor.len(),
            });
        }
        let n = norm(&c.descriptor);
        if n == 0.0 {
            return Err(Error::Degenerate(format!("candidate {i} has a zero-norm descriptor")));
        }
        let dot: f64 = c.descriptor.iter().zip(&reference.descriptor).map(|(a, b)| a * b).sum();
        let sim = dot / (n * ref_norm);
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((i, sim));
        }
    }
    let (i, similarity) = best.expect("nonempty");
    let p = candidates[i].point;
    Ok(TipLocation {
        candidate: i,
        similarity,
        point: [bbox.x + p[0], bbox.y + p[1]],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cand(x: f64, d: Vec<f64>) -> TipCandidate {
        TipCandidate { point: [x, 2.0 * x], descriptor: d }
    }

    #[test]
    fn single_candidate_is_returned_in_global_coordinates() {
        let r = ReferenceDescriptor::new(vec![1.0, 2.0]).unwrap();
        let loc = localize_tip(&[cand(3.0, vec![0.5, -1.0])], &r, &BBox::new(10.0, 20.0, 5.0, 5.0)).unwrap();
        assert_eq!(loc.candidate, 0);
        assert_eq!(loc.point, [13.0, 26.0]);
    }

    #[test]
    fn positive_reference_beats_negated() {
        let d = vec![0.3, -0.2, 0.9];
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        let r = ReferenceDescriptor::new(d.clone()).unwrap();
        let loc = localize_tip(&[cand(1.0, d), cand(2.0, neg)], &r, &BBox::new(0.0, 0.0, 1.0, 1.0)).unwrap();
        assert_eq!(loc.candidate, 0);
        assert!((loc.similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors_on_empty_and_zero_norm() {
        let r = ReferenceDescriptor::new(vec![1.0]).unwrap();
        let b = BBox::new(0.0, 0.0, 1.0, 1.0);
        assert!(localize_tip(&[], &r, &b).is_err());
        assert!(localize_tip(&[cand(0.0, vec![0.0])], &r, &b).is_err());
        assert!(ReferenceDescriptor::new(vec![0.0, 0.0]).is_err());
        assert!(matches!(
            localize_tip(&[cand(0.0, vec![1.0, 2.0])], &r, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ties_keep_lowest_index() {
        let r = ReferenceDescriptor::new(vec![1.0, 0.0]).unwrap();
        let loc = localize_tip(
            &[cand(0.0, vec![0.0, 1.0]), cand(1.0, vec![2.0, 0.0]), cand(2.0, vec![1.0, 0.0])],
            &r,
            &BBox::new(0.0, 0.0, 1.0, 1.0),
        )
        .unwrap();
        assert_eq!(loc.candidate, 1);
    }

    fn brute_argmax(cands: &[Vec<f64>], r: &[f64]) -> usize {
        let sims: Vec<f64> = cands
            .iter()
            .map(|c| {
                let dot: f64 = c.iter().zip(r).map(|(a, b)| a * b).sum();
                dot / (c.iter().map(|x| x * x).sum::<f64>().sqrt() * r.iter().map(|x| x * x).sum::<f64>().sqrt())
            })
            .collect();
        let mut best = 0;
        for i in 1..sims.len() {
            if sims[i] > sims[best] {
                best = i;
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_exhaustive_argmax(
            descs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 5),
            r in prop::collection::vec(0.1f64..1.0, 6),
            scale in 0.01f64..100.0,
        ) {
            prop_assume!(descs.iter().all(|d| norm(d) > 1e-6));
            let cands: Vec<_> = descs.iter().enumerate().map(|(i, d)| cand(i as f64, d.clone())).collect();
            let reference = ReferenceDescriptor::new(r.clone()).unwrap();
            let b = BBox::new(0.0, 0.0, 1.0, 1.0);
            let loc = localize_tip(&cands, &reference, &b).unwrap();
            prop_assert_eq!(loc.candidate, brute_argmax(&descs, &r));

            // scaling every descriptor by c > 0 leaves the choice unchanged
            let scaled: Vec<_> = cands.iter().map(|c| cand(c.point[0], c.descriptor.iter().map(|v| v * scale).collect())).collect();
            let scaled_ref = ReferenceDescriptor::new(r.iter().map(|v| v * scale).collect()).unwrap();
            prop_assert_eq!(localize_tip(&scaled, &scaled_ref, &b).unwrap().candidate, loc.candidate);
        }
    }
}
