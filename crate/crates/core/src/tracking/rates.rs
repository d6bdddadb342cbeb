//! Recovery and correction rates of the identity repair against ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data_model::{BBox, Detection, InstrumentClass, RefinedTrack, TruthObject};
use crate::hungarian;

/// Counts behind one RR/CR pair. Rates are `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateCounts {
    /// Truth objects the detector missed.
    pub missed: usize,
    /// Missed truth objects covered by a refined box with the right class.
    pub recovered: usize,
    /// Truth objects the detector found with the wrong class.
    pub misclassified: usize,
    /// Misclassified truth objects whose refined class is right.
    pub corrected: usize,
}

impl RateCounts {
    pub fn recovery_rate(&self) -> Option<f64> {
        (self.missed > 0).then(|| self.recovered as f64 / self.missed as f64)
    }

    pub fn correction_rate(&self) -> Option<f64> {
        (self.misclassified > 0).then(|| self.corrected as f64 / self.misclassified as f64)
    }

    fn add(&mut self, other: &RateCounts) {
        self.missed += other.missed;
        self.recovered += other.recovered;
        self.misclassified += other.misclassified;
        self.corrected += other.corrected;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RateReport {
    pub overall: RateCounts,
    pub per_class: BTreeMap<InstrumentClass, RateCounts>,
}

/// Per-frame optimal IoU matching of truth boxes to candidate boxes.
fn match_frame(truth: &[&TruthObject], boxes: &[BBox], min_iou: f64) -> Vec<Option<usize>> {
    if truth.is_empty() || boxes.is_empty() {
        return vec![None; truth.len()];
    }
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| boxes.iter().map(|b| 1.0 - t.bbox().iou(b)).collect())
        .collect();
    hungarian::solve(&cost)
        .into_iter()
        .enumerate()
        .map(|(i, j)| j.filter(|&j| 1.0 - cost[i][j] >= min_iou))
        .collect()
}

/// Recovery rate: missed-by-detector truth objects that the refined tracks
/// cover with the correct class. Correction rate: truth objects detected with
/// a wrong class whose refined class is correct. Matching uses IoU >= `min_iou`.
pub fn recovery_correction_rates(
    raw: &[Detection],
    refined: &[RefinedTrack],
    truth: &[TruthObject],
    min_iou: f64,
) -> RateReport {
    let mut raw_by_frame: BTreeMap<usize, Vec<&Detection>> = BTreeMap::new();
    for d in raw {
        raw_by_frame.entry(d.frame).or_default().push(d);
    }
    let mut refined_by_frame: BTreeMap<usize, Vec<(BBox, InstrumentClass)>> = BTreeMap::new();
    for t in refined {
        for f in &t.frames {
            refined_by_frame.entry(f.frame).or_default().push((f.bbox, t.class));
        }
    }
    let mut truth_by_frame: BTreeMap<usize, Vec<&TruthObject>> = BTreeMap::new();
    for t in truth {
        truth_by_frame.entry(t.frame).or_default().push(t);
    }

    let mut report = RateReport::default();
    for (frame, objs) in truth_by_frame {
        let raw_frame = raw_by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[]);
        let raw_boxes: Vec<BBox> = raw_frame.iter().map(|d| d.bbox).collect();
        let ref_frame = refined_by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[]);
        let ref_boxes: Vec<BBox> = ref_frame.iter().map(|r| r.0).collect();
        let raw_match = match_frame(&objs, &raw_boxes, min_iou);
        let ref_match = match_frame(&objs, &ref_boxes, min_iou);
        for (k, obj) in objs.iter().enumerate() {
            let refined_ok = ref_match[k].is_some_and(|j| ref_frame[j].1 == obj.class);
            let counts = report.per_class.entry(obj.class).or_default();
            match raw_match[k] {
                None => {
                    counts.missed += 1;
                    counts.recovered += refined_ok as usize;
                }
                Some(j) if raw_frame[j].class != obj.class => {
                    counts.misclassified += 1;
                    counts.corrected += refined_ok as usize;
                }
                Some(_) => {}
            }
        }
    }
    let mut overall = RateCounts::default();
    for c in report.per_class.values() {
        overall.add(c);
    }
    report.overall = overall;
    report
}
