//! Frame-sequential multi-object tracker (detection association + Kalman
//! coasting). Produces raw per-frame entries; identity repair happens in
//! [`super::refine`].

use serde::{Deserialize, Serialize};

use super::associate::{associate, AssociationParams, PredictedTrack};
use super::kalman::{BoxKalman, KalmanParams, KalmanState};
use crate::data_model::{BBox, Detection, InstrumentClass};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub association: AssociationParams,
    pub kalman: KalmanParams,
    /// Tracks unmatched for more than this many frames are deleted.
    pub max_age: usize,
    /// Weight of the running appearance vector against a new observation.
    pub appearance_momentum: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            association: AssociationParams::default(),
            kalman: KalmanParams::default(),
            max_age: 60,
            appearance_momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntrySource {
    Detection,
    Prediction,
}

/// One tracker output row: an object's box in a frame, either taken from a
/// matched detection or coasted by the motion model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedEntry {
    pub frame: usize,
    pub object_id: u32,
    pub bbox: BBox,
    /// Detector class; `None` for predictions.
    pub class: Option<InstrumentClass>,
    pub source: EntrySource,
}

/// Per-track bookkeeping.
#[derive(Debug, Clone)]
pub struct TrackState {
    pub object_id: u32,
    pub kalman: KalmanState,
    pub age: usize,
    pub misses: usize,
    /// Per-class match counts, indexed by [`InstrumentClass::index`].
    pub class_history: [usize; 5],
    appearance: Option<Vec<f64>>,
}

impl TrackState {
    pub fn matched_frames(&self) -> usize {
        self.class_history.iter().sum()
    }
}

fn blend_appearance(old: Option<Vec<f64>>, new: Option<&Vec<f64>>, momentum: f64) -> Option<Vec<f64>> {
    match (old, new) {
        (Some(o), Some(n)) if o.len() == n.len() => {
            let mut v: Vec<f64> = o.iter().zip(n).map(|(a, b)| momentum * a + (1.0 - momentum) * b).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            Some(v)
        }
        (_, Some(n)) => Some(n.clone()),
        (o, None) => o,
    }
}

/// Runs the tracker over a frame-sorted detection stream.
///
/// Frames between the first and last detection are all visited, so tracks
/// coast through frames with no detections at all.
pub fn run_tracker(detections: &[Detection], config: &TrackerConfig) -> Result<Vec<TrackedEntry>> {
    config.association.validate()?;
    let kf = BoxKalman::new(config.kalman);
    let (Some(first), Some(last)) = (detections.first(), detections.last()) else {
        return Ok(Vec::new());
    };
    let mut tracks: Vec<TrackState> = Vec::new();
    let mut next_id = 1u32;
    let mut out = Vec::new();
    let mut cursor = 0;

    for frame in first.frame..=last.frame {
        let start = cursor;
        while cursor < detections.len() && detections[cursor].frame == frame {
            cursor += 1;
        }
        let frame_dets: Vec<&Detection> = detections[start..cursor].iter().collect();

        for t in tracks.iter_mut() {
            t.kalman = kf.predict(&t.kalman)?;
            t.age += 1;
        }
        let predicted: Vec<PredictedTrack> = tracks
            .iter()
            .map(|t| PredictedTrack {
                bbox: t.kalman.bbox(),
                appearance: t.appearance.clone(),
            })
            .collect();
        let assoc = associate(&frame_dets, &predicted, &config.association)?;

        let mut frame_entries = Vec::new();
        for &(di, ti) in &assoc.matches {
            let d = frame_dets[di];
            let t = &mut tracks[ti];
            t.kalman = kf.update(&t.kalman, &d.bbox)?;
            t.misses = 0;
            t.class_history[d.class.index()] += 1;
            t.appearance = blend_appearance(t.appearance.take(), d.appearance.as_ref(), config.appearance_momentum);
            frame_entries.push(TrackedEntry {
                frame,
                object_id: t.object_id,
                bbox: d.bbox,
                class: Some(d.class),
                source: EntrySource::Detection,
            });
        }
        for &ti in &assoc.unmatched_tracks {
            tracks[ti].misses += 1;
        }
        for &di in &assoc.unmatched_detections {
            let d = frame_dets[di];
            let mut class_history = [0; 5];
            class_history[d.class.index()] = 1;
            let t = TrackState {
                object_id: next_id,
                kalman: kf.initiate(&d.bbox)?,
                age: 0,
                misses: 0,
                class_history,
                appearance: d.appearance.clone(),
            };
            next_id += 1;
            frame_entries.push(TrackedEntry {
                frame,
                object_id: t.object_id,
                bbox: d.bbox,
                class: Some(d.class),
                source: EntrySource::Detection,
            });
            tracks.push(t);
        }
        tracks.retain(|t| t.misses <= config.max_age);
        for t in &tracks {
            if t.misses > 0 {
                frame_entries.push(TrackedEntry {
                    frame,
                    object_id: t.object_id,
                    bbox: t.kalman.bbox(),
                    class: None,
                    source: EntrySource::Prediction,
                });
            }
        }
        frame_entries.sort_by_key(|e| e.object_id);
        out.extend(frame_entries);
    }
    Ok(out)
}
