//! Detection-prioritized identity repair.
//!
//! Three rules, applied offline over a whole video:
//!
//! 1. Wherever a detection backs a frame, its box is the one emitted.
//! 2. Every object carries its majority class (ties go to the class seen
//!    first); detector frames with another class are rewritten and marked
//!    [`Provenance::Corrected`].
//! 3. A new object id whose class matches an object lost at most `max_gap`
//!    frames earlier is folded back into the older id. Tracker-coasted boxes
//!    inside gaps of at most `max_gap` frames, bracketed by detections of the
//!    same object, are kept as [`Provenance::Recovered`]; other coasted boxes
//!    are dropped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tracker::{EntrySource, TrackedEntry};
use crate::data_model::{BBox, InstrumentClass, Provenance, RefinedTrack, TrackFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub max_gap: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { max_gap: 30 }
    }
}

#[derive(Debug, Clone)]
struct Observation {
    frame: usize,
    bbox: BBox,
    class: Option<InstrumentClass>,
    /// Id the tracker gave this row; used to pick among competing coasts.
    source_id: u32,
}

#[derive(Debug, Clone)]
struct Group {
    id: u32,
    detected: BTreeMap<usize, Observation>,
    predicted: Vec<Observation>,
}

impl Group {
    fn first_detected(&self) -> usize {
        *self.detected.keys().next().expect("group without detections")
    }

    fn last_detected(&self) -> usize {
        *self.detected.keys().next_back().expect("group without detections")
    }

    fn majority_class(&self) -> InstrumentClass {
        let mut counts: BTreeMap<InstrumentClass, (usize, usize)> = BTreeMap::new();
        for o in self.detected.values() {
            let c = o.class.expect("detected rows carry a class");
            let e = counts.entry(c).or_insert((0, o.frame));
            e.0 += 1;
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
            .map(|(c, _)| c)
            .expect("nonempty")
    }
}

fn build_groups(entries: &[TrackedEntry]) -> Vec<Group> {
    let mut groups: BTreeMap<u32, Group> = BTreeMap::new();
    for e in entries {
        let g = groups.entry(e.object_id).or_insert_with(|| Group {
            id: e.object_id,
            detected: BTreeMap::new(),
            predicted: Vec::new(),
        });
        let obs = Observation {
            frame: e.frame,
            bbox: e.bbox,
            class: e.class,
            source_id: e.object_id,
        };
        match e.source {
            EntrySource::Detection if e.class.is_some() => {
                // first detection row wins if a tracker ever emits two
                g.detected.entry(e.frame).or_insert(obs);
            }
            _ => g.predicted.push(obs),
        }
    }
    groups.into_values().filter(|g| !g.detected.is_empty()).collect()
}

/// Finds the lost group the later group `b` should be folded into.
fn restoration_target(groups: &[Group], b: usize, max_gap: usize) -> Option<usize> {
    let gb = &groups[b];
    let class = gb.majority_class();
    let first = gb.first_detected();
    groups
        .iter()
        .enumerate()
        .filter(|&(a, ga)| {
            a != b
                && ga.id < gb.id
                && ga.last_detected() < first
                && first - ga.last_detected() - 1 <= max_gap
                && ga.majority_class() == class
        })
        .max_by(|x, y| {
            x.1.last_detected()
                .cmp(&y.1.last_detected())
                .then(y.1.id.cmp(&x.1.id))
        })
        .map(|(a, _)| a)
}

fn merge_until_stable(mut groups: Vec<Group>, max_gap: usize) -> Vec<Group> {
    loop {
        groups.sort_by_key(|g| (g.first_detected(), g.id));
        let mut merged = false;
        for b in 0..groups.len() {
            if let Some(a) = restoration_target(&groups, b, max_gap) {
                let gb = groups.remove(b);
                let a = if a > b { a - 1 } else { a };
                let ga = &mut groups[a];
                ga.detected.extend(gb.detected);
                ga.predicted.extend(gb.predicted);
                merged = true;
                break;
            }
        }
        if !merged {
            return groups;
        }
    }
}

fn finalize(group: Group, max_gap: usize) -> RefinedTrack {
    let class = group.majority_class();
    let mut frames: Vec<TrackFrame> = group
        .detected
        .values()
        .map(|o| TrackFrame {
            frame: o.frame,
            bbox: o.bbox,
            provenance: if o.class == Some(class) {
                Provenance::Detected
            } else {
                Provenance::Corrected
            },
        })
        .collect();

    let det_frames: Vec<usize> = group.detected.keys().copied().collect();
    let mut fill: BTreeMap<usize, (bool, u32, BBox)> = BTreeMap::new();
    for p in &group.predicted {
        if group.detected.contains_key(&p.frame) {
            continue;
        }
        // bracketing detections
        let idx = det_frames.partition_point(|&f| f < p.frame);
        if idx == 0 || idx == det_frames.len() {
            continue;
        }
        let (prev, next) = (det_frames[idx - 1], det_frames[idx]);
        if next - prev - 1 > max_gap {
            continue;
        }
        // prefer the coast of the object that was detected just before
        let owner = group.detected[&prev].source_id;
        let rank = (p.source_id != owner, p.source_id, p.bbox);
        match fill.get(&p.frame) {
            Some(&(other_not_owner, other_id, _)) if (other_not_owner, other_id) <= (rank.0, rank.1) => {}
            _ => {
                fill.insert(p.frame, rank);
            }
        }
    }
    frames.extend(fill.into_iter().map(|(frame, (_, _, bbox))| TrackFrame {
        frame,
        bbox,
        provenance: Provenance::Recovered,
    }));
    frames.sort_by_key(|f| f.frame);
    RefinedTrack {
        object_id: group.id,
        class,
        frames,
    }
}

/// Repairs tracker output into identity-stable tracks, sorted by object id.
pub fn refine_identity(entries: &[TrackedEntry], config: &RefineConfig) -> Vec<RefinedTrack> {
    let groups = merge_until_stable(build_groups(entries), config.max_gap);
    let mut tracks: Vec<RefinedTrack> = groups.into_iter().map(|g| finalize(g, config.max_gap)).collect();
    tracks.sort_by_key(|t| t.object_id);
    tracks
}

/// Re-expresses refined tracks as tracker entries, so that refinement can be
/// applied to its own output.
pub fn tracks_to_entries(tracks: &[RefinedTrack]) -> Vec<TrackedEntry> {
    let mut out: Vec<TrackedEntry> = tracks
        .iter()
        .flat_map(|t| {
            t.frames.iter().map(move |f| match f.provenance {
                Provenance::Recovered => TrackedEntry {
                    frame: f.frame,
                    object_id: t.object_id,
                    bbox: f.bbox,
                    class: None,
                    source: EntrySource::Prediction,
                },
                Provenance::Detected | Provenance::Corrected => TrackedEntry {
                    frame: f.frame,
                    object_id: t.object_id,
                    bbox: f.bbox,
                    class: Some(t.class),
                    source: EntrySource::Detection,
                },
            })
        })
        .collect();
    out.sort_by_key(|e| (e.frame, e.object_id));
    out
}

/// Whether refining `tracks` again changes ids, classes, frames or boxes.
///
/// A corrected frame is re-emitted with its repaired class, so the second
/// pass reports it as detected; the two provenances compare equal here.
pub fn is_fixed_point(tracks: &[RefinedTrack], config: &RefineConfig) -> bool {
    fn settle(tracks: &[RefinedTrack]) -> Vec<RefinedTrack> {
        let mut out = tracks.to_vec();
        for f in out.iter_mut().flat_map(|t| t.frames.iter_mut()) {
            if f.provenance == Provenance::Corrected {
                f.provenance = Provenance::Detected;
            }
        }
        out
    }
    settle(&refine_identity(&tracks_to_entries(tracks), config)) == settle(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use InstrumentClass::*;

    fn d(frame: usize, id: u32, x: f64, class: InstrumentClass) -> TrackedEntry {
        TrackedEntry {
            frame,
            object_id: id,
            bbox: BBox::new(x, 0.0, 10.0, 20.0),
            class: Some(class),
            source: EntrySource::Detection,
        }
    }

    fn p(frame: usize, id: u32, x: f64) -> TrackedEntry {
        TrackedEntry {
            frame,
            object_id: id,
            bbox: BBox::new(x, 0.0, 10.0, 20.0),
            class: None,
            source: EntrySource::Prediction,
        }
    }

    #[test]
    fn single_frame_misclassification_is_corrected() {
        // frame 5 calls the scissors a curved needle driver
        let entries: Vec<_> = (0..10)
            .map(|f| d(f, 1, f as f64, if f == 5 { NeedleDriverC } else { ScissorsC }))
            .collect();
        let out = refine_identity(&entries, &RefineConfig::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].class, ScissorsC);
        assert_eq!(out[0].frames[5].provenance, Provenance::Corrected);
        assert_eq!(
            out[0].frames.iter().filter(|f| f.provenance == Provenance::Corrected).count(),
            1
        );
    }

    #[test]
    fn majority_tie_goes_to_earliest_class() {
        let entries = vec![d(0, 1, 0.0, Needle), d(1, 1, 0.0, ScissorsC)];
        let out = refine_identity(&entries, &RefineConfig::default());
        assert_eq!(out[0].class, Needle);
    }

    #[test]
    fn missed_frames_recovered_from_coasting() {
        let mut entries: Vec<_> = (0..5).map(|f| d(f, 1, f as f64, ScissorsC)).collect();
        entries.extend((5..8).map(|f| p(f, 1, f as f64 + 0.5)));
        entries.extend((8..12).map(|f| d(f, 1, f as f64, ScissorsC)));
        // trailing coast is never confirmed by a detection
        entries.extend((12..15).map(|f| p(f, 1, f as f64)));
        let out = refine_identity(&entries, &RefineConfig::default());
        assert_eq!(out.len(), 1);
        let t = &out[0];
        assert_eq!(t.frames.len(), 12);
        for f in 5..8 {
            let tf = t.box_at(f).unwrap();
            assert_eq!(tf.provenance, Provenance::Recovered);
            // coasted geometry untouched
            assert_eq!(tf.bbox.x, f as f64 + 0.5);
        }
        assert!(t.box_at(12).is_none());
    }

    #[test]
    fn respawned_id_restored_to_original() {
        let mut entries: Vec<_> = (0..5).map(|f| d(f, 1, f as f64, ScissorsC)).collect();
        entries.extend((5..8).map(|f| p(f, 1, 100.0)));
        // tracker lost it and opened a new id when it came back
        entries.extend((8..12).map(|f| d(f, 2, f as f64, ScissorsC)));
        entries.push(d(3, 3, 300.0, Needle));
        let out = refine_identity(&entries, &RefineConfig::default());
        assert_eq!(out.iter().map(|t| t.object_id).collect::<Vec<_>>(), vec![1, 3]);
        let t = &out[0];
        assert_eq!(t.frames.len(), 12);
        assert!((5..8).all(|f| t.box_at(f).unwrap().provenance == Provenance::Recovered));
        assert_eq!(t.box_at(9).unwrap().provenance, Provenance::Detected);
    }

    #[test]
    fn gap_longer_than_max_gap_is_not_bridged() {
        let mut entries: Vec<_> = (0..5).map(|f| d(f, 1, 0.0, ScissorsC)).collect();
        entries.extend((50..55).map(|f| d(f, 2, 0.0, ScissorsC)));
        let out = refine_identity(&entries, &RefineConfig { max_gap: 30 });
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn different_class_not_restored() {
        let mut entries: Vec<_> = (0..5).map(|f| d(f, 1, 0.0, ScissorsC)).collect();
        entries.extend((6..10).map(|f| d(f, 2, 0.0, Needle)));
        let out = refine_identity(&entries, &RefineConfig::default());
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn clean_stream_is_a_fixed_point() {
        let entries: Vec<_> = (0..10)
            .flat_map(|f| [d(f, 1, f as f64, ScissorsC), d(f, 2, 100.0, Needle)])
            .collect();
        let out = refine_identity(&entries, &RefineConfig::default());
        assert_eq!(tracks_to_entries(&out), entries);
        assert!(out.iter().all(|t| t.frames.iter().all(|f| f.provenance == Provenance::Detected)));
    }

    #[test]
    fn idempotent_on_messy_stream() {
        let mut entries: Vec<_> = (0..5).map(|f| d(f, 1, f as f64, ScissorsC)).collect();
        entries.push(d(5, 1, 5.0, Needle));
        entries.extend((6..9).map(|f| p(f, 1, f as f64)));
        entries.extend((9..15).map(|f| d(f, 4, f as f64, ScissorsC)));
        entries.extend((15..18).map(|f| p(f, 4, f as f64)));
        entries.extend((2..6).map(|f| d(f, 2, 50.0, NeedleDriverS)));
        let cfg = RefineConfig::default();
        let once = refine_identity(&entries, &cfg);
        assert!(is_fixed_point(&once, &cfg));
    }
}
