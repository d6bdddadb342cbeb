//! Identity-stable instrument tracking and tip localization.

pub mod associate;
pub mod kalman;
pub mod rates;
pub mod refine;
pub mod tips;
pub mod tracker;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use associate::{associate, AssociationParams, PredictedTrack};
pub use kalman::{BoxKalman, KalmanParams, KalmanState};
pub use rates::{recovery_correction_rates, RateCounts, RateReport};
pub use refine::{refine_identity, tracks_to_entries, RefineConfig};
pub use tips::{localize_tip, ReferenceDescriptor, TipCandidate, TipLocation};
pub use tracker::{run_tracker, EntrySource, TrackState, TrackedEntry, TrackerConfig};

use crate::data_model::{Detection, InstrumentClass, Provenance, RefinedTrack};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub tracker: TrackerConfig,
    pub refine: RefineConfig,
}

impl TrackingConfig {
    pub fn validate(&self) -> Result<()> {
        self.tracker.association.validate()?;
        if self.tracker.max_age < self.refine.max_gap {
            log::warn!(
                "tracker max_age {} is below refine max_gap {}; long gaps cannot be bridged",
                self.tracker.max_age,
                self.refine.max_gap
            );
        }
        Ok(())
    }
}

/// Runs the tracker and identity repair over a detection stream.
pub fn track_and_refine(detections: &[Detection], config: &TrackingConfig) -> Result<Vec<RefinedTrack>> {
    let entries = run_tracker(detections, &config.tracker)?;
    Ok(refine_identity(&entries, &config.refine))
}

/// Mapping from `object_id` to class plus first/last frame, and from class
/// to the most recent object carrying it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IdentityLedger {
    pub objects: BTreeMap<u32, LedgerEntry>,
    pub last_by_class: BTreeMap<InstrumentClass, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub class: InstrumentClass,
    pub first_seen: usize,
    pub last_seen: usize,
}

impl IdentityLedger {
    pub fn from_tracks(tracks: &[RefinedTrack]) -> Self {
        let mut ledger = IdentityLedger::default();
        let mut latest: BTreeMap<InstrumentClass, (usize, u32)> = BTreeMap::new();
        for t in tracks {
            let (Some(first), Some(last)) = (t.frames.first(), t.frames.last()) else {
                continue;
            };
            ledger.objects.insert(
                t.object_id,
                LedgerEntry {
                    class: t.class,
                    first_seen: first.frame,
                    last_seen: last.frame,
                },
            );
            let e = latest.entry(t.class).or_insert((last.frame, t.object_id));
            if (last.frame, t.object_id) > *e {
                *e = (last.frame, t.object_id);
            }
        }
        ledger.last_by_class = latest.into_iter().map(|(c, (_, id))| (c, id)).collect();
        ledger
    }

    /// Every class entry points at an object of that class.
    pub fn is_consistent(&self) -> bool {
        self.last_by_class
            .iter()
            .all(|(c, id)| self.objects.get(id).is_some_and(|e| e.class == *c))
    }
}

/// Frame counts per provenance.
pub fn provenance_counts(tracks: &[RefinedTrack]) -> BTreeMap<Provenance, usize> {
    let mut out = BTreeMap::new();
    for t in tracks {
        for f in &t.frames {
            *out.entry(f.provenance).or_default() += 1;
        }
    }
    out
}
