//! Canonical record types shared by every stage, plus stream validation.
//!
//! Coordinates are kept in source-video pixels. Nothing here normalizes or
//! resamples; that happens in [`crate::kinematics`].

pub mod io;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Instrument classes produced by the upstream detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentClass {
    ScissorsC,
    ScissorsS,
    NeedleDriverC,
    NeedleDriverS,
    Needle,
}

impl InstrumentClass {
    pub const ALL: [InstrumentClass; 5] = [
        InstrumentClass::ScissorsC,
        InstrumentClass::ScissorsS,
        InstrumentClass::NeedleDriverC,
        InstrumentClass::NeedleDriverS,
        InstrumentClass::Needle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            InstrumentClass::ScissorsC => "scissors_c",
            InstrumentClass::ScissorsS => "scissors_s",
            InstrumentClass::NeedleDriverC => "needle_driver_c",
            InstrumentClass::NeedleDriverS => "needle_driver_s",
            InstrumentClass::Needle => "needle",
        }
    }

    pub fn is_scissors(self) -> bool {
        matches!(self, InstrumentClass::ScissorsC | InstrumentClass::ScissorsS)
    }
}

impl fmt::Display for InstrumentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InstrumentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown instrument class `{s}`")))
    }
}

/// Axis-aligned box, top-left origin, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w > 0.0 && self.h > 0.0 && self.w.is_finite() && self.h.is_finite()
    }
}

/// One detector observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: usize,
    pub class: InstrumentClass,
    pub bbox: BBox,
    pub confidence: f64,
    /// Externally supplied unit-norm appearance embedding.
    pub appearance: Option<Vec<f64>>,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        if !self.bbox.is_valid() {
            return Err(Error::Validation(format!(
                "frame {}: box must have finite origin and positive size, got {:?}",
                self.frame, self.bbox
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::Validation(format!(
                "frame {}: confidence {} outside [0, 1]",
                self.frame, self.confidence
            )));
        }
        if let Some(a) = &self.appearance {
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "frame {}: appearance vector norm {norm} is not 1",
                    self.frame
                )));
            }
        }
        Ok(())
    }
}

/// How a refined per-frame box came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Box and class straight from the detector.
    Detected,
    /// Frame filled from tracker motion where the detector had nothing.
    Recovered,
    /// Detector box kept, class rewritten to the object's majority class.
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackFrame {
    pub frame: usize,
    pub bbox: BBox,
    pub provenance: Provenance,
}

/// Identity-stable track after repair. Frames are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedTrack {
    pub object_id: u32,
    pub class: InstrumentClass,
    pub frames: Vec<TrackFrame>,
}

impl RefinedTrack {
    pub fn box_at(&self, frame: usize) -> Option<&TrackFrame> {
        self.frames
            .binary_search_by_key(&frame, |f| f.frame)
            .ok()
            .map(|i| &self.frames[i])
    }
}

/// Per-frame tip positions of one instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct TipTrajectory {
    pub instrument_id: u32,
    pub fps: f64,
    pub tips: Vec<Option<[f64; 2]>>,
}

impl TipTrajectory {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Validation(format!("fps must be positive, got {}", self.fps)));
        }
        if let Some(t) = self
            .tips
            .iter()
            .position(|p| p.is_some_and(|[x, y]| !x.is_finite() || !y.is_finite()))
        {
            return Err(Error::Validation(format!(
                "instrument {}: non-finite tip at frame {t}",
                self.instrument_id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tips.is_empty()
    }

    /// Class for ids that follow the detector's class numbering.
    pub fn class(&self) -> Option<InstrumentClass> {
        InstrumentClass::from_index(self.instrument_id as usize)
    }

    pub fn present_count(&self) -> usize {
        self.tips.iter().filter(|p| p.is_some()).count()
    }
}

/// Frame-level action vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Cutting,
    NeedleDriving,
    KnotTying,
    NoAction,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::Cutting,
        Action::NeedleDriving,
        Action::KnotTying,
        Action::NoAction,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Cutting => "Cutting",
            Action::NeedleDriving => "NeedleDriving",
            Action::KnotTying => "KnotTying",
            Action::NoAction => "NoAction",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown action `{s}`")))
    }
}

/// One action label per frame, covering `[0, T)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruthLabels {
    pub actions: Vec<Action>,
}

impl GroundTruthLabels {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Frames where the label changes; the first frame of each new run.
    pub fn boundaries(&self) -> Vec<usize> {
        (1..self.actions.len())
            .filter(|&t| self.actions[t] != self.actions[t - 1])
            .collect()
    }

    /// Maximal constant runs as `(start, end_exclusive, action)`.
    pub fn runs(&self) -> Vec<(usize, usize, Action)> {
        let mut out = Vec::new();
        let mut start = 0;
        for t in 1..=self.actions.len() {
            if t == self.actions.len() || self.actions[t] != self.actions[start] {
                out.push((start, t, self.actions[start]));
                start = t;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillScore {
    pub procedure_id: String,
    pub action_type: Action,
    pub score: f64,
}

impl SkillScore {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.action_type, Action::NeedleDriving | Action::KnotTying) {
            return Err(Error::Validation(format!(
                "skill scores are defined for NeedleDriving and KnotTying, got {}",
                self.action_type
            )));
        }
        if !(1.0..=5.0).contains(&self.score) {
            return Err(Error::Validation(format!("score {} outside [1, 5]", self.score)));
        }
        Ok(())
    }
}

/// Ground-truth object for tracking evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthObject {
    pub frame: usize,
    pub object_id: u32,
    pub class: InstrumentClass,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl TruthObject {
    pub fn bbox(&self) -> BBox {
        BBox::new(self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGap {
    /// First missing frame.
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardinalityAnomaly {
    pub frame: usize,
    pub class: InstrumentClass,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StreamReport {
    pub records: usize,
    pub first_frame: Option<usize>,
    pub last_frame: Option<usize>,
    pub gaps: Vec<FrameGap>,
    pub anomalies: Vec<CardinalityAnomaly>,
}

/// Reports frame gaps and classes seen more than once in a frame.
///
/// Each class is one physical instrument, so two simultaneous detections of
/// the same class are flagged. Expects a frame-sorted stream; never mutates.
pub fn validate_stream(stream: &[Detection]) -> StreamReport {
    let mut report = StreamReport {
        records: stream.len(),
        first_frame: stream.first().map(|d| d.frame),
        last_frame: stream.last().map(|d| d.frame),
        ..Default::default()
    };
    let mut i = 0;
    let mut prev_frame: Option<usize> = None;
    while i < stream.len() {
        let frame = stream[i].frame;
        let mut counts: BTreeMap<InstrumentClass, usize> = BTreeMap::new();
        while i < stream.len() && stream[i].frame == frame {
            *counts.entry(stream[i].class).or_default() += 1;
            i += 1;
        }
        if let Some(p) = prev_frame {
            if frame > p + 1 {
                report.gaps.push(FrameGap {
                    start: p + 1,
                    len: frame - p - 1,
                });
            }
        }
        prev_frame = Some(frame);
        report.anomalies.extend(
            counts
                .into_iter()
                .filter(|&(_, n)| n > 1)
                .map(|(class, count)| CardinalityAnomaly { frame, class, count }),
        );
    }
    report
}
