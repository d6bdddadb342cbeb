//! File formats.
//!
//! Line-delimited JSON for record streams (detections, refined tracks, truth
//! objects, tip candidates, reference descriptors) and comma-delimited text
//! for tabular data (tips, labels, scores). Floats are written with Rust's
//! shortest round-trip formatting so save/load is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    Action, BBox, Detection, GroundTruthLabels, InstrumentClass, Provenance, RefinedTrack,
    SkillScore, TipTrajectory, TrackFrame, TruthObject,
};
use crate::error::{Error, Result};

pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const TIP_CANDIDATES_FILE: &str = "tip_candidates.jsonl";
pub const REFERENCE_DESCRIPTORS_FILE: &str = "reference_descriptors.jsonl";
pub const TRUTH_OBJECTS_FILE: &str = "truth_objects.jsonl";
pub const LABELS_FILE: &str = "labels.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const GT_TIPS_FILE: &str = "tips_gt.csv";
pub const GT_BOUNDARIES_FILE: &str = "boundaries_gt.csv";
pub const VIDEO_FILE: &str = "video.json";

/// Optional per-procedure video metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub fps: f64,
    pub frames: usize,
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    s.push('\n');
    write_string(path, &s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| Error::parse(path, e.line(), e))
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(&r).map_err(|e| Error::Serde(e.to_string()))?);
        s.push('\n');
    }
    write_string(path, &s)
}

/// Reads a comma-delimited file with a header row, skipping `#` comments.
pub(crate) fn read_csv_rows(path: &Path) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>, Vec<String>)> {
    let text = read_to_string(path)?;
    let mut comments = Vec::new();
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(c) = trimmed.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        let fields: Vec<String> = trimmed.split(',').map(|f| f.trim().to_string()).collect();
        if header.is_none() {
            header = Some(fields);
        } else {
            rows.push((i + 1, fields));
        }
    }
    let header = header.ok_or_else(|| Error::parse(path, 1, "missing header row"))?;
    Ok((header, rows, comments))
}

pub(crate) fn expect_header(path: &Path, header: &[String], expected: &[&str]) -> Result<()> {
    if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), header.join(",")),
        ));
    }
    Ok(())
}

pub(crate) fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| Error::parse(path, line, format!("field `{name}`: {e}")))
}

// ---------------------------------------------------------------------------
// detections

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    frame: usize,
    class: InstrumentClass,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    conf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    appearance: Option<Vec<f64>>,
}

impl From<DetectionRecord> for Detection {
    fn from(r: DetectionRecord) -> Self {
        Detection {
            frame: r.frame,
            class: r.class,
            bbox: BBox::new(r.x, r.y, r.w, r.h),
            confidence: r.conf,
            appearance: r.appearance,
        }
    }
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        DetectionRecord {
            frame: d.frame,
            class: d.class,
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            conf: d.confidence,
            appearance: d.appearance.clone(),
        }
    }
}

fn parse_detections(path: &Path, strict_order: bool) -> Result<Vec<Detection>> {
    let mut out: Vec<Detection> = Vec::new();
    let mut last_frame = 0usize;
    for (line, rec) in read_jsonl::<DetectionRecord>(path)? {
        let det = Detection::from(rec);
        det.validate()
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        if strict_order && det.frame < last_frame {
            return Err(Error::Validation(format!(
                "{}:{line}: frame {} follows frame {last_frame}",
                path.display(),
                det.frame
            )));
        }
        last_frame = det.frame;
        out.push(det);
    }
    // stable: records within a frame keep file order, duplicates included
    out.sort_by_key(|d| d.frame);
    Ok(out)
}

/// Loads a detection stream, sorting it by frame.
pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    parse_detections(path, false)
}

/// Like [`load_detections`] but rejects files whose frames decrease.
pub fn load_detections_strict(path: &Path) -> Result<Vec<Detection>> {
    parse_detections(path, true)
}

pub fn save_detections(path: &Path, stream: &[Detection]) -> Result<()> {
    write_jsonl(path, stream.iter().map(DetectionRecord::from))
}

// ---------------------------------------------------------------------------
// refined tracks

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RefinedRecord {
    frame: usize,
    object_id: u32,
    class: InstrumentClass,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    provenance: Provenance,
}

/// Writes refined tracks frame-major, then by object id.
pub fn save_refined_tracks(path: &Path, tracks: &[RefinedTrack]) -> Result<()> {
    let mut recs: Vec<RefinedRecord> = tracks
        .iter()
        .flat_map(|t| {
            t.frames.iter().map(move |f| RefinedRecord {
                frame: f.frame,
                object_id: t.object_id,
                class: t.class,
                x: f.bbox.x,
                y: f.bbox.y,
                w: f.bbox.w,
                h: f.bbox.h,
                provenance: f.provenance,
            })
        })
        .collect();
    recs.sort_by_key(|r| (r.frame, r.object_id));
    write_jsonl(path, recs)
}

pub fn load_refined_tracks(path: &Path) -> Result<Vec<RefinedTrack>> {
    let mut by_id: BTreeMap<u32, RefinedTrack> = BTreeMap::new();
    for (line, r) in read_jsonl::<RefinedRecord>(path)? {
        let track = by_id.entry(r.object_id).or_insert_with(|| RefinedTrack {
            object_id: r.object_id,
            class: r.class,
            frames: Vec::new(),
        });
        if track.class != r.class {
            return Err(Error::parse(
                path,
                line,
                format!("object {} carries two classes", r.object_id),
            ));
        }
        if track.frames.last().is_some_and(|f| f.frame >= r.frame) {
            return Err(Error::parse(
                path,
                line,
                format!("object {} frames not strictly increasing", r.object_id),
            ));
        }
        track.frames.push(TrackFrame {
            frame: r.frame,
            bbox: BBox::new(r.x, r.y, r.w, r.h),
            provenance: r.provenance,
        });
    }
    Ok(by_id.into_values().collect())
}

// ---------------------------------------------------------------------------
// truth objects

pub fn save_truth_objects(path: &Path, objects: &[TruthObject]) -> Result<()> {
    write_jsonl(path, objects)
}

pub fn load_truth_objects(path: &Path) -> Result<Vec<TruthObject>> {
    let mut v: Vec<TruthObject> = read_jsonl(path)?.into_iter().map(|(_, r)| r).collect();
    v.sort_by_key(|o| (o.frame, o.object_id));
    Ok(v)
}

// ---------------------------------------------------------------------------
// tip candidates and reference descriptors

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePoint {
    /// Position relative to the bounding-box origin.
    pub x: f64,
    pub y: f64,
    pub descriptor: Vec<f64>,
}

/// Candidate tip points for one instrument in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub frame: usize,
    pub class: InstrumentClass,
    pub candidates: Vec<CandidatePoint>,
}

pub fn save_tip_candidates(path: &Path, sets: &[CandidateSet]) -> Result<()> {
    write_jsonl(path, sets)
}

pub fn load_tip_candidates(path: &Path) -> Result<Vec<CandidateSet>> {
    let mut v: Vec<CandidateSet> = read_jsonl(path)?.into_iter().map(|(_, r)| r).collect();
    v.sort_by_key(|c| (c.frame, c.class));
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub class: InstrumentClass,
    pub descriptor: Vec<f64>,
}

pub fn save_reference_descriptors(path: &Path, refs: &[ReferenceRecord]) -> Result<()> {
    write_jsonl(path, refs)
}

pub fn load_reference_descriptors(path: &Path) -> Result<BTreeMap<InstrumentClass, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for (line, r) in read_jsonl::<ReferenceRecord>(path)? {
        if out.insert(r.class, r.descriptor).is_some() {
            return Err(Error::parse(path, line, format!("duplicate reference for {}", r.class)));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// tips

const TIPS_HEADER: [&str; 5] = ["frame", "instrument_id", "present", "x", "y"];

/// Loads tip trajectories. The frame rate comes from a `# fps=<value>`
/// comment line when present, else from `fallback_fps`.
///
/// All trajectories share the same length: one past the largest frame.
pub fn load_tips(path: &Path, fallback_fps: Option<f64>) -> Result<Vec<TipTrajectory>> {
    let (header, rows, comments) = read_csv_rows(path)?;
    expect_header(path, &header, &TIPS_HEADER)?;
    let mut fps = None;
    for c in &comments {
        if let Some(v) = c.strip_prefix("fps=") {
            fps = Some(
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path, 1, format!("fps comment: {e}")))?,
            );
        }
    }
    let fps = fps.or(fallback_fps).ok_or_else(|| {
        Error::Validation(format!("{}: no `# fps=` metadata and no fallback fps", path.display()))
    })?;

    let mut per: BTreeMap<u32, BTreeMap<usize, Option<[f64; 2]>>> = BTreeMap::new();
    let mut n_frames = 0;
    for (line, f) in rows {
        if f.len() != 5 {
            return Err(Error::parse(path, line, format!("expected 5 fields, got {}", f.len())));
        }
        let frame: usize = field(path, line, "frame", &f[0])?;
        let id: u32 = field(path, line, "instrument_id", &f[1])?;
        let present: u8 = field(path, line, "present", &f[2])?;
        let tip = match present {
            0 => None,
            1 => Some([
                field(path, line, "x", &f[3])?,
                field(path, line, "y", &f[4])?,
            ]),
            p => return Err(Error::parse(path, line, format!("present must be 0 or 1, got {p}"))),
        };
        n_frames = n_frames.max(frame + 1);
        if per.entry(id).or_default().insert(frame, tip).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate row for instrument {id} frame {frame}"),
            ));
        }
    }
    let trajectories: Vec<TipTrajectory> = per
        .into_iter()
        .map(|(id, frames)| {
            let mut tips = vec![None; n_frames];
            for (f, p) in frames {
                tips[f] = p;
            }
            TipTrajectory {
                instrument_id: id,
                fps,
                tips,
            }
        })
        .collect();
    for t in &trajectories {
        t.validate()?;
    }
    Ok(trajectories)
}

pub fn save_tips(path: &Path, trajectories: &[TipTrajectory]) -> Result<()> {
    let fps = trajectories.first().map_or(0.0, |t| t.fps);
    let mut s = String::new();
    writeln!(s, "# fps={fps}").unwrap();
    writeln!(s, "{}", TIPS_HEADER.join(",")).unwrap();
    let n = trajectories.iter().map(|t| t.tips.len()).max().unwrap_or(0);
    let mut sorted: Vec<&TipTrajectory> = trajectories.iter().collect();
    sorted.sort_by_key(|t| t.instrument_id);
    for frame in 0..n {
        for t in &sorted {
            match t.tips.get(frame).copied().flatten() {
                Some([x, y]) => writeln!(s, "{frame},{},1,{x},{y}", t.instrument_id).unwrap(),
                None => writeln!(s, "{frame},{},0,,", t.instrument_id).unwrap(),
            }
        }
    }
    write_string(path, &s)
}

// ---------------------------------------------------------------------------
// labels

pub fn load_labels(path: &Path) -> Result<GroundTruthLabels> {
    let (header, rows, _) = read_csv_rows(path)?;
    expect_header(path, &header, &["frame", "action"])?;
    let mut actions = Vec::with_capacity(rows.len());
    for (line, f) in rows {
        if f.len() != 2 {
            return Err(Error::parse(path, line, "expected 2 fields"));
        }
        let frame: usize = field(path, line, "frame", &f[0])?;
        if frame != actions.len() {
            return Err(Error::parse(
                path,
                line,
                format!("labels must cover every frame in order; expected frame {}", actions.len()),
            ));
        }
        actions.push(f[1].parse::<Action>().map_err(|e| Error::parse(path, line, e))?);
    }
    Ok(GroundTruthLabels { actions })
}

pub fn save_labels(path: &Path, labels: &GroundTruthLabels) -> Result<()> {
    let mut s = String::from("frame,action\n");
    for (i, a) in labels.actions.iter().enumerate() {
        writeln!(s, "{i},{a}").unwrap();
    }
    write_string(path, &s)
}

// ---------------------------------------------------------------------------
// scores

pub fn load_scores(path: &Path) -> Result<Vec<SkillScore>> {
    let (header, rows, _) = read_csv_rows(path)?;
    expect_header(path, &header, &["procedure_id", "action_type", "score"])?;
    let mut out = Vec::new();
    for (line, f) in rows {
        if f.len() != 3 {
            return Err(Error::parse(path, line, "expected 3 fields"));
        }
        let s = SkillScore {
            procedure_id: f[0].clone(),
            action_type: f[1].parse().map_err(|e| Error::parse(path, line, e))?,
            score: field(path, line, "score", &f[2])?,
        };
        s.validate().map_err(|e| Error::parse(path, line, e))?;
        out.push(s);
    }
    Ok(out)
}

pub fn save_scores(path: &Path, scores: &[SkillScore]) -> Result<()> {
    let mut s = String::from("procedure_id,action_type,score\n");
    for r in scores {
        writeln!(s, "{},{},{}", r.procedure_id, r.action_type, r.score).unwrap();
    }
    write_string(path, &s)
}

// ---------------------------------------------------------------------------
// ground-truth boundaries

pub fn save_boundary_list(path: &Path, boundaries: &[usize]) -> Result<()> {
    let mut s = String::from("frame\n");
    for b in boundaries {
        writeln!(s, "{b}").unwrap();
    }
    write_string(path, &s)
}

pub fn load_boundary_list(path: &Path) -> Result<Vec<usize>> {
    let (header, rows, _) = read_csv_rows(path)?;
    expect_header(path, &header, &["frame"])?;
    rows.into_iter()
        .map(|(line, f)| field(path, line, "frame", &f[0]))
        .collect()
}
