//! Synthetic procedures with known ground truth.
//!
//! Each action has its own motion regime and instrument set, so segment
//! boundaries, action labels, detector faults and skill scores are all known
//! exactly. Output uses the same file formats as real data.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_model::io::{
    self, CandidatePoint, CandidateSet, ReferenceRecord, DETECTIONS_FILE, GT_BOUNDARIES_FILE, GT_TIPS_FILE,
    LABELS_FILE, REFERENCE_DESCRIPTORS_FILE, SCORES_FILE, TIP_CANDIDATES_FILE, TRUTH_OBJECTS_FILE, VIDEO_FILE,
    VideoInfo,
};
use crate::data_model::{Action, BBox, Detection, GroundTruthLabels, InstrumentClass, SkillScore, TipTrajectory, TruthObject};
use crate::error::{Error, Result};

pub const SCRIPT_FILE: &str = "script.json";

/// Instruments the generator animates, in output order.
pub const INSTRUMENTS: [InstrumentClass; 4] = [
    InstrumentClass::ScissorsC,
    InstrumentClass::NeedleDriverC,
    InstrumentClass::NeedleDriverS,
    InstrumentClass::Needle,
];

/// Instruments visible during an action.
pub fn visible_during(action: Action) -> &'static [InstrumentClass] {
    match action {
        Action::Cutting => &[InstrumentClass::ScissorsC, InstrumentClass::NeedleDriverS],
        Action::NeedleDriving => &[
            InstrumentClass::NeedleDriverC,
            InstrumentClass::NeedleDriverS,
            InstrumentClass::Needle,
        ],
        Action::KnotTying => &[InstrumentClass::NeedleDriverC, InstrumentClass::NeedleDriverS],
        Action::NoAction => &[],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptSegment {
    pub action: Action,
    pub duration_s: f64,
}

/// Generator settings shared by every script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub fps: f64,
    /// Standard deviation of tip measurement noise, pixels.
    pub noise_px: f64,
    pub dropout_rate: f64,
    pub mislabel_rate: f64,
    /// Longest injected dropout run, frames.
    pub max_gap: usize,
    /// Fixed sloppiness in `[0, 1]`; drawn per procedure when unset.
    pub sloppiness: Option<f64>,
    /// Relative duration jitter of a perfectly steady operator.
    pub duration_jitter: f64,
    pub stitch_cycles: usize,
    pub initial_cuts: usize,
    pub candidates_per_box: usize,
    pub descriptor_dim: usize,
    /// Length of per-detection appearance vectors; 0 disables them.
    pub appearance_dim: usize,
    /// Multiplies every scripted duration; handy for short fixtures.
    pub time_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            noise_px: 1.0,
            dropout_rate: 0.1,
            mislabel_rate: 0.05,
            max_gap: 5,
            sloppiness: None,
            duration_jitter: 0.25,
            stitch_cycles: 8,
            initial_cuts: 3,
            candidates_per_box: 6,
            descriptor_dim: 16,
            appearance_dim: 0,
            time_scale: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        rate("dropout_rate", self.dropout_rate)?;
        rate("mislabel_rate", self.mislabel_rate)?;
        if let Some(s) = self.sloppiness {
            rate("sloppiness", s)?;
        }
        if !(self.fps > 0.0) || !(self.time_scale > 0.0) {
            return Err(Error::InvalidParameter("fps and time_scale must be positive".into()));
        }
        if !(self.noise_px >= 0.0) || !(0.0..1.0).contains(&self.duration_jitter) {
            return Err(Error::InvalidParameter("noise_px must be >= 0 and duration_jitter in [0, 1)".into()));
        }
        if self.max_gap == 0 || self.candidates_per_box == 0 || self.descriptor_dim == 0 {
            return Err(Error::InvalidParameter(
                "max_gap, candidates_per_box and descriptor_dim must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Everything needed to regenerate one procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureScript {
    pub procedure_id: String,
    pub seed: u64,
    pub sloppiness: f64,
    pub config: SynthConfig,
    pub segments: Vec<ScriptSegment>,
}

const BASE_SECONDS: [(Action, f64); 3] = [
    (Action::Cutting, 8.0),
    (Action::NeedleDriving, 14.0),
    (Action::KnotTying, 12.0),
];

impl ProcedureScript {
    /// Initial vessel cuts, then repeated drive / tie / cut cycles, each
    /// action separated by an idle gap. Durations stretch with sloppiness
    /// and are jittered.
    pub fn standard(procedure_id: impl Into<String>, seed: u64, config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sloppiness = config.sloppiness.unwrap_or_else(|| rng.random::<f64>());
        let mut actions = vec![Action::Cutting; config.initial_cuts];
        for _ in 0..config.stitch_cycles {
            actions.extend([Action::NeedleDriving, Action::KnotTying, Action::Cutting]);
        }
        let jitter = (config.duration_jitter * (1.0 + sloppiness)).min(0.9);
        let mut segments = Vec::with_capacity(2 * actions.len() + 1);
        let idle = |rng: &mut ChaCha8Rng| ScriptSegment {
            action: Action::NoAction,
            duration_s: rng.random_range(4.0..5.0) * config.time_scale,
        };
        segments.push(idle(&mut rng));
        for a in actions {
            let base = BASE_SECONDS.iter().find(|(b, _)| *b == a).expect("scripted action").1;
            let factor = (1.0 + 0.4 * sloppiness) * (1.0 + rng.random_range(-jitter..=jitter));
            segments.push(ScriptSegment {
                action: a,
                duration_s: base * factor * config.time_scale,
            });
            segments.push(idle(&mut rng));
        }
        Ok(Self {
            procedure_id: procedure_id.into(),
            seed,
            sloppiness,
            config: config.clone(),
            segments,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if !(0.0..=1.0).contains(&self.sloppiness) {
            return Err(Error::InvalidParameter("sloppiness must lie in [0, 1]".into()));
        }
        if let Some(s) = self.segments.iter().find(|s| !(s.duration_s > 0.0)) {
            return Err(Error::InvalidParameter(format!("segment duration {} must be positive", s.duration_s)));
        }
        Ok(())
    }

    /// Frame ranges `[start, end)` of the segments.
    pub fn frame_ranges(&self) -> Vec<(usize, usize, Action)> {
        let mut out = Vec::with_capacity(self.segments.len());
        let mut start = 0;
        for s in &self.segments {
            let len = ((s.duration_s * self.config.fps).round() as usize).max(1);
            out.push((start, start + len, s.action));
            start += len;
        }
        out
    }

    pub fn total_frames(&self) -> usize {
        self.frame_ranges().last().map_or(0, |r| r.1)
    }
}

/// Generator output for one procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthProcedure {
    pub procedure_id: String,
    pub detections: Vec<Detection>,
    pub truth: Vec<TruthObject>,
    /// Observed tips (true path plus measurement noise), one per instrument.
    pub tips: Vec<TipTrajectory>,
    pub labels: GroundTruthLabels,
    pub boundaries: Vec<usize>,
    pub scores: Vec<SkillScore>,
    pub candidates: Vec<CandidateSet>,
    pub references: Vec<ReferenceRecord>,
    pub visible_frames: usize,
    pub dropped_frames: usize,
    pub mislabeled_frames: usize,
}

struct Geometry {
    /// Box center relative to the tip.
    body: [f64; 2],
    size: [f64; 2],
    object_id: u32,
}

fn geometry(c: InstrumentClass) -> Geometry {
    match c {
        InstrumentClass::ScissorsC | InstrumentClass::ScissorsS => Geometry {
            body: [-50.0, 50.0],
            size: [100.0, 140.0],
            object_id: 1,
        },
        InstrumentClass::NeedleDriverC => Geometry {
            body: [-60.0, 40.0],
            size: [90.0, 150.0],
            object_id: 2,
        },
        InstrumentClass::NeedleDriverS => Geometry {
            body: [60.0, 40.0],
            size: [90.0, 150.0],
            object_id: 3,
        },
        InstrumentClass::Needle => Geometry {
            body: [0.0, 0.0],
            size: [40.0, 40.0],
            object_id: 4,
        },
    }
}

pub fn true_box(class: InstrumentClass, tip: [f64; 2]) -> BBox {
    let g = geometry(class);
    BBox::from_center(tip[0] + g.body[0], tip[1] + g.body[1], g.size[0], g.size[1])
}

/// Per-segment random regime parameters.
#[derive(Debug, Clone, Copy)]
struct Regime {
    anchor: [f64; 2],
    phase: f64,
    tremor_phase: [f64; 2],
}

const CUT_FREQ_HZ: f64 = 1.5;
const CUT_AMPLITUDE: f64 = 15.0;
const DRIVE_RADIUS: f64 = 50.0;
const DRIVE_RATE: f64 = 0.5;
const TIE_RATE: f64 = 2.0;
const TREMOR_HZ: f64 = 7.0;

/// Noise-free tip of `class` at `t` seconds into a segment.
fn regime_tip(action: Action, class: InstrumentClass, t: f64, r: &Regime, sloppiness: f64) -> [f64; 2] {
    let [ax, ay] = r.anchor;
    let base = match (action, class) {
        (Action::Cutting, InstrumentClass::ScissorsC) => {
            let w = TAU * CUT_FREQ_HZ * t + r.phase;
            [ax + CUT_AMPLITUDE * w.sin(), ay + 0.6 * CUT_AMPLITUDE * (w + PI / 3.0).sin()]
        }
        (Action::Cutting, InstrumentClass::NeedleDriverS) => [ax + 160.0, ay + 20.0],
        (Action::NeedleDriving, InstrumentClass::NeedleDriverC) | (Action::NeedleDriving, InstrumentClass::Needle) => {
            let th = r.phase + DRIVE_RATE * t;
            let p = [ax + DRIVE_RADIUS * th.cos(), ay + DRIVE_RADIUS * th.sin()];
            if class == InstrumentClass::Needle {
                [p[0] + 15.0, p[1]]
            } else {
                p
            }
        }
        (Action::NeedleDriving, InstrumentClass::NeedleDriverS) => {
            [ax + 90.0 + 5.0 * (TAU * 0.2 * t).sin(), ay + 10.0]
        }
        (Action::KnotTying, InstrumentClass::NeedleDriverS) => [ax + 3.0 * (TAU * 0.1 * t).sin(), ay],
        (Action::KnotTying, InstrumentClass::NeedleDriverC) => {
            let s = regime_tip(action, InstrumentClass::NeedleDriverS, t, r, 0.0);
            let radius = 50.0 + 30.0 * (TAU * 0.4 * t + r.phase).sin();
            let th = r.phase + TIE_RATE * t;
            [s[0] + radius * th.cos(), s[1] + radius * th.sin()]
        }
        _ => [ax, ay],
    };
    if sloppiness == 0.0 {
        return base;
    }
    let amp = 3.0 * sloppiness;
    let w = TAU * TREMOR_HZ * t;
    [
        base[0] + amp * (w + r.tremor_phase[0]).sin(),
        base[1] + amp * (1.3 * w + r.tremor_phase[1]).sin(),
    ]
}

/// Random composition of `total` into `parts` nonnegative integers.
fn composition(total: usize, parts: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut cuts: Vec<usize> = (0..parts - 1).map(|_| rng.random_range(0..=total)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts {
        out.push(c - prev);
        prev = c;
    }
    out.push(total - prev);
    out
}

/// Chooses dropout runs: `round(rate · visible)` frames in runs of
/// `1..=max_gap`, each strictly inside a visible interval with at least one
/// detected frame on both sides.
fn place_dropouts(
    intervals: &[(usize, usize)],
    rate: f64,
    max_gap: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<(usize, usize)>> {
    let visible: usize = intervals.iter().map(|(s, e)| e - s).sum();
    let mut remaining = (rate * visible as f64).round() as usize;
    let mut runs = Vec::new();
    while remaining > 0 {
        let len = rng.random_range(1..=max_gap).min(remaining);
        runs.push(len);
        remaining -= len;
    }
    let mut per_interval: Vec<Vec<usize>> = vec![Vec::new(); intervals.len()];
    let mut used: Vec<usize> = intervals.iter().map(|_| 1).collect();
    for len in runs {
        let slack: Vec<usize> = intervals
            .iter()
            .zip(&used)
            .map(|(&(s, e), &u)| (e - s).saturating_sub(u + len + 1))
            .collect();
        let total: usize = slack.iter().sum();
        if total == 0 {
            log::warn!("dropout rate {rate} cannot be met; visible intervals are full");
            break;
        }
        let mut pick = rng.random_range(0..total);
        let i = slack
            .iter()
            .position(|&s| {
                if pick < s {
                    true
                } else {
                    pick -= s;
                    false
                }
            })
            .expect("weighted pick");
        per_interval[i].push(len);
        used[i] += len + 1;
    }
    intervals
        .iter()
        .zip(per_interval)
        .map(|(&(s, e), mut lens)| {
            if lens.is_empty() {
                return Vec::new();
            }
            lens.shuffle(rng);
            let need: usize = lens.iter().sum::<usize>() + lens.len() + 1;
            let gaps = composition(e - s - need, lens.len() + 1, rng);
            let mut pos = s + 1 + gaps[0];
            let mut out = Vec::with_capacity(lens.len());
            for (k, len) in lens.iter().enumerate() {
                out.push((pos, pos + len));
                pos += len + 1 + gaps[k + 1];
            }
            out
        })
        .collect()
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Renders a script. The same script always yields bit-identical output.
pub fn generate(script: &ProcedureScript) -> Result<SynthProcedure> {
    script.validate()?;
    let cfg = &script.config;
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    rng.set_stream(1);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let ranges = script.frame_ranges();
    let n_frames = script.total_frames();

    let references: Vec<ReferenceRecord> = INSTRUMENTS
        .iter()
        .map(|&class| ReferenceRecord {
            class,
            descriptor: unit((0..cfg.descriptor_dim).map(|_| std_normal.sample(&mut rng)).collect())
                .into_iter()
                .map(round4)
                .collect(),
        })
        .collect();
    let appearance: Vec<Vec<f64>> = INSTRUMENTS
        .iter()
        .map(|_| unit((0..cfg.appearance_dim.max(1)).map(|_| std_normal.sample(&mut rng)).collect()))
        .collect();

    let mut clean: Vec<Vec<Option<[f64; 2]>>> = vec![vec![None; n_frames]; INSTRUMENTS.len()];
    let mut labels = Vec::with_capacity(n_frames);
    for &(start, end, action) in &ranges {
        let regime = Regime {
            anchor: [rng.random_range(500.0..700.0), rng.random_range(300.0..420.0)],
            phase: rng.random_range(0.0..TAU),
            tremor_phase: [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)],
        };
        for f in start..end {
            labels.push(action);
            let t = (f - start) as f64 / cfg.fps;
            for &class in visible_during(action) {
                let k = INSTRUMENTS.iter().position(|&c| c == class).expect("animated");
                clean[k][f] = Some(regime_tip(action, class, t, &regime, script.sloppiness));
            }
        }
    }

    let mut tips = Vec::with_capacity(INSTRUMENTS.len());
    let mut truth = Vec::new();
    let mut candidates = Vec::new();
    for (k, &class) in INSTRUMENTS.iter().enumerate() {
        let mut observed = vec![None; n_frames];
        for f in 0..n_frames {
            let Some(p) = clean[k][f] else { continue };
            let noisy = [
                p[0] + cfg.noise_px * std_normal.sample(&mut rng),
                p[1] + cfg.noise_px * std_normal.sample(&mut rng),
            ];
            observed[f] = Some(noisy);
            let b = true_box(class, p);
            truth.push(TruthObject {
                frame: f,
                object_id: geometry(class).object_id,
                class,
                x: b.x,
                y: b.y,
                w: b.w,
                h: b.h,
            });
            let true_slot = rng.random_range(0..cfg.candidates_per_box);
            let reference = &references[k].descriptor;
            let points = (0..cfg.candidates_per_box)
                .map(|slot| {
                    if slot == true_slot {
                        CandidatePoint {
                            x: noisy[0] - b.x,
                            y: noisy[1] - b.y,
                            descriptor: reference
                                .iter()
                                .map(|v| round4(v + 0.05 * std_normal.sample(&mut rng)))
                                .collect(),
                        }
                    } else {
                        CandidatePoint {
                            x: round4(rng.random_range(0.0..b.w)),
                            y: round4(rng.random_range(0.0..b.h)),
                            descriptor: (0..cfg.descriptor_dim)
                                .map(|_| round4(std_normal.sample(&mut rng)))
                                .collect(),
                        }
                    }
                })
                .collect();
            candidates.push(CandidateSet {
                frame: f,
                class,
                candidates: points,
            });
        }
        tips.push(TipTrajectory {
            instrument_id: class.index() as u32,
            fps: cfg.fps,
            tips: observed,
        });
    }
    candidates.sort_by_key(|c| (c.frame, c.class));

    // detector faults
    let mut dropped = vec![vec![false; n_frames]; INSTRUMENTS.len()];
    let mut dropped_frames = 0;
    for k in 0..INSTRUMENTS.len() {
        let intervals: Vec<(usize, usize)> = ranges
            .iter()
            .filter(|r| visible_during(r.2).contains(&INSTRUMENTS[k]))
            .map(|r| (r.0, r.1))
            .collect();
        for runs in place_dropouts(&intervals, cfg.dropout_rate, cfg.max_gap, &mut rng) {
            for (s, e) in runs {
                for flag in &mut dropped[k][s..e] {
                    *flag = true;
                }
                dropped_frames += e - s;
            }
        }
    }
    let mut eligible = Vec::new();
    for k in 0..INSTRUMENTS.len() {
        for f in 1..n_frames.saturating_sub(1) {
            let steady = (f - 1..=f + 1).all(|g| clean[k][g].is_some() && !dropped[k][g]);
            if steady {
                eligible.push((k, f));
            }
        }
    }
    eligible.shuffle(&mut rng);
    let visible_frames: usize = clean.iter().map(|c| c.iter().filter(|p| p.is_some()).count()).sum();
    let target = (cfg.mislabel_rate * (visible_frames - dropped_frames) as f64).round() as usize;
    let mut flipped = vec![vec![None; n_frames]; INSTRUMENTS.len()];
    let mut mislabeled_frames = 0;
    for (k, f) in eligible {
        if mislabeled_frames == target {
            break;
        }
        // keep flips isolated so each stays a single-frame error
        if flipped[k][f - 1].is_some() || flipped[k][f + 1].is_some() {
            continue;
        }
        let others: Vec<InstrumentClass> = InstrumentClass::ALL.iter().copied().filter(|c| *c != INSTRUMENTS[k]).collect();
        flipped[k][f] = Some(others[rng.random_range(0..others.len())]);
        mislabeled_frames += 1;
    }
    if mislabeled_frames < target {
        log::warn!("placed {mislabeled_frames} of {target} mislabels");
    }

    let mut detections = Vec::new();
    for f in 0..n_frames {
        for (k, &class) in INSTRUMENTS.iter().enumerate() {
            let Some(p) = clean[k][f] else { continue };
            if dropped[k][f] {
                continue;
            }
            let app = (cfg.appearance_dim > 0).then(|| {
                unit(
                    appearance[k]
                        .iter()
                        .map(|v| v + 0.05 * std_normal.sample(&mut rng))
                        .collect(),
                )
            });
            detections.push(Detection {
                frame: f,
                class: flipped[k][f].unwrap_or(class),
                bbox: true_box(class, p),
                confidence: 0.9,
                appearance: app,
            });
        }
    }

    let mut scores = Vec::new();
    for action in [Action::NeedleDriving, Action::KnotTying] {
        if labels.contains(&action) {
            let s = 4.6 - 3.2 * script.sloppiness + 0.15 * std_normal.sample(&mut rng);
            scores.push(SkillScore {
                procedure_id: script.procedure_id.clone(),
                action_type: action,
                score: round4(s.clamp(1.0, 5.0)),
            });
        }
    }

    let labels = GroundTruthLabels { actions: labels };
    Ok(SynthProcedure {
        procedure_id: script.procedure_id.clone(),
        boundaries: labels.boundaries(),
        detections,
        truth,
        tips,
        labels,
        scores,
        candidates,
        references,
        visible_frames,
        dropped_frames,
        mislabeled_frames,
    })
}

/// Writes a procedure directory in the standard input layout.
pub fn write_procedure(dir: &Path, script: &ProcedureScript, p: &SynthProcedure) -> Result<()> {
    io::write_json(&dir.join(SCRIPT_FILE), script)?;
    io::write_json(
        &dir.join(VIDEO_FILE),
        &VideoInfo {
            fps: script.config.fps,
            frames: p.labels.len(),
        },
    )?;
    io::save_detections(&dir.join(DETECTIONS_FILE), &p.detections)?;
    io::save_truth_objects(&dir.join(TRUTH_OBJECTS_FILE), &p.truth)?;
    io::save_tips(&dir.join(GT_TIPS_FILE), &p.tips)?;
    io::save_labels(&dir.join(LABELS_FILE), &p.labels)?;
    io::save_boundary_list(&dir.join(GT_BOUNDARIES_FILE), &p.boundaries)?;
    io::save_scores(&dir.join(SCORES_FILE), &p.scores)?;
    io::save_tip_candidates(&dir.join(TIP_CANDIDATES_FILE), &p.candidates)?;
    io::save_reference_descriptors(&dir.join(REFERENCE_DESCRIPTORS_FILE), &p.references)
}

/// Generates `count` standard procedures under `root`, named
/// `proc_000`, `proc_001`, ..., with seeds `seed`, `seed + 1`, ...
pub fn write_dataset(root: &Path, count: usize, seed: u64, config: &SynthConfig) -> Result<Vec<String>> {
    (0..count)
        .map(|i| {
            let id = format!("proc_{i:03}");
            let script = ProcedureScript::standard(id.clone(), seed.wrapping_add(i as u64), config)?;
            let dir = root.join(&id);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_procedure(&dir, &script, &generate(&script)?)?;
            Ok(id)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> SynthConfig {
        SynthConfig {
            noise_px: 0.0,
            dropout_rate: 0.0,
            mislabel_rate: 0.0,
            sloppiness: Some(0.0),
            ..Default::default()
        }
    }

    #[test]
    fn standard_segment_counts() {
        let s = ProcedureScript::standard("p", 1, &SynthConfig::default()).unwrap();
        let acts: Vec<Action> = s.segments.iter().map(|g| g.action).filter(|a| *a != Action::NoAction).collect();
        assert_eq!(acts.len(), 27);
        assert_eq!(acts.iter().filter(|a| **a == Action::Cutting).count(), 11);
        assert_eq!(s.segments.len(), 55);
        assert!(s.segments.windows(2).all(|w| (w[0].action == Action::NoAction) != (w[1].action == Action::NoAction)));
    }

    #[test]
    fn noiseless_tips_follow_closed_form() {
        let cfg = SynthConfig {
            time_scale: 0.2,
            ..quiet()
        };
        let script = ProcedureScript::standard("p", 5, &cfg).unwrap();
        let p = generate(&script).unwrap();
        let &(start, end, _) = script
            .frame_ranges()
            .iter()
            .find(|r| r.2 == Action::NeedleDriving)
            .unwrap();
        // drive segment: the driver tip moves along a circle at constant
        // angular rate, so consecutive samples are one fixed chord apart
        let driver = &p.tips[1].tips;
        let chord = 2.0 * DRIVE_RADIUS * (DRIVE_RATE / cfg.fps / 2.0).sin();
        for f in start..end - 1 {
            let (a, b) = (driver[f].unwrap(), driver[f + 1].unwrap());
            let d = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            assert!((d - chord).abs() < 1e-9);
            let needle = p.tips[3].tips[f].unwrap();
            assert!((needle[0] - a[0] - 15.0).abs() < 1e-12 && (needle[1] - a[1]).abs() < 1e-12);
        }
        assert!(driver[end].is_none() && p.tips[0].tips[start].is_none());
        assert_eq!(p.detections.len(), p.truth.len());
        assert_eq!(p.mislabeled_frames, 0);
    }

    #[test]
    fn dropout_fraction_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let intervals = vec![(0, 2500), (3000, 5500), (6000, 8500), (9000, 11500)];
        let runs = place_dropouts(&intervals, 0.1, 5, &mut rng);
        let removed: usize = runs.iter().flatten().map(|(s, e)| e - s).sum();
        assert_eq!(removed, 1000);
        for (iv, rs) in intervals.iter().zip(&runs) {
            for w in rs.windows(2) {
                assert!(w[1].0 > w[0].1, "runs must be separated");
            }
            for &(s, e) in rs {
                assert!(s > iv.0 && e < iv.1 && e - s <= 5 && e > s);
            }
        }
    }

    #[test]
    fn boundaries_match_label_switches() {
        let cfg = SynthConfig {
            time_scale: 0.1,
            ..Default::default()
        };
        let script = ProcedureScript::standard("p", 2, &cfg).unwrap();
        let p = generate(&script).unwrap();
        let expected: Vec<usize> = script.frame_ranges().iter().skip(1).map(|r| r.0).collect();
        assert_eq!(p.boundaries, expected);
        assert_eq!(p.labels.len(), script.total_frames());
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = SynthConfig {
            time_scale: 0.1,
            appearance_dim: 8,
            ..Default::default()
        };
        let s = ProcedureScript::standard("p", 3, &cfg).unwrap();
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let other = ProcedureScript::standard("p", 4, &cfg).unwrap();
        assert_ne!(generate(&s).unwrap().detections, generate(&other).unwrap().detections);
    }

    #[test]
    fn faults_hit_requested_rates() {
        let cfg = SynthConfig {
            time_scale: 0.5,
            ..Default::default()
        };
        let p = generate(&ProcedureScript::standard("p", 8, &cfg).unwrap()).unwrap();
        let frac = p.dropped_frames as f64 / p.visible_frames as f64;
        assert!((frac - 0.1).abs() < 0.005, "{frac}");
        let mis = p.mislabeled_frames as f64 / (p.visible_frames - p.dropped_frames) as f64;
        assert!((mis - 0.05).abs() < 0.005, "{mis}");
        assert_eq!(p.detections.len(), p.visible_frames - p.dropped_frames);
    }
}
