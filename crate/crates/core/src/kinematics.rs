//! Tip trajectories to a per-frame kinematic feature matrix.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_model::io::{read_json, read_to_string, write_json, write_string};
use crate::data_model::{InstrumentClass, TipTrajectory};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsConfig {
    /// Working rate after block-mean downsampling; `None` keeps the source rate.
    pub target_fps: Option<f64>,
    /// Emit signed x/y components next to the magnitudes.
    pub include_components: bool,
    pub include_pairwise: bool,
    /// Centered moving-average window applied to positions; 1 disables it.
    pub smoothing_window: usize,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        Self {
            target_fps: Some(5.0),
            include_components: false,
            include_pairwise: true,
            smoothing_window: 1,
        }
    }
}

impl KinematicsConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.target_fps {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::InvalidParameter(format!("target_fps must be positive, got {f}")));
            }
        }
        if self.smoothing_window == 0 {
            return Err(Error::InvalidParameter("smoothing_window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-frame derivatives of one trajectory, already scaled by the frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub velocity: Vec<[f64; 2]>,
    pub acceleration: Vec<[f64; 2]>,
    pub jerk: Vec<[f64; 2]>,
    pub present: Vec<bool>,
}

impl Derivatives {
    pub fn speed(&self) -> Vec<f64> {
        self.velocity.iter().map(|v| norm(*v)).collect()
    }
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Maximal runs of consecutive present frames as `(start, end_exclusive)`.
fn present_runs(present: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut t = 0;
    while t < present.len() {
        if present[t] {
            let s = t;
            while t < present.len() && present[t] {
                t += 1;
            }
            runs.push((s, t));
        } else {
            t += 1;
        }
    }
    runs
}

fn first_derivative(x: &[f64], t: usize) -> f64 {
    let n = x.len();
    if n < 2 {
        0.0
    } else if t == 0 {
        x[1] - x[0]
    } else if t == n - 1 {
        x[n - 1] - x[n - 2]
    } else {
        (x[t + 1] - x[t - 1]) / 2.0
    }
}

fn second_derivative(x: &[f64], t: usize) -> f64 {
    let n = x.len();
    if n < 3 {
        0.0
    } else {
        let c = t.clamp(1, n - 2);
        x[c + 1] - 2.0 * x[c] + x[c - 1]
    }
}

fn third_derivative(x: &[f64], t: usize) -> f64 {
    let n = x.len();
    if n < 4 {
        0.0
    } else if t >= 2 && t + 2 < n {
        (x[t + 2] - 2.0 * x[t + 1] + 2.0 * x[t - 1] - x[t - 2]) / 2.0
    } else {
        let s = t.saturating_sub(1).min(n - 4);
        x[s + 3] - 3.0 * x[s + 2] + 3.0 * x[s + 1] - x[s]
    }
}

fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return x.to_vec();
    }
    let half = window / 2;
    (0..x.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(x.len());
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Finite-difference velocity, acceleration and jerk.
///
/// Differences never reach across an absent frame: each run of present
/// frames is differenced on its own, central inside and one-sided at the
/// ends. Runs too short for a stencil give zeros, as do absent frames.
pub fn derivatives(trajectory: &TipTrajectory) -> Result<Derivatives> {
    derivatives_smoothed(trajectory, 1)
}

pub fn derivatives_smoothed(trajectory: &TipTrajectory, smoothing_window: usize) -> Result<Derivatives> {
    trajectory.validate()?;
    let n = trajectory.len();
    let fps = trajectory.fps;
    let mut out = Derivatives {
        velocity: vec![[0.0; 2]; n],
        acceleration: vec![[0.0; 2]; n],
        jerk: vec![[0.0; 2]; n],
        present: trajectory.tips.iter().map(Option::is_some).collect(),
    };
    if trajectory.present_count() < 2 {
        log::warn!(
            "instrument {} has fewer than 2 present frames; derivatives are zero",
            trajectory.instrument_id
        );
        return Ok(out);
    }
    for (s, e) in present_runs(&out.present) {
        for axis in 0..2 {
            let raw: Vec<f64> = trajectory.tips[s..e].iter().map(|p| p.expect("present")[axis]).collect();
            let x = moving_average(&raw, smoothing_window);
            for k in 0..x.len() {
                out.velocity[s + k][axis] = first_derivative(&x, k) * fps;
                out.acceleration[s + k][axis] = second_derivative(&x, k) * fps * fps;
                out.jerk[s + k][axis] = third_derivative(&x, k) * fps * fps * fps;
            }
        }
    }
    Ok(out)
}

/// Inter-instrument features for one frame with both tips present.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFeatures {
    pub distance: f64,
    pub relative_velocity: f64,
    pub dot: f64,
    /// Angle between the velocity vectors in `[0, π]`; 0 if either is zero.
    pub angle: f64,
}

pub fn pairwise_features(pa: [f64; 2], va: [f64; 2], pb: [f64; 2], vb: [f64; 2]) -> PairFeatures {
    let dot = va[0] * vb[0] + va[1] * vb[1];
    let (na, nb) = (norm(va), norm(vb));
    let angle = if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0).acos()
    };
    PairFeatures {
        distance: norm([pa[0] - pb[0], pa[1] - pb[1]]),
        relative_velocity: norm([va[0] - vb[0], va[1] - vb[1]]),
        dot,
        angle,
    }
}

/// Downsamples a trajectory by block means over present frames.
///
/// Output length is `ceil(T / factor)`; a block is present when any frame
/// in it is.
pub fn downsample(trajectory: &TipTrajectory, factor: usize) -> TipTrajectory {
    let factor = factor.max(1);
    let tips = trajectory
        .tips
        .chunks(factor)
        .map(|block| {
            let pts: Vec<[f64; 2]> = block.iter().flatten().copied().collect();
            (!pts.is_empty()).then(|| {
                let k = pts.len() as f64;
                [
                    pts.iter().map(|p| p[0]).sum::<f64>() / k,
                    pts.iter().map(|p| p[1]).sum::<f64>() / k,
                ]
            })
        })
        .collect();
    TipTrajectory {
        instrument_id: trajectory.instrument_id,
        fps: trajectory.fps / factor as f64,
        tips,
    }
}

pub fn downsample_factor(fps: f64, target_fps: Option<f64>) -> usize {
    match target_fps {
        Some(t) if t < fps => ((fps / t).round() as usize).max(1),
        _ => 1,
    }
}

/// Feature matrix over frames at the working rate.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicMatrix {
    pub x: Matrix,
    pub feature_names: Vec<String>,
    /// Working frame rate (source rate divided by the downsample factor).
    pub fps: f64,
    /// `T × m`, one column per instrument, entries 0 or 1.
    pub presence_mask: Matrix,
    pub instruments: Vec<u32>,
    /// Mask columns each feature column depends on.
    pub column_instruments: Vec<Vec<usize>>,
    pub downsample_factor: usize,
    /// Frame count of the source video.
    pub source_frames: usize,
}

pub fn instrument_name(id: u32) -> String {
    InstrumentClass::from_index(id as usize).map_or_else(|| format!("inst{id}"), |c| c.name().to_string())
}

impl KinematicMatrix {
    pub fn frames(&self) -> usize {
        self.x.rows()
    }

    pub fn dims(&self) -> usize {
        self.x.cols()
    }

    /// Source frame where working frame `t` starts.
    pub fn source_frame(&self, t: usize) -> usize {
        (t * self.downsample_factor).min(self.source_frames)
    }

    /// Whether entry `(t, j)` is backed by present tips.
    pub fn is_valid(&self, t: usize, j: usize) -> bool {
        self.column_instruments[j].iter().all(|&m| self.presence_mask.get(t, m) > 0.5)
    }

    /// Column z-score of `x`. Absent entries are zeros in `x`, so after
    /// normalization every frame with the same instruments missing shares
    /// the same value in those columns.
    pub fn normalized(&self) -> Matrix {
        normalize(&self.x)
    }

    pub fn save(&self, csv_path: &Path, meta_path: &Path) -> Result<()> {
        let mut s = String::new();
        let mask_names: Vec<String> = self.instruments.iter().map(|&i| format!("mask_{}", instrument_name(i))).collect();
        let header: Vec<&str> = self.feature_names.iter().chain(&mask_names).map(String::as_str).collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for t in 0..self.frames() {
            let row: Vec<String> = self
                .x
                .row(t)
                .iter()
                .chain(self.presence_mask.row(t))
                .map(|v| format!("{v}"))
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        write_string(csv_path, &s)?;
        write_json(
            meta_path,
            &FeaturesMeta {
                fps: self.fps,
                downsample_factor: self.downsample_factor,
                source_frames: self.source_frames,
                instruments: self.instruments.clone(),
                column_instruments: self.column_instruments.clone(),
            },
        )
    }

    pub fn load(csv_path: &Path, meta_path: &Path) -> Result<Self> {
        let meta: FeaturesMeta = read_json(meta_path)?;
        let text = read_to_string(csv_path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(csv_path, 1, "missing header"))?;
        let names: Vec<String> = header.split(',').map(str::to_string).filter(|s| !s.is_empty()).collect();
        let m = meta.instruments.len();
        if names.len() < m || meta.column_instruments.len() != names.len() - m {
            return Err(Error::parse(csv_path, 1, "header does not match the metadata sidecar"));
        }
        let d = names.len() - m;
        let mut x = Vec::new();
        let mut mask = Vec::new();
        let mut rows = 0;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(csv_path, i + 1, e.to_string()))?;
            if vals.len() != d + m {
                return Err(Error::parse(
                    csv_path,
                    i + 1,
                    format!("expected {} fields, got {}", d + m, vals.len()),
                ));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(csv_path, i + 1, "non-finite value"));
            }
            x.extend_from_slice(&vals[..d]);
            mask.extend_from_slice(&vals[d..]);
            rows += 1;
        }
        Ok(Self {
            x: Matrix::from_vec(rows, d, x),
            feature_names: names[..d].to_vec(),
            fps: meta.fps,
            presence_mask: Matrix::from_vec(rows, m, mask),
            instruments: meta.instruments,
            column_instruments: meta.column_instruments,
            downsample_factor: meta.downsample_factor,
            source_frames: meta.source_frames,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesMeta {
    pub fps: f64,
    pub downsample_factor: usize,
    pub source_frames: usize,
    pub instruments: Vec<u32>,
    pub column_instruments: Vec<Vec<usize>>,
}

fn mean_std(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (0.0, 0.0);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Column z-score with population standard deviation. Constant columns
/// become zero.
pub fn normalize(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for j in 0..x.cols() {
        let col = x.column(j);
        let (mean, std) = mean_std(&col);
        // relative floor so float noise on a constant column does not blow up
        let scale = mean.abs().max(1.0);
        if std <= 1e-12 * scale {
            continue;
        }
        for (t, v) in col.iter().enumerate() {
            out.set(t, j, (v - mean) / std);
        }
    }
    out
}

/// Builds the feature matrix from trajectories sharing length and frame rate.
///
/// Per instrument: speed, acceleration and jerk magnitudes (plus signed
/// components when configured). Per unordered pair: distance, relative
/// speed, velocity dot product and angle.
pub fn build_feature_matrix(trajectories: &[TipTrajectory], config: &KinematicsConfig) -> Result<KinematicMatrix> {
    config.validate()?;
    let first = trajectories
        .first()
        .ok_or_else(|| Error::Validation("no tip trajectories".into()))?;
    for t in trajectories {
        t.validate()?;
        if t.len() != first.len() {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                got: t.len(),
            });
        }
        if t.fps != first.fps {
            return Err(Error::Validation(format!(
                "instrument {} has fps {}, expected {}",
                t.instrument_id, t.fps, first.fps
            )));
        }
    }
    let factor = downsample_factor(first.fps, config.target_fps);
    let working: Vec<TipTrajectory> = trajectories.iter().map(|t| downsample(t, factor)).collect();
    let t_len = working[0].len();
    let fps = working[0].fps;
    let derivs = working
        .iter()
        .map(|t| derivatives_smoothed(t, config.smoothing_window))
        .collect::<Result<Vec<_>>>()?;

    let mut names = Vec::new();
    let mut deps = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (m, (traj, d)) in working.iter().zip(&derivs).enumerate() {
        let name = instrument_name(traj.instrument_id);
        let mut push = |suffix: &str, col: Vec<f64>| {
            names.push(format!("{name}_{suffix}"));
            deps.push(vec![m]);
            columns.push(col);
        };
        push("speed", d.velocity.iter().map(|v| norm(*v)).collect());
        push("accel", d.acceleration.iter().map(|v| norm(*v)).collect());
        push("jerk", d.jerk.iter().map(|v| norm(*v)).collect());
        if config.include_components {
            for (label, series) in [("v", &d.velocity), ("a", &d.acceleration), ("j", &d.jerk)] {
                push(&format!("{label}x"), series.iter().map(|v| v[0]).collect());
                push(&format!("{label}y"), series.iter().map(|v| v[1]).collect());
            }
        }
    }
    if config.include_pairwise {
        for a in 0..working.len() {
            for b in a + 1..working.len() {
                let pair = format!(
                    "{}-{}",
                    instrument_name(working[a].instrument_id),
                    instrument_name(working[b].instrument_id)
                );
                let mut cols = vec![vec![0.0; t_len]; 4];
                for t in 0..t_len {
                    if let (Some(pa), Some(pb)) = (working[a].tips[t], working[b].tips[t]) {
                        let f = pairwise_features(pa, derivs[a].velocity[t], pb, derivs[b].velocity[t]);
                        cols[0][t] = f.distance;
                        cols[1][t] = f.relative_velocity;
                        cols[2][t] = f.dot;
                        cols[3][t] = f.angle;
                    }
                }
                for (suffix, col) in ["distance", "relvel", "dot", "angle"].iter().zip(cols) {
                    names.push(format!("{pair}_{suffix}"));
                    deps.push(vec![a, b]);
                    columns.push(col);
                }
            }
        }
    }

    let d = columns.len();
    let mut x = Matrix::zeros(t_len, d);
    for (j, col) in columns.iter().enumerate() {
        for (t, v) in col.iter().enumerate() {
            x.set(t, j, *v);
        }
    }
    let mut mask = Matrix::zeros(t_len, working.len());
    for (m, traj) in working.iter().enumerate() {
        for (t, p) in traj.tips.iter().enumerate() {
            if p.is_some() {
                mask.set(t, m, 1.0);
            }
        }
    }
    if !x.is_finite() {
        return Err(Error::Degenerate("non-finite kinematic feature".into()));
    }
    Ok(KinematicMatrix {
        x,
        feature_names: names,
        fps,
        presence_mask: mask,
        instruments: working.iter().map(|t| t.instrument_id).collect(),
        column_instruments: deps,
        downsample_factor: factor,
        source_frames: first.len(),
    })
}
