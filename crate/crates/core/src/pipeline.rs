//! File-backed stage runner.
//!
//! Inputs live in `<input>/<procedure>/`, outputs in `<output>/<procedure>/`.
//! Every stage reads only files written by earlier stages, so running the
//! stages one by one and calling [`Pipeline::run_all`] produce the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    align_clusters, kmeans, segment_features, semantic_label, ClusterModel, ClusteringMode, KMeansConfig,
};
use crate::config::PipelineConfig;
use crate::data_model::io::{
    self, CandidateSet, VideoInfo, DETECTIONS_FILE, GT_BOUNDARIES_FILE, LABELS_FILE, REFERENCE_DESCRIPTORS_FILE,
    SCORES_FILE, TIP_CANDIDATES_FILE, TRUTH_OBJECTS_FILE, VIDEO_FILE,
};
use crate::data_model::{validate_stream, Action, InstrumentClass, RefinedTrack, SkillScore, TipTrajectory};
use crate::error::{Error, Result};
use crate::kinematics::{build_feature_matrix, KinematicMatrix};
use crate::matrix::Matrix;
use crate::metrics::{boundary_metrics, frame_metrics, BoundaryMetrics, FrameMetrics};
use crate::segmentation::{segment, segments_from_boundaries, Segmentation};
use crate::skill::{
    cross_validate, discretize_with, repetition_ordinals, skill_features, CvReport, GbdtModel, SkillConfig,
    SkillInstance, SkillLevel,
};
use crate::tracking::tips::{localize_tip, ReferenceDescriptor, TipCandidate};
use crate::tracking::{recovery_correction_rates, track_and_refine, RateReport};

pub const REFINED_TRACKS_FILE: &str = "refined_tracks.jsonl";
pub const STREAM_REPORT_FILE: &str = "stream_report.json";
pub const TIPS_FILE: &str = "tips.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const FEATURES_META_FILE: &str = "features.meta.json";
pub const NOVELTY_FILE: &str = "novelty.csv";
pub const BOUNDARIES_FILE: &str = "boundaries.csv";
pub const SSM_FILE: &str = "ssm.csv";
pub const SEGMENTATION_FILE: &str = "segmentation.json";
pub const SEGMENTS_FILE: &str = "segments.csv";
pub const CLUSTER_MODEL_FILE: &str = "cluster_model.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const RIBBON_FILE: &str = "ribbon.csv";
pub const SKILL_DIR: &str = "skill";
pub const SKILL_MODEL_FILE: &str = "model.json";
pub const SKILL_CV_FILE: &str = "cv_report.json";
pub const SKILL_INSTANCES_FILE: &str = "instances.jsonl";
pub const SKILL_PREDICTIONS_FILE: &str = "skill_predictions.csv";
pub const REPORT_TXT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Track,
    Tips,
    Features,
    Segment,
    Cluster,
    Eval,
    TrainSkill,
    PredictSkill,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Track,
        Stage::Tips,
        Stage::Features,
        Stage::Segment,
        Stage::Cluster,
        Stage::Eval,
        Stage::TrainSkill,
        Stage::PredictSkill,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Track => "track",
            Stage::Tips => "tips",
            Stage::Features => "features",
            Stage::Segment => "segment",
            Stage::Cluster => "cluster",
            Stage::Eval => "eval",
            Stage::TrainSkill => "train-skill",
            Stage::PredictSkill => "predict-skill",
            Stage::Report => "report",
        }
    }
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingInput { path, stage })
    }
}

// ---------------------------------------------------------------------------
// tips

/// Localizes a tip for every refined box that has candidates, one
/// trajectory per class with a reference descriptor. When two tracks share
/// a class, the lower object id wins a frame.
pub fn localize_tracks(
    tracks: &[RefinedTrack],
    candidates: &[CandidateSet],
    references: &BTreeMap<InstrumentClass, Vec<f64>>,
    frames: usize,
    fps: f64,
) -> Result<Vec<TipTrajectory>> {
    let refs: BTreeMap<InstrumentClass, ReferenceDescriptor> = references
        .iter()
        .map(|(c, d)| Ok((*c, ReferenceDescriptor::new(d.clone())?)))
        .collect::<Result<_>>()?;
    let by_key: BTreeMap<(usize, InstrumentClass), &CandidateSet> =
        candidates.iter().map(|c| ((c.frame, c.class), c)).collect();
    let mut tips: BTreeMap<InstrumentClass, Vec<Option<[f64; 2]>>> =
        refs.keys().map(|c| (*c, vec![None; frames])).collect();
    let mut sorted: Vec<&RefinedTrack> = tracks.iter().collect();
    sorted.sort_by_key(|t| t.object_id);
    for t in sorted {
        let (Some(reference), Some(out)) = (refs.get(&t.class), tips.get_mut(&t.class)) else {
            log::warn!("no reference descriptor for {}; track {} skipped", t.class.name(), t.object_id);
            continue;
        };
        for f in &t.frames {
            if f.frame >= frames || out[f.frame].is_some() {
                continue;
            }
            let Some(set) = by_key.get(&(f.frame, t.class)) else { continue };
            let cands: Vec<TipCandidate> = set
                .candidates
                .iter()
                .map(|c| TipCandidate {
                    point: [c.x, c.y],
                    descriptor: c.descriptor.clone(),
                })
                .collect();
            out[f.frame] = Some(localize_tip(&cands, reference, &f.bbox)?.point);
        }
    }
    Ok(tips
        .into_iter()
        .map(|(c, tips)| TipTrajectory {
            instrument_id: c.index() as u32,
            fps,
            tips,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// segments and clusters

/// Working-rate segment with its source-frame span and assigned action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentRow {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub source_start: usize,
    pub source_end: usize,
    pub duration_s: f64,
    pub cluster: usize,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub model: ClusterModel,
    /// Action name of each cluster.
    pub actions: Vec<Action>,
    pub ties: Vec<String>,
    pub instruments: Vec<u32>,
    pub procedures: Vec<String>,
}

/// Segment bounds and `2d + m` summaries from working-frame boundaries.
pub fn segment_summaries(km: &KinematicMatrix, tau: &[usize]) -> Result<(Vec<(usize, usize)>, Matrix)> {
    if km.frames() == 0 {
        return Err(Error::Validation("feature matrix has no frames".into()));
    }
    let bounds = segments_from_boundaries(km.frames(), tau);
    let summaries = segment_features(&km.normalized(), &km.presence_mask, &bounds)?;
    Ok((bounds, summaries))
}

/// k-means over segment summaries plus presence-based cluster naming.
/// `k` is lowered to the number of segments when needed.
pub fn fit_clusters(summaries: &Matrix, instruments: &[u32], config: &KMeansConfig) -> Result<ClusterArtifact> {
    let mut cfg = *config;
    if summaries.rows() < cfg.k {
        log::warn!("only {} segments for k = {}; lowering k", summaries.rows(), cfg.k);
        cfg.k = summaries.rows();
    }
    let model = kmeans(summaries, &cfg)?;
    let m = instruments.len();
    let d2 = model.centroids.cols() - m;
    let mask = Matrix::from_rows(
        &model
            .centroids
            .iter_rows()
            .map(|r| r[d2..].to_vec())
            .collect::<Vec<_>>(),
    );
    let labels = semantic_label(&mask, instruments)?;
    Ok(ClusterArtifact {
        model,
        actions: labels.actions,
        ties: labels.ties,
        instruments: instruments.to_vec(),
        procedures: Vec::new(),
    })
}

pub fn segment_rows(km: &KinematicMatrix, bounds: &[(usize, usize)], clusters: &[usize], actions: &[Action]) -> Vec<SegmentRow> {
    bounds
        .iter()
        .zip(clusters)
        .enumerate()
        .map(|(index, (&(start, end), &cluster))| SegmentRow {
            index,
            start,
            end,
            source_start: km.source_frame(start),
            source_end: km.source_frame(end),
            duration_s: (end - start) as f64 / km.fps,
            cluster,
            action: actions[cluster],
        })
        .collect()
}

/// Per-source-frame values over `len` frames. The last segment is stretched
/// to the end, since frames after the final working frame share its state.
pub fn ribbon<T: Copy>(rows: &[SegmentRow], len: usize, value: impl Fn(&SegmentRow) -> T, fill: T) -> Vec<T> {
    let mut out = vec![fill; len];
    for (i, r) in rows.iter().enumerate() {
        let end = if i + 1 == rows.len() { len } else { r.source_end.min(len) };
        for v in out.iter_mut().take(end).skip(r.source_start) {
            *v = value(r);
        }
    }
    out
}

const SEGMENTS_HEADER: [&str; 8] = [
    "index",
    "start",
    "end",
    "source_start",
    "source_end",
    "duration_s",
    "cluster",
    "action",
];

pub fn save_segments(path: &Path, rows: &[SegmentRow]) -> Result<()> {
    let mut s = SEGMENTS_HEADER.join(",");
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.index, r.start, r.end, r.source_start, r.source_end, r.duration_s, r.cluster, r.action
        )
        .unwrap();
    }
    io::write_string(path, &s)
}

pub fn load_segments(path: &Path) -> Result<Vec<SegmentRow>> {
    let (header, rows, _) = io::read_csv_rows(path)?;
    io::expect_header(path, &header, &SEGMENTS_HEADER)?;
    rows.into_iter()
        .map(|(line, f)| {
            if f.len() != SEGMENTS_HEADER.len() {
                return Err(Error::parse(path, line, "expected 8 fields"));
            }
            Ok(SegmentRow {
                index: io::field(path, line, "index", &f[0])?,
                start: io::field(path, line, "start", &f[1])?,
                end: io::field(path, line, "end", &f[2])?,
                source_start: io::field(path, line, "source_start", &f[3])?,
                source_end: io::field(path, line, "source_end", &f[4])?,
                duration_s: io::field(path, line, "duration_s", &f[5])?,
                cluster: io::field(path, line, "cluster", &f[6])?,
                action: f[7].parse().map_err(|e| Error::parse(path, line, e))?,
            })
        })
        .collect()
}

/// Predicted boundaries as `(working frame, source frame, prominence)`.
pub fn save_boundaries(path: &Path, km: &KinematicMatrix, seg: &Segmentation) -> Result<()> {
    let mut s = String::from("t,source_frame,prominence\n");
    for (&t, &p) in seg.boundaries.tau.iter().zip(&seg.boundaries.prominence) {
        writeln!(s, "{t},{},{p}", km.source_frame(t)).unwrap();
    }
    io::write_string(path, &s)
}

/// Working-frame boundaries from [`save_boundaries`] output.
pub fn load_boundaries(path: &Path) -> Result<Vec<usize>> {
    let (header, rows, _) = io::read_csv_rows(path)?;
    io::expect_header(path, &header, &["t", "source_frame", "prominence"])?;
    rows.into_iter()
        .map(|(line, f)| io::field(path, line, "t", f.first().map_or("", String::as_str)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSummary {
    pub frames: usize,
    pub fps: f64,
    pub half_width: usize,
    pub sigma: f64,
    pub threshold: f64,
    pub d_min: usize,
    pub boundaries: usize,
}

// ---------------------------------------------------------------------------
// evaluation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureMetrics {
    pub procedure_id: String,
    pub frames: usize,
    /// Frame scores with clusters named from instrument presence.
    pub semantic: FrameMetrics,
    /// Frame scores under the best one-to-one cluster to action matching.
    pub aligned: FrameMetrics,
    pub alignment: Vec<Option<Action>>,
    pub boundaries: BoundaryMetrics,
    pub predicted_boundaries: Vec<usize>,
    pub tracking: Option<RateReport>,
}

// ---------------------------------------------------------------------------
// skill

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    #[serde(flatten)]
    pub instance: SkillInstance,
    pub score: f64,
    pub level: SkillLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillTrainingReport {
    pub instances: usize,
    pub class_counts: [usize; 3],
    pub feature_dims: usize,
    pub cv: Option<CvReport>,
}

/// Skill instances for the graded actions among `segments`, which are
/// `(start, end, action)` in working frames.
pub fn procedure_instances(
    procedure_id: &str,
    km: &KinematicMatrix,
    segments: &[(usize, usize, Action)],
    config: &SkillConfig,
) -> Result<Vec<SkillInstance>> {
    let graded: Vec<(usize, usize, Action)> = segments
        .iter()
        .copied()
        .filter(|s| matches!(s.2, Action::NeedleDriving | Action::KnotTying))
        .collect();
    if graded.is_empty() {
        return Ok(Vec::new());
    }
    let bounds: Vec<(usize, usize)> = graded.iter().map(|s| (s.0, s.1)).collect();
    let summaries = segment_features(&km.normalized(), &km.presence_mask, &bounds)?;
    let actions: Vec<Action> = graded.iter().map(|s| s.2).collect();
    let reps = repetition_ordinals(&actions);
    let totals: BTreeMap<Action, usize> = actions.iter().fold(BTreeMap::new(), |mut m, a| {
        *m.entry(*a).or_default() += 1;
        m
    });
    graded
        .iter()
        .enumerate()
        .map(|(i, &(start, end, action))| {
            let total = config.include_total_repetitions.then(|| totals[&action]);
            Ok(SkillInstance {
                procedure_id: procedure_id.to_string(),
                action,
                repetition: reps[i],
                start_frame: km.source_frame(start),
                end_frame: km.source_frame(end),
                features: skill_features(summaries.row(i), action, reps[i], (end - start) as f64 / km.fps, total)?,
            })
        })
        .collect()
}

/// Ground-truth action runs mapped onto working frames.
pub fn truth_segments(km: &KinematicMatrix, labels: &[Action]) -> Vec<(usize, usize, Action)> {
    let f = km.downsample_factor.max(1);
    let runs = crate::data_model::GroundTruthLabels {
        actions: labels.to_vec(),
    }
    .runs();
    runs.into_iter()
        .filter_map(|(s, e, a)| {
            let start = s / f;
            let end = e.div_ceil(f).min(km.frames());
            (end > start).then_some((start, end, a))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureSummary {
    pub procedure_id: String,
    pub semantic_accuracy: f64,
    pub semantic_macro_f1: f64,
    pub aligned_accuracy: f64,
    pub aligned_macro_f1: f64,
    pub boundary_f1: f64,
    pub recovery_rate: Option<f64>,
    pub correction_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub procedures: Vec<ProcedureSummary>,
    pub mean_semantic_macro_f1: Option<f64>,
    pub mean_aligned_macro_f1: Option<f64>,
    pub mean_boundary_f1: Option<f64>,
    pub skill_cv_accuracy: Option<f64>,
    pub skill_cv_macro_f1: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

pub fn render_report(r: &Report) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "procedure", "sem_acc", "sem_f1", "aln_acc", "aln_f1", "bnd_f1", "rr", "cr"
    )
    .unwrap();
    for p in &r.procedures {
        writeln!(
            s,
            "{:<16} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8} {:>8}",
            p.procedure_id,
            p.semantic_accuracy,
            p.semantic_macro_f1,
            p.aligned_accuracy,
            p.aligned_macro_f1,
            p.boundary_f1,
            opt(p.recovery_rate),
            opt(p.correction_rate)
        )
        .unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "mean semantic macro F1  {}", opt(r.mean_semantic_macro_f1)).unwrap();
    writeln!(s, "mean aligned macro F1   {}", opt(r.mean_aligned_macro_f1)).unwrap();
    writeln!(s, "mean boundary F1        {}", opt(r.mean_boundary_f1)).unwrap();
    writeln!(s, "skill CV accuracy       {}", opt(r.skill_cv_accuracy)).unwrap();
    writeln!(s, "skill CV macro F1       {}", opt(r.skill_cv_macro_f1)).unwrap();
    s
}

// ---------------------------------------------------------------------------
// runner

pub struct Pipeline {
    config: PipelineConfig,
    input: PathBuf,
    output: PathBuf,
}

impl Pipeline {
    /// Validates the configuration and applies the master seed.
    pub fn new(config: PipelineConfig, input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.effective(),
            input: input.into(),
            output: output.into(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Subdirectories of the input root that hold a detection stream, by name.
    pub fn procedures(&self) -> Result<Vec<String>> {
        let entries = fs::read_dir(&self.input).map_err(|e| Error::io(&self.input, e))?;
        let mut out = Vec::new();
        for e in entries {
            let e = e.map_err(|e| Error::io(&self.input, e))?;
            if e.path().join(DETECTIONS_FILE).is_file() {
                out.push(e.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        if out.is_empty() {
            log::warn!("no procedures with {DETECTIONS_FILE} under {}", self.input.display());
        }
        Ok(out)
    }

    fn input_file(&self, procedure: &str, file: &str) -> PathBuf {
        self.input.join(procedure).join(file)
    }

    fn output_file(&self, procedure: &str, file: &str) -> PathBuf {
        self.output.join(procedure).join(file)
    }

    fn needs(&self, procedure: &str, file: &str, producer: Stage) -> Result<PathBuf> {
        require(self.output_file(procedure, file), producer.name())
    }

    fn needs_input(&self, procedure: &str, file: &str) -> Result<PathBuf> {
        require(self.input_file(procedure, file), "input")
    }

    fn each<F>(&self, f: F) -> Result<()>
    where
        F: Fn(&str) -> Result<()> + Sync,
    {
        let procs = self.procedures()?;
        for p in &procs {
            fs::create_dir_all(self.output.join(p)).map_err(|e| Error::io(self.output.join(p), e))?;
        }
        procs.par_iter().map(|p| f(p)).collect::<Vec<Result<()>>>().into_iter().collect()
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        log::info!("stage {}", stage.name());
        match stage {
            Stage::Track => self.each(|p| self.track(p)),
            Stage::Tips => self.each(|p| self.tips(p)),
            Stage::Features => self.each(|p| self.features(p)),
            Stage::Segment => self.each(|p| self.segment(p)),
            Stage::Cluster => self.cluster(),
            Stage::Eval => self.each(|p| self.eval(p)),
            Stage::TrainSkill => self.train_skill(),
            Stage::PredictSkill => self.predict_skill(),
            Stage::Report => self.report(),
        }
    }

    pub fn run_all(&self) -> Result<()> {
        Stage::ALL.iter().try_for_each(|&s| self.run(s))
    }

    fn video_info(&self, procedure: &str) -> Result<Option<VideoInfo>> {
        let path = self.input_file(procedure, VIDEO_FILE);
        if path.is_file() {
            Ok(Some(io::read_json(&path)?))
        } else {
            Ok(None)
        }
    }

    fn track(&self, p: &str) -> Result<()> {
        let dets = io::load_detections(&self.needs_input(p, DETECTIONS_FILE)?)?;
        io::write_json(&self.output_file(p, STREAM_REPORT_FILE), &validate_stream(&dets))?;
        let tracks = track_and_refine(&dets, &self.config.tracking)?;
        io::save_refined_tracks(&self.output_file(p, REFINED_TRACKS_FILE), &tracks)
    }

    fn tips(&self, p: &str) -> Result<()> {
        let tracks = io::load_refined_tracks(&self.needs(p, REFINED_TRACKS_FILE, Stage::Track)?)?;
        let candidates = io::load_tip_candidates(&self.needs_input(p, TIP_CANDIDATES_FILE)?)?;
        let refs = io::load_reference_descriptors(&self.needs_input(p, REFERENCE_DESCRIPTORS_FILE)?)?;
        let video = self.video_info(p)?;
        let last = tracks.iter().flat_map(|t| t.frames.last()).map(|f| f.frame + 1).max().unwrap_or(0);
        let frames = video.map_or(last, |v| v.frames.max(last));
        let fps = video.map_or(self.config.fps, |v| v.fps);
        let tips = localize_tracks(&tracks, &candidates, &refs, frames, fps)?;
        io::save_tips(&self.output_file(p, TIPS_FILE), &tips)
    }

    fn features(&self, p: &str) -> Result<()> {
        let tips = io::load_tips(&self.needs(p, TIPS_FILE, Stage::Tips)?, Some(self.config.fps))?;
        let km = build_feature_matrix(&tips, &self.config.kinematics)?;
        km.save(&self.output_file(p, FEATURES_FILE), &self.output_file(p, FEATURES_META_FILE))
    }

    fn load_features(&self, p: &str) -> Result<KinematicMatrix> {
        KinematicMatrix::load(
            &self.needs(p, FEATURES_FILE, Stage::Features)?,
            &self.needs(p, FEATURES_META_FILE, Stage::Features)?,
        )
    }

    fn segment(&self, p: &str) -> Result<()> {
        let km = self.load_features(p)?;
        let cfg = &self.config.segmentation;
        let seg = segment(&km.normalized(), km.fps, cfg)?;
        let h = cfg.half_width(km.fps);
        io::write_json(
            &self.output_file(p, SEGMENTATION_FILE),
            &SegmentationSummary {
                frames: km.frames(),
                fps: km.fps,
                half_width: h,
                sigma: cfg.sigma_for(h),
                threshold: seg.boundaries.threshold,
                d_min: seg.boundaries.d_min,
                boundaries: seg.boundaries.tau.len(),
            },
        )?;
        let mut s = String::from("t,source_frame,novelty\n");
        for (t, v) in seg.novelty.values.iter().enumerate() {
            writeln!(s, "{t},{},{v}", km.source_frame(t)).unwrap();
        }
        io::write_string(&self.output_file(p, NOVELTY_FILE), &s)?;
        let mut s = String::from("i,j,similarity\n");
        let band = &seg.band;
        for i in 0..band.len() {
            for j in i..band.len().min(i + band.width() + 1) {
                if let Some(v) = band.get(i, j) {
                    writeln!(s, "{i},{j},{v}").unwrap();
                }
            }
        }
        io::write_string(&self.output_file(p, SSM_FILE), &s)?;
        save_boundaries(&self.output_file(p, BOUNDARIES_FILE), &km, &seg)
    }

    fn cluster(&self) -> Result<()> {
        let procs = self.procedures()?;
        let mut prepared = Vec::with_capacity(procs.len());
        for p in &procs {
            let km = self.load_features(p)?;
            let tau = load_boundaries(&self.needs(p, BOUNDARIES_FILE, Stage::Segment)?)?;
            let (bounds, summaries) = segment_summaries(&km, &tau)?;
            prepared.push((p.clone(), km, bounds, summaries));
        }
        let kcfg = &self.config.clustering.kmeans;
        match self.config.clustering.mode {
            ClusteringMode::PerVideo => prepared
                .par_iter()
                .map(|(p, km, bounds, summaries)| {
                    let mut art = fit_clusters(summaries, &km.instruments, kcfg)?;
                    art.procedures = vec![p.clone()];
                    io::write_json(&self.output_file(p, CLUSTER_MODEL_FILE), &art)?;
                    save_segments(
                        &self.output_file(p, SEGMENTS_FILE),
                        &segment_rows(km, bounds, &art.model.assignments, &art.actions),
                    )
                })
                .collect::<Vec<_>>()
                .into_iter()
                .collect(),
            ClusteringMode::Pooled => {
                let Some(first) = prepared.first() else { return Ok(()) };
                let instruments = first.1.instruments.clone();
                let mut rows: Vec<Vec<f64>> = Vec::new();
                for (p, km, _, s) in &prepared {
                    if km.instruments != instruments || s.cols() != first.3.cols() {
                        return Err(Error::Validation(format!(
                            "procedure {p} has a different feature layout; pooled clustering needs one layout"
                        )));
                    }
                    rows.extend(s.iter_rows().map(<[f64]>::to_vec));
                }
                let mut art = fit_clusters(&Matrix::from_rows(&rows), &instruments, kcfg)?;
                art.procedures = procs.clone();
                fs::create_dir_all(&self.output).map_err(|e| Error::io(&self.output, e))?;
                io::write_json(&self.output.join(CLUSTER_MODEL_FILE), &art)?;
                let mut offset = 0;
                for (p, km, bounds, _) in &prepared {
                    let assign = &art.model.assignments[offset..offset + bounds.len()];
                    offset += bounds.len();
                    save_segments(&self.output_file(p, SEGMENTS_FILE), &segment_rows(km, bounds, assign, &art.actions))?;
                }
                Ok(())
            }
        }
    }

    fn eval(&self, p: &str) -> Result<()> {
        let labels_path = self.input_file(p, LABELS_FILE);
        if !labels_path.is_file() {
            log::warn!("{p}: no {LABELS_FILE}; skipping evaluation");
            return Ok(());
        }
        let labels = io::load_labels(&labels_path)?;
        let rows = load_segments(&self.needs(p, SEGMENTS_FILE, Stage::Cluster)?)?;
        let km = self.load_features(p)?;
        let tau = load_boundaries(&self.needs(p, BOUNDARIES_FILE, Stage::Segment)?)?;
        let n = labels.len();
        let semantic_pred = ribbon(&rows, n, |r| r.action, Action::NoAction);
        let clusters = ribbon(&rows, n, |r| r.cluster, 0);
        let k = rows.iter().map(|r| r.cluster + 1).max().unwrap_or(1);
        let alignment = align_clusters(&clusters, k, &labels.actions)?;

        let gt_b_path = self.input_file(p, GT_BOUNDARIES_FILE);
        let truth_b = if gt_b_path.is_file() {
            io::load_boundary_list(&gt_b_path)?
        } else {
            labels.boundaries()
        };
        let pred_b: Vec<usize> = tau.iter().map(|&t| km.source_frame(t)).collect();
        let source_fps = km.fps * km.downsample_factor as f64;
        let tol = (self.config.evaluation.boundary_tolerance_s * source_fps).round() as usize;

        let truth_objects = self.input_file(p, TRUTH_OBJECTS_FILE);
        let tracking = if truth_objects.is_file() {
            let truth = io::load_truth_objects(&truth_objects)?;
            let raw = io::load_detections(&self.needs_input(p, DETECTIONS_FILE)?)?;
            let refined = io::load_refined_tracks(&self.needs(p, REFINED_TRACKS_FILE, Stage::Track)?)?;
            Some(recovery_correction_rates(&raw, &refined, &truth, self.config.evaluation.tracking_iou))
        } else {
            None
        };

        let metrics = ProcedureMetrics {
            procedure_id: p.to_string(),
            frames: n,
            semantic: frame_metrics(&semantic_pred, &labels.actions)?,
            aligned: frame_metrics(&alignment.mapped, &labels.actions)?,
            alignment: alignment.mapping,
            boundaries: boundary_metrics(&pred_b, &truth_b, tol),
            predicted_boundaries: pred_b,
            tracking,
        };
        io::write_json(&self.output_file(p, METRICS_FILE), &metrics)?;
        let mut s = String::from("frame,truth,semantic,aligned\n");
        for f in 0..n {
            writeln!(s, "{f},{},{},{}", labels.actions[f], semantic_pred[f], alignment.mapped[f]).unwrap();
        }
        io::write_string(&self.output_file(p, RIBBON_FILE), &s)
    }

    fn instances_for(&self, p: &str) -> Result<Vec<SkillInstance>> {
        let km = self.load_features(p)?;
        let segments = if self.config.skill.use_ground_truth_segments {
            let labels = io::load_labels(&self.needs_input(p, LABELS_FILE)?)?;
            truth_segments(&km, &labels.actions)
        } else {
            load_segments(&self.needs(p, SEGMENTS_FILE, Stage::Cluster)?)?
                .iter()
                .map(|r| (r.start, r.end, r.action))
                .collect()
        };
        procedure_instances(p, &km, &segments, &self.config.skill)
    }

    fn train_skill(&self) -> Result<()> {
        let procs = self.procedures()?;
        let mut labeled = Vec::new();
        for p in &procs {
            let scores_path = self.input_file(p, SCORES_FILE);
            if !scores_path.is_file() {
                log::warn!("{p}: no {SCORES_FILE}; its instances are not used for training");
                continue;
            }
            let scores: BTreeMap<Action, SkillScore> =
                io::load_scores(&scores_path)?.into_iter().map(|s| (s.action_type, s)).collect();
            for inst in self.instances_for(p)? {
                let Some(score) = scores.get(&inst.action) else { continue };
                labeled.push(LabeledInstance {
                    level: discretize_with(score.score, &self.config.skill.thresholds)?,
                    score: score.score,
                    instance: inst,
                });
            }
        }
        if labeled.is_empty() {
            return Err(Error::Validation("no scored skill instances to train on".into()));
        }
        let dims = labeled[0].instance.features.len();
        let x = Matrix::from_rows(&labeled.iter().map(|l| l.instance.features.clone()).collect::<Vec<_>>());
        let y: Vec<usize> = labeled.iter().map(|l| l.level.index()).collect();
        let mut class_counts = [0usize; 3];
        y.iter().for_each(|&c| class_counts[c] += 1);
        let skill = &self.config.skill;
        let cv = if y.len() >= skill.folds {
            Some(cross_validate(&x, &y, 3, skill.folds, self.config.cv_seed(), &skill.gbdt)?)
        } else {
            log::warn!("{} instances are too few for {}-fold cross-validation", y.len(), skill.folds);
            None
        };
        let model = GbdtModel::train(&x, &y, 3, &skill.gbdt)?;
        let dir = self.output.join(SKILL_DIR);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        io::write_string(&dir.join(SKILL_MODEL_FILE), &model.to_json()?)?;
        io::write_jsonl(&dir.join(SKILL_INSTANCES_FILE), &labeled)?;
        io::write_json(
            &dir.join(SKILL_CV_FILE),
            &SkillTrainingReport {
                instances: labeled.len(),
                class_counts,
                feature_dims: dims,
                cv,
            },
        )
    }

    fn predict_skill(&self) -> Result<()> {
        let model_path = require(self.output.join(SKILL_DIR).join(SKILL_MODEL_FILE), Stage::TrainSkill.name())?;
        let model = GbdtModel::from_json(&io::read_to_string(&model_path)?)?;
        self.each(|p| {
            let mut s = String::from("procedure_id,action,repetition,start_frame,end_frame,level,p_poor,p_moderate,p_good\n");
            for inst in self.instances_for(p)? {
                let (c, prob) = model.predict(&inst.features)?;
                let level = SkillLevel::from_index(c).expect("three classes");
                writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    inst.procedure_id,
                    inst.action,
                    inst.repetition,
                    inst.start_frame,
                    inst.end_frame,
                    level,
                    prob[0],
                    prob[1],
                    prob[2]
                )
                .unwrap();
            }
            io::write_string(&self.output_file(p, SKILL_PREDICTIONS_FILE), &s)
        })
    }

    fn report(&self) -> Result<()> {
        let mut procedures = Vec::new();
        for p in self.procedures()? {
            let path = self.output_file(&p, METRICS_FILE);
            if !path.is_file() {
                continue;
            }
            let m: ProcedureMetrics = io::read_json(&path)?;
            procedures.push(ProcedureSummary {
                procedure_id: m.procedure_id,
                semantic_accuracy: m.semantic.accuracy,
                semantic_macro_f1: m.semantic.macro_f1,
                aligned_accuracy: m.aligned.accuracy,
                aligned_macro_f1: m.aligned.macro_f1,
                boundary_f1: m.boundaries.f1.value,
                recovery_rate: m.tracking.as_ref().and_then(|t| t.overall.recovery_rate()),
                correction_rate: m.tracking.as_ref().and_then(|t| t.overall.correction_rate()),
            });
        }
        let cv_path = self.output.join(SKILL_DIR).join(SKILL_CV_FILE);
        let cv: Option<CvReport> = if cv_path.is_file() {
            io::read_json::<SkillTrainingReport>(&cv_path)?.cv
        } else {
            None
        };
        let report = Report {
            mean_semantic_macro_f1: mean(procedures.iter().map(|p| p.semantic_macro_f1)),
            mean_aligned_macro_f1: mean(procedures.iter().map(|p| p.aligned_macro_f1)),
            mean_boundary_f1: mean(procedures.iter().map(|p| p.boundary_f1)),
            skill_cv_accuracy: cv.as_ref().map(|c| c.pooled.accuracy),
            skill_cv_macro_f1: cv.as_ref().map(|c| c.pooled.macro_f1),
            procedures,
        };
        fs::create_dir_all(&self.output).map_err(|e| Error::io(&self.output, e))?;
        io::write_json(&self.output.join(REPORT_JSON_FILE), &report)?;
        io::write_string(&self.output.join(REPORT_TXT_FILE), &render_report(&report))
    }
}
