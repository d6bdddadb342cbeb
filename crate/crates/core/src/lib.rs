//! Instrument-trajectory analysis for microanastomosis recordings.
//!
//! The crate turns per-frame instrument detections into identity-stable
//! tracks, localizes instrument tips, builds a kinematic feature matrix,
//! finds action boundaries with a self-similarity novelty curve, clusters
//! the resulting segments into surgical actions and grades action-level
//! skill with a gradient-boosted tree classifier.
//!
//! Every stage reads and writes plain files (see [`data_model::io`]) so the
//! command-line front end can run stages one at a time or chained.

pub mod clustering;
pub mod config;
pub mod data_model;
pub mod error;
pub mod hungarian;
pub mod kinematics;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod segmentation;
pub mod skill;
pub mod synth;
pub mod tracking;

pub use config::PipelineConfig;
pub use data_model::{
    Action, BBox, Detection, GroundTruthLabels, InstrumentClass, Provenance, RefinedTrack,
    SkillScore, TipTrajectory,
};
pub use error::{Error, Result};
pub use kinematics::KinematicMatrix;
pub use matrix::Matrix;
pub use segmentation::{Boundaries, CheckerboardKernel, NoveltyCurve, SelfSimilarityBand};
pub use skill::{GbdtModel, SkillLevel};
