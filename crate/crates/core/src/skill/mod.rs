//! Action-level skill grading.

pub mod cv;
pub mod features;
pub mod gbdt;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cv::{cross_validate, cross_validate_with_folds, stratified_folds, stratified_split, CvReport, FoldResult};
pub use features::{repetition_ordinals, skill_features, SkillInstance};
pub use gbdt::{GbdtModel, GbdtParams};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SkillLevel {
    Poor,
    Moderate,
    Good,
}

impl SkillLevel {
    pub const ALL: [SkillLevel; 3] = [SkillLevel::Poor, SkillLevel::Moderate, SkillLevel::Good];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SkillLevel::Poor => "Poor",
            SkillLevel::Moderate => "Moderate",
            SkillLevel::Good => "Good",
        }
    }
}

impl fmt::Display for SkillLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SkillLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown skill level `{s}`")))
    }
}

/// Score cut points; a score equal to a cut point falls in the lower level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkillThresholds {
    pub poor_max: f64,
    pub moderate_max: f64,
}

impl Default for SkillThresholds {
    fn default() -> Self {
        Self {
            poor_max: 2.5,
            moderate_max: 3.5,
        }
    }
}

pub fn discretize_score(score: f64) -> Result<SkillLevel> {
    discretize_with(score, &SkillThresholds::default())
}

pub fn discretize_with(score: f64, t: &SkillThresholds) -> Result<SkillLevel> {
    if !(1.0..=5.0).contains(&score) {
        return Err(Error::Validation(format!("score {score} outside [1, 5]")));
    }
    Ok(if score <= t.poor_max {
        SkillLevel::Poor
    } else if score <= t.moderate_max {
        SkillLevel::Moderate
    } else {
        SkillLevel::Good
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkillConfig {
    pub gbdt: GbdtParams,
    pub thresholds: SkillThresholds,
    pub folds: usize,
    pub test_fraction: f64,
    /// Append the procedure's total count of the action as an extra feature.
    pub include_total_repetitions: bool,
    /// Build instances from ground-truth segments instead of predicted ones.
    pub use_ground_truth_segments: bool,
}

impl Default for SkillConfig {
    fn default() -> Self {
        Self {
            gbdt: GbdtParams::default(),
            thresholds: SkillThresholds::default(),
            folds: 5,
            test_fraction: 0.2,
            include_total_repetitions: false,
            use_ground_truth_segments: false,
        }
    }
}

impl SkillConfig {
    pub fn validate(&self) -> Result<()> {
        self.gbdt.validate()?;
        if self.folds < 2 {
            return Err(Error::InvalidParameter("folds must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::InvalidParameter("test_fraction must lie in [0, 1)".into()));
        }
        if self.thresholds.poor_max >= self.thresholds.moderate_max {
            return Err(Error::InvalidParameter("skill thresholds must increase".into()));
        }
        Ok(())
    }
}
