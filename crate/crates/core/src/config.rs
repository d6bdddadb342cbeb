//! Pipeline configuration: TOML file, then `MICROSKILL_*` environment
//! overrides, then validation.
//!
//! An override named `MICROSKILL_SEGMENTATION__KERNEL_SECONDS=3` sets
//! `segmentation.kernel_seconds`; `__` separates nesting levels. Values are
//! parsed as TOML when possible and taken as strings otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusteringConfig;
use crate::data_model::io;
use crate::error::{Error, Result};
use crate::kinematics::KinematicsConfig;
use crate::segmentation::SegmentationConfig;
use crate::skill::SkillConfig;
use crate::synth::SynthConfig;
use crate::tracking::TrackingConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const ENV_PREFIX: &str = "MICROSKILL_";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// A predicted boundary within this many seconds of a true one is a hit.
    pub boundary_tolerance_s: f64,
    /// IoU needed to pair a tracked box with a ground-truth box.
    pub tracking_iou: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            boundary_tolerance_s: 0.5,
            tracking_iou: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    /// Master seed; copied into every stochastic stage by [`Self::effective`].
    pub seed: u64,
    /// Frame rate assumed when an input does not declare one.
    pub fps: f64,
    pub tracking: TrackingConfig,
    pub kinematics: KinematicsConfig,
    pub segmentation: SegmentationConfig,
    pub clustering: ClusteringConfig,
    pub skill: SkillConfig,
    pub synth: SynthConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            fps: 30.0,
            tracking: TrackingConfig::default(),
            kinematics: KinematicsConfig::default(),
            segmentation: SegmentationConfig::default(),
            clustering: ClusteringConfig::default(),
            skill: SkillConfig::default(),
            synth: SynthConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

fn toml_error(path: &Path, text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map_or(0, |r| text[..r.start.min(text.len())].matches('\n').count() + 1);
    Error::parse(path, line, e.message())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `MICROSKILL_*` pairs to a TOML table.
pub fn apply_overrides<I, K, V>(table: &mut toml::Table, vars: I) -> Result<()>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let mut vars: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let key = k.as_ref().strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
            Some((key, v.as_ref().to_string()))
        })
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<&str> = key.split("__").collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::InvalidParameter(format!("malformed override {ENV_PREFIX}{}", key.to_uppercase())));
        }
        let (leaf, parents) = path.split_last().expect("split yields one part");
        let mut node = &mut *table;
        for p in parents {
            let entry = node
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry.as_table_mut().ok_or_else(|| {
                Error::InvalidParameter(format!("override path {key} crosses non-table key {p}"))
            })?;
        }
        node.insert(leaf.to_string(), parse_value(&raw));
    }
    Ok(())
}

impl PipelineConfig {
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::parse("config", 0, e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::parse_with_env(Path::new("config"), text, std::iter::empty::<(String, String)>())
    }

    /// Parses `text`, applies the given override pairs and validates.
    pub fn from_toml_with_env<I, K, V>(text: &str, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        Self::parse_with_env(Path::new("config"), text, vars)
    }

    fn parse_with_env<I, K, V>(path: &Path, text: &str, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(path, text, &e))?;
        // Typed pass over the file alone so bad values keep their line.
        toml::from_str::<Self>(text).map_err(|e| toml_error(path, text, &e))?;
        apply_overrides(&mut table, vars)?;
        Self::from_table(table)
    }

    /// Loads `path` (defaults when `None`) and applies the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => io::read_to_string(p)?,
            None => String::new(),
        };
        let shown = path.unwrap_or(Path::new("config"));
        Self::parse_with_env(shown, &text, std::env::vars()).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::parse(shown, line, message),
            e => e,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidParameter(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "config schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.fps > 0.0) {
            return Err(Error::InvalidParameter(format!("fps must be positive, got {}", self.fps)));
        }
        self.tracking.validate()?;
        self.kinematics.validate()?;
        self.segmentation.validate()?;
        let km = &self.clustering.kmeans;
        if km.k == 0 || km.restarts == 0 || km.max_iter == 0 {
            return Err(Error::InvalidParameter("k, restarts and max_iter must be at least 1".into()));
        }
        self.skill.validate()?;
        self.synth.validate()?;
        let ev = &self.evaluation;
        if !(ev.boundary_tolerance_s >= 0.0) || !(0.0..=1.0).contains(&ev.tracking_iou) {
            return Err(Error::InvalidParameter(
                "boundary_tolerance_s must be >= 0 and tracking_iou in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Copy with the master seed pushed into clustering and skill training.
    /// Cross-validation folds use `seed + 1` via [`Self::cv_seed`].
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        c.clustering.kmeans.seed = self.seed;
        c.skill.gbdt.seed = self.seed;
        c
    }

    pub fn cv_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(PipelineConfig::from_toml_str("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = PipelineConfig::default();
        c.seed = 42;
        c.segmentation.kernel_seconds = 3.5;
        let text = c.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn env_overrides_win_over_file() {
        let c = PipelineConfig::from_toml_with_env(
            "seed = 1\n[segmentation]\nkernel_seconds = 2.5\n",
            [
                ("MICROSKILL_SEGMENTATION__KERNEL_SECONDS", "4"),
                ("MICROSKILL_SEED", "9"),
                ("MICROSKILL_CLUSTERING__MODE", "pooled"),
                ("HOME", "/root"),
            ],
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.segmentation.kernel_seconds, 4.0);
        assert_eq!(c.clustering.mode, crate::clustering::ClusteringMode::Pooled);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(PipelineConfig::from_toml_str("fps = -1.0").is_err());
        assert!(PipelineConfig::from_toml_str("schema_version = 2").is_err());
        assert!(PipelineConfig::from_toml_str("unknown_key = 1").is_err());
        assert!(PipelineConfig::from_toml_str("[segmentation]\nkernel_secs = 3.0").is_err());
        assert!(PipelineConfig::from_toml_str("[skill.gbdt]\ndepth = 3").is_err());
        assert!(PipelineConfig::from_toml_str("[clustering.kmeans]\nk = 0").is_err());
        assert!(PipelineConfig::from_toml_with_env("", [("MICROSKILL_SEED__X", "1")]).is_err());
    }

    #[test]
    fn seed_propagates() {
        let c = PipelineConfig {
            seed: 17,
            ..Default::default()
        }
        .effective();
        assert_eq!(c.clustering.kmeans.seed, 17);
        assert_eq!(c.skill.gbdt.seed, 17);
        assert_eq!(c.cv_seed(), 18);
    }
}
