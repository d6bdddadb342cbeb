//! Segment summaries, k-means clustering and cluster naming.

pub mod align;
pub mod kmeans;
pub mod segments;

use serde::{Deserialize, Serialize};

pub use align::{align_clusters, semantic_label, Alignment, SemanticLabels};
pub use kmeans::{inertia, kmeans, ClusterModel, KMeansConfig};
pub use segments::{segment_features, segments_from_bounds, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusteringMode {
    /// One model per procedure.
    #[default]
    PerVideo,
    /// One model over the segments of every procedure.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub kmeans: KMeansConfig,
    pub mode: ClusteringMode,
}
