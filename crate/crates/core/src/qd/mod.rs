//! Generic CVT-MAP-Elites machinery, independent of what the archive stores.

mod archive;
mod centroids;
mod descriptor;
pub mod kdtree;

pub use archive::{ArchiveStats, Cell, CvtArchive, InsertOutcome, ScoreOrder};
pub use centroids::{
    generate_centroids, uniform_samples, CentroidSet, DEFAULT_SAMPLES, LLOYD_TOLERANCE,
    MAX_LLOYD_ITERATIONS,
};
pub use descriptor::Descriptor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QdError {
    #[error("centroid count must be at least 1")]
    InvalidCentroidCount,
    #[error("need at least k={k} samples, got {n_samples}")]
    TooFewSamples { k: usize, n_samples: usize },
    #[error("score must be finite, got {0}")]
    NonFiniteScore(f64),
    #[error("archive is empty")]
    EmptyArchive,
}
