//! Per-class density of labeled embeddings, dataset quality scoring and
//! central-exclusion data reduction.
//!
//! The pipeline is: ingest (or PCA-reduce) an [`EmbeddingSet`], compute
//! [`ClassStats`], turn those into a [`DensityVector`] under one of four
//! formulas, score the dataset with [`dataset_quality`], and optionally
//! shrink over-dense classes with [`solve_target_density`].

pub mod density;
pub mod embed;
mod error;
pub mod ingest;
pub mod quality;
pub mod reduction;
pub mod stats;
pub mod synth;

pub use density::{class_stats, ClassStats, DensityMethod, DensityVector};
pub use embed::{load_external, pca_reduce, ReducerConfig};
pub use error::{
    DensityError, EmbedError, Error, IngestError, QualityError, ReductionError, Result, StatsError,
    SynthError,
};
pub use ingest::{AccuracyTable, EmbeddedSample, EmbeddingSet, RawVectorSet, TrialSummary};
pub use quality::{dataset_quality, QualityScore, QUALITY_THRESHOLD};
pub use reduction::{solve_target_density, ReductionManifest, ReductionRequest};
pub use stats::{pearson_r, pooled_t_test, CorrelationResult, SignificanceResult};
