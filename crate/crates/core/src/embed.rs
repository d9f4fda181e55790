//! Dimensional-reduction seam.
//!
//! Embeddings produced by an external reducer are passed through
//! [`load_external`] unchanged (after validation). For raw vectors,
//! [`pca_reduce`] projects onto the leading principal directions so the
//! rest of the pipeline can run without an external tool.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::EmbedError;
use crate::ingest::{EmbeddedSample, EmbeddingSet, RawVectorSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReducerConfig {
    pub target_dims: usize,
    /// Subtract the per-feature mean before projecting.
    pub center: bool,
}

impl Default for ReducerConfig {
    fn default() -> Self {
        Self {
            target_dims: 3,
            center: true,
        }
    }
}

/// A fitted projection: feature means and unit principal directions in
/// descending order of explained variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    /// Population variance captured by each direction.
    pub explained_variance: Vec<f64>,
    pub center: bool,
}

impl PcaModel {
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.directions
            .iter()
            .map(|dir| {
                dir.iter()
                    .zip(v)
                    .zip(&self.mean)
                    .map(|((d, x), mu)| d * if self.center { x - mu } else { *x })
                    .sum()
            })
            .collect()
    }
}

/// Fits principal directions on the population covariance of `vectors`.
///
/// Each direction is sign-normalized so that its largest-magnitude loading
/// is positive (first such index on exact ties).
pub fn fit_pca(vectors: &[Vec<f64>], cfg: ReducerConfig) -> Result<PcaModel, EmbedError> {
    if vectors.len() < 2 {
        return Err(EmbedError::TooFewVectors(vectors.len()));
    }
    let dims = vectors[0].len();
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != dims {
            return Err(EmbedError::RaggedInput {
                index,
                expected: dims,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite(index));
        }
    }
    if cfg.target_dims == 0 {
        return Err(EmbedError::ZeroTarget);
    }
    if cfg.target_dims > dims {
        return Err(EmbedError::TargetTooLarge {
            target: cfg.target_dims,
            input: dims,
        });
    }

    let n = vectors.len() as f64;
    let mut mean = vec![0.0; dims];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let centered = DMatrix::from_fn(vectors.len(), dims, |r, c| vectors[r][c] - mean[c]);
    let cov = (centered.transpose() * &centered) / n;
    let scale = cov.diagonal().iter().copied().fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(EmbedError::NoVariance);
    }
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dims).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    if eig.eigenvalues[order[0]] <= scale * 1e-12 {
        return Err(EmbedError::NoVariance);
    }

    let mut directions = Vec::with_capacity(cfg.target_dims);
    let mut explained_variance = Vec::with_capacity(cfg.target_dims);
    for &idx in order.iter().take(cfg.target_dims) {
        let mut dir: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let pivot =
            dir.iter().enumerate().fold(
                0,
                |best, (i, x)| if x.abs() > dir[best].abs() { i } else { best },
            );
        if dir[pivot] < 0.0 {
            dir.iter_mut().for_each(|x| *x = -*x);
        }
        directions.push(dir);
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(PcaModel {
        mean,
        directions,
        explained_variance,
        center: cfg.center,
    })
}

/// Reduces raw vectors to `cfg.target_dims` principal coordinates.
pub fn pca_reduce(vectors: &RawVectorSet, cfg: ReducerConfig) -> Result<EmbeddingSet, EmbedError> {
    if vectors.ids.len() != vectors.len() || vectors.labels.len() != vectors.len() {
        return Err(EmbedError::Ingest(
            crate::error::IngestError::CountMismatch {
                images: vectors.len(),
                labels: vectors.labels.len(),
            },
        ));
    }
    let model = fit_pca(&vectors.vectors, cfg)?;
    let samples = vectors
        .vectors
        .iter()
        .zip(&vectors.ids)
        .zip(&vectors.labels)
        .map(|((v, &id), &label)| EmbeddedSample {
            id,
            label,
            coords: model.project(v),
        })
        .collect();
    Ok(EmbeddingSet::new(cfg.target_dims, samples)?)
}

/// Accepts an externally produced embedding after checking every set
/// invariant. Any dimensionality is allowed.
pub fn load_external(
    dims: usize,
    samples: Vec<EmbeddedSample>,
) -> Result<EmbeddingSet, EmbedError> {
    Ok(EmbeddingSet::new(dims, samples)?)
}
