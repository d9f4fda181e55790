//! Dataset quality from the spread of normalized class densities.

use serde::{Deserialize, Serialize};

use crate::density::{DensityMethod, DensityVector};
use crate::error::QualityError;

/// Quality above which a dataset is considered a reduction candidate.
pub const QUALITY_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    /// Population standard deviation of the class densities.
    pub sigma_d: f64,
    pub range: f64,
    /// `1 / (sigma_d * range)`; infinite when every density is equal.
    pub q: f64,
    pub candidate: bool,
    pub degenerate: bool,
}

impl QualityScore {
    /// `sigma_d,range,quality,candidate` header plus one row.
    pub fn to_csv(&self) -> String {
        let q = if self.q.is_finite() {
            format!("{:.6}", self.q)
        } else {
            "inf".to_string()
        };
        format!(
            "sigma_d,range,quality,candidate\n{:.9},{:.9},{q},{}\n",
            self.sigma_d, self.range, self.candidate
        )
    }
}

/// Quality of a mean-normalized density vector against [`QUALITY_THRESHOLD`].
pub fn dataset_quality(densities: &DensityVector) -> Result<QualityScore, QualityError> {
    dataset_quality_with_threshold(densities, QUALITY_THRESHOLD)
}

pub fn dataset_quality_with_threshold(
    densities: &DensityVector,
    threshold: f64,
) -> Result<QualityScore, QualityError> {
    if densities.method != DensityMethod::MeanNormalized {
        return Err(QualityError::WrongMethod(densities.method.to_string()));
    }
    let values: Vec<f64> = densities.values.values().copied().collect();
    quality_of_values(&values, threshold)
}

/// The quality formula over raw values, with no method check.
pub fn quality_of_values(values: &[f64], threshold: f64) -> Result<QualityScore, QualityError> {
    if values.len() < 2 {
        return Err(QualityError::TooFewClasses(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(QualityError::NonFinite);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sigma_d = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    let product = sigma_d * range;
    if range == 0.0 || product == 0.0 {
        return Ok(QualityScore {
            sigma_d,
            range,
            q: f64::INFINITY,
            candidate: true,
            degenerate: true,
        });
    }
    let q = 1.0 / product;
    Ok(QualityScore {
        sigma_d,
        range,
        q,
        candidate: q > threshold,
        degenerate: false,
    })
}
