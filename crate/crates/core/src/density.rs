//! Per-class spread statistics and the four class-density formulas.
//!
//! All four formulas work from the per-dimension population standard
//! deviations of each class. The min/max/mean variants multiply by an
//! imbalance bias term `n * c_i / sum_j c_j`; the mean-normalized variant
//! drops the bias and divides the across-class mean spread by the class's
//! own mean spread, which makes it independent of embedding scale.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::DensityError;
use crate::ingest::{EmbeddedSample, EmbeddingSet};

/// Spread statistics of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class_id: u32,
    pub count: usize,
    /// Population standard deviation per dimension.
    pub sigma: Vec<f64>,
    pub mean_sigma: f64,
    pub centroid: Vec<f64>,
}

impl ClassStats {
    /// Statistics of an arbitrary group of points. Needs at least 2 points.
    pub fn from_points<'a, I>(class_id: u32, dims: usize, points: I) -> Result<Self, DensityError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        // Welford update per dimension.
        let mut count = 0usize;
        let mut mean = vec![0.0; dims];
        let mut m2 = vec![0.0; dims];
        for p in points {
            count += 1;
            let inv = 1.0 / count as f64;
            for ((x, mu), s) in p.iter().zip(mean.iter_mut()).zip(m2.iter_mut()) {
                let delta = x - *mu;
                *mu += delta * inv;
                *s += delta * (x - *mu);
            }
        }
        if count < 2 {
            return Err(DensityError::DegenerateClass(class_id));
        }
        let sigma: Vec<f64> = m2
            .iter()
            .map(|s| (s / count as f64).max(0.0).sqrt())
            .collect();
        let mean_sigma = sigma.iter().sum::<f64>() / dims as f64;
        Ok(Self {
            class_id,
            count,
            sigma,
            mean_sigma,
            centroid: mean,
        })
    }

    /// True when every dimension has zero spread; densities would be infinite.
    pub fn is_collapsed(&self) -> bool {
        self.sigma.iter().all(|&s| s == 0.0)
    }

    pub fn min_sigma(&self) -> f64 {
        self.sigma.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma.iter().copied().fold(0.0, f64::max)
    }
}

/// Statistics for every class of `set`, ordered by class id.
pub fn class_stats(set: &EmbeddingSet) -> Result<Vec<ClassStats>, DensityError> {
    let classes: Vec<u32> = set.classes().collect();
    classes
        .par_iter()
        .map(|&c| {
            ClassStats::from_points(c, set.dims(), set.members(c).map(|s| s.coords.as_slice()))
        })
        .collect()
}

/// Per-dimension mean of every class; unlike [`class_stats`] this accepts
/// single-sample classes.
pub fn class_centroids(set: &EmbeddingSet) -> BTreeMap<u32, Vec<f64>> {
    set.classes()
        .map(|c| (c, centroid_of(set.dims(), set.members(c))))
        .collect()
}

pub(crate) fn centroid_of<'a>(
    dims: usize,
    samples: impl Iterator<Item = &'a EmbeddedSample>,
) -> Vec<f64> {
    let mut sum = vec![0.0; dims];
    let mut count = 0usize;
    for s in samples {
        count += 1;
        for (acc, x) in sum.iter_mut().zip(&s.coords) {
            *acc += x;
        }
    }
    sum.iter().map(|x| x / count.max(1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityMethod {
    Min,
    Max,
    Mean,
    MeanNormalized,
}

impl DensityMethod {
    pub const ALL: [DensityMethod; 4] = [
        DensityMethod::Min,
        DensityMethod::Max,
        DensityMethod::Mean,
        DensityMethod::MeanNormalized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DensityMethod::Min => "min",
            DensityMethod::Max => "max",
            DensityMethod::Mean => "mean",
            DensityMethod::MeanNormalized => "mean-normalized",
        }
    }
}

impl fmt::Display for DensityMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DensityMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(DensityMethod::Min),
            "max" => Ok(DensityMethod::Max),
            "mean" => Ok(DensityMethod::Mean),
            "mean-normalized" | "mean_normalized" => Ok(DensityMethod::MeanNormalized),
            other => Err(format!(
                "unknown density method {other:?} (expected min, max, mean or mean-normalized)"
            )),
        }
    }
}

/// Density of each class under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityVector {
    pub method: DensityMethod,
    pub values: BTreeMap<u32, f64>,
}

impl DensityVector {
    /// Wraps precomputed values, e.g. a published table column.
    pub fn from_values(
        method: DensityMethod,
        values: impl IntoIterator<Item = (u32, f64)>,
    ) -> Result<Self, DensityError> {
        let values: BTreeMap<u32, f64> = values.into_iter().collect();
        for (&class, &value) in &values {
            if !value.is_finite() || value <= 0.0 {
                return Err(DensityError::InvalidValue { class, value });
            }
        }
        Ok(Self { method, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `class,density` CSV with 9 decimal places.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,density\n");
        for (class, d) in &self.values {
            out.push_str(&format!("{class},{d:.9}\n"));
        }
        out
    }
}

/// `n * c_i / sum_j c_j`.
pub fn bias_term(n_classes: usize, count: usize, total: usize) -> f64 {
    n_classes as f64 * count as f64 / total as f64
}

fn biased(
    stats: &[ClassStats],
    method: DensityMethod,
    spread: impl Fn(&ClassStats) -> Result<f64, DensityError>,
) -> Result<DensityVector, DensityError> {
    if stats.len() < 2 {
        return Err(DensityError::TooFewClasses);
    }
    let n = stats.len();
    let total: usize = stats.iter().map(|s| s.count).sum();
    let values = stats
        .iter()
        .map(|s| Ok((s.class_id, bias_term(n, s.count, total) / spread(s)?)))
        .collect::<Result<BTreeMap<_, _>, DensityError>>()?;
    Ok(DensityVector { method, values })
}

/// Min-derived density: bias term over the smallest per-dimension spread.
pub fn density_min(stats: &[ClassStats]) -> Result<DensityVector, DensityError> {
    biased(stats, DensityMethod::Min, |s| {
        let m = s.min_sigma();
        if m > 0.0 {
            Ok(m)
        } else {
            Err(DensityError::ZeroSpread(s.class_id))
        }
    })
}

/// Max-derived density: bias term over the largest per-dimension spread.
pub fn density_max(stats: &[ClassStats]) -> Result<DensityVector, DensityError> {
    biased(stats, DensityMethod::Max, |s| {
        let m = s.max_sigma();
        if m > 0.0 {
            Ok(m)
        } else {
            Err(DensityError::ZeroSpread(s.class_id))
        }
    })
}

fn positive_mean_sigma(s: &ClassStats) -> Result<f64, DensityError> {
    if s.mean_sigma > 0.0 {
        Ok(s.mean_sigma)
    } else {
        Err(DensityError::ZeroMeanSpread(s.class_id))
    }
}

/// Mean-derived density: bias term over the mean per-dimension spread.
pub fn density_mean(stats: &[ClassStats]) -> Result<DensityVector, DensityError> {
    biased(stats, DensityMethod::Mean, positive_mean_sigma)
}

/// Across-class mean of the classes' mean spreads; the numerator of the
/// normalized density.
pub fn normalization_numerator(stats: &[ClassStats]) -> f64 {
    stats.iter().map(|s| s.mean_sigma).sum::<f64>() / stats.len() as f64
}

/// Mean-derived and normalized density (no bias term).
pub fn density_mean_normalized(stats: &[ClassStats]) -> Result<DensityVector, DensityError> {
    if stats.len() < 2 {
        return Err(DensityError::TooFewClasses);
    }
    let numerator = normalization_numerator(stats);
    let values = stats
        .iter()
        .map(|s| Ok((s.class_id, numerator / positive_mean_sigma(s)?)))
        .collect::<Result<BTreeMap<_, _>, DensityError>>()?;
    Ok(DensityVector {
        method: DensityMethod::MeanNormalized,
        values,
    })
}

pub fn compute_density(
    method: DensityMethod,
    stats: &[ClassStats],
) -> Result<DensityVector, DensityError> {
    match method {
        DensityMethod::Min => density_min(stats),
        DensityMethod::Max => density_max(stats),
        DensityMethod::Mean => density_mean(stats),
        DensityMethod::MeanNormalized => density_mean_normalized(stats),
    }
}
