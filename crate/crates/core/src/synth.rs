//! Seeded Gaussian-mixture embeddings and a nearest-centroid classifier
//! for end-to-end checks of the reduction pipeline.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`, seeded with
//! `seed_from_u64`); normals are drawn with the Box-Muller transform over
//! 53-bit uniforms so the stream can be reproduced outside Rust.

use std::collections::BTreeMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::density::class_centroids;
use crate::error::SynthError;
use crate::ingest::{AccuracyTable, EmbeddedSample, EmbeddingSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub count: usize,
    pub centroid: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: Vec<ClassSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    /// Classes with the given centroids, all sharing `count` and isotropic `sigma`.
    pub fn isotropic(centroids: &[Vec<f64>], count: usize, sigma: f64, seed: u64) -> Self {
        Self {
            classes: centroids
                .iter()
                .map(|c| ClassSpec {
                    count,
                    centroid: c.clone(),
                    sigma: vec![sigma; c.len()],
                })
                .collect(),
            seed,
        }
    }

    fn validate(&self) -> Result<usize, SynthError> {
        if self.classes.len() < 2 {
            return Err(SynthError::DegenerateSpec("need at least 2 classes".into()));
        }
        let dims = self.classes[0].centroid.len();
        if dims == 0 {
            return Err(SynthError::DegenerateSpec(
                "zero-dimensional centroid".into(),
            ));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.count < 4 {
                return Err(SynthError::DegenerateSpec(format!(
                    "class {i} has {} samples, need at least 4",
                    c.count
                )));
            }
            if c.centroid.len() != dims || c.sigma.len() != dims {
                return Err(SynthError::DegenerateSpec(format!(
                    "class {i} centroid/sigma length differs from {dims}"
                )));
            }
            if c.centroid.iter().any(|x| !x.is_finite())
                || c.sigma.iter().any(|s| !s.is_finite() || *s <= 0.0)
            {
                return Err(SynthError::DegenerateSpec(format!(
                    "class {i} needs finite centroid and positive finite sigma"
                )));
            }
        }
        Ok(dims)
    }
}

/// Standard normal variates from a ChaCha20 stream.
pub struct NormalStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform in `(0, 1]`.
    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let radius = (-2.0 * self.uniform().ln()).sqrt();
        let angle = std::f64::consts::TAU * self.uniform();
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Draws every class from its Gaussian and splits each class 80/20 into
/// train and test. Ids are assigned sequentially across both sets.
pub fn generate(spec: &SynthSpec) -> Result<(EmbeddingSet, EmbeddingSet), SynthError> {
    let dims = spec.validate()?;
    let mut normals = NormalStream::new(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut next_id = 0u64;
    for (label, class) in spec.classes.iter().enumerate() {
        let n_train = class.count * 8 / 10;
        for i in 0..class.count {
            let coords = class
                .centroid
                .iter()
                .zip(&class.sigma)
                .map(|(mu, s)| mu + s * normals.next_normal())
                .collect();
            let sample = EmbeddedSample {
                id: next_id,
                label: label as u32,
                coords,
            };
            next_id += 1;
            if i < n_train {
                train.push(sample);
            } else {
                test.push(sample);
            }
        }
    }
    Ok((
        EmbeddingSet::new(dims, train)?,
        EmbeddingSet::new(dims, test)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierReport {
    pub accuracy: f64,
    pub per_class: AccuracyTable,
    pub correct: usize,
    pub total: usize,
}

/// Class whose centroid is nearest to `point`; ties go to the lower class id.
pub fn nearest_centroid(centroids: &BTreeMap<u32, Vec<f64>>, point: &[f64]) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for (&class, c) in centroids {
        let d: f64 = c.iter().zip(point).map(|(a, b)| (a - b).powi(2)).sum();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((class, d));
        }
    }
    best.map(|(c, _)| c)
}

/// Accuracy of a nearest-centroid classifier fit on `train`, overall and
/// per class.
pub fn nearest_centroid_accuracy(
    train: &EmbeddingSet,
    test: &EmbeddingSet,
) -> Result<ClassifierReport, SynthError> {
    if train.dims() != test.dims() {
        return Err(SynthError::Mismatch(format!(
            "dimensionality {} vs {}",
            train.dims(),
            test.dims()
        )));
    }
    if train.classes().ne(test.classes()) {
        return Err(SynthError::Mismatch("class sets differ".into()));
    }
    let centroids = class_centroids(train);
    let mut hits: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for s in test.samples() {
        let entry = hits.entry(s.label).or_default();
        entry.1 += 1;
        if nearest_centroid(&centroids, &s.coords) == Some(s.label) {
            entry.0 += 1;
        }
    }
    let correct = hits.values().map(|h| h.0).sum();
    let total = test.len();
    let per_class =
        AccuracyTable::from_rows(hits.iter().map(|(&c, &(ok, n))| (c, ok as f64 / n as f64)))?;
    Ok(ClassifierReport {
        accuracy: correct as f64 / total as f64,
        per_class,
        correct,
        total,
    })
}
