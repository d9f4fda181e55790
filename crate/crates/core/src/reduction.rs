//! Central-exclusion reduction.
//!
//! Each class's samples are ordered by distance from the class centroid
//! (computed once, before anything is removed). Excluding the `k` nearest
//! samples spreads the class out and lowers its density; a bisection over
//! `k` finds the smallest exclusion count that brings the class down to the
//! target density.
//!
//! The two supported density methods differ in which cross-class
//! quantities a probe sees:
//!
//! * `mean`: the bias term uses the surviving count `c_i - k` over the
//!   total of the reduced dataset. Because that total depends on every
//!   other class's reduction, classes are solved in rounds against the
//!   other classes' current counts until no exclusion count changes.
//!   The reported densities are therefore exactly what the mean-derived
//!   formula gives on the reduced set.
//! * `mean-normalized`: the across-class normalization numerator is frozen
//!   at its pre-reduction value, so each class is solved once,
//!   independently.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{bias_term, normalization_numerator, ClassStats, DensityMethod};
use crate::error::{DensityError, ReductionError};
use crate::ingest::EmbeddingSet;

pub const DEFAULT_MARGIN_FRACTION: f64 = 0.0005;
/// Bisection cap used by the original target-density sweeps.
pub const PRESET_MAX_ITERATIONS: u32 = 9;
const MAX_ROUNDS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionRequest {
    pub method: DensityMethod,
    pub target: f64,
    /// Bisection probe cap per class; `None` runs until the margin is met.
    pub max_iterations: Option<u32>,
    /// Acceptable bracket width as a fraction of the class size.
    pub margin_fraction: f64,
}

impl ReductionRequest {
    pub fn new(method: DensityMethod, target: f64) -> Self {
        Self {
            method,
            target,
            max_iterations: None,
            margin_fraction: DEFAULT_MARGIN_FRACTION,
        }
    }

    /// Nine bisection probes per class, matching the original sweep settings.
    pub fn nine_probe_preset(method: DensityMethod, target: f64) -> Self {
        Self {
            max_iterations: Some(PRESET_MAX_ITERATIONS),
            ..Self::new(method, target)
        }
    }

    pub fn validate(&self) -> Result<(), ReductionError> {
        if !(self.target.is_finite() && self.target > 0.0) {
            return Err(ReductionError::NonPositiveTarget(self.target));
        }
        if !(self.margin_fraction > 0.0 && self.margin_fraction <= 0.01) {
            return Err(ReductionError::BadMargin(self.margin_fraction));
        }
        if self.max_iterations == Some(0) {
            return Err(ReductionError::ZeroIterations);
        }
        match self.method {
            DensityMethod::Mean | DensityMethod::MeanNormalized => Ok(()),
            other => Err(ReductionError::UnsupportedMethod(other.to_string())),
        }
    }

    /// Bracket width at which the bisection stops for a class of `count`.
    pub fn tolerance(&self, count: usize) -> usize {
        ((self.margin_fraction * count as f64).floor() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReduction {
    pub class_id: u32,
    pub original_count: usize,
    /// Density on the unreduced set.
    pub original_density: f64,
    /// Density with this class intact and every other class at its final
    /// size. Equal to `original_density` for the mean-normalized method.
    pub initial_density: f64,
    pub target: f64,
    pub achieved_density: f64,
    /// In exclusion order (nearest the centroid first).
    pub excluded_ids: Vec<u64>,
    /// Centroid distance of the nearest retained sample.
    pub threshold_distance: f64,
    pub iterations_used: u32,
    /// The target is out of reach even with all but two samples excluded.
    pub saturated: bool,
}

impl ClassReduction {
    pub fn kept(&self) -> usize {
        self.original_count - self.excluded_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionManifest {
    pub method: DensityMethod,
    pub target: f64,
    pub margin_fraction: f64,
    pub max_iterations: Option<u32>,
    pub classes: Vec<ClassReduction>,
    pub total_included_fraction: f64,
}

impl ReductionManifest {
    pub fn excluded_ids(&self) -> HashSet<u64> {
        self.classes
            .iter()
            .flat_map(|c| c.excluded_ids.iter().copied())
            .collect()
    }

    pub fn excluded_count(&self) -> usize {
        self.classes.iter().map(|c| c.excluded_ids.len()).sum()
    }

    /// The surviving samples of `set`.
    pub fn apply(&self, set: &EmbeddingSet) -> Result<EmbeddingSet, ReductionError> {
        let excluded = self.excluded_ids();
        let known: HashSet<u64> = set.samples().iter().map(|s| s.id).collect();
        if let Some(&missing) = excluded.iter().filter(|id| !known.contains(id)).min() {
            return Err(ReductionError::UnknownId(missing));
        }
        set.without_ids(&excluded)
            .map_err(|_| ReductionError::StatsMismatch)
    }

    /// Per-class summary CSV.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "class,initial_density,target,achieved_density,threshold_distance,iterations,saturated\n",
        );
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{},{:.9},{},{:.9},{:.9},{},{}",
                c.class_id,
                c.initial_density,
                c.target,
                c.achieved_density,
                c.threshold_distance,
                c.iterations_used,
                c.saturated
            );
        }
        out
    }

    /// Companion CSV listing every excluded sample.
    pub fn excluded_csv(&self) -> String {
        let mut out = String::from("class,excluded_id\n");
        for c in &self.classes {
            for id in &c.excluded_ids {
                let _ = writeln!(out, "{},{id}", c.class_id);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn check_stats(set: &EmbeddingSet, stats: &[ClassStats]) -> Result<(), ReductionError> {
    let matches = stats.len() == set.n_classes()
        && stats.iter().zip(set.classes()).all(|(s, c)| {
            s.class_id == c && s.count == set.class_size(c) && s.centroid.len() == set.dims()
        });
    if matches {
        Ok(())
    } else {
        Err(ReductionError::StatsMismatch)
    }
}

fn sorted_by_distance(set: &EmbeddingSet, st: &ClassStats) -> Vec<(u64, f64)> {
    let mut out: Vec<(u64, f64)> = set
        .members(st.class_id)
        .map(|s| (s.id, euclidean(&s.coords, &st.centroid)))
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

/// Per class, `(sample id, distance to the class centroid)` sorted by
/// ascending distance, ties by ascending id.
pub fn centroid_distances(
    set: &EmbeddingSet,
    stats: &[ClassStats],
) -> Result<BTreeMap<u32, Vec<(u64, f64)>>, ReductionError> {
    check_stats(set, stats)?;
    Ok(stats
        .iter()
        .map(|st| (st.class_id, sorted_by_distance(set, st)))
        .collect())
}

/// Ids of the class members that remain after excluding the `k` nearest
/// to the original centroid, in ascending distance order.
pub fn central_exclusion(
    set: &EmbeddingSet,
    class_id: u32,
    k: usize,
) -> Result<Vec<u64>, ReductionError> {
    let count = set.class_size(class_id);
    if count == 0 {
        return Err(ReductionError::UnknownClass(class_id));
    }
    if k + 2 > count {
        return Err(ReductionError::TooManyExcluded {
            class: class_id,
            k,
            count,
        });
    }
    let st = ClassStats::from_points(
        class_id,
        set.dims(),
        set.members(class_id).map(|s| s.coords.as_slice()),
    )?;
    Ok(sorted_by_distance(set, &st)[k..]
        .iter()
        .map(|&(id, _)| id)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SearchOutcome {
    pub k: usize,
    pub iterations: u32,
    pub saturated: bool,
}

/// Bisection for the smallest `k` in `[0, k_max]` with `density(k) <= target`.
///
/// Returns the feasible end of the final bracket. Stops when the bracket is
/// at most `tolerance` wide or `max_iterations` probes have been spent.
pub(crate) fn bisect_exclusion_count(
    density: impl Fn(usize) -> f64,
    k_max: usize,
    target: f64,
    tolerance: usize,
    max_iterations: Option<u32>,
) -> SearchOutcome {
    if density(0) <= target {
        return SearchOutcome {
            k: 0,
            iterations: 0,
            saturated: false,
        };
    }
    if k_max == 0 || density(k_max) > target {
        return SearchOutcome {
            k: k_max,
            iterations: 0,
            saturated: true,
        };
    }
    let (mut lo, mut hi) = (0usize, k_max);
    let mut iterations = 0u32;
    while hi - lo > tolerance.max(1) && max_iterations.is_none_or(|cap| iterations < cap) {
        let mid = lo + (hi - lo) / 2;
        iterations += 1;
        if density(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    SearchOutcome {
        k: hi,
        iterations,
        saturated: false,
    }
}

#[derive(Debug, Clone, Copy)]
enum Context {
    Mean {
        n_classes: usize,
        others_total: usize,
    },
    Normalized {
        numerator: f64,
    },
}

impl Context {
    fn density(self, count: usize, mean_sigma: f64) -> f64 {
        if mean_sigma <= 0.0 {
            return f64::INFINITY;
        }
        match self {
            Context::Mean {
                n_classes,
                others_total,
            } => bias_term(n_classes, count, others_total + count) / mean_sigma,
            Context::Normalized { numerator } => numerator / mean_sigma,
        }
    }
}

struct ClassWork<'a> {
    stats: &'a ClassStats,
    order: Vec<(u64, f64)>,
    /// Coordinates in `order`.
    points: Vec<&'a [f64]>,
}

impl ClassWork<'_> {
    fn mean_sigma_after(&self, k: usize) -> f64 {
        if k == 0 {
            return self.stats.mean_sigma;
        }
        ClassStats::from_points(
            self.stats.class_id,
            self.stats.sigma.len(),
            self.points[k..].iter().copied(),
        )
        .map_or(0.0, |s| s.mean_sigma)
    }

    fn density_after(&self, ctx: Context, k: usize) -> f64 {
        ctx.density(self.order.len() - k, self.mean_sigma_after(k))
    }

    /// Mean spread of `order[k..]` for every `k` in `0..=k_max`, by adding
    /// points from the far end.
    fn suffix_mean_sigmas(&self, k_max: usize) -> Vec<f64> {
        let dims = self.stats.sigma.len();
        let mut mean = vec![0.0; dims];
        let mut m2 = vec![0.0; dims];
        let mut out = vec![0.0; k_max + 1];
        for (i, p) in self.points.iter().enumerate().rev() {
            let count = (self.points.len() - i) as f64;
            for ((x, mu), s) in p.iter().zip(mean.iter_mut()).zip(m2.iter_mut()) {
                let delta = x - *mu;
                *mu += delta / count;
                *s += delta * (x - *mu);
            }
            if i <= k_max {
                out[i] = m2.iter().map(|s| (s / count).max(0.0).sqrt()).sum::<f64>() / dims as f64;
            }
        }
        out
    }

    fn solve(&self, ctx: Context, req: &ReductionRequest) -> SearchOutcome {
        let count = self.order.len();
        let k_max = count.saturating_sub(2);
        let outcome = bisect_exclusion_count(
            |k| self.density_after(ctx, k),
            k_max,
            req.target,
            req.tolerance(count),
            req.max_iterations,
        );
        if !outcome.saturated {
            return outcome;
        }
        // Density is not monotone in k in general, so an infeasible end
        // point does not rule out a feasible interior count.
        let spreads = self.suffix_mean_sigmas(k_max);
        if let Some(k) = (0..=k_max).find(|&k| ctx.density(count - k, spreads[k]) <= req.target) {
            if self.density_after(ctx, k) <= req.target {
                return SearchOutcome {
                    k,
                    iterations: outcome.iterations,
                    saturated: false,
                };
            }
        }
        // Out of reach: keep the widest surviving spread, which never
        // raises the density above its starting value.
        let widest = (0..=k_max).fold(
            0,
            |best, k| if spreads[k] > spreads[best] { k } else { best },
        );
        SearchOutcome {
            k: widest,
            iterations: outcome.iterations,
            saturated: true,
        }
    }
}

/// Excludes near-centroid samples from every class whose density exceeds
/// `req.target` until it no longer does.
pub fn solve_target_density(
    set: &EmbeddingSet,
    stats: &[ClassStats],
    req: &ReductionRequest,
) -> Result<ReductionManifest, ReductionError> {
    req.validate()?;
    check_stats(set, stats)?;
    for s in stats {
        if s.mean_sigma <= 0.0 {
            return Err(DensityError::ZeroMeanSpread(s.class_id).into());
        }
    }

    let work: Vec<ClassWork> = stats
        .par_iter()
        .map(|st| {
            let order = sorted_by_distance(set, st);
            let by_id: BTreeMap<u64, &[f64]> = set
                .members(st.class_id)
                .map(|s| (s.id, s.coords.as_slice()))
                .collect();
            let points = order.iter().map(|(id, _)| by_id[id]).collect();
            ClassWork {
                stats: st,
                order,
                points,
            }
        })
        .collect();

    let n_classes = stats.len();
    let original_total: usize = stats.iter().map(|s| s.count).sum();
    let numerator = normalization_numerator(stats);
    let context_for = |i: usize, kept: &[usize]| -> Context {
        match req.method {
            DensityMethod::Mean => Context::Mean {
                n_classes,
                others_total: kept.iter().sum::<usize>() - kept[i],
            },
            _ => Context::Normalized { numerator },
        }
    };

    let mut outcomes: Vec<SearchOutcome> = vec![
        SearchOutcome {
            k: 0,
            iterations: 0,
            saturated: false,
        };
        n_classes
    ];
    let rounds = match req.method {
        DensityMethod::Mean => MAX_ROUNDS,
        _ => 1,
    };
    for _ in 0..rounds {
        let kept: Vec<usize> = work
            .iter()
            .zip(&outcomes)
            .map(|(w, o)| w.order.len() - o.k)
            .collect();
        let solved: Vec<SearchOutcome> = work
            .par_iter()
            .enumerate()
            .map(|(i, w)| w.solve(context_for(i, &kept), req))
            .collect();
        let mut changed = false;
        for (prev, new) in outcomes.iter_mut().zip(solved) {
            // Exclusion counts only grow across rounds, so the iteration terminates.
            if new.k > prev.k || (new.k == prev.k && new != *prev) {
                *prev = new;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let kept: Vec<usize> = work
        .iter()
        .zip(&outcomes)
        .map(|(w, o)| w.order.len() - o.k)
        .collect();
    let original_ctx = |i: usize| match req.method {
        DensityMethod::Mean => Context::Mean {
            n_classes,
            others_total: original_total - work[i].order.len(),
        },
        _ => Context::Normalized { numerator },
    };
    let classes: Vec<ClassReduction> = work
        .par_iter()
        .zip(outcomes.par_iter())
        .enumerate()
        .map(|(i, (w, o))| {
            let ctx = context_for(i, &kept);
            let achieved = w.density_after(ctx, o.k);
            ClassReduction {
                class_id: w.stats.class_id,
                original_count: w.order.len(),
                original_density: w.density_after(original_ctx(i), 0),
                initial_density: w.density_after(ctx, 0),
                target: req.target,
                achieved_density: achieved,
                excluded_ids: w.order[..o.k].iter().map(|&(id, _)| id).collect(),
                threshold_distance: w.order[o.k].1,
                iterations_used: o.iterations,
                saturated: achieved > req.target,
            }
        })
        .collect();

    let included: usize = kept.iter().sum();
    Ok(ReductionManifest {
        method: req.method,
        target: req.target,
        margin_fraction: req.margin_fraction,
        max_iterations: req.max_iterations,
        classes,
        total_included_fraction: included as f64 / original_total as f64,
    })
}
