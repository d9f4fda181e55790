//! Correlation between class densities and class accuracies, and
//! significance of trial-accuracy differences from summary statistics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::density::DensityVector;
use crate::error::StatsError;
use crate::ingest::{AccuracyTable, TrialSummary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub n_pairs: usize,
}

/// Pearson product-moment correlation coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewPairs(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(CorrelationResult {
        r,
        n_pairs: x.len(),
    })
}

/// Correlation of per-class densities with per-class accuracies, paired by
/// class id.
pub fn density_accuracy_study(
    densities: &DensityVector,
    acc: &AccuracyTable,
) -> Result<CorrelationResult, StatsError> {
    if densities.values.len() != acc.rows.len() || densities.values.keys().ne(acc.rows.keys()) {
        return Err(StatsError::ClassMismatch);
    }
    let d: Vec<f64> = densities.values.values().copied().collect();
    let a: Vec<f64> = acc.rows.values().copied().collect();
    pearson_r(&d, &a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub t_stat: f64,
    pub dof: u32,
    /// `None` when neither summary has any spread and the means agree.
    pub p_one_tailed: Option<f64>,
    /// Sign of `candidate.mean - baseline.mean`: -1, 0 or 1.
    pub direction: i8,
    /// Both summaries have zero spread but different means.
    pub degenerate: bool,
}

/// Pooled equal-variance two-sample t-test, one-tailed in the direction of
/// the observed difference.
///
/// The summaries carry population standard deviations; they are converted
/// to sample variances with `s^2 = std_pop^2 * n / (n - 1)` first.
pub fn pooled_t_test(
    baseline: &TrialSummary,
    candidate: &TrialSummary,
) -> Result<SignificanceResult, StatsError> {
    for s in [baseline, candidate] {
        if s.n_trials < 2 {
            return Err(StatsError::TooFewTrials(s.n_trials));
        }
    }
    let (n1, n2) = (f64::from(baseline.n_trials), f64::from(candidate.n_trials));
    let var1 = baseline.std_pop.powi(2) * n1 / (n1 - 1.0);
    let var2 = candidate.std_pop.powi(2) * n2 / (n2 - 1.0);
    let dof = baseline.n_trials + candidate.n_trials - 2;
    let pooled = ((n1 - 1.0) * var1 + (n2 - 1.0) * var2) / f64::from(dof);
    let diff = candidate.mean - baseline.mean;
    let direction = match diff.partial_cmp(&0.0) {
        Some(Ordering::Greater) => 1,
        Some(Ordering::Less) => -1,
        _ => 0,
    };

    if pooled == 0.0 {
        return Ok(if diff == 0.0 {
            SignificanceResult {
                t_stat: 0.0,
                dof,
                p_one_tailed: None,
                direction,
                degenerate: false,
            }
        } else {
            SignificanceResult {
                t_stat: f64::INFINITY.copysign(diff),
                dof,
                p_one_tailed: Some(0.0),
                direction,
                degenerate: true,
            }
        });
    }

    let t = diff / (pooled * (1.0 / n1 + 1.0 / n2)).sqrt();
    Ok(SignificanceResult {
        t_stat: t,
        dof,
        p_one_tailed: Some(student_t_sf(t.abs(), f64::from(dof))),
        direction,
        degenerate: false,
    })
}

/// Upper tail `P(T > t)` of Student's t with `dof` degrees of freedom.
pub fn student_t_sf(t: f64, dof: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let x = dof / (dof + t * t);
    let half_tail = 0.5 * regularized_incomplete_beta(x, 0.5 * dof, 0.5);
    if t >= 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// `P(T <= t)`.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    1.0 - student_t_sf(t, dof)
}

/// Natural log of the gamma function for `z > 0` (Lanczos, g = 7, n = 9),
/// relative accuracy around 1e-15.
pub fn ln_gamma(z: f64) -> f64 {
    const G: f64 = 7.0;
    #[allow(clippy::excessive_precision)]
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` via the modified Lentz continued
/// fraction, iterated to a relative step of 1e-15 (accuracy target 1e-12).
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The fraction converges fastest below the mean of the distribution.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    const MAX_TERMS: usize = 10_000;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_TERMS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let step = d * c;
        h *= step;
        if (step - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
