//! Factor and interaction detectors.
//!
//! Sums of squares use the population convention, so `SST = N * var(y)`
//! equals the raw total sum of squared deviations and
//! `SSW = sum_h N_h * var_h(y)` the raw within-stratum sum.

use crate::error::{Error, Result};
use crate::model::{
    validate_sample, InteractionCategory, InteractionResult, QResult, StrataMethod,
    StratumAssignment, StratumStats,
};

/// Absolute tolerance for the `q12 = q1 + q2` independence test and for the
/// `q12 >= max(q1, q2)` comparison.
pub const INDEPENDENCE_TOLERANCE: f64 = 1e-9;

/// Factor detector: `q = 1 - SSW / SST`, without a p-value.
pub fn q_statistic(y: &[f64], strata: &StratumAssignment) -> Result<QResult> {
    let sample = validate_sample(y, strata)?;
    let y = sample.y();
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::ZeroVariance);
    }
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();

    let l = strata.strata_count();
    let mut count = vec![0usize; l];
    let mut sum = vec![0.0; l];
    for (&v, &h) in y.iter().zip(strata.labels()) {
        count[h - 1] += 1;
        sum[h - 1] += v;
    }
    let means: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    let mut within = vec![0.0; l];
    for (&v, &h) in y.iter().zip(strata.labels()) {
        let d = v - means[h - 1];
        within[h - 1] += d * d;
    }
    let ssw: f64 = within.iter().sum();
    let q = (1.0 - ssw / sst).clamp(0.0, 1.0);

    let strata_stats = (0..l)
        .map(|h| StratumStats {
            count: count[h],
            mean: means[h],
            variance: within[h] / count[h] as f64,
        })
        .collect();
    Ok(QResult {
        q,
        ssw,
        sst,
        n,
        l,
        strata: strata_stats,
        significance: None,
    })
}

/// Precomputed pieces for evaluating q repeatedly on the same outcome
/// under different labelings.
pub(crate) struct QKernel<'a> {
    y: &'a [f64],
    sst: f64,
    l: usize,
}

impl<'a> QKernel<'a> {
    pub(crate) fn new(y: &'a [f64], sst: f64, l: usize) -> Self {
        QKernel { y, sst, l }
    }

    pub(crate) fn q(&self, labels: &[usize], sum: &mut [f64], count: &mut [usize]) -> f64 {
        sum[..self.l].fill(0.0);
        count[..self.l].fill(0);
        for (&v, &h) in self.y.iter().zip(labels) {
            sum[h - 1] += v;
            count[h - 1] += 1;
        }
        for h in 0..self.l {
            if count[h] > 0 {
                sum[h] /= count[h] as f64;
            }
        }
        let ssw: f64 = self
            .y
            .iter()
            .zip(labels)
            .map(|(&v, &h)| {
                let d = v - sum[h - 1];
                d * d
            })
            .sum();
        (1.0 - ssw / self.sst).clamp(0.0, 1.0)
    }
}

/// Intersects two stratifications. Each distinct `(a, b)` label pair becomes
/// one stratum, numbered in order of first appearance.
pub fn overlay(a: &StratumAssignment, b: &StratumAssignment) -> Result<StratumAssignment> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let lb = b.strata_count();
    let mut code = vec![0usize; a.strata_count() * lb];
    let mut next = 0;
    let labels = a
        .labels()
        .iter()
        .zip(b.labels())
        .map(|(&x, &y)| {
            let slot = &mut code[(x - 1) * lb + (y - 1)];
            if *slot == 0 {
                next += 1;
                *slot = next;
            }
            *slot
        })
        .collect();
    Ok(StratumAssignment::from_compact(labels, next, StrataMethod::Overlay))
}

/// Interaction detector for one pair of stratifications.
pub fn interaction(
    y: &[f64],
    a: &StratumAssignment,
    b: &StratumAssignment,
) -> Result<InteractionResult> {
    let q1 = q_statistic(y, a)?.q;
    let q2 = q_statistic(y, b)?.q;
    let both = overlay(a, b)?;
    let q12 = q_statistic(y, &both)?.q;
    Ok(InteractionResult {
        q1,
        q2,
        q12,
        category: classify_interaction(q1, q2, q12)?,
        overlay_strata: both.strata_count(),
        singleton_strata: both.singleton_count(),
    })
}

/// Classifies an interaction by comparing `q12` with `q1 + q2` and with
/// `max(q1, q2)` / `min(q1, q2)`.
///
/// The two weakening categories cannot arise from an exact overlay (the
/// overlay refines both inputs, so `q12 >= max(q1, q2)`); they are only
/// reachable for externally supplied triples.
pub fn classify_interaction(q1: f64, q2: f64, q12: f64) -> Result<InteractionCategory> {
    for (what, v) in [("q1", q1), ("q2", q2), ("q12", q12)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { what, value: v });
        }
    }
    let sum = q1 + q2;
    let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
    let category = if (q12 - sum).abs() <= INDEPENDENCE_TOLERANCE {
        InteractionCategory::Independent
    } else if q12 > sum {
        InteractionCategory::NonlinearEnhance
    } else if q12 >= hi - INDEPENDENCE_TOLERANCE {
        InteractionCategory::BivariateEnhance
    } else if q12 >= lo - INDEPENDENCE_TOLERANCE {
        InteractionCategory::UniWeaken
    } else {
        InteractionCategory::NonlinearWeaken
    };
    Ok(category)
}
