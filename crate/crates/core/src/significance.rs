//! p-values for the factor detector.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::detector::{q_statistic, QKernel};
use crate::error::{Error, Result};
use crate::model::{QResult, Significance, SignificanceMethod, StratumAssignment};

/// Default number of label permutations.
pub const DEFAULT_PERMUTATIONS: usize = 999;

/// Permutation p-value `(1 + #{q_perm >= q_obs}) / (1 + n_perm)`.
///
/// Replicate `k` shuffles the labels with a ChaCha8 generator seeded by
/// `seed` on stream `k`, so the result does not depend on how replicates are
/// scheduled across threads.
pub fn permutation_p(y: &[f64], strata: &StratumAssignment, n_perm: usize, seed: u64) -> Result<f64> {
    if n_perm == 0 {
        return Err(Error::BadPermCount);
    }
    let observed = q_statistic(y, strata)?;
    Ok(permutation_p_for(y, strata, &observed, n_perm, seed))
}

fn permutation_p_for(
    y: &[f64],
    strata: &StratumAssignment,
    observed: &QResult,
    n_perm: usize,
    seed: u64,
) -> f64 {
    let l = strata.strata_count();
    let kernel = QKernel::new(y, observed.sst, l);
    let threshold = observed.q - 1e-12 * observed.q.max(1.0);
    let hits: usize = (0..n_perm as u64)
        .into_par_iter()
        .map_init(
            || (strata.labels().to_vec(), vec![0.0; l], vec![0usize; l]),
            |(labels, sum, count), k| {
                labels.copy_from_slice(strata.labels());
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k);
                labels.shuffle(&mut rng);
                usize::from(kernel.q(labels, sum, count) >= threshold)
            },
        )
        .sum();
    (1 + hits) as f64 / (1 + n_perm) as f64
}

/// Noncentral F distribution with `df1`, `df2` degrees of freedom and
/// noncentrality `lambda`, evaluated as a Poisson mixture of regularized
/// incomplete beta functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoncentralF {
    df1: f64,
    df2: f64,
    lambda: f64,
}

impl NoncentralF {
    pub fn new(df1: f64, df2: f64, lambda: f64) -> Option<Self> {
        (df1 > 0.0 && df2 > 0.0 && lambda >= 0.0 && lambda.is_finite()).then_some(NoncentralF {
            df1,
            df2,
            lambda,
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        let z = self.df1 * x / (self.df1 * x + self.df2);
        self.mixture(|k| beta_reg(self.df1 / 2.0 + k, self.df2 / 2.0, z))
    }

    /// Upper tail `P(F > x)`, summed directly rather than as `1 - cdf`.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x == f64::INFINITY {
            return 0.0;
        }
        let w = self.df2 / (self.df1 * x + self.df2);
        self.mixture(|k| beta_reg(self.df2 / 2.0, self.df1 / 2.0 + k, w))
    }

    /// `sum_k Poisson(k; lambda / 2) * term(k)`, walking outward from the mode.
    fn mixture(&self, term: impl Fn(f64) -> f64) -> f64 {
        let mu = self.lambda / 2.0;
        if mu == 0.0 {
            return term(0.0).clamp(0.0, 1.0);
        }
        let weight = |k: f64| (-mu + k * mu.ln() - ln_gamma(k + 1.0)).exp();
        let mode = mu.floor();
        let mut total = 0.0;
        let mut mass = 0.0;
        let mut k = mode;
        loop {
            let w = weight(k);
            total += w * term(k);
            mass += w;
            if w < 1e-17 && k > mode {
                break;
            }
            k += 1.0;
        }
        let mut k = mode - 1.0;
        while k >= 0.0 {
            let w = weight(k);
            total += w * term(k);
            mass += w;
            if w < 1e-17 {
                break;
            }
            k -= 1.0;
        }
        debug_assert!((mass - 1.0).abs() < 1e-9, "poisson mass {mass}");
        total.clamp(0.0, 1.0)
    }
}

/// Noncentrality of the detector's F statistic:
/// `(sum_h N_h m_h^2 - (sum_h sqrt(N_h) m_h)^2 / n) / var(y)`.
pub fn noncentrality(qr: &QResult) -> f64 {
    let n = qr.n as f64;
    let var = qr.sst / n;
    let a: f64 = qr.strata.iter().map(|s| s.count as f64 * s.mean * s.mean).sum();
    let b: f64 = qr.strata.iter().map(|s| (s.count as f64).sqrt() * s.mean).sum();
    (a - b * b / n) / var
}

/// The F statistic `((n - l) / (l - 1)) * q / (1 - q)`.
pub fn f_statistic(qr: &QResult) -> f64 {
    let (n, l) = (qr.n as f64, qr.l as f64);
    (n - l) / (l - 1.0) * qr.q / (1.0 - qr.q)
}

/// Survival p-value of the F statistic under the noncentral F distribution
/// with `(l - 1, n - l)` degrees of freedom and [`noncentrality`].
pub fn noncentral_f_p(qr: &QResult) -> Result<f64> {
    if !(qr.l >= 2 && qr.n > qr.l) {
        return Err(Error::BadDegreesOfFreedom { n: qr.n, l: qr.l });
    }
    if !(0.0..1.0).contains(&qr.q) {
        return Err(Error::OutOfRange {
            what: "q",
            value: qr.q,
        });
    }
    // Rounding can push the estimate slightly below zero for equal stratum means.
    let lambda = noncentrality(qr).max(0.0);
    let dist = NoncentralF::new((qr.l - 1) as f64, (qr.n - qr.l) as f64, lambda)
        .ok_or(Error::BadDegreesOfFreedom { n: qr.n, l: qr.l })?;
    Ok(dist.sf(f_statistic(qr)))
}

/// Factor detector with a p-value attached.
pub fn factor_detector(
    y: &[f64],
    strata: &StratumAssignment,
    method: SignificanceMethod,
    n_perm: usize,
    seed: u64,
) -> Result<QResult> {
    let mut qr = q_statistic(y, strata)?;
    let p_value = match method {
        SignificanceMethod::Permutation => {
            if n_perm == 0 {
                return Err(Error::BadPermCount);
            }
            permutation_p_for(y, strata, &qr, n_perm, seed)
        }
        SignificanceMethod::NoncentralF => noncentral_f_p(&qr)?,
    };
    qr.significance = Some(Significance { p_value, method });
    Ok(qr)
}
