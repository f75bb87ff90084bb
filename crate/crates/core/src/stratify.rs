//! Discretization of a continuous factor series into strata.
//!
//! Every method assigns labels as a function of the value alone, so equal
//! values always share a stratum. Strata left empty by the break positions
//! are dropped and the remaining labels renumbered.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{StrataMethod, StratumAssignment};

/// Strata smaller than this are reported; singleton strata have zero
/// within-variance and inflate q.
pub const MIN_STRATUM_SIZE: usize = 2;

/// A discretization method with its parameter, written as `method:param`
/// (`quantile:6`, `equal:5`, `jenks:4`, `manual:0,10,20`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StrataStrategy {
    Quantile(usize),
    EqualInterval(usize),
    NaturalBreaks(usize),
    Manual(Vec<f64>),
}

impl Default for StrataStrategy {
    fn default() -> Self {
        StrataStrategy::Quantile(6)
    }
}

impl StrataStrategy {
    pub fn apply(&self, values: &[f64]) -> Result<StratumAssignment> {
        match self {
            StrataStrategy::Quantile(l) => stratify_quantile(values, *l),
            StrataStrategy::EqualInterval(l) => stratify_equal_interval(values, *l),
            StrataStrategy::NaturalBreaks(l) => stratify_natural_breaks(values, *l),
            StrataStrategy::Manual(b) => stratify_manual(values, b),
        }
    }
}

impl fmt::Display for StrataStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrataStrategy::Quantile(l) => write!(f, "quantile:{l}"),
            StrataStrategy::EqualInterval(l) => write!(f, "equal:{l}"),
            StrataStrategy::NaturalBreaks(l) => write!(f, "jenks:{l}"),
            StrataStrategy::Manual(b) => {
                let parts: Vec<String> = b.iter().map(|x| x.to_string()).collect();
                write!(f, "manual:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for StrataStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::BadStrategy {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let (method, arg) = s.trim().split_once(':').ok_or_else(|| bad("expected method:parameter"))?;
        let count = || -> Result<usize> {
            let l: usize = arg.trim().parse().map_err(|_| bad("stratum count must be an integer"))?;
            if l < 2 {
                return Err(bad("stratum count must be at least 2"));
            }
            Ok(l)
        };
        match method.trim().to_ascii_lowercase().as_str() {
            "quantile" => Ok(StrataStrategy::Quantile(count()?)),
            "equal" => Ok(StrataStrategy::EqualInterval(count()?)),
            "jenks" | "natural" => Ok(StrataStrategy::NaturalBreaks(count()?)),
            "manual" => {
                let breaks = arg
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("breaks must be comma-separated numbers"))?;
                if !strictly_ascending(&breaks) {
                    return Err(bad("breaks must be strictly ascending"));
                }
                Ok(StrataStrategy::Manual(breaks))
            }
            _ => Err(bad("unknown method; use quantile, equal, jenks or manual")),
        }
    }
}

impl TryFrom<String> for StrataStrategy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StrataStrategy> for String {
    fn from(s: StrataStrategy) -> String {
        s.to_string()
    }
}

fn strictly_ascending(breaks: &[f64]) -> bool {
    breaks.iter().all(|b| b.is_finite()) && breaks.windows(2).all(|w| w[0] < w[1])
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::MissingOutcome { index }),
        None => Ok(()),
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn distinct_count(sorted: &[f64]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[0] != w[1]).count()
}

fn check_l(l: usize, distinct: usize) -> Result<()> {
    if l < 2 {
        return Err(Error::BadL {
            l,
            reason: "need at least 2 strata".into(),
        });
    }
    if l > distinct {
        return Err(Error::BadL {
            l,
            reason: format!("only {distinct} distinct values"),
        });
    }
    Ok(())
}

/// Splits `[min, max]` into `l` equal-width intervals, right-open except the last.
pub fn stratify_equal_interval(values: &[f64], l: usize) -> Result<StratumAssignment> {
    check_finite(values)?;
    let s = sorted(values);
    let (min, max) = (s[0], s[s.len() - 1]);
    if max <= min {
        return Err(Error::DegenerateRange);
    }
    check_l(l, distinct_count(&s))?;
    let width = (max - min) / l as f64;
    let breaks: Vec<f64> = (1..l).map(|k| min + k as f64 * width).collect();
    let labels = values
        .iter()
        .map(|&v| 1 + breaks.partition_point(|&b| b <= v))
        .collect();
    StratumAssignment::from_labels(labels, StrataMethod::EqualInterval, breaks)
}

/// Linear-interpolation empirical quantile of sorted data at probability `p`.
fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Breaks at the k/l empirical quantiles; a value equal to a break falls in
/// the lower stratum. Coinciding breaks collapse strata.
pub fn stratify_quantile(values: &[f64], l: usize) -> Result<StratumAssignment> {
    check_finite(values)?;
    let s = sorted(values);
    check_l(l, distinct_count(&s))?;
    let breaks: Vec<f64> = (1..l)
        .map(|k| quantile_sorted(&s, k as f64 / l as f64))
        .collect();
    let labels = values
        .iter()
        .map(|&v| 1 + breaks.partition_point(|&b| b < v))
        .collect();
    StratumAssignment::from_labels(labels, StrataMethod::Quantile, breaks)
}

/// Exact optimal partition of the sorted values into `l` contiguous classes
/// minimizing the total within-class sum of squares (Fisher's algorithm).
///
/// Runs on the distinct values weighted by multiplicity so that tied values
/// are never split. Among equally good partitions the one whose first break
/// is smallest wins, recursively. Breaks are the upper bounds of classes
/// `1..l`.
pub fn stratify_natural_breaks(values: &[f64], l: usize) -> Result<StratumAssignment> {
    check_finite(values)?;
    let s = sorted(values);
    check_l(l, distinct_count(&s))?;

    let mut distinct: Vec<f64> = Vec::new();
    let mut weight: Vec<f64> = Vec::new();
    for &v in &s {
        if distinct.last() == Some(&v) {
            *weight.last_mut().unwrap() += 1.0;
        } else {
            distinct.push(v);
            weight.push(1.0);
        }
    }
    let m = distinct.len();
    let class_end = fisher_partition(&distinct, &weight, l);

    let breaks: Vec<f64> = class_end[..l - 1].iter().map(|&e| distinct[e]).collect();
    let labels = values
        .iter()
        .map(|&v| 1 + breaks.partition_point(|&b| b < v))
        .collect();
    debug_assert_eq!(class_end[l - 1], m - 1);
    StratumAssignment::from_labels(labels, StrataMethod::NaturalBreaks, breaks)
}

/// Returns the inclusive end index of each class over `x` (sorted, distinct).
fn fisher_partition(x: &[f64], w: &[f64], l: usize) -> Vec<usize> {
    let m = x.len();
    let total_w: f64 = w.iter().sum();
    let center = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total_w;

    let mut pw = vec![0.0; m + 1];
    let mut ps = vec![0.0; m + 1];
    let mut pq = vec![0.0; m + 1];
    for i in 0..m {
        let d = x[i] - center;
        pw[i + 1] = pw[i] + w[i];
        ps[i + 1] = ps[i] + w[i] * d;
        pq[i + 1] = pq[i] + w[i] * d * d;
    }
    let seg = |i: usize, j: usize| -> f64 {
        let sw = pw[j + 1] - pw[i];
        let ss = ps[j + 1] - ps[i];
        let sq = pq[j + 1] - pq[i];
        (sq - ss * ss / sw).max(0.0)
    };

    // best[k][i]: minimal cost of splitting x[i..] into k + 1 classes.
    let mut best = vec![vec![f64::INFINITY; m]; l];
    for (i, b) in best[0].iter_mut().enumerate() {
        *b = seg(i, m - 1);
    }
    for k in 1..l {
        for i in 0..m {
            if m - i < k + 1 {
                continue;
            }
            let mut b = f64::INFINITY;
            for j in i..=(m - k - 1) {
                let c = seg(i, j) + best[k - 1][j + 1];
                if c < b {
                    b = c;
                }
            }
            best[k][i] = b;
        }
    }

    let tol = |v: f64| 1e-12 * (1.0 + v.abs());
    let mut ends = Vec::with_capacity(l);
    let mut start = 0;
    for k in (1..l).rev() {
        let target = best[k][start];
        let end = (start..=(m - k - 1))
            .find(|&j| seg(start, j) + best[k - 1][j + 1] <= target + tol(target))
            .expect("optimum is attained");
        ends.push(end);
        start = end + 1;
    }
    ends.push(m - 1);
    ends
}

/// Fixed breaks: intervals `(-inf, b1)`, `[b1, b2)`, ..., `[bk, inf)`.
/// A value equal to a break belongs to the upper stratum.
pub fn stratify_manual(values: &[f64], breaks: &[f64]) -> Result<StratumAssignment> {
    check_finite(values)?;
    if !strictly_ascending(breaks) {
        return Err(Error::UnsortedBreaks);
    }
    let labels = values
        .iter()
        .map(|&v| 1 + breaks.partition_point(|&b| b <= v))
        .collect();
    StratumAssignment::from_labels(labels, StrataMethod::Manual, breaks.to_vec())
}

/// Total within-stratum sum of squared deviations of `values` under `strata`.
pub fn within_ss(values: &[f64], strata: &StratumAssignment) -> f64 {
    let l = strata.strata_count();
    let mut sum = vec![0.0; l];
    let mut cnt = vec![0usize; l];
    for (&v, &h) in values.iter().zip(strata.labels()) {
        sum[h - 1] += v;
        cnt[h - 1] += 1;
    }
    values
        .iter()
        .zip(strata.labels())
        .map(|(&v, &h)| {
            let d = v - sum[h - 1] / cnt[h - 1] as f64;
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Every split of sorted distinct values into `l` contiguous classes,
    /// as inclusive class end indices.
    fn contiguous_partitions(m: usize, l: usize) -> Vec<Vec<usize>> {
        fn rec(start: usize, m: usize, left: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if left == 1 {
                acc.push(m - 1);
                out.push(acc.clone());
                acc.pop();
                return;
            }
            for end in start..=(m - left) {
                acc.push(end);
                rec(end + 1, m, left - 1, acc, out);
                acc.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, m, l, &mut Vec::new(), &mut out);
        out
    }

    /// Brute force: the minimal within-SS over all contiguous partitions of the
    /// distinct values, with value-level labels.
    fn brute_force_jenks(values: &[f64], l: usize) -> (f64, Vec<usize>) {
        let mut d = values.to_vec();
        d.sort_by(f64::total_cmp);
        d.dedup();
        let mut best = (f64::INFINITY, Vec::new());
        for ends in contiguous_partitions(d.len(), l) {
            let labels: Vec<usize> = values
                .iter()
                .map(|v| {
                    let idx = d.iter().position(|x| x == v).unwrap();
                    1 + ends.iter().position(|&e| idx <= e).unwrap()
                })
                .collect();
            let st = StratumAssignment::categorical(labels.clone()).unwrap();
            let ss = within_ss(values, &st);
            if ss < best.0 - 1e-12 {
                best = (ss, labels);
            }
        }
        best
    }

    #[test]
    fn equal_interval_midpoint_split() {
        let v: Vec<f64> = (0..=10).map(f64::from).collect();
        let s = stratify_equal_interval(&v, 2).unwrap();
        let expect: Vec<usize> = v.iter().map(|&x| if x < 5.0 { 1 } else { 2 }).collect();
        assert_eq!(s.labels(), expect.as_slice());
        assert_eq!(s.breaks(), &[5.0]);
    }

    #[test]
    fn equal_interval_errors() {
        assert!(matches!(
            stratify_equal_interval(&[3.0, 3.0, 3.0], 2),
            Err(Error::DegenerateRange)
        ));
        assert!(matches!(stratify_equal_interval(&[1.0, 2.0], 1), Err(Error::BadL { .. })));
        assert!(matches!(stratify_equal_interval(&[1.0, 2.0], 3), Err(Error::BadL { .. })));
    }

    #[test]
    fn equal_interval_matches_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut v: Vec<f64> = (0..55).map(|_| rng.random_range(-5.0..30.0)).collect();
        v.push(-5.0);
        v.push(30.0);
        let s = stratify_equal_interval(&v, 6).unwrap();
        let width = 35.0 / 6.0;
        // histogram oracle: bin index from the offset divided by width
        let hist: Vec<usize> = v
            .iter()
            .map(|&x| (((x + 5.0) / width).floor() as usize).min(5) + 1)
            .collect();
        assert_eq!(s.strata_count(), 6);
        assert_eq!(s.labels(), hist.as_slice());
        for (k, b) in s.breaks().iter().enumerate() {
            assert!((b - (-5.0 + (k + 1) as f64 * width)).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_examples() {
        let s = stratify_quantile(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(s.labels(), &[1, 1, 2, 2]);

        let s = stratify_quantile(&[1.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(s.labels(), &[1, 1, 1, 2]);
        assert_eq!(s.strata_count(), 2);

        let s = stratify_quantile(&[5.0, 1.0, 3.0, 2.0, 4.0, 6.0], 3).unwrap();
        // sort-based oracle: rank thirds
        assert_eq!(s.labels(), &[3, 1, 2, 1, 2, 3]);
    }

    #[test]
    fn quantile_duplicate_breaks_collapse() {
        // the 1/3 and 2/3 quantiles both fall on 1.0
        let v = [1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 3.0];
        let s = stratify_quantile(&v, 3).unwrap();
        assert_eq!(s.breaks(), &[1.0, 1.0]);
        assert!(s.was_compacted());
        assert_eq!(s.strata_count(), 2);
        assert_eq!(s.labels(), &[1, 1, 1, 1, 1, 2, 2]);
    }

    #[test]
    fn natural_breaks_examples() {
        let s = stratify_natural_breaks(&[1.0, 2.0, 10.0, 11.0], 2).unwrap();
        assert_eq!(s.labels(), &[1, 1, 2, 2]);

        let v = [1.0, 2.0, 3.0];
        let s = stratify_natural_breaks(&v, 3).unwrap();
        assert_eq!(s.labels(), &[1, 2, 3]);
        assert_eq!(within_ss(&v, &s), 0.0);

        let v = [0.0, 0.1, 0.2, 5.0, 5.1, 9.0, 9.2];
        let s = stratify_natural_breaks(&v, 3).unwrap();
        assert_eq!(s.labels(), &[1, 1, 1, 2, 2, 3, 3]);
        let (ss, labels) = brute_force_jenks(&v, 3);
        assert_eq!(s.labels(), labels.as_slice());
        assert!((within_ss(&v, &s) - ss).abs() < 1e-12);

        assert!(matches!(stratify_natural_breaks(&[1.0, 1.0, 2.0], 3), Err(Error::BadL { .. })));
    }

    #[test]
    fn natural_breaks_tie_prefers_smallest_first_break() {
        // {0},{1,2} and {0,1},{2} tie; the first break must be the smaller one
        let s = stratify_natural_breaks(&[0.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(s.labels(), &[1, 2, 2]);
        assert_eq!(s.breaks(), &[0.0]);
    }

    #[test]
    fn manual_examples() {
        let s = stratify_manual(&[1.0, 5.0, 9.0], &[4.0, 8.0]).unwrap();
        assert_eq!(s.labels(), &[1, 2, 3]);

        let s = stratify_manual(&[4.0], &[4.0]).unwrap();
        // boundary value goes to the upper stratum, then compaction renumbers it
        assert_eq!(s.labels(), &[1]);
        assert!(s.was_compacted());
        let s = stratify_manual(&[3.0, 4.0], &[4.0]).unwrap();
        assert_eq!(s.labels(), &[1, 2]);

        let s = stratify_manual(&[1.0, 2.0, 3.0], &[10.0]).unwrap();
        assert_eq!(s.strata_count(), 1);

        assert!(matches!(stratify_manual(&[1.0], &[2.0, 2.0]), Err(Error::UnsortedBreaks)));
        assert!(matches!(stratify_manual(&[1.0], &[3.0, 2.0]), Err(Error::UnsortedBreaks)));
    }

    #[test]
    fn strategy_grammar() {
        assert_eq!("quantile:6".parse::<StrataStrategy>().unwrap(), StrataStrategy::Quantile(6));
        assert_eq!("equal:5".parse::<StrataStrategy>().unwrap(), StrataStrategy::EqualInterval(5));
        assert_eq!("jenks:4".parse::<StrataStrategy>().unwrap(), StrataStrategy::NaturalBreaks(4));
        assert_eq!(
            "manual:0,10,20".parse::<StrataStrategy>().unwrap(),
            StrataStrategy::Manual(vec![0.0, 10.0, 20.0])
        );
        for s in ["quantile:6", "equal:5", "jenks:4", "manual:0,10.5,20"] {
            assert_eq!(s.parse::<StrataStrategy>().unwrap().to_string(), s);
        }
        for bad in ["quantile", "quantile:1", "kmeans:3", "manual:3,1", "manual:a"] {
            assert!(bad.parse::<StrataStrategy>().is_err(), "{bad}");
        }
    }

    #[test]
    fn natural_breaks_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.random_range(4..=12);
            // coarse grid so ties occur
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0..20) as f64 * 0.5).collect();
            let mut d = v.clone();
            d.sort_by(f64::total_cmp);
            d.dedup();
            for l in 2..=4.min(d.len()) {
                let s = stratify_natural_breaks(&v, l).unwrap();
                let (ss, labels) = brute_force_jenks(&v, l);
                let got = within_ss(&v, &s);
                assert!((got - ss).abs() <= 1e-9 * (1.0 + ss), "{v:?} l={l}: {got} vs {ss}");
                assert_eq!(s.labels(), labels.as_slice(), "{v:?} l={l}");
            }
        }
    }

    proptest! {
        #[test]
        fn labels_depend_on_value_only(
            v in prop::collection::vec(0u8..15, 6..40),
            l in 2usize..5,
        ) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            let mut d = v.clone();
            d.sort_by(f64::total_cmp);
            d.dedup();
            prop_assume!(d.len() >= l);
            let all = [
                stratify_equal_interval(&v, l).unwrap(),
                stratify_quantile(&v, l).unwrap(),
                stratify_natural_breaks(&v, l).unwrap(),
                stratify_manual(&v, &[3.0, 7.5, 11.0]).unwrap(),
            ];
            for s in &all {
                for i in 0..v.len() {
                    for j in 0..v.len() {
                        if v[i] == v[j] {
                            prop_assert_eq!(s.labels()[i], s.labels()[j]);
                        }
                    }
                }
                prop_assert!(s.labels().iter().all(|&x| x >= 1 && x <= s.strata_count()));
                prop_assert_eq!(s.counts().iter().filter(|&&c| c == 0).count(), 0);
            }
        }

        #[test]
        fn natural_breaks_is_never_worse(
            v in prop::collection::vec(-50.0f64..50.0, 8..40),
            l in 2usize..7,
        ) {
            let nb = within_ss(&v, &stratify_natural_breaks(&v, l).unwrap());
            let q = within_ss(&v, &stratify_quantile(&v, l).unwrap());
            let e = within_ss(&v, &stratify_equal_interval(&v, l).unwrap());
            prop_assert!(nb <= q + 1e-9);
            prop_assert!(nb <= e + 1e-9);
            let nb_more = within_ss(&v, &stratify_natural_breaks(&v, l + 1).unwrap());
            prop_assert!(nb_more <= nb + 1e-9);
        }
    }
}
