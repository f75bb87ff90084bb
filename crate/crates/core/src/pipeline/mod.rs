//! End-to-end analysis: aligned monthly samples per group, factor and
//! interaction detectors for every cell, and regional comparisons.

pub mod aggregate;
pub mod panel;
pub mod rates;
pub mod ttest;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use aggregate::{aggregate_monthly, station_months, MonthlyValue, StationMonth, MIN_COVERAGE};
pub use panel::{interpolate_cities, region_panels, FactorPanel};
pub use rates::{build_outcomes, positive_rate, region_average, Area, CaseRow};
pub use ttest::{t_test, TTest, TTestVariant};

use crate::detector::interaction;
use crate::error::{Error, Result};
use crate::geo::IdwParams;
use crate::model::{
    AgeBand, Factor, FactorMap, GroupKey, InteractionResult, OutcomeSeries, QResult, Region, Sex,
    SignificanceMethod, StratumAssignment, Virus,
};
use crate::significance::{factor_detector, DEFAULT_PERMUTATIONS};
use crate::stratify::{StrataStrategy, MIN_STRATUM_SIZE};

/// Fewer valid months than this and a group's cells are not computed.
pub const MIN_VALID_MONTHS: usize = 12;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrataConfig {
    pub default: StrataStrategy,
    pub per_factor: BTreeMap<Factor, StrataStrategy>,
}

/// Which outcome series are analysed. Empty virus or region lists select
/// everything. Age-band and sex subgroups are only included when listed;
/// the all-ages, both-sexes series is always included.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupFilter {
    pub viruses: Vec<Virus>,
    pub regions: Vec<Region>,
    pub age_bands: Vec<AgeBand>,
    pub sexes: Vec<Sex>,
}

impl GroupFilter {
    pub fn accepts(&self, key: &GroupKey) -> bool {
        (self.viruses.is_empty() || self.viruses.contains(&key.virus))
            && (self.regions.is_empty() || self.regions.contains(&key.region))
            && key.age_band.is_none_or(|a| self.age_bands.contains(&a))
            && key.sex.is_none_or(|s| self.sexes.contains(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub stations: PathBuf,
    pub cases: PathBuf,
    pub cities: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub strata: StrataConfig,
    pub significance: SignificanceMethod,
    pub n_perm: usize,
    pub seed: Option<u64>,
    pub idw: IdwParams,
    /// City to region assignments overriding the city file.
    pub regions: BTreeMap<String, Region>,
    pub filters: GroupFilter,
    /// Pool every year into 12 calendar-month observations instead of
    /// keeping each month of each year as its own observation.
    pub pool_calendar_months: bool,
    pub min_months: usize,
    pub inputs: Option<InputPaths>,
    pub output_dir: PathBuf,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            strata: StrataConfig::default(),
            significance: SignificanceMethod::Permutation,
            n_perm: DEFAULT_PERMUTATIONS,
            seed: None,
            idw: IdwParams::default(),
            regions: BTreeMap::new(),
            filters: GroupFilter::default(),
            pool_calendar_months: false,
            min_months: MIN_VALID_MONTHS,
            inputs: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl AnalysisConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: AnalysisConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.idw.check().map_err(|e| Error::Config(e.to_string()))?;
        if self.significance == SignificanceMethod::Permutation {
            if self.seed.is_none() {
                return Err(Error::Config("a seed is required for permutation significance".into()));
            }
            if self.n_perm == 0 {
                return Err(Error::Config("n_perm must be at least 1".into()));
            }
        }
        if self.min_months < 2 {
            return Err(Error::Config("min_months must be at least 2".into()));
        }
        Ok(())
    }

    pub fn strategy_for(&self, factor: Factor) -> &StrataStrategy {
        self.strata.per_factor.get(&factor).unwrap_or(&self.strata.default)
    }
}

/// Result of one detector cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Cell<T> {
    Computed(T),
    InsufficientData { n_months: usize, required: usize },
    Failed { reason: String },
}

impl<T> Cell<T> {
    pub fn computed(&self) -> Option<&T> {
        match self {
            Cell::Computed(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDetail {
    #[serde(flatten)]
    pub result: QResult,
    pub breaks: Vec<f64>,
    pub compacted: bool,
    /// Strata with fewer than two months.
    pub small_strata: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCell {
    pub factor: Factor,
    pub strategy: StrataStrategy,
    pub cell: Cell<FactorDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionCell {
    pub first: Factor,
    pub second: Factor,
    pub cell: Cell<InteractionResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub key: GroupKey,
    pub n_months: usize,
    pub factors: Vec<FactorCell>,
    pub interactions: Vec<InteractionCell>,
}

impl GroupReport {
    pub fn factor(&self, f: Factor) -> Option<&FactorDetail> {
        self.factors.iter().find(|c| c.factor == f)?.cell.computed()
    }

    pub fn q(&self, f: Factor) -> Option<f64> {
        self.factor(f).map(|d| d.result.q)
    }

    /// Symmetric matrix of interaction q values with the individual q values
    /// on the diagonal; `None` where a cell was not computed.
    pub fn interaction_matrix(&self) -> [[Option<f64>; 7]; 7] {
        let mut m = [[None; 7]; 7];
        for f in Factor::ALL {
            m[f.index()][f.index()] = self.q(f);
        }
        for c in &self.interactions {
            if let Some(r) = c.cell.computed() {
                m[c.first.index()][c.second.index()] = Some(r.q12);
                m[c.second.index()][c.first.index()] = Some(r.q12);
            }
        }
        m
    }

    /// Factor with the largest computed q.
    pub fn top_factor(&self) -> Option<(Factor, f64)> {
        Factor::ALL
            .into_iter()
            .filter_map(|f| self.q(f).map(|q| (f, q)))
            .fold(None, |best, (f, q)| match best {
                Some((_, bq)) if bq >= q => best,
                _ => Some((f, q)),
            })
    }
}

/// Two-sample comparison of a variable between the north and the south.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTest {
    pub variable: String,
    pub north_n: usize,
    pub south_n: usize,
    pub north_mean: f64,
    pub south_mean: f64,
    pub result: Cell<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub groups: Vec<GroupReport>,
    pub region_tests: Vec<RegionTest>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

/// Outcome and factor values on the months where all of them are present.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSample {
    pub observations: Vec<String>,
    pub y: Vec<f64>,
    pub factors: FactorMap<Vec<f64>>,
}

/// Joins an outcome series with its region's panel, dropping months with a
/// missing rate or any missing factor.
pub fn align(series: &OutcomeSeries, panel: &FactorPanel, pool_calendar_months: bool) -> AlignedSample {
    let mut rows: Vec<(String, f64, [f64; 7])> = Vec::new();
    if pool_calendar_months {
        let mut counts: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
        for p in series.points() {
            let c = counts.entry(p.month().month()).or_default();
            c.0 += p.tested();
            c.1 += p.positive();
        }
        let mut sums: BTreeMap<u32, ([f64; 7], [usize; 7])> = BTreeMap::new();
        for (m, vals) in &panel.months {
            let s = sums.entry(m.month()).or_insert(([0.0; 7], [0; 7]));
            for (f, v) in vals.iter() {
                if let Some(v) = v {
                    s.0[f.index()] += v;
                    s.1[f.index()] += 1;
                }
            }
        }
        for (cal, (tested, positive)) in counts {
            let Ok(Some(rate)) = positive_rate(tested, positive) else { continue };
            let Some((sum, n)) = sums.get(&cal) else { continue };
            if n.iter().all(|&k| k > 0) {
                let vals = std::array::from_fn(|i| sum[i] / n[i] as f64);
                rows.push((format!("M{cal:02}"), rate, vals));
            }
        }
    } else {
        for (month, rate) in series.valid_months() {
            let Some(vals) = panel.months.get(&month) else { continue };
            if vals.0.iter().all(Option::is_some) {
                rows.push((month.to_string(), rate, vals.0.map(|v| v.unwrap())));
            }
        }
    }
    AlignedSample {
        observations: rows.iter().map(|r| r.0.clone()).collect(),
        y: rows.iter().map(|r| r.1).collect(),
        factors: FactorMap::from_fn(|f| rows.iter().map(|r| r.2[f.index()]).collect()),
    }
}

/// Seed for one cell, derived from the run seed and the cell's key so that
/// results do not depend on evaluation order.
pub fn cell_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

struct FactorJob<'a> {
    group: usize,
    factor: Factor,
    sample: &'a AlignedSample,
    slug: String,
}

/// Runs the factor detector for every (group, factor) and the interaction
/// detector for every (group, factor pair).
///
/// Cell failures are recorded in the bundle; only configuration errors abort.
pub fn run_analysis(
    config: &AnalysisConfig,
    outcomes: &[OutcomeSeries],
    panels: &[FactorPanel],
) -> Result<ReportBundle> {
    config.validate()?;
    let seed = config.seed.unwrap_or(0);
    let mut selected: Vec<&OutcomeSeries> = outcomes.iter().filter(|s| config.filters.accepts(&s.key)).collect();
    selected.sort_by_key(|s| s.key);

    let samples: Vec<Option<AlignedSample>> = selected
        .iter()
        .map(|s| {
            panels
                .iter()
                .find(|p| p.region == s.key.region)
                .map(|p| align(s, p, config.pool_calendar_months))
        })
        .collect();

    let jobs: Vec<FactorJob> = samples
        .iter()
        .enumerate()
        .filter_map(|(g, s)| s.as_ref().map(|s| (g, s)))
        .filter(|(_, s)| s.y.len() >= config.min_months)
        .flat_map(|(g, s)| {
            let slug = selected[g].key.slug();
            Factor::ALL.into_iter().map(move |factor| FactorJob {
                group: g,
                factor,
                sample: s,
                slug: slug.clone(),
            })
        })
        .collect();

    type Computed = (usize, Factor, Result<(FactorDetail, StratumAssignment)>);
    let computed: Vec<Computed> = jobs
        .into_par_iter()
        .map(|job| {
            let r = (|| {
                let strata = config.strategy_for(job.factor).apply(&job.sample.factors[job.factor])?;
                let s = cell_seed(seed, &[&job.slug, job.factor.code()]);
                let result = factor_detector(&job.sample.y, &strata, config.significance, config.n_perm, s)?;
                let detail = FactorDetail {
                    result,
                    breaks: strata.breaks().to_vec(),
                    compacted: strata.was_compacted(),
                    small_strata: strata.small_strata(MIN_STRATUM_SIZE),
                };
                Ok((detail, strata))
            })();
            (job.group, job.factor, r)
        })
        .collect();

    let mut strata_of: BTreeMap<(usize, Factor), StratumAssignment> = BTreeMap::new();
    let mut details: BTreeMap<(usize, Factor), Cell<FactorDetail>> = BTreeMap::new();
    for (g, f, r) in computed {
        let cell = match r {
            Ok((detail, strata)) => {
                strata_of.insert((g, f), strata);
                Cell::Computed(detail)
            }
            Err(e) => Cell::Failed { reason: e.to_string() },
        };
        details.insert((g, f), cell);
    }

    let pair_jobs: Vec<(usize, Factor, Factor)> = (0..selected.len())
        .flat_map(|g| Factor::pairs().into_iter().map(move |(a, b)| (g, a, b)))
        .collect();
    let pair_cells: Vec<Option<Cell<InteractionResult>>> = pair_jobs
        .par_iter()
        .map(|&(g, a, b)| {
            let sample = samples[g].as_ref()?;
            if sample.y.len() < config.min_months {
                return None;
            }
            let cell = match (strata_of.get(&(g, a)), strata_of.get(&(g, b))) {
                (Some(sa), Some(sb)) => match interaction(&sample.y, sa, sb) {
                    Ok(r) => Cell::Computed(r),
                    Err(e) => Cell::Failed { reason: e.to_string() },
                },
                _ => Cell::Failed {
                    reason: "a factor in the pair has no stratification".into(),
                },
            };
            Some(cell)
        })
        .collect();

    let mut warnings = Vec::new();
    let mut pair_iter = pair_jobs.iter().zip(pair_cells);
    let mut groups = Vec::with_capacity(selected.len());
    for (g, series) in selected.iter().enumerate() {
        let slug = series.key.slug();
        let n_months = samples[g].as_ref().map_or(0, |s| s.y.len());
        let has_panel = samples[g].is_some();
        let region = series.key.region;
        let required = config.min_months;
        fn missing<T>(has_panel: bool, region: Region, n_months: usize, required: usize) -> Cell<T> {
            if has_panel {
                Cell::InsufficientData { n_months, required }
            } else {
                Cell::Failed {
                    reason: format!("no factor panel for region {region}"),
                }
            }
        }
        if samples[g].is_none() {
            warnings.push(format!("{slug}: no factor panel for region {}", series.key.region));
        } else if n_months < config.min_months {
            warnings.push(format!(
                "{slug}: {n_months} valid months, {} required; cells not computed",
                config.min_months
            ));
        }
        let factors: Vec<FactorCell> = Factor::ALL
            .into_iter()
            .map(|f| {
                let cell = details
                    .remove(&(g, f))
                    .unwrap_or_else(|| missing(has_panel, region, n_months, required));
                match &cell {
                    Cell::Failed { reason } if samples[g].is_some() => {
                        warnings.push(format!("{slug}/{f}: {reason}"))
                    }
                    Cell::Computed(d) if d.small_strata > 0 => warnings.push(format!(
                        "{slug}/{f}: {} strata with fewer than {MIN_STRATUM_SIZE} months",
                        d.small_strata
                    )),
                    _ => {}
                }
                FactorCell {
                    factor: f,
                    strategy: config.strategy_for(f).clone(),
                    cell,
                }
            })
            .collect();
        let interactions: Vec<InteractionCell> = pair_iter
            .by_ref()
            .take(21)
            .map(|(&(pg, a, b), cell)| {
                debug_assert_eq!(pg, g);
                let cell = cell.unwrap_or_else(|| missing(has_panel, region, n_months, required));
                InteractionCell {
                    first: a,
                    second: b,
                    cell,
                }
            })
            .collect();
        groups.push(GroupReport {
            key: series.key,
            n_months,
            factors,
            interactions,
        });
    }

    let region_tests = region_tests(&selected, panels);
    Ok(ReportBundle {
        groups,
        region_tests,
        warnings,
    })
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        f64::NAN
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

fn compare(variable: String, north: &[f64], south: &[f64]) -> RegionTest {
    let result = match t_test(north, south, TTestVariant::Pooled) {
        Ok(t) => Cell::Computed(t),
        Err(e) => Cell::Failed { reason: e.to_string() },
    };
    RegionTest {
        variable,
        north_n: north.len(),
        south_n: south.len(),
        north_mean: mean(north),
        south_mean: mean(south),
        result,
    }
}

/// North versus south: monthly positive rates of each virus (all ages,
/// both sexes) and monthly values of each factor.
fn region_tests(selected: &[&OutcomeSeries], panels: &[FactorPanel]) -> Vec<RegionTest> {
    let mut out = Vec::new();
    let whole = |v: Virus, r: Region| {
        selected
            .iter()
            .find(|s| s.key == GroupKey::new(v, r))
            .map(|s| s.valid_months().map(|(_, rate)| rate).collect::<Vec<_>>())
    };
    for &v in Virus::ALL {
        if let (Some(n), Some(s)) = (whole(v, Region::North), whole(v, Region::South)) {
            out.push(compare(format!("rate:{v}"), &n, &s));
        }
    }
    let panel = |r: Region| panels.iter().find(|p| p.region == r);
    if let (Some(pn), Some(ps)) = (panel(Region::North), panel(Region::South)) {
        for f in Factor::ALL {
            let n: Vec<f64> = pn.months.values().filter_map(|v| v[f]).collect();
            let s: Vec<f64> = ps.months.values().filter_map(|v| v[f]).collect();
            out.push(compare(format!("factor:{f}"), &n, &s));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OutcomePoint, YearMonth};

    fn months(n: usize) -> Vec<YearMonth> {
        let mut m: YearMonth = "2009-01".parse().unwrap();
        (0..n)
            .map(|_| {
                let cur = m;
                m = m.next();
                cur
            })
            .collect()
    }

    fn toy(n: usize, region: Region) -> (OutcomeSeries, FactorPanel) {
        let ms = months(n);
        let points = ms
            .iter()
            .enumerate()
            .map(|(i, &m)| OutcomePoint::new(m, 100, (20 + (i * 7) % 50) as u64).unwrap())
            .collect();
        let series = OutcomeSeries::new(GroupKey::new(Virus::Rsv, region), points).unwrap();
        let panel = FactorPanel {
            region,
            months: ms
                .iter()
                .enumerate()
                .map(|(i, &m)| (m, FactorMap::from_fn(|f| Some(((i * (f.index() + 3)) % 17) as f64))))
                .collect(),
        };
        (series, panel)
    }

    fn config() -> AnalysisConfig {
        AnalysisConfig {
            seed: Some(1),
            n_perm: 99,
            ..AnalysisConfig::default()
        }
    }

    #[test]
    fn insufficient_months_are_flagged() {
        let (s, p) = toy(11, Region::North);
        let b = run_analysis(&config(), &[s], &[p]).unwrap();
        let g = &b.groups[0];
        assert_eq!(g.n_months, 11);
        assert!(g
            .factors
            .iter()
            .all(|c| matches!(c.cell, Cell::InsufficientData { n_months: 11, required: 12 })));
        assert!(g.interactions.iter().all(|c| matches!(c.cell, Cell::InsufficientData { .. })));
        assert_eq!(b.warnings.len(), 1);
    }

    #[test]
    fn matrix_is_symmetric_with_q_on_diagonal() {
        let (s, p) = toy(40, Region::North);
        let b = run_analysis(&config(), &[s], &[p]).unwrap();
        let g = &b.groups[0];
        let m = g.interaction_matrix();
        for (i, row) in m.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                assert_eq!(*cell, m[j][i]);
            }
            assert_eq!(row[i], g.q(Factor::ALL[i]));
        }
        for c in &g.interactions {
            let r = c.cell.computed().unwrap();
            assert!(r.q12 >= r.q1.max(r.q2) - 1e-12);
        }
    }

    #[test]
    fn missing_months_are_excluded() {
        let (s, mut p) = toy(30, Region::South);
        let first = *p.months.keys().next().unwrap();
        p.months.get_mut(&first).unwrap()[Factor::Wind] = None;
        let a = align(&s, &p, false);
        assert_eq!(a.y.len(), 29);
        assert_eq!(a.observations[0], "2009-02");

        let pooled = align(&s, &p, true);
        assert_eq!(pooled.y.len(), 12);
        assert_eq!(pooled.observations[0], "M01");
    }

    #[test]
    fn config_validation() {
        let mut c = AnalysisConfig::default();
        assert!(c.validate().is_err());
        c.seed = Some(3);
        assert!(c.validate().is_ok());
        c.significance = SignificanceMethod::NoncentralF;
        c.seed = None;
        assert!(c.validate().is_ok());

        let c = AnalysisConfig::from_json(r#"{"seed": 5, "strata": {"default": "jenks:4", "per_factor": {"rain": "manual:10,50"}}}"#).unwrap();
        assert_eq!(c.strategy_for(Factor::Temperature), &StrataStrategy::NaturalBreaks(4));
        assert_eq!(c.strategy_for(Factor::Rainfall), &StrataStrategy::Manual(vec![10.0, 50.0]));
        assert!(AnalysisConfig::from_json(r#"{"filters": {"viruses": ["ebola"]}}"#).is_err());
        assert!(AnalysisConfig::from_json(r#"{"strata": {"default": "quantile:1"}}"#).is_err());
        assert!(AnalysisConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn filter_semantics() {
        let f = GroupFilter {
            viruses: vec![Virus::Rsv],
            age_bands: vec![AgeBand::Under5],
            ..GroupFilter::default()
        };
        let mut k = GroupKey::new(Virus::Rsv, Region::North);
        assert!(f.accepts(&k));
        k.age_band = Some(AgeBand::Under5);
        assert!(f.accepts(&k));
        k.age_band = Some(AgeBand::Over65);
        assert!(!f.accepts(&k));
        k.sex = Some(Sex::Male);
        k.age_band = None;
        assert!(!f.accepts(&k));
        assert!(!f.accepts(&GroupKey::new(Virus::Adv, Region::North)));
    }

    #[test]
    fn cell_seeds_differ_by_key() {
        assert_ne!(cell_seed(1, &["a", "temp"]), cell_seed(1, &["a", "rain"]));
        assert_ne!(cell_seed(1, &["ab", "c"]), cell_seed(1, &["a", "bc"]));
        assert_eq!(cell_seed(9, &["x"]), cell_seed(9, &["x"]));
    }
}
