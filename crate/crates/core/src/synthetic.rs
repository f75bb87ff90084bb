//! Synthetic data with known structure, used as ground truth for the
//! detectors and as a drop-in workspace for the command-line pipeline.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::{
    City, Factor, FactorMap, GroupKey, LatLon, OutcomePoint, OutcomeSeries, Region, StationDay, StrataMethod,
    StratumAssignment, Virus, YearMonth,
};
use crate::pipeline::{Area, CaseRow, FactorPanel};

/// Balanced stratified sample specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub n: usize,
    pub l: usize,
    pub stratum_means: Vec<f64>,
    pub within_sd: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub y: Vec<f64>,
    pub strata: StratumAssignment,
    /// Between-strata share of the realised sample's variance.
    pub q_true: f64,
}

/// Draws `y_i = mu_h(i) + e_i` with contiguous strata of near-equal size.
pub fn generate(spec: &GenerateSpec) -> Result<Generated> {
    let GenerateSpec { n, l, ref stratum_means, within_sd, seed } = *spec;
    if l == 0 || n < 2 * l {
        return Err(Error::BadSpec(format!("need n >= 2L, got n = {n}, L = {l}")));
    }
    if stratum_means.len() != l {
        return Err(Error::BadSpec(format!("{} stratum means for L = {l}", stratum_means.len())));
    }
    if !(within_sd >= 0.0 && within_sd.is_finite()) || stratum_means.iter().any(|m| !m.is_finite()) {
        return Err(Error::BadSpec("means must be finite and within_sd non-negative".into()));
    }
    let noise = Normal::new(0.0, within_sd).map_err(|e| Error::BadSpec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| 1 + i * l / n).collect();
    let y: Vec<f64> = labels.iter().map(|&h| stratum_means[h - 1] + noise.sample(&mut rng)).collect();

    // between and within sums of squares on the realised values
    let grand = y.iter().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for h in 1..=l {
        let members: Vec<f64> = y.iter().zip(&labels).filter(|(_, &g)| g == h).map(|(v, _)| *v).collect();
        let mean = members.iter().sum::<f64>() / members.len() as f64;
        ssb += members.len() as f64 * (mean - grand).powi(2);
        ssw += members.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    if ssb + ssw == 0.0 {
        return Err(Error::BadSpec("sample has zero variance".into()));
    }
    let strata = StratumAssignment::from_compact(labels, l, StrataMethod::Categorical);
    Ok(Generated { y, strata, q_true: ssb / (ssb + ssw) })
}

/// Seasonal weather and positive-rate series for one (virus, region).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeasonalSpec {
    pub years: u32,
    pub start_year: i32,
    /// Logit-scale weight of each standardised factor; absent factors weigh 0.
    pub weights: BTreeMap<Factor, f64>,
    /// Logit of the rate when every factor sits at its mean.
    pub intercept: f64,
    /// Standard deviation of additive noise on the rate.
    pub noise: f64,
    /// Month-to-month noise on each factor, relative to its seasonal amplitude.
    pub factor_noise: f64,
    pub tested_per_month: u64,
    pub seed: u64,
    pub region: Region,
    pub virus: Virus,
}

impl Default for SeasonalSpec {
    fn default() -> Self {
        SeasonalSpec {
            years: 5,
            start_year: 2009,
            weights: BTreeMap::from([(Factor::Temperature, 1.0)]),
            intercept: -1.0,
            noise: 0.02,
            factor_noise: 0.35,
            tested_per_month: 500,
            seed: 0,
            region: Region::All,
            virus: Virus::Rsv,
        }
    }
}

impl SeasonalSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::BadSpec(e.to_string()))
    }

    fn check(&self) -> Result<()> {
        if self.years < 2 {
            return Err(Error::BadSpec(format!("years must be at least 2, got {}", self.years)));
        }
        if !(1..=9000).contains(&self.start_year) {
            return Err(Error::BadSpec(format!("start_year {} out of range", self.start_year)));
        }
        if self.weights.values().any(|w| !w.is_finite()) || !self.intercept.is_finite() {
            return Err(Error::BadSpec("weights and intercept must be finite".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) || !(self.factor_noise >= 0.0 && self.factor_noise.is_finite()) {
            return Err(Error::BadSpec("noise levels must be non-negative".into()));
        }
        if self.tested_per_month == 0 {
            return Err(Error::BadSpec("tested_per_month must be positive".into()));
        }
        Ok(())
    }
}

/// Seasonal shape of each factor: (base, amplitude, harmonic, phase, clamp).
/// Phases are offsets from temperature so that the factors are only partly
/// collinear; the semiannual harmonics are orthogonal to the annual cycle.
fn shape(f: Factor) -> (f64, f64, f64, f64, (f64, f64)) {
    let inf = f64::INFINITY;
    match f {
        Factor::Temperature => (15.0, 12.0, 1.0, 0.0, (-inf, inf)),
        Factor::Pressure => (1000.0, 10.0, 1.0, 0.75 * PI, (-inf, inf)),
        Factor::VapourPressure => (15.0, 8.0, 1.0, 0.25 * PI, (0.0, inf)),
        Factor::Rainfall => (80.0, 60.0, 1.0, 0.5 * PI, (0.0, inf)),
        Factor::Sunlight => (150.0, 50.0, 2.0, 0.0, (0.0, 600.0)),
        Factor::RelHumidity => (70.0, 15.0, 2.0, 0.5 * PI, (0.0, 100.0)),
        Factor::Wind => (3.0, 1.0, 1.0, 1.5 * PI, (0.0, inf)),
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalData {
    pub outcome: OutcomeSeries,
    pub panel: FactorPanel,
}

pub fn generate_seasonal(spec: &SeasonalSpec) -> Result<SeasonalData> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = 12 * spec.years as usize;
    let start = YearMonth::new(spec.start_year, 1)?;
    let months: Vec<YearMonth> = std::iter::successors(Some(start), |m| Some(m.next())).take(n).collect();

    // factor values, drawn factor by factor so each factor's stream is fixed
    let mut values: FactorMap<Vec<f64>> = FactorMap::default();
    for f in Factor::ALL {
        let (base, amp, k, phase, (lo, hi)) = shape(f);
        values[f] = months
            .iter()
            .map(|m| {
                // temperature peaks in July
                let theta = 2.0 * PI * (m.month() as f64 - 7.0) / 12.0;
                let s = (k * theta - phase).cos() + spec.factor_noise * std_normal.sample(&mut rng);
                (base + amp * s).clamp(lo, hi)
            })
            .collect();
    }

    let mut logit = vec![spec.intercept; n];
    for (&f, &w) in &spec.weights {
        if w == 0.0 {
            continue;
        }
        let v = &values[f];
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd == 0.0 {
            continue;
        }
        for (l, x) in logit.iter_mut().zip(v) {
            *l += w * (x - mean) / sd;
        }
    }

    let mut points = Vec::with_capacity(n);
    for (i, &m) in months.iter().enumerate() {
        let rate = (logistic(logit[i]) + spec.noise * std_normal.sample(&mut rng)).clamp(0.0, 1.0);
        let binom = Binomial::new(spec.tested_per_month, rate).map_err(|e| Error::BadSpec(e.to_string()))?;
        let positive = binom.sample(&mut rng);
        points.push(OutcomePoint::new(m, spec.tested_per_month, positive)?);
    }
    let outcome = OutcomeSeries::new(GroupKey::new(spec.virus, spec.region), points)?;
    let panel = FactorPanel {
        region: spec.region,
        months: months
            .iter()
            .enumerate()
            .map(|(i, &m)| (m, FactorMap::from_fn(|f| Some(values[f][i]))))
            .collect(),
    };
    Ok(SeasonalData { outcome, panel })
}

/// Paths of a written workspace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkspaceFiles {
    pub stations: PathBuf,
    pub cases: PathBuf,
    pub cities: PathBuf,
}

/// One northern and one southern city, each with a colocated station, both
/// carrying the generated weather, so every regional panel reproduces it.
fn synthetic_cities() -> Vec<City> {
    vec![
        City { id: "synth_north".into(), location: LatLon { lat: 39.9, lon: 116.4 }, region: Region::North },
        City { id: "synth_south".into(), location: LatLon { lat: 23.1, lon: 113.3 }, region: Region::South },
    ]
}

/// Daily station rows whose monthly aggregates equal the panel: mean factors
/// repeat the monthly value, summed factors spread the total evenly.
pub fn station_days(panel: &FactorPanel, cities: &[City]) -> Vec<StationDay> {
    let mut days = Vec::new();
    for city in cities {
        for (month, vals) in &panel.months {
            let n_days = month.days_in_month() as f64;
            for date in month.days() {
                let values = FactorMap::from_fn(|f| {
                    vals[f].map(|v| match f.aggregation() {
                        crate::model::AggregationKind::Mean => v,
                        crate::model::AggregationKind::Sum => v / n_days,
                    })
                });
                days.push(StationDay {
                    station_id: format!("st_{}", city.id),
                    location: city.location,
                    date,
                    values,
                });
            }
        }
    }
    days
}

/// Writes `stations.csv`, `cases.csv` and `cities.csv` into `dir`.
pub fn write_workspace(dir: &Path, data: &SeasonalData) -> Result<WorkspaceFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = WorkspaceFiles {
        stations: dir.join("stations.csv"),
        cases: dir.join("cases.csv"),
        cities: dir.join("cities.csv"),
    };
    let cities = synthetic_cities();
    io::write_cities(&files.cities, &cities)?;
    io::write_stations(&files.stations, &station_days(&data.panel, &cities))?;
    let rows: Vec<CaseRow> = data
        .outcome
        .points()
        .iter()
        .map(|p| CaseRow {
            month: p.month(),
            area: Area::Region(data.outcome.key.region),
            virus: data.outcome.key.virus,
            age_band: None,
            sex: None,
            tested: p.tested(),
            positive: p.positive(),
        })
        .collect();
    io::write_cases(&files.cases, &rows)?;
    Ok(files)
}
