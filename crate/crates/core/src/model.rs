//! Domain types shared by every stage of the analysis.
//!
//! Values are immutable once built; constructors validate the invariants
//! and the accessors expose read-only views.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven daily meteorological variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Factor {
    #[serde(rename = "temp")]
    Temperature,
    #[serde(rename = "pressure")]
    Pressure,
    #[serde(rename = "vapour")]
    VapourPressure,
    #[serde(rename = "rain")]
    Rainfall,
    #[serde(rename = "sun")]
    Sunlight,
    #[serde(rename = "rh")]
    RelHumidity,
    #[serde(rename = "wind")]
    Wind,
}

/// How daily readings of a variable roll up into one monthly value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationKind {
    Mean,
    Sum,
}

impl Factor {
    pub const ALL: [Factor; 7] = [
        Factor::Temperature,
        Factor::Pressure,
        Factor::VapourPressure,
        Factor::Rainfall,
        Factor::Sunlight,
        Factor::RelHumidity,
        Factor::Wind,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column name used in the CSV schemas.
    pub fn code(self) -> &'static str {
        match self {
            Factor::Temperature => "temp",
            Factor::Pressure => "pressure",
            Factor::VapourPressure => "vapour",
            Factor::Rainfall => "rain",
            Factor::Sunlight => "sun",
            Factor::RelHumidity => "rh",
            Factor::Wind => "wind",
        }
    }

    /// Short axis label for figures.
    pub fn label(self) -> &'static str {
        match self {
            Factor::Temperature => "Temp",
            Factor::Pressure => "AP",
            Factor::VapourPressure => "VP",
            Factor::Rainfall => "Rain",
            Factor::Sunlight => "Sun",
            Factor::RelHumidity => "Humidity",
            Factor::Wind => "Wind",
        }
    }

    /// Rainfall and hours of sunlight are monthly totals; everything else is a monthly mean.
    pub fn aggregation(self) -> AggregationKind {
        match self {
            Factor::Rainfall | Factor::Sunlight => AggregationKind::Sum,
            _ => AggregationKind::Mean,
        }
    }

    /// Every unordered pair of distinct factors, in canonical order.
    pub fn pairs() -> Vec<(Factor, Factor)> {
        let mut out = Vec::with_capacity(21);
        for (i, &a) in Factor::ALL.iter().enumerate() {
            for &b in &Factor::ALL[i + 1..] {
                out.push((a, b));
            }
        }
        out
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let f = match s.trim().to_ascii_lowercase().as_str() {
            "temp" | "temperature" => Factor::Temperature,
            "pressure" | "ap" | "atmospheric_pressure" => Factor::Pressure,
            "vapour" | "vapor" | "vp" | "vapour_pressure" => Factor::VapourPressure,
            "rain" | "rainfall" => Factor::Rainfall,
            "sun" | "sunlight" => Factor::Sunlight,
            "rh" | "humidity" | "rel_humidity" => Factor::RelHumidity,
            "wind" => Factor::Wind,
            _ => {
                return Err(Error::UnknownName {
                    kind: "factor",
                    value: s.to_string(),
                })
            }
        };
        Ok(f)
    }
}

/// One value per factor, indexed by [`Factor`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FactorMap<T>(pub [T; 7]);

impl<T> FactorMap<T> {
    pub fn from_fn(mut f: impl FnMut(Factor) -> T) -> Self {
        FactorMap(Factor::ALL.map(&mut f))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Factor, &T)> {
        Factor::ALL.into_iter().zip(self.0.iter())
    }
}

impl<T> Index<Factor> for FactorMap<T> {
    type Output = T;
    fn index(&self, f: Factor) -> &T {
        &self.0[f.index()]
    }
}

impl<T> IndexMut<Factor> for FactorMap<T> {
    fn index_mut(&mut self, f: Factor) -> &mut T {
        &mut self.0[f.index()]
    }
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal { $($variant:ident => $code:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $code)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn code(self) -> &'static str {
                match self { $($name::$variant => $code),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.code())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                let t = s.trim();
                $(
                    if t.eq_ignore_ascii_case($code) $(|| t.eq_ignore_ascii_case($alias))* {
                        return Ok($name::$variant);
                    }
                )+
                Err(Error::UnknownName { kind: $kind, value: s.to_string() })
            }
        }
    };
}

named_enum!(
    /// Respiratory virus, or `ANY` for positive to at least one virus.
    Virus, "virus" {
        Rsv => "RSV",
        Influenza => "influenza" | "flu",
        Hpiv => "hPIV",
        Adv => "ADV",
        Hmpv => "hMPV",
        Hbov => "hBoV",
        Hcov => "hCoV",
        Any => "ANY",
    }
);

named_enum!(
    Region, "region" {
        North => "north",
        South => "south",
        All => "all",
    }
);

named_enum!(
    AgeBand, "age band" {
        Under5 => "0-4" | "0–4",
        From5To64 => "5-64" | "5–64",
        Over65 => "65+" | "≥65" | ">=65",
    }
);

named_enum!(
    Sex, "sex" {
        Male => "M" | "male",
        Female => "F" | "female",
    }
);

impl Region {
    /// Whether a city in `self` contributes to the `target` region.
    pub fn contributes_to(self, target: Region) -> bool {
        target == Region::All || self == target
    }
}

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) || NaiveDate::from_ymd_opt(year, month, 1).is_none() {
            return Err(Error::UnknownName {
                kind: "month",
                value: format!("{year}-{month}"),
            });
        }
        Ok(YearMonth { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        YearMonth {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("validated on construction")
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            YearMonth {
                year: self.year + 1,
                month: 1,
            }
        } else {
            YearMonth {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    pub fn days_in_month(self) -> u32 {
        let next = self.next().first_day();
        (next - self.first_day()).num_days() as u32
    }

    pub fn days(self) -> impl Iterator<Item = NaiveDate> {
        let first = self.first_day();
        (0..self.days_in_month()).map(move |d| first + chrono::Days::new(d as u64))
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownName {
            kind: "month (YYYY-MM)",
            value: s.to_string(),
        };
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month).map_err(|_| bad())
    }
}

impl TryFrom<String> for YearMonth {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(m: YearMonth) -> String {
        m.to_string()
    }
}

/// A point on the sphere in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = LatLon { lat, lon };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon) {
            Ok(())
        } else {
            Err(Error::OutOfRangeCoordinate {
                lat: self.lat,
                lon: self.lon,
            })
        }
    }
}

/// One station's daily readings. Missing readings are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationDay {
    pub station_id: String,
    pub location: LatLon,
    pub date: NaiveDate,
    pub values: FactorMap<Option<f64>>,
}

impl StationDay {
    /// Returns the first violated invariant as `(field, reason)`.
    pub fn violation(&self) -> Option<(&'static str, String)> {
        let LatLon { lat, lon } = self.location;
        if !(-90.0..=90.0).contains(&lat) {
            return Some(("lat", format!("latitude {lat} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Some(("lon", format!("longitude {lon} outside [-180, 180]")));
        }
        for (factor, value) in self.values.iter() {
            let Some(v) = *value else { continue };
            if !v.is_finite() {
                return Some((factor.code(), "value is not finite".into()));
            }
            let bad = match factor {
                Factor::Rainfall | Factor::Wind => v < 0.0,
                Factor::Sunlight => !(0.0..=24.0).contains(&v),
                Factor::RelHumidity => !(0.0..=100.0).contains(&v),
                _ => false,
            };
            if bad {
                let rule = match factor {
                    Factor::Sunlight => "must lie in [0, 24] hours",
                    Factor::RelHumidity => "must lie in [0, 100] %",
                    _ => "must be non-negative",
                };
                return Some((factor.code(), format!("{v} {rule}")));
            }
        }
        None
    }
}

/// A city with its climate region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct City {
    pub id: String,
    pub location: LatLon,
    pub region: Region,
}

/// Interpolated and aggregated factor values for one city in one month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityMonthPanel {
    pub city_id: String,
    pub location: LatLon,
    pub month: YearMonth,
    pub values: FactorMap<Option<f64>>,
    /// Fraction of days present behind each value, in [0, 1].
    pub coverage: FactorMap<f64>,
}

/// Identifies one outcome series: virus, region and optional demographic filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub virus: Virus,
    pub region: Region,
    pub age_band: Option<AgeBand>,
    pub sex: Option<Sex>,
}

impl GroupKey {
    pub fn new(virus: Virus, region: Region) -> Self {
        GroupKey {
            virus,
            region,
            age_band: None,
            sex: None,
        }
    }

    /// File-name-safe identifier, e.g. `RSV_north_all_all`.
    pub fn slug(&self) -> String {
        let age = match self.age_band {
            None => "all",
            Some(AgeBand::Under5) => "0-4",
            Some(AgeBand::From5To64) => "5-64",
            Some(AgeBand::Over65) => "65plus",
        };
        let sex = self.sex.map_or("all", Sex::code);
        format!("{}_{}_{}_{}", self.virus, self.region, age, sex)
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.slug())
    }
}

/// Tested and positive counts for one month; the rate is derived on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOutcomePoint")]
pub struct OutcomePoint {
    month: YearMonth,
    tested: u64,
    positive: u64,
    rate: Option<f64>,
}

#[derive(Deserialize)]
struct RawOutcomePoint {
    month: YearMonth,
    tested: u64,
    positive: u64,
}

impl TryFrom<RawOutcomePoint> for OutcomePoint {
    type Error = Error;
    fn try_from(r: RawOutcomePoint) -> Result<Self> {
        OutcomePoint::new(r.month, r.tested, r.positive)
    }
}

impl OutcomePoint {
    pub fn new(month: YearMonth, tested: u64, positive: u64) -> Result<Self> {
        let rate = crate::pipeline::positive_rate(tested, positive)?;
        Ok(OutcomePoint {
            month,
            tested,
            positive,
            rate,
        })
    }

    pub fn month(&self) -> YearMonth {
        self.month
    }

    pub fn tested(&self) -> u64 {
        self.tested
    }

    pub fn positive(&self) -> u64 {
        self.positive
    }

    /// `positive / tested`, or `None` for a month with nobody tested.
    pub fn rate(&self) -> Option<f64> {
        self.rate
    }
}

/// Monthly positive rates for one group, ordered by month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSeries {
    pub key: GroupKey,
    points: Vec<OutcomePoint>,
}

impl OutcomeSeries {
    /// Sorts points by month; a month may appear only once.
    pub fn new(key: GroupKey, mut points: Vec<OutcomePoint>) -> Result<Self> {
        points.sort_by_key(|p| p.month);
        if let Some(w) = points.windows(2).find(|w| w[0].month == w[1].month) {
            return Err(Error::DuplicateDate(w[0].month.to_string()));
        }
        Ok(OutcomeSeries { key, points })
    }

    pub fn points(&self) -> &[OutcomePoint] {
        &self.points
    }

    /// Months with a defined rate.
    pub fn valid_months(&self) -> impl Iterator<Item = (YearMonth, f64)> + '_ {
        self.points.iter().filter_map(|p| p.rate.map(|r| (p.month, r)))
    }

    /// Year index of a month counted from the first year in the series (1-based).
    pub fn year_index(&self, month: YearMonth) -> Option<i32> {
        self.points
            .first()
            .map(|p| month.year() - p.month.year() + 1)
    }
}

/// How a stratification was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrataMethod {
    EqualInterval,
    Quantile,
    NaturalBreaks,
    Manual,
    Categorical,
    Overlay,
}

/// Stratum label (1..=L) for every observation.
///
/// Labels are always compact: each of the `L` strata holds at least one
/// observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumAssignment {
    labels: Vec<usize>,
    l: usize,
    breaks: Vec<f64>,
    method: StrataMethod,
    compacted: bool,
}

impl StratumAssignment {
    /// Builds an assignment from raw labels, renumbering the used labels to
    /// 1..=L in ascending order of the raw label.
    pub fn from_labels(labels: Vec<usize>, method: StrataMethod, breaks: Vec<f64>) -> Result<Self> {
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l == 0) {
            return Err(Error::BadLabel { index, label });
        }
        let max = labels.iter().copied().max().unwrap_or(0);
        let mut remap = vec![0usize; max + 1];
        for &l in &labels {
            remap[l] = 1;
        }
        let mut next = 0;
        for slot in remap.iter_mut() {
            if *slot == 1 {
                next += 1;
                *slot = next;
            }
        }
        let compacted = next != max;
        let labels = labels.into_iter().map(|l| remap[l]).collect();
        Ok(StratumAssignment {
            labels,
            l: next,
            breaks,
            method,
            compacted,
        })
    }

    /// Categorical input: labels used as given (after compaction).
    pub fn categorical(labels: Vec<usize>) -> Result<Self> {
        Self::from_labels(labels, StrataMethod::Categorical, Vec::new())
    }

    pub(crate) fn from_compact(labels: Vec<usize>, l: usize, method: StrataMethod) -> Self {
        StratumAssignment {
            labels,
            l,
            breaks: Vec::new(),
            method,
            compacted: false,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of non-empty strata.
    pub fn strata_count(&self) -> usize {
        self.l
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn method(&self) -> StrataMethod {
        self.method
    }

    /// True when empty strata were dropped and the remaining ones renumbered.
    pub fn was_compacted(&self) -> bool {
        self.compacted
    }

    /// Observation count per stratum, indexed by `label - 1`.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.l];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }

    pub fn singleton_count(&self) -> usize {
        self.counts().into_iter().filter(|&c| c == 1).count()
    }

    /// Strata holding fewer than `min` observations.
    pub fn small_strata(&self, min: usize) -> usize {
        self.counts().into_iter().filter(|&c| c < min).count()
    }
}

/// Size, mean and population variance of one stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumStats {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignificanceMethod {
    Permutation,
    NoncentralF,
}

impl FromStr for SignificanceMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "permutation" => Ok(SignificanceMethod::Permutation),
            "noncentral-f" | "ncf" => Ok(SignificanceMethod::NoncentralF),
            _ => Err(Error::UnknownName {
                kind: "significance method",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub p_value: f64,
    pub method: SignificanceMethod,
}

/// Factor-detector output for one stratification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QResult {
    pub q: f64,
    pub ssw: f64,
    pub sst: f64,
    pub n: usize,
    pub l: usize,
    pub strata: Vec<StratumStats>,
    pub significance: Option<Significance>,
}

impl QResult {
    pub fn p_value(&self) -> Option<f64> {
        self.significance.map(|s| s.p_value)
    }
}

/// Interaction-detector categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionCategory {
    NonlinearEnhance,
    BivariateEnhance,
    UniWeaken,
    NonlinearWeaken,
    Independent,
}

impl InteractionCategory {
    pub fn code(self) -> &'static str {
        match self {
            InteractionCategory::NonlinearEnhance => "nonlinear-enhance",
            InteractionCategory::BivariateEnhance => "bivariate-enhance",
            InteractionCategory::UniWeaken => "uni-weaken",
            InteractionCategory::NonlinearWeaken => "nonlinear-weaken",
            InteractionCategory::Independent => "independent",
        }
    }
}

impl fmt::Display for InteractionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionResult {
    pub q1: f64,
    pub q2: f64,
    pub q12: f64,
    pub category: InteractionCategory,
    /// Number of strata in the overlay partition.
    pub overlay_strata: usize,
    /// Overlay strata holding a single observation; these push q12 upward.
    pub singleton_strata: usize,
}

/// An outcome vector paired with a stratification that passed [`validate_sample`].
#[derive(Debug, Clone, Copy)]
pub struct CheckedSample<'a> {
    y: &'a [f64],
    strata: &'a StratumAssignment,
}

impl<'a> CheckedSample<'a> {
    pub fn y(&self) -> &'a [f64] {
        self.y
    }

    pub fn strata(&self) -> &'a StratumAssignment {
        self.strata
    }
}

/// Checks that `y` and `strata` line up and that no outcome is missing (NaN).
pub fn validate_sample<'a>(y: &'a [f64], strata: &'a StratumAssignment) -> Result<CheckedSample<'a>> {
    if y.is_empty() && strata.is_empty() {
        return Err(Error::EmptyInput);
    }
    if y.len() != strata.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: strata.len(),
        });
    }
    if let Some(index) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::MissingOutcome { index });
    }
    Ok(CheckedSample { y, strata })
}
