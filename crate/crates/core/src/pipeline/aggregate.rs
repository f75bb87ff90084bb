//! Daily to monthly roll-up of station readings.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AggregationKind, Factor, FactorMap, LatLon, StationDay, YearMonth};

/// Months with less than this fraction of days present are reported missing.
pub const MIN_COVERAGE: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonthlyValue {
    pub value: Option<f64>,
    /// Days present over days in the month.
    pub coverage: f64,
}

/// Aggregates one month of daily readings.
///
/// Means average the present days. Sums add the present days and scale by
/// `days_in_month / days_present`, so a month at 80% coverage is
/// extrapolated to a full month.
pub fn aggregate_monthly(daily: &[(NaiveDate, Option<f64>)], kind: AggregationKind) -> Result<MonthlyValue> {
    let first = daily.first().ok_or(Error::EmptyInput)?;
    let month = YearMonth::of(first.0);
    let mut dates: Vec<NaiveDate> = Vec::with_capacity(daily.len());
    let mut present = 0u32;
    let mut total = 0.0;
    for &(date, value) in daily {
        if YearMonth::of(date) != month {
            return Err(Error::MixedMonths {
                first: first.0.to_string(),
                other: date.to_string(),
            });
        }
        dates.push(date);
        if let Some(v) = value.filter(|v| v.is_finite()) {
            present += 1;
            total += v;
        }
    }
    dates.sort_unstable();
    if let Some(w) = dates.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateDate(w[0].to_string()));
    }

    let days = month.days_in_month();
    let coverage = f64::from(present) / f64::from(days);
    // integer form of present / days >= 0.8
    if present * 5 < days * 4 {
        return Ok(MonthlyValue { value: None, coverage });
    }
    let value = match kind {
        AggregationKind::Mean => total / f64::from(present),
        AggregationKind::Sum if present == days => total,
        AggregationKind::Sum => total * f64::from(days) / f64::from(present),
    };
    Ok(MonthlyValue {
        value: Some(value),
        coverage,
    })
}

/// One station's monthly values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMonth {
    pub station_id: String,
    pub location: LatLon,
    pub month: YearMonth,
    pub values: FactorMap<Option<f64>>,
    pub coverage: FactorMap<f64>,
}

/// Rolls daily station records up to station-months, ordered by station then month.
pub fn station_months(days: &[StationDay]) -> Result<Vec<StationMonth>> {
    let mut groups: BTreeMap<(&str, YearMonth), Vec<&StationDay>> = BTreeMap::new();
    for d in days {
        groups
            .entry((d.station_id.as_str(), YearMonth::of(d.date)))
            .or_default()
            .push(d);
    }
    groups
        .into_iter()
        .map(|((id, month), rows)| {
            let mut values = FactorMap::default();
            let mut coverage = FactorMap::default();
            for f in Factor::ALL {
                let series: Vec<(NaiveDate, Option<f64>)> = rows.iter().map(|d| (d.date, d.values[f])).collect();
                let m = aggregate_monthly(&series, f.aggregation())?;
                values[f] = m.value;
                coverage[f] = m.coverage;
            }
            Ok(StationMonth {
                station_id: id.to_string(),
                location: rows[0].location,
                month,
                values,
                coverage,
            })
        })
        .collect()
}
