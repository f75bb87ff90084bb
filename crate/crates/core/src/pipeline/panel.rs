//! Station-months to city panels to regional factor panels.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::StationMonth;
use super::rates::region_average;
use crate::error::{Error, Result};
use crate::geo::{idw_weights, weighted, IdwParams, StationValue};
use crate::model::{City, CityMonthPanel, Factor, FactorMap, Region, YearMonth};

/// Monthly factor values for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPanel {
    pub region: Region,
    pub months: BTreeMap<YearMonth, FactorMap<Option<f64>>>,
}

/// Interpolates every factor to every city for every month seen in the
/// station data. Coverage is interpolated with the same weights as the value.
pub fn interpolate_cities(
    station_months: &[StationMonth],
    cities: &[City],
    params: &IdwParams,
) -> Result<Vec<CityMonthPanel>> {
    params.check()?;
    let mut by_month: BTreeMap<YearMonth, Vec<&StationMonth>> = BTreeMap::new();
    for sm in station_months {
        by_month.entry(sm.month).or_default().push(sm);
    }
    let jobs: Vec<(&City, YearMonth)> = cities
        .iter()
        .flat_map(|c| by_month.keys().map(move |&m| (c, m)))
        .collect();
    jobs.into_par_iter()
        .map(|(city, month)| {
            let rows = &by_month[&month];
            let mut values = FactorMap::default();
            let mut coverage = FactorMap::default();
            for f in Factor::ALL {
                let sources: Vec<StationValue> = rows
                    .iter()
                    .map(|sm| StationValue {
                        id: &sm.station_id,
                        location: sm.location,
                        value: sm.values[f],
                    })
                    .collect();
                match idw_weights(city.location, &sources, params) {
                    Ok(w) => {
                        values[f] = Some(weighted(&w, &sources, |s| s.value.unwrap()));
                        coverage[f] = weighted(&w, rows, |sm| sm.coverage[f]);
                    }
                    Err(Error::NoStations) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(CityMonthPanel {
                city_id: city.id.clone(),
                location: city.location,
                month,
                values,
                coverage,
            })
        })
        .collect()
}

/// Averages city panels into north, south and all-China panels.
/// A factor is missing for a region-month when no member city has it.
pub fn region_panels(city_panels: &[CityMonthPanel], cities: &[City]) -> Vec<FactorPanel> {
    let membership: BTreeMap<String, Region> = cities.iter().map(|c| (c.id.clone(), c.region)).collect();
    let months: BTreeSet<YearMonth> = city_panels.iter().map(|p| p.month).collect();
    [Region::North, Region::South, Region::All]
        .into_iter()
        .map(|region| {
            let months = months
                .iter()
                .map(|&m| {
                    let rows: Vec<&CityMonthPanel> = city_panels.iter().filter(|p| p.month == m).collect();
                    let values = FactorMap::from_fn(|f| {
                        let vals: Vec<(&str, Option<f64>)> =
                            rows.iter().map(|p| (p.city_id.as_str(), p.values[f])).collect();
                        region_average(&vals, &membership, region).ok()
                    });
                    (m, values)
                })
                .collect();
            FactorPanel { region, months }
        })
        .collect()
}
