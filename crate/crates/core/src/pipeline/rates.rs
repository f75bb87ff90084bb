//! Positive rates, outcome series and regional averages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AgeBand, City, GroupKey, OutcomePoint, OutcomeSeries, Region, Sex, Virus, YearMonth};

/// `positive / tested`; `None` when nobody was tested that month.
pub fn positive_rate(tested: u64, positive: u64) -> Result<Option<f64>> {
    if positive > tested {
        return Err(Error::PositiveExceedsTested { tested, positive });
    }
    if tested == 0 {
        return Ok(None);
    }
    Ok(Some(positive as f64 / tested as f64))
}

/// Unweighted mean of the present values of cities belonging to `region`
/// (every city belongs to [`Region::All`]).
pub fn region_average(
    city_values: &[(&str, Option<f64>)],
    membership: &BTreeMap<String, Region>,
    region: Region,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for &(city, value) in city_values {
        let Some(v) = value else { continue };
        if membership.get(city).is_some_and(|r| r.contributes_to(region)) {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion(region.to_string()));
    }
    Ok(sum / n as f64)
}

/// Where a row of counts was reported: a city, or a whole region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Area {
    City(String),
    Region(Region),
}

/// One row of the case file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub month: YearMonth,
    pub area: Area,
    pub virus: Virus,
    pub age_band: Option<AgeBand>,
    pub sex: Option<Sex>,
    pub tested: u64,
    pub positive: u64,
}

/// Builds one outcome series per (virus, region, age band, sex).
///
/// City rows add to their own region and to `all`; `north`/`south` rows add
/// to that region and to `all`; `all` rows add to `all` only. Counts from
/// several rows for the same group and month are summed.
pub fn build_outcomes(rows: &[CaseRow], cities: &[City]) -> Result<Vec<OutcomeSeries>> {
    let region_of: BTreeMap<&str, Region> = cities.iter().map(|c| (c.id.as_str(), c.region)).collect();
    let mut acc: BTreeMap<GroupKey, BTreeMap<YearMonth, (u64, u64)>> = BTreeMap::new();
    for row in rows {
        positive_rate(row.tested, row.positive)?;
        let home = match &row.area {
            Area::Region(r) => *r,
            Area::City(id) => *region_of.get(id.as_str()).ok_or_else(|| Error::UnknownName {
                kind: "city",
                value: id.clone(),
            })?,
        };
        let mut targets = vec![Region::All];
        if home != Region::All {
            targets.push(home);
        }
        for region in targets {
            let key = GroupKey {
                virus: row.virus,
                region,
                age_band: row.age_band,
                sex: row.sex,
            };
            let cell = acc.entry(key).or_default().entry(row.month).or_default();
            cell.0 += row.tested;
            cell.1 += row.positive;
        }
    }
    acc.into_iter()
        .map(|(key, months)| {
            let points = months
                .into_iter()
                .map(|(m, (t, p))| OutcomePoint::new(m, t, p))
                .collect::<Result<Vec<_>>>()?;
            OutcomeSeries::new(key, points)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LatLon;

    #[test]
    fn rate_examples() {
        let r = positive_rate(28369, 10387).unwrap().unwrap();
        assert_eq!(format!("{:.1}", r * 100.0), "36.6");
        assert_eq!(positive_rate(10, 0).unwrap(), Some(0.0));
        assert_eq!(positive_rate(0, 0).unwrap(), None);
        assert!(matches!(positive_rate(5, 6), Err(Error::PositiveExceedsTested { .. })));
    }

    #[test]
    fn region_average_examples() {
        let m: BTreeMap<String, Region> = [("a", Region::North), ("b", Region::North), ("c", Region::South)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        assert_eq!(region_average(&[("c", Some(4.0))], &m, Region::South).unwrap(), 4.0);
        let vals = [("a", Some(10.0)), ("b", Some(20.0)), ("c", None)];
        assert_eq!(region_average(&vals, &m, Region::North).unwrap(), 15.0);
        assert_eq!(region_average(&vals, &m, Region::All).unwrap(), 15.0);
        assert!(matches!(region_average(&vals, &m, Region::South), Err(Error::EmptyRegion(_))));
    }

    #[test]
    fn all_cities_mean_is_membership_weighted() {
        // 36 cities: 20 north, 16 south
        let mut m = BTreeMap::new();
        let mut owned = Vec::new();
        for i in 0..36 {
            let id = format!("c{i}");
            m.insert(id.clone(), if i < 20 { Region::North } else { Region::South });
            owned.push((id, Some((i as f64 * 1.7).sin() * 10.0 + 15.0)));
        }
        let vals: Vec<(&str, Option<f64>)> = owned.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        let north = region_average(&vals, &m, Region::North).unwrap();
        let south = region_average(&vals, &m, Region::South).unwrap();
        let all = region_average(&vals, &m, Region::All).unwrap();
        assert!((all - (20.0 * north + 16.0 * south) / 36.0).abs() < 1e-12);
    }

    #[test]
    fn outcomes_roll_up_cities() {
        let cities = vec![
            City { id: "bj".into(), location: LatLon { lat: 39.9, lon: 116.4 }, region: Region::North },
            City { id: "gz".into(), location: LatLon { lat: 23.1, lon: 113.3 }, region: Region::South },
        ];
        let m: YearMonth = "2010-01".parse().unwrap();
        let row = |area: Area, t, p| CaseRow {
            month: m,
            area,
            virus: Virus::Rsv,
            age_band: None,
            sex: None,
            tested: t,
            positive: p,
        };
        let rows = vec![row(Area::City("bj".into()), 10, 4), row(Area::City("gz".into()), 30, 6)];
        let out = build_outcomes(&rows, &cities).unwrap();
        assert_eq!(out.len(), 3);
        let all = out.iter().find(|s| s.key.region == Region::All).unwrap();
        assert_eq!(all.points()[0].tested(), 40);
        assert_eq!(all.points()[0].rate(), Some(0.25));

        let bad = vec![row(Area::City("xx".into()), 1, 1)];
        assert!(build_outcomes(&bad, &cities).is_err());
    }
}
