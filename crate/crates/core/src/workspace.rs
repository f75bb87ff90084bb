//! A validated set of input files and the full run from files to report.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{self, SchemaIssue};
use crate::model::{City, CityMonthPanel, OutcomeSeries, Region, StationDay};
use crate::pipeline::{
    build_outcomes, interpolate_cities, region_panels, run_analysis, station_months, AnalysisConfig, CaseRow,
    FactorPanel, InputPaths, ReportBundle, StationMonth,
};
use crate::report::{digest_file, write_report, InputDigest};

#[derive(Debug, Clone)]
pub struct Workspace {
    pub cities: Vec<City>,
    pub days: Vec<StationDay>,
    pub cases: Vec<CaseRow>,
}

/// Every schema issue across the three files, in file order.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub issues: Vec<SchemaIssue>,
}

impl Workspace {
    /// Parses all three files, collecting every schema issue. Returns the
    /// workspace only when there are none.
    pub fn load(paths: &InputPaths) -> Result<(Option<Workspace>, LoadReport)> {
        let cities = io::read_cities(&paths.cities)?;
        let days = io::read_stations(&paths.stations)?;
        let cases = io::read_cases(&paths.cases, Some(&cities.rows))?;
        let mut issues = cities.issues;
        issues.extend(days.issues);
        issues.extend(cases.issues);
        let ws = issues.is_empty().then_some(Workspace {
            cities: cities.rows,
            days: days.rows,
            cases: cases.rows,
        });
        Ok((ws, LoadReport { issues }))
    }

    /// Like [`Workspace::load`] but fails on the first schema issue.
    pub fn load_strict(paths: &InputPaths) -> Result<Workspace> {
        match Workspace::load(paths)? {
            (Some(ws), _) => Ok(ws),
            (None, report) => Err(report.issues.into_iter().next().expect("issues present").into_error()),
        }
    }

    /// Replaces city regions with configured overrides.
    pub fn apply_region_overrides(&mut self, config: &AnalysisConfig) -> Result<()> {
        for (id, &region) in &config.regions {
            if region == Region::All {
                return Err(Error::Config(format!("city {id} must be assigned to north or south")));
            }
            let city = self
                .cities
                .iter_mut()
                .find(|c| &c.id == id)
                .ok_or_else(|| Error::Config(format!("region override for unknown city {id:?}")))?;
            city.region = region;
        }
        Ok(())
    }

    pub fn station_months(&self) -> Result<Vec<StationMonth>> {
        station_months(&self.days)
    }

    pub fn city_panels(&self, config: &AnalysisConfig) -> Result<Vec<CityMonthPanel>> {
        interpolate_cities(&self.station_months()?, &self.cities, &config.idw)
    }

    pub fn panels(&self, config: &AnalysisConfig) -> Result<Vec<FactorPanel>> {
        Ok(region_panels(&self.city_panels(config)?, &self.cities))
    }

    pub fn outcomes(&self) -> Result<Vec<OutcomeSeries>> {
        build_outcomes(&self.cases, &self.cities)
    }
}

pub fn digests(paths: &InputPaths) -> Result<Vec<InputDigest>> {
    Ok(vec![
        digest_file("stations", &paths.stations)?,
        digest_file("cases", &paths.cases)?,
        digest_file("cities", &paths.cities)?,
    ])
}

/// Loads the inputs named in `config`, runs every detector and writes the
/// report into `out_dir`.
pub fn run_files(config: &AnalysisConfig, out_dir: &Path) -> Result<(ReportBundle, Vec<PathBuf>)> {
    config.validate()?;
    let paths = config
        .inputs
        .as_ref()
        .ok_or_else(|| Error::Config("no input files configured".into()))?;
    let mut ws = Workspace::load_strict(paths)?;
    ws.apply_region_overrides(config)?;
    let panels = ws.panels(config)?;
    let outcomes = ws.outcomes()?;
    let bundle = run_analysis(config, &outcomes, &panels)?;
    let written = write_report(out_dir, &bundle, config, &digests(paths)?)?;
    Ok((bundle, written))
}
