//! Great-circle distance and inverse distance weighting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LatLon;

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Targets closer than this to a station take the station's value.
pub const COINCIDENT_KM: f64 = 1e-6;

pub fn haversine_km(a: LatLon, b: LatLon) -> Result<f64> {
    a.check()?;
    b.check()?;
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdwParams {
    pub power: f64,
    /// Number of nearest stations used.
    pub neighbors: usize,
}

impl Default for IdwParams {
    fn default() -> Self {
        IdwParams {
            power: 2.0,
            neighbors: 12,
        }
    }
}

impl IdwParams {
    pub fn check(&self) -> Result<()> {
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::BadInterpolation(format!("power must be positive, got {}", self.power)));
        }
        if self.neighbors == 0 {
            return Err(Error::BadInterpolation("neighbors must be at least 1".into()));
        }
        Ok(())
    }
}

/// A station reading used as an interpolation source.
#[derive(Debug, Clone, PartialEq)]
pub struct StationValue<'a> {
    pub id: &'a str,
    pub location: LatLon,
    pub value: Option<f64>,
}

/// Interpolation weights of the `k` nearest stations with a present value.
///
/// Returns `(index into stations, weight)` pairs with weights summing to 1.
/// Distance ties are broken by station id.
pub fn idw_weights(target: LatLon, stations: &[StationValue<'_>], params: &IdwParams) -> Result<Vec<(usize, f64)>> {
    params.check()?;
    let mut near = Vec::with_capacity(stations.len());
    for (i, s) in stations.iter().enumerate() {
        if s.value.is_some_and(f64::is_finite) {
            near.push((haversine_km(target, s.location)?, i));
        }
    }
    if near.is_empty() {
        return Err(Error::NoStations);
    }
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| stations[a.1].id.cmp(stations[b.1].id)));
    near.truncate(params.neighbors);

    if near[0].0 < COINCIDENT_KM {
        return Ok(vec![(near[0].1, 1.0)]);
    }
    let raw: Vec<f64> = near.iter().map(|(d, _)| d.powf(-params.power)).collect();
    let total: f64 = raw.iter().sum();
    Ok(near.iter().zip(raw).map(|(&(_, i), w)| (i, w / total)).collect())
}

/// Inverse-distance-weighted estimate at `target`.
pub fn idw(target: LatLon, stations: &[StationValue<'_>], params: &IdwParams) -> Result<f64> {
    let weights = idw_weights(target, stations, params)?;
    Ok(weighted(&weights, stations, |s| s.value.unwrap()))
}

pub(crate) fn weighted<T>(weights: &[(usize, f64)], items: &[T], value: impl Fn(&T) -> f64) -> f64 {
    if let [(i, _)] = weights {
        return value(&items[*i]);
    }
    weights.iter().map(|&(i, w)| w * value(&items[i])).sum()
}
