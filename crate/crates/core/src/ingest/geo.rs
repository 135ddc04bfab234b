use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::{CheckIn, GeoPoint};
use crate::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Number of home-distance levels: <1 km, [1, 10), [10, 30), >=30 km.
pub const DISTANCE_BUCKETS: usize = 4;

/// Great-circle distance in kilometres.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.latitude.to_radians(), b.latitude.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.longitude - a.longitude).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Lower bounds are inclusive.
pub fn distance_bucket(km: f64) -> Result<usize> {
    if km.is_nan() || km < 0.0 {
        return Err(Error::NegativeDistance(km));
    }
    Ok(match km {
        d if d < 1.0 => 0,
        d if d < 10.0 => 1,
        d if d < 30.0 => 2,
        _ => 3,
    })
}

/// Local hour of day after applying `tz_offset_minutes`.
pub fn hour_bucket(t: DateTime<Utc>, tz_offset_minutes: i32) -> usize {
    (t + Duration::minutes(i64::from(tz_offset_minutes))).hour() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomeConfig {
    /// First local hour of the night window.
    pub night_start: u8,
    /// First local hour after the night window. May wrap past midnight.
    pub night_end: u8,
    /// Grid cell edge in degrees.
    pub cell_deg: f64,
}

impl Default for HomeConfig {
    fn default() -> Self {
        Self { night_start: 20, night_end: 8, cell_deg: 0.01 }
    }
}

impl HomeConfig {
    pub fn is_night(&self, hour: u8) -> bool {
        if self.night_start <= self.night_end {
            (self.night_start..self.night_end).contains(&hour)
        } else {
            hour >= self.night_start || hour < self.night_end
        }
    }

    fn cell(&self, p: GeoPoint) -> (i64, i64) {
        ((p.latitude / self.cell_deg).floor() as i64, (p.longitude / self.cell_deg).floor() as i64)
    }
}

/// Centroid of the modal grid cell over `points`; ties go to the smallest cell.
fn modal_cell_centroid<'a>(cfg: &HomeConfig, points: impl Iterator<Item = &'a CheckIn>) -> Option<GeoPoint> {
    let mut cells: BTreeMap<(i64, i64), (usize, f64, f64)> = BTreeMap::new();
    for c in points {
        let e = cells.entry(cfg.cell(c.location())).or_insert((0, 0.0, 0.0));
        e.0 += 1;
        e.1 += c.latitude;
        e.2 += c.longitude;
    }
    let mut best: Option<(usize, f64, f64)> = None;
    for &v in cells.values() {
        if best.is_none_or(|b| v.0 > b.0) {
            best = Some(v);
        }
    }
    best.map(|(n, lat, lon)| GeoPoint { latitude: lat / n as f64, longitude: lon / n as f64 })
}

/// Infers one user's home as the centroid of the most visited grid cell
/// during the night window, falling back to all check-ins when the user has
/// none at night.
pub fn infer_home(checkins: &[CheckIn], cfg: &HomeConfig) -> Result<GeoPoint> {
    let Some(first) = checkins.first() else {
        return Err(Error::NoCheckIns(String::new()));
    };
    if let Some(other) = checkins.iter().find(|c| c.user_id != first.user_id) {
        return Err(Error::InvalidConfig(format!(
            "home inference over mixed users {:?} and {:?}",
            first.user_id, other.user_id
        )));
    }
    let night = modal_cell_centroid(cfg, checkins.iter().filter(|c| cfg.is_night(c.hour())));
    Ok(night.or_else(|| modal_cell_centroid(cfg, checkins.iter())).expect("non-empty input"))
}

/// Home of every user in `checkins`, keyed by user id.
pub fn infer_homes(checkins: &[CheckIn], cfg: &HomeConfig) -> BTreeMap<String, GeoPoint> {
    let mut by_user: BTreeMap<&str, Vec<CheckIn>> = BTreeMap::new();
    for c in checkins {
        by_user.entry(&c.user_id).or_default().push(c.clone());
    }
    by_user
        .into_iter()
        .map(|(u, cs)| (u.to_string(), infer_home(&cs, cfg).expect("grouped users are non-empty")))
        .collect()
}
