//! Check-in ingestion: TSV parsing, root-category mapping, home inference and
//! the hour / home-distance buckets used as context values.

mod category;
mod geo;
mod parse;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use category::{RootCategoryMap, DEFAULT_ROOT_LABELS};
pub use geo::{
    distance_bucket, haversine_km, hour_bucket, infer_home, infer_homes, HomeConfig,
    DISTANCE_BUCKETS, EARTH_RADIUS_KM,
};
pub use parse::{
    format_utc_time, parse_checkins, write_canonical, write_tsv, ColumnSchema, ParseOptions,
    ParseOutcome, ParseStats,
};

/// A point on the globe in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(Error::InvalidConfig(format!("latitude {latitude} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::InvalidConfig(format!("longitude {longitude} outside [-180, 180]")));
        }
        Ok(Self { latitude, longitude })
    }
}

/// One timestamped, geolocated, categorized user event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckIn {
    pub user_id: String,
    pub poi_id: String,
    pub category_id: String,
    pub category_name: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Offset of local time from UTC, when the source carries one.
    pub tz_offset_minutes: Option<i32>,
    pub utc_time: DateTime<Utc>,
}

impl CheckIn {
    /// Wall-clock time of the check-in. Without an offset the UTC time is
    /// taken to be local already.
    pub fn local_time(&self) -> NaiveDateTime {
        let offset = Duration::minutes(i64::from(self.tz_offset_minutes.unwrap_or(0)));
        (self.utc_time + offset).naive_utc()
    }

    pub fn hour(&self) -> u8 {
        self.local_time().hour() as u8
    }

    pub fn location(&self) -> GeoPoint {
        GeoPoint { latitude: self.latitude, longitude: self.longitude }
    }
}
