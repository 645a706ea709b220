use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A resolved coordinate in degrees. `(0, 0)` is the geocoders' "not found"
/// answer and can never be constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    latitude: f64,
    longitude: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoPointError {
    #[error("coordinate ({0}, {1}) is out of bounds")]
    OutOfBounds(f64, f64),
    #[error("(0, 0) is the unresolved sentinel")]
    Sentinel,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoPointError;
    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.latitude, raw.longitude)
    }
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self, GeoPointError> {
        if !(latitude.is_finite()
            && longitude.is_finite()
            && (-90.0..=90.0).contains(&latitude)
            && (-180.0..=180.0).contains(&longitude))
        {
            return Err(GeoPointError::OutOfBounds(latitude, longitude));
        }
        if latitude == 0.0 && longitude == 0.0 {
            return Err(GeoPointError::Sentinel);
        }
        Ok(GeoPoint { latitude, longitude })
    }

    /// Interpret a raw geocoder answer: the sentinel and anything out of bounds
    /// become `None`.
    pub fn from_response(latitude: f64, longitude: f64) -> Option<Self> {
        GeoPoint::new(latitude, longitude).ok()
    }

    /// Chebyshev distance in raw degrees: `max(|Δlat|, |Δlon|)`.
    pub fn chebyshev(&self, other: &GeoPoint) -> f64 {
        (self.latitude - other.latitude)
            .abs()
            .max((self.longitude - other.longitude).abs())
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}\t{:.6}", self.latitude, self.longitude)
    }
}
