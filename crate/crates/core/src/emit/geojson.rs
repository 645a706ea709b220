//! GeoJSON FeatureCollection of Point features, one per circle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{circle_label, round6, EmitError, MapDocument};
use crate::classify::PercentileClass;

#[derive(Serialize, Deserialize)]
struct Collection {
    #[serde(rename = "type")]
    kind: String,
    title: String,
    generated_at: String,
    parameters: BTreeMap<String, String>,
    features: Vec<Feature>,
}

#[derive(Serialize, Deserialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: String,
    geometry: Geometry,
    properties: GeoJsonCircle,
}

#[derive(Serialize, Deserialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: String,
    /// `[longitude, latitude]`.
    coordinates: Vec<f64>,
}

/// Properties carried by each feature, plus its position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoJsonCircle {
    pub name: String,
    pub country: String,
    pub label: String,
    pub count: usize,
    pub percentile: f64,
    pub class: PercentileClass,
    pub color: String,
    pub color_name: String,
    pub display_radius: f64,
    #[serde(skip)]
    pub longitude: f64,
    #[serde(skip)]
    pub latitude: f64,
}

pub fn emit_geojson(doc: &MapDocument) -> Vec<u8> {
    let features = doc
        .circles
        .iter()
        .map(|c| Feature {
            kind: "Feature".into(),
            geometry: Geometry {
                kind: "Point".into(),
                coordinates: vec![round6(c.cluster.anchor.longitude), round6(c.cluster.anchor.latitude)],
            },
            properties: GeoJsonCircle {
                name: c.cluster.canonical_name.clone(),
                country: c.cluster.country.clone(),
                label: circle_label(c),
                count: c.cluster.count,
                percentile: c.percentile,
                class: c.class,
                color: c.class.color_hex().into(),
                color_name: c.class.color_name().into(),
                display_radius: c.display_radius,
                longitude: 0.0,
                latitude: 0.0,
            },
        })
        .collect();
    let collection = Collection {
        kind: "FeatureCollection".into(),
        title: doc.title.clone(),
        generated_at: doc.generated_at.clone(),
        parameters: doc.parameters.clone(),
        features,
    };
    let mut out = serde_json::to_vec_pretty(&collection).expect("map document serializes");
    out.push(b'\n');
    out
}

/// Parse a FeatureCollection written by [`emit_geojson`] back into circle properties.
pub fn parse_geojson(text: &str) -> Result<Vec<GeoJsonCircle>, EmitError> {
    let invalid = |message: String| EmitError::Invalid { format: "geojson", line: 0, message };
    let c: Collection = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
    if c.kind != "FeatureCollection" {
        return Err(invalid(format!("top-level type {:?}", c.kind)));
    }
    c.features
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            if f.kind != "Feature" || f.geometry.kind != "Point" {
                return Err(invalid(format!("feature {i} is not a Point feature")));
            }
            let [lon, lat] = f.geometry.coordinates[..] else {
                return Err(invalid(format!("feature {i}: expected [lon, lat]")));
            };
            if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
                return Err(invalid(format!("feature {i}: coordinate out of range")));
            }
            Ok(GeoJsonCircle { longitude: lon, latitude: lat, ..f.properties })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;

    #[test]
    fn empty_collection() {
        let text = String::from_utf8(emit_geojson(&doc(vec![]))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["type"], "FeatureCollection");
        assert_eq!(v["features"].as_array().unwrap().len(), 0);
        assert!(parse_geojson(&text).unwrap().is_empty());
    }

    #[test]
    fn axis_order_is_lon_lat() {
        let text = String::from_utf8(emit_geojson(&doc(vec![circle("vienna", "at", 48.2, 16.37, 12, 92.0)]))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let coords = &v["features"][0]["geometry"]["coordinates"];
        assert_eq!(coords[0].as_f64(), Some(16.37));
        assert_eq!(coords[1].as_f64(), Some(48.2));
        assert_eq!(v["parameters"]["merge"], "2");
    }

    #[test]
    fn round_trip() {
        let d = doc(vec![
            circle("vienna", "at", 48.2, 16.37, 12, 92.0),
            circle("paris", "fr", 48.8566, 2.3522, 40, 99.5),
            circle("bari", "it", 41.117_143, 16.871_871, 1, 0.0),
        ]);
        let back = parse_geojson(std::str::from_utf8(&emit_geojson(&d)).unwrap()).unwrap();
        assert_eq!(back.len(), 3);
        for (c, g) in d.circles.iter().zip(&back) {
            assert_eq!(g.name, c.cluster.canonical_name);
            assert_eq!(g.country, c.cluster.country);
            assert_eq!(g.count, c.cluster.count);
            assert_eq!(g.percentile, c.percentile);
            assert_eq!(g.class, c.class);
            assert_eq!(g.display_radius, c.display_radius);
            assert_eq!(g.latitude, round6(c.cluster.anchor.latitude));
        }
    }

    #[test]
    fn rejects_non_geojson() {
        assert!(parse_geojson("{}").is_err());
        assert!(parse_geojson(r#"{"type":"Feature","title":"","generated_at":"","parameters":{},"features":[]}"#).is_err());
    }
}
