//! Cross-checking two geocoding sources on the same query list.

use serde::{Deserialize, Serialize};

use super::{GeoPoint, GeocodeEntry, GeocodeError};

/// Default agreement tolerance in degrees.
pub const DEFAULT_TOLERANCE_DEG: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    Agree,
    Disagree,
    OneSided,
    BothUnresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconciled {
    pub query: String,
    pub verdict: Agreement,
    /// Chebyshev distance when both sources resolved.
    pub distance_deg: Option<f64>,
    /// The point to use: the primary's when it resolved, else the secondary's.
    pub adopted: Option<GeoPoint>,
    pub adopted_from: Option<String>,
}

/// Compare `primary` and `secondary` entry by entry. Both lists must carry the
/// same queries in the same order.
pub fn reconcile_sources(
    primary: &[GeocodeEntry],
    secondary: &[GeocodeEntry],
    tolerance_deg: f64,
) -> Result<Vec<Reconciled>, GeocodeError> {
    if primary.len() != secondary.len() {
        return Err(GeocodeError::Alignment(format!(
            "source lists differ in length: {} vs {}",
            primary.len(),
            secondary.len()
        )));
    }
    primary
        .iter()
        .zip(secondary)
        .enumerate()
        .map(|(i, (a, b))| {
            if a.query != b.query {
                return Err(GeocodeError::Alignment(format!(
                    "position {i}: {:?} vs {:?}",
                    a.query, b.query
                )));
            }
            let (verdict, distance, adopted, from) = match (a.point, b.point) {
                (Some(pa), Some(pb)) => {
                    let d = pa.chebyshev(&pb);
                    let v = if d <= tolerance_deg { Agreement::Agree } else { Agreement::Disagree };
                    (v, Some(d), Some(pa), Some(&a.source))
                }
                (Some(pa), None) => (Agreement::OneSided, None, Some(pa), Some(&a.source)),
                (None, Some(pb)) => (Agreement::OneSided, None, Some(pb), Some(&b.source)),
                (None, None) => (Agreement::BothUnresolved, None, None, None),
            };
            Ok(Reconciled {
                query: a.query.clone(),
                verdict,
                distance_deg: distance,
                adopted,
                adopted_from: from.cloned(),
            })
        })
        .collect()
}

/// Entries carrying the adopted point of each reconciliation, aligned with the input.
pub fn adopted_entries(primary: &[GeocodeEntry], reconciled: &[Reconciled]) -> Vec<GeocodeEntry> {
    primary
        .iter()
        .zip(reconciled)
        .map(|(e, r)| GeocodeEntry {
            query: e.query.clone(),
            point: r.adopted,
            source: r.adopted_from.clone().unwrap_or_else(|| e.source.clone()),
            resolved_at: e.resolved_at.clone(),
        })
        .collect()
}
