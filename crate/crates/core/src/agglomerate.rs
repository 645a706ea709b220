//! Agglomerating geocoded city occurrences into city clusters.
//!
//! Occurrences with the same normalized name, country and coordinate form a
//! proto-group. Two proto-groups are linked when they share a country, their
//! names are variants of each other and their points are within the merge radius
//! (Chebyshev distance in degrees). Clusters are the connected components of that
//! relation, so a larger radius can only join clusters, never split them.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geocode::GeoPoint;
use crate::ingest::CityOccurrence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeRadius {
    /// Option 1, r = 0.01°.
    Detailed,
    /// Option 2, r = 0.1°.
    Intermediate,
    /// Option 3, r = 0.3°.
    Metropolitan,
    Degrees(f64),
}

impl Default for MergeRadius {
    fn default() -> Self {
        MergeRadius::Intermediate
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MergeError {
    #[error("merge option must be 1, 2 or 3, got {0}")]
    BadOption(String),
    #[error("merge radius must be a positive number of degrees, got {0}")]
    BadRadius(String),
    #[error("occurrence {index} ({query}) has no coordinate")]
    MissingCoordinate { index: usize, query: String },
}

impl MergeRadius {
    pub fn from_option(option: u8) -> Result<Self, MergeError> {
        match option {
            1 => Ok(MergeRadius::Detailed),
            2 => Ok(MergeRadius::Intermediate),
            3 => Ok(MergeRadius::Metropolitan),
            o => Err(MergeError::BadOption(o.to_string())),
        }
    }

    pub fn from_degrees(deg: f64) -> Result<Self, MergeError> {
        if deg.is_finite() && deg > 0.0 {
            Ok(MergeRadius::Degrees(deg))
        } else {
            Err(MergeError::BadRadius(deg.to_string()))
        }
    }

    pub fn degrees(&self) -> f64 {
        match self {
            MergeRadius::Detailed => 0.01,
            MergeRadius::Intermediate => 0.1,
            MergeRadius::Metropolitan => 0.3,
            MergeRadius::Degrees(d) => *d,
        }
    }
}

impl FromStr for MergeRadius {
    type Err = MergeError;

    /// `1`, `2`, `3`, or a radius in degrees such as `0.05deg`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(d) = s.strip_suffix("deg") {
            let deg: f64 = d.trim().parse().map_err(|_| MergeError::BadRadius(s.to_string()))?;
            return Self::from_degrees(deg);
        }
        match s {
            "1" | "detailed" => Ok(MergeRadius::Detailed),
            "2" | "intermediate" => Ok(MergeRadius::Intermediate),
            "3" | "metropolitan" => Ok(MergeRadius::Metropolitan),
            _ => Err(MergeError::BadOption(s.to_string())),
        }
    }
}

impl fmt::Display for MergeRadius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MergeRadius::Detailed => f.write_str("1"),
            MergeRadius::Intermediate => f.write_str("2"),
            MergeRadius::Metropolitan => f.write_str("3"),
            MergeRadius::Degrees(d) => write!(f, "{d}deg"),
        }
    }
}

/// Whether two normalized names are spellings of the same place: equal, one
/// edit apart, or equal once non-ASCII letters are dropped from one of them.
///
/// `"zurich"`/`"zrich"` fold; `"munich"`/`"munchen"` do not.
pub fn fold_name_variants(a: &str, b: &str) -> bool {
    if a == b {
        return true;
    }
    if strsim::levenshtein(a, b) <= 1 {
        return true;
    }
    let ascii = |s: &str| s.chars().filter(char::is_ascii).collect::<String>();
    ascii(a) == b || ascii(b) == a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityCluster {
    /// Name of the largest proto-group; ties broken lexicographically.
    pub canonical_name: String,
    pub country: String,
    /// Coordinate of the largest proto-group.
    pub anchor: GeoPoint,
    /// Number of occurrences: the city's count Xᵢ.
    pub count: usize,
    pub members: Vec<CityOccurrence>,
}

impl CityCluster {
    /// Distinct member names, sorted.
    pub fn member_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.members.iter().map(|m| m.city.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names
    }
}

struct ProtoGroup {
    name: String,
    country: String,
    point: GeoPoint,
    members: Vec<CityOccurrence>,
}

fn group_order(a: &ProtoGroup, b: &ProtoGroup) -> Ordering {
    b.members
        .len()
        .cmp(&a.members.len())
        .then_with(|| a.name.cmp(&b.name))
        .then_with(|| a.country.cmp(&b.country))
        .then_with(|| a.point.latitude.total_cmp(&b.point.latitude))
        .then_with(|| a.point.longitude.total_cmp(&b.point.longitude))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Merge located occurrences into clusters at `radius`, sorted by count
/// descending (then name, country, anchor). The result does not depend on the
/// order of `occurrences`.
pub fn merge_occurrences(
    occurrences: &[CityOccurrence],
    radius: MergeRadius,
) -> Result<Vec<CityCluster>, MergeError> {
    let r = radius.degrees();

    let mut keyed: BTreeMap<(&str, &str, u64, u64), Vec<&CityOccurrence>> = BTreeMap::new();
    for (index, occ) in occurrences.iter().enumerate() {
        let p = occ
            .coordinate
            .ok_or_else(|| MergeError::MissingCoordinate { index, query: occ.query() })?;
        // -0.0 and 0.0 are the same place
        let bits = |v: f64| if v == 0.0 { 0 } else { v.to_bits() };
        keyed
            .entry((&occ.city, &occ.country, bits(p.latitude), bits(p.longitude)))
            .or_default()
            .push(occ);
    }

    let mut groups: Vec<ProtoGroup> = keyed
        .into_values()
        .map(|occs| {
            let mut members: Vec<CityOccurrence> = occs.into_iter().cloned().collect();
            members.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
            ProtoGroup {
                name: members[0].city.clone(),
                country: members[0].country.clone(),
                point: members[0].coordinate.unwrap(),
                members,
            }
        })
        .collect();
    groups.sort_by(group_order);

    let mut parent: Vec<usize> = (0..groups.len()).collect();
    let mut by_country: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_country.entry(&g.country).or_default().push(i);
    }
    for idx in by_country.values() {
        for (k, &i) in idx.iter().enumerate() {
            for &j in &idx[k + 1..] {
                let (gi, gj) = (&groups[i], &groups[j]);
                if gi.point.chebyshev(&gj.point) <= r && fold_name_variants(&gi.name, &gj.name) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    // the root is always the earliest group in sorted order
                    if ri < rj {
                        parent[rj] = ri;
                    } else if rj < ri {
                        parent[ri] = rj;
                    }
                }
            }
        }
    }

    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..groups.len() {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(i);
    }

    let mut clusters: Vec<CityCluster> = components
        .into_iter()
        .map(|(root, idx)| {
            let head = &groups[root];
            let members: Vec<CityOccurrence> = idx
                .iter()
                .flat_map(|&i| groups[i].members.iter().cloned())
                .collect();
            CityCluster {
                canonical_name: head.name.clone(),
                country: head.country.clone(),
                anchor: head.point,
                count: members.len(),
                members,
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.canonical_name.cmp(&b.canonical_name))
            .then_with(|| a.country.cmp(&b.country))
            .then_with(|| a.anchor.latitude.total_cmp(&b.anchor.latitude))
            .then_with(|| a.anchor.longitude.total_cmp(&b.anchor.longitude))
    });
    Ok(clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn occ(paper: &str, city: &str, country: &str, lat: f64, lon: f64) -> CityOccurrence {
        CityOccurrence {
            paper_id: paper.into(),
            city: city.into(),
            country: country.into(),
            coordinate: Some(GeoPoint::new(lat, lon).unwrap()),
        }
    }

    #[test]
    fn radius_options() {
        assert_eq!(MergeRadius::from_option(1).unwrap().degrees(), 0.01);
        assert_eq!(MergeRadius::from_option(2).unwrap().degrees(), 0.1);
        assert_eq!(MergeRadius::from_option(3).unwrap().degrees(), 0.3);
        assert!(MergeRadius::from_option(4).is_err());
        assert_eq!("0.05deg".parse::<MergeRadius>().unwrap().degrees(), 0.05);
        assert!("-1deg".parse::<MergeRadius>().is_err());
        assert_eq!(MergeRadius::default(), MergeRadius::Intermediate);
    }

    #[test]
    fn name_variants() {
        assert!(fold_name_variants("zurich", "zrich"));
        assert!(!fold_name_variants("munich", "munchen"));
        assert!(fold_name_variants("paris", "paris"));
        assert!(fold_name_variants("zrich", "zürich"));
        assert!(!fold_name_variants("vienna", "venice"));
    }

    #[test]
    fn radius_decides_merging() {
        let occs = vec![occ("a", "x", "c", 10.0, 10.0), occ("b", "x", "c", 10.05, 10.0)];
        assert_eq!(merge_occurrences(&occs, MergeRadius::Detailed).unwrap().len(), 2);
        let one = merge_occurrences(&occs, MergeRadius::Intermediate).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].count, 2);
    }

    #[test]
    fn spelling_variants_merge() {
        let occs = vec![
            occ("a", "zurich", "switzerland", 47.37, 8.54),
            occ("b", "zurich", "switzerland", 47.37, 8.54),
            occ("c", "zrich", "switzerland", 47.39, 8.54),
        ];
        let c = merge_occurrences(&occs, MergeRadius::Intermediate).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].canonical_name, "zurich");
        assert_eq!(c[0].count, 3);
        assert_eq!(c[0].member_names(), vec!["zrich", "zurich"]);
    }

    #[test]
    fn countries_never_merge() {
        let occs = vec![occ("a", "cambridge", "uk", 52.2, 0.12), occ("b", "cambridge", "usa", 52.2, 0.12)];
        assert_eq!(merge_occurrences(&occs, MergeRadius::Metropolitan).unwrap().len(), 2);
    }

    #[test]
    fn different_names_never_merge() {
        let occs = vec![occ("a", "amsterdam", "nl", 52.37, 4.9), occ("b", "amstelveen", "nl", 52.3, 4.86)];
        assert_eq!(merge_occurrences(&occs, MergeRadius::Metropolitan).unwrap().len(), 2);
    }

    #[test]
    fn anchor_is_largest_group() {
        let occs = vec![
            occ("a", "x", "c", 10.0, 10.0),
            occ("b", "x", "c", 10.02, 10.0),
            occ("c", "x", "c", 10.02, 10.0),
        ];
        let c = merge_occurrences(&occs, MergeRadius::Intermediate).unwrap();
        assert_eq!(c[0].anchor, GeoPoint::new(10.02, 10.0).unwrap());
    }

    #[test]
    fn leader_counterexample_stays_monotone() {
        // a first-come leader pass yields 2 clusters at r=0.2 but 3 at r=0.3 here
        let mut occs = Vec::new();
        let mut push = |n: usize, lat: f64, lon: f64| {
            for i in 0..n {
                occs.push(occ(&format!("{lat}-{lon}-{i}"), "x", "c", lat + 10.0, lon + 10.0));
            }
        };
        push(4, 0.0, 0.0);
        push(3, 0.25, 0.0);
        push(2, 0.4, 0.2);
        push(1, 0.4, -0.2);
        let small = merge_occurrences(&occs, MergeRadius::Degrees(0.2)).unwrap().len();
        let large = merge_occurrences(&occs, MergeRadius::Degrees(0.3)).unwrap().len();
        assert!(large <= small, "{large} > {small}");
    }

    #[test]
    fn missing_coordinate_is_rejected() {
        let mut o = occ("a", "x", "c", 1.0, 1.0);
        o.coordinate = None;
        assert!(matches!(
            merge_occurrences(&[o], MergeRadius::Detailed),
            Err(MergeError::MissingCoordinate { index: 0, .. })
        ));
    }

    #[test]
    fn empty_input() {
        assert!(merge_occurrences(&[], MergeRadius::Detailed).unwrap().is_empty());
    }

    fn occurrence_set() -> impl Strategy<Value = Vec<CityOccurrence>> {
        let names = prop::sample::select(vec!["zurich", "zrich", "paris", "pari", "lyon"]);
        let countries = prop::sample::select(vec!["a", "b"]);
        prop::collection::vec((names, countries, 0u32..40, 0u32..40), 0..60).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (n, c, la, lo))| {
                    occ(&format!("p{i}"), n, c, 40.0 + la as f64 * 0.02, 5.0 + lo as f64 * 0.02)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn members_share_country_and_chain_within_radius(occs in occurrence_set()) {
            let r = MergeRadius::Intermediate;
            for c in merge_occurrences(&occs, r).unwrap() {
                prop_assert_eq!(c.count, c.members.len());
                prop_assert!(c.members.iter().all(|m| m.country == c.country));
                // every member is linked to the anchor through points at most r apart
                let pts: Vec<GeoPoint> = c.members.iter().map(|m| m.coordinate.unwrap()).collect();
                let mut reached = vec![false; pts.len()];
                let mut stack: Vec<GeoPoint> = vec![c.anchor];
                while let Some(p) = stack.pop() {
                    for (i, q) in pts.iter().enumerate() {
                        if !reached[i] && p.chebyshev(q) <= r.degrees() {
                            reached[i] = true;
                            stack.push(*q);
                        }
                    }
                }
                prop_assert!(reached.iter().all(|&x| x));
            }
        }

        #[test]
        fn re_merging_anchors_is_stable(occs in occurrence_set()) {
            let r = MergeRadius::Intermediate;
            let clusters = merge_occurrences(&occs, r).unwrap();
            let anchors: Vec<CityOccurrence> = clusters
                .iter()
                .enumerate()
                .flat_map(|(k, c)| (0..c.count).map(move |i| CityOccurrence {
                    paper_id: format!("{k}-{i}"),
                    city: c.canonical_name.clone(),
                    country: c.country.clone(),
                    coordinate: Some(c.anchor),
                }))
                .collect();
            prop_assert_eq!(merge_occurrences(&anchors, r).unwrap().len(), clusters.len());
        }
    }
}
