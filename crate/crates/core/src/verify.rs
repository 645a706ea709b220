//! Map checks: recount papers per cluster, compare anchors with a reference
//! gazetteer, and list clusters whose names may collide.
//!
//! The count oracle works from the sliced corpus alone. It re-parses every
//! address of every selected paper and counts the distinct papers that name one
//! of the cluster's spellings in the cluster's country. Mapped counts are
//! occurrences, so a paper with two distinct departments in the same city is
//! mapped twice and recounted once; that surplus is allowed exactly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::agglomerate::{fold_name_variants, CityCluster};
use crate::geocode::{Agreement, Gazetteer, GeoPoint, Reconciled};
use crate::ingest::parse_address;
use crate::topslice::SliceResult;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("cluster {cluster:?} references paper {paper_id:?}, which is not in the sliced corpus")]
    Integrity { cluster: String, paper_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Unchecked,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Unchecked => "UNCHECKED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountCheck {
    pub cluster: String,
    pub country: String,
    pub mapped_count: usize,
    pub oracle_count: usize,
    /// `mapped_count - oracle_count`; negative means occurrences were lost.
    pub surplus: i64,
    /// Distinct same-cluster addresses beyond the first, summed over papers.
    pub allowance: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionCheck {
    pub cluster: String,
    pub country: String,
    pub anchor: GeoPoint,
    pub reference_point: Option<GeoPoint>,
    pub distance_deg: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NameCollision {
    /// Canonical name of the first cluster in the group.
    pub name: String,
    /// `"name, country"` of every cluster in the group.
    pub clusters: Vec<String>,
    /// Distinct countries involved, sorted.
    pub countries: Vec<String>,
    /// At least two clusters share a country.
    pub same_country: bool,
}

fn label(c: &CityCluster) -> String {
    format!("{}, {}", c.canonical_name, c.country)
}

/// Recount every cluster against the sliced corpus.
pub fn check_counts(clusters: &[CityCluster], corpus: &SliceResult) -> Result<Vec<CountCheck>, VerifyError> {
    let selected: HashSet<&str> = corpus.selected.iter().map(|p| p.paper_id.as_str()).collect();

    // (city, country) -> paper -> number of distinct addresses naming it
    let mut index: HashMap<(String, String), BTreeMap<&str, usize>> = HashMap::new();
    for paper in &corpus.selected {
        let mut seen = HashSet::new();
        for raw in &paper.affiliations_raw {
            if !seen.insert(raw.as_str()) {
                continue;
            }
            if let Ok(addr) = parse_address(&paper.paper_id, raw) {
                *index.entry((addr.city, addr.country)).or_default().entry(&paper.paper_id).or_default() += 1;
            }
        }
    }

    clusters
        .iter()
        .map(|c| {
            if let Some(m) = c.members.iter().find(|m| !selected.contains(m.paper_id.as_str())) {
                return Err(VerifyError::Integrity { cluster: label(c), paper_id: m.paper_id.clone() });
            }
            let mut per_paper: BTreeMap<&str, usize> = BTreeMap::new();
            for name in c.member_names() {
                if let Some(papers) = index.get(&(name.to_string(), c.country.clone())) {
                    for (&paper, &n) in papers {
                        *per_paper.entry(paper).or_default() += n;
                    }
                }
            }
            let oracle_count = per_paper.len();
            let allowance: usize = per_paper.values().map(|n| n - 1).sum();
            let surplus = c.count as i64 - oracle_count as i64;
            let verdict = if surplus >= 0 && surplus as usize <= allowance { Verdict::Pass } else { Verdict::Fail };
            Ok(CountCheck {
                cluster: label(c),
                country: c.country.clone(),
                mapped_count: c.count,
                oracle_count,
                surplus,
                allowance,
                verdict,
            })
        })
        .collect()
}

/// Compare each cluster's anchor with the gazetteer entry for its canonical
/// name; clusters without an entry are unchecked.
pub fn check_positions(clusters: &[CityCluster], gazetteer: &Gazetteer, tolerance_deg: f64) -> Vec<PositionCheck> {
    clusters
        .iter()
        .map(|c| {
            let reference_point = gazetteer.lookup(&c.canonical_name, &c.country);
            let distance_deg = reference_point.map(|r| c.anchor.chebyshev(&r));
            let verdict = match distance_deg {
                None => Verdict::Unchecked,
                Some(d) if d <= tolerance_deg => Verdict::Pass,
                Some(_) => Verdict::Fail,
            };
            PositionCheck {
                cluster: label(c),
                country: c.country.clone(),
                anchor: c.anchor,
                reference_point,
                distance_deg,
                verdict,
            }
        })
        .collect()
}

/// Groups of clusters whose canonical names fold together. Groups with two
/// clusters in one country come first.
pub fn check_name_collisions(clusters: &[CityCluster]) -> Vec<NameCollision> {
    let mut parent: Vec<usize> = (0..clusters.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..clusters.len() {
        for j in i + 1..clusters.len() {
            if fold_name_variants(&clusters[i].canonical_name, &clusters[j].canonical_name) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..clusters.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }

    let mut out: Vec<NameCollision> = groups
        .into_values()
        .filter(|g| g.len() > 1)
        .map(|g| {
            let mut members: Vec<&CityCluster> = g.iter().map(|&i| &clusters[i]).collect();
            members.sort_by(|a, b| {
                (&a.canonical_name, &a.country, a.anchor.latitude, a.anchor.longitude)
                    .partial_cmp(&(&b.canonical_name, &b.country, b.anchor.latitude, b.anchor.longitude))
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut countries: Vec<String> = members.iter().map(|c| c.country.clone()).collect();
            countries.sort();
            let total = countries.len();
            countries.dedup();
            NameCollision {
                name: members[0].canonical_name.clone(),
                clusters: members.iter().map(|c| label(c)).collect(),
                same_country: countries.len() < total,
                countries,
            }
        })
        .collect();
    out.sort_by(|a, b| b.same_country.cmp(&a.same_country).then_with(|| a.name.cmp(&b.name)));
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerificationReport {
    /// Effective run configuration, echoed at the top of the report.
    pub parameters: BTreeMap<String, String>,
    pub count_checks: Vec<CountCheck>,
    pub position_checks: Vec<PositionCheck>,
    pub name_collisions: Vec<NameCollision>,
    pub dropped_unresolved: usize,
    pub unparseable_addresses: usize,
    /// Queries on which two geocoding sources disagreed beyond tolerance.
    pub source_disagreements: Vec<Reconciled>,
}

/// Inputs for [`verify`] beyond the clusters and corpus.
#[derive(Debug, Clone, Default)]
pub struct VerifyInputs<'a> {
    pub gazetteer: Option<&'a Gazetteer>,
    pub tolerance_deg: f64,
    pub dropped_unresolved: usize,
    pub unparseable_addresses: usize,
    pub reconciled: &'a [Reconciled],
}

/// Run every check and assemble the report.
pub fn verify(
    clusters: &[CityCluster],
    corpus: &SliceResult,
    inputs: &VerifyInputs<'_>,
) -> Result<VerificationReport, VerifyError> {
    Ok(VerificationReport {
        parameters: BTreeMap::new(),
        count_checks: check_counts(clusters, corpus)?,
        position_checks: inputs
            .gazetteer
            .map(|g| check_positions(clusters, g, inputs.tolerance_deg))
            .unwrap_or_default(),
        name_collisions: check_name_collisions(clusters),
        dropped_unresolved: inputs.dropped_unresolved,
        unparseable_addresses: inputs.unparseable_addresses,
        source_disagreements: inputs
            .reconciled
            .iter()
            .filter(|r| r.verdict == Agreement::Disagree)
            .cloned()
            .collect(),
    })
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record<'a> {
    Parameters { values: &'a BTreeMap<String, String> },
    CountCheck(&'a CountCheck),
    PositionCheck(&'a PositionCheck),
    NameCollision(&'a NameCollision),
    SourceDisagreement(&'a Reconciled),
    Summary {
        clusters: usize,
        count_failures: usize,
        position_failures: usize,
        unchecked_positions: usize,
        name_collisions: usize,
        dropped_unresolved: usize,
        unparseable_addresses: usize,
        passed: bool,
    },
}

impl VerificationReport {
    pub fn count_failures(&self) -> usize {
        self.count_checks.iter().filter(|c| c.verdict == Verdict::Fail).count()
    }

    pub fn position_failures(&self) -> usize {
        self.position_checks.iter().filter(|c| c.verdict == Verdict::Fail).count()
    }

    /// Any fail verdict. Unchecked positions, collisions and disagreements are
    /// findings, not failures.
    pub fn has_failures(&self) -> bool {
        self.count_failures() + self.position_failures() > 0
    }

    /// One JSON object per line, ending with a summary record.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        let mut push = |r: Record<'_>| {
            out.push_str(&serde_json::to_string(&r).expect("report serializes"));
            out.push('\n');
        };
        if !self.parameters.is_empty() {
            push(Record::Parameters { values: &self.parameters });
        }
        self.count_checks.iter().for_each(|c| push(Record::CountCheck(c)));
        self.position_checks.iter().for_each(|c| push(Record::PositionCheck(c)));
        self.name_collisions.iter().for_each(|c| push(Record::NameCollision(c)));
        self.source_disagreements.iter().for_each(|c| push(Record::SourceDisagreement(c)));
        push(Record::Summary {
            clusters: self.count_checks.len(),
            count_failures: self.count_failures(),
            position_failures: self.position_failures(),
            unchecked_positions: self.position_checks.iter().filter(|c| c.verdict == Verdict::Unchecked).count(),
            name_collisions: self.name_collisions.len(),
            dropped_unresolved: self.dropped_unresolved,
            unparseable_addresses: self.unparseable_addresses,
            passed: !self.has_failures(),
        });
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.parameters.is_empty() {
            let _ = writeln!(out, "Parameters");
            for (k, v) in &self.parameters {
                let _ = writeln!(out, "  {k} = {v}");
            }
        }
        let _ = writeln!(out, "Count checks ({} clusters)", self.count_checks.len());
        for c in &self.count_checks {
            let _ = writeln!(
                out,
                "  {:<9} {}: mapped {}, oracle {}, surplus {} (allowed {})",
                c.verdict.to_string(),
                c.cluster,
                c.mapped_count,
                c.oracle_count,
                c.surplus,
                c.allowance
            );
        }
        let _ = writeln!(out, "Position checks");
        if self.position_checks.is_empty() {
            let _ = writeln!(out, "  (no reference gazetteer)");
        }
        for c in &self.position_checks {
            match (c.reference_point, c.distance_deg) {
                (Some(r), Some(d)) => {
                    let _ = writeln!(
                        out,
                        "  {:<9} {}: anchor {:.6},{:.6} reference {:.6},{:.6} distance {:.6} deg",
                        c.verdict.to_string(),
                        c.cluster,
                        c.anchor.latitude,
                        c.anchor.longitude,
                        r.latitude,
                        r.longitude,
                        d
                    );
                }
                _ => {
                    let _ = writeln!(out, "  {:<9} {}: no reference entry", c.verdict.to_string(), c.cluster);
                }
            }
        }
        let _ = writeln!(out, "Name collisions");
        for n in &self.name_collisions {
            let scope = if n.same_country { "same country" } else { "cross country" };
            let _ = writeln!(out, "  {} ({scope}): {}", n.name, n.clusters.join("; "));
        }
        if !self.source_disagreements.is_empty() {
            let _ = writeln!(out, "Source disagreements");
            for d in &self.source_disagreements {
                let _ = writeln!(out, "  {}: {:.6} deg apart", d.query, d.distance_deg.unwrap_or(f64::NAN));
            }
        }
        let _ = writeln!(out, "Dropped unresolved occurrences: {}", self.dropped_unresolved);
        let _ = writeln!(out, "Unparseable addresses: {}", self.unparseable_addresses);
        let _ = writeln!(
            out,
            "Result: {} ({} count failures, {} position failures)",
            if self.has_failures() { "FAIL" } else { "PASS" },
            self.count_failures(),
            self.position_failures()
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agglomerate::{merge_occurrences, MergeRadius};
    use crate::ingest::{extract_occurrences, CityOccurrence, PaperRecord};
    use crate::topslice::{select_top_slice, Fraction};

    fn paper(id: &str, addresses: &[&str]) -> PaperRecord {
        PaperRecord {
            paper_id: id.into(),
            citation_count: 10,
            publication_year: 2007,
            affiliations_raw: addresses.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn clusters_for(records: &[PaperRecord]) -> (Vec<CityCluster>, SliceResult) {
        let slice = select_top_slice(records, Fraction::new(1, 1).unwrap()).unwrap();
        let mut occ = extract_occurrences(&slice.selected).occurrences;
        for o in &mut occ {
            let lat = match o.city.as_str() {
                "vienna" => 48.2,
                "graz" => 47.07,
                _ => 10.0,
            };
            o.coordinate = Some(GeoPoint::new(lat, 15.0).unwrap());
        }
        (merge_occurrences(&occ, MergeRadius::Intermediate).unwrap(), slice)
    }

    #[test]
    fn single_address_papers_pass_with_zero_surplus() {
        let records: Vec<_> =
            (0..5).map(|i| paper(&format!("p{i}"), &["Univ Vienna, Dept X, Vienna, Austria"])).collect();
        let (clusters, slice) = clusters_for(&records);
        let checks = check_counts(&clusters, &slice).unwrap();
        assert_eq!(checks.len(), 1);
        assert_eq!((checks[0].mapped_count, checks[0].oracle_count, checks[0].surplus), (5, 5, 0));
        assert_eq!(checks[0].verdict, Verdict::Pass);
    }

    #[test]
    fn two_departments_same_city_allowed_surplus_one() {
        let records = vec![paper(
            "p1",
            &["Med Univ Vienna, Dept Neurol, Vienna, Austria", "Med Univ Vienna, Dept Psychiat, Vienna, Austria"],
        )];
        let (clusters, slice) = clusters_for(&records);
        let c = &check_counts(&clusters, &slice).unwrap()[0];
        assert_eq!((c.mapped_count, c.oracle_count, c.surplus, c.allowance), (2, 1, 1, 1));
        assert_eq!(c.verdict, Verdict::Pass);
    }

    #[test]
    fn identical_addresses_give_no_surplus() {
        let records = vec![paper("p1", &["Univ Graz, Graz, Austria", "Univ Graz, Graz, Austria"])];
        let (clusters, slice) = clusters_for(&records);
        let c = &check_counts(&clusters, &slice).unwrap()[0];
        assert_eq!((c.mapped_count, c.oracle_count, c.surplus, c.allowance), (1, 1, 0, 0));
    }

    #[test]
    fn undercount_fails() {
        let records: Vec<_> = (0..3).map(|i| paper(&format!("p{i}"), &["Univ Graz, Graz, Austria"])).collect();
        let (mut clusters, slice) = clusters_for(&records);
        clusters[0].members.pop();
        clusters[0].count = 2;
        let c = &check_counts(&clusters, &slice).unwrap()[0];
        assert_eq!(c.surplus, -1);
        assert_eq!(c.verdict, Verdict::Fail);
    }

    #[test]
    fn surplus_beyond_allowance_fails() {
        let records = vec![paper("p1", &["Univ Graz, Graz, Austria"])];
        let (mut clusters, slice) = clusters_for(&records);
        let extra = clusters[0].members[0].clone();
        clusters[0].members.push(extra);
        clusters[0].count = 2;
        assert_eq!(check_counts(&clusters, &slice).unwrap()[0].verdict, Verdict::Fail);
    }

    #[test]
    fn foreign_paper_is_an_integrity_error() {
        let records = vec![paper("p1", &["Univ Graz, Graz, Austria"])];
        let (mut clusters, slice) = clusters_for(&records);
        clusters[0].members[0].paper_id = "elsewhere".into();
        assert!(matches!(check_counts(&clusters, &slice), Err(VerifyError::Integrity { .. })));
    }

    fn cluster(name: &str, country: &str, lat: f64, lon: f64) -> CityCluster {
        let anchor = GeoPoint::new(lat, lon).unwrap();
        CityCluster {
            canonical_name: name.into(),
            country: country.into(),
            anchor,
            count: 1,
            members: vec![CityOccurrence {
                paper_id: "p".into(),
                city: name.into(),
                country: country.into(),
                coordinate: Some(anchor),
            }],
        }
    }

    #[test]
    fn positions() {
        let mut g = Gazetteer::default();
        g.insert("vienna", "austria", GeoPoint::new(48.2, 16.37).unwrap());
        g.insert("graz", "austria", GeoPoint::new(47.07, 15.44).unwrap());
        let clusters =
            vec![cluster("vienna", "austria", 48.2, 16.37), cluster("graz", "austria", 49.07, 15.44), cluster("linz", "austria", 48.3, 14.3)];
        let checks = check_positions(&clusters, &g, 0.5);
        assert_eq!(checks[0].verdict, Verdict::Pass);
        assert_eq!(checks[0].distance_deg, Some(0.0));
        assert_eq!(checks[1].verdict, Verdict::Fail);
        assert!((checks[1].distance_deg.unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(checks[2].verdict, Verdict::Unchecked);
        assert_eq!(checks[2].reference_point, None);
        assert_eq!(check_positions(&clusters[..1], &g, 0.0)[0].verdict, Verdict::Pass);
    }

    #[test]
    fn collisions_cross_country() {
        let c = check_name_collisions(&[cluster("cambridge", "uk", 52.2, 0.12), cluster("cambridge", "usa", 42.37, -71.1)]);
        assert_eq!(c.len(), 1);
        assert!(!c[0].same_country);
        assert_eq!(c[0].countries, vec!["uk", "usa"]);
    }

    #[test]
    fn same_country_collisions_rank_first() {
        let c = check_name_collisions(&[
            cluster("bern", "switzerland", 46.9, 7.4),
            cluster("berne", "france", 45.0, 5.0),
            cluster("cambridge", "usa", 42.37, -71.1),
            cluster("cambridge", "usa", 42.73, -116.8),
        ]);
        assert_eq!(c.len(), 2);
        assert!(c[0].same_country);
        assert_eq!(c[0].name, "cambridge");
        assert!(!c[1].same_country);
    }

    #[test]
    fn unique_names_have_no_collisions() {
        assert!(check_name_collisions(&[cluster("vienna", "austria", 48.2, 16.37), cluster("paris", "france", 48.85, 2.35)])
            .is_empty());
    }

    #[test]
    fn report_renders() {
        let records = vec![paper("p1", &["Univ Graz, Graz, Austria"])];
        let (clusters, slice) = clusters_for(&records);
        let report = verify(&clusters, &slice, &VerifyInputs { tolerance_deg: 0.5, ..Default::default() }).unwrap();
        assert!(!report.has_failures());
        let lines = report.to_json_lines();
        assert_eq!(lines.lines().count(), 2);
        for line in lines.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
        assert!(lines.lines().last().unwrap().contains("\"passed\":true"));
        assert!(report.to_text().contains("Result: PASS"));
    }
}
