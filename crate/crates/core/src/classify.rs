//! Percentile ranks over city counts, six colour classes and display radii.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agglomerate::CityCluster;

pub const DEFAULT_RADIUS_BASE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("counts must be positive (index {0} is 0)")]
    ZeroCount(usize),
    #[error("no counts to rank")]
    Empty,
    #[error("percentile {0} is outside [0, 100]")]
    PercentileOutOfRange(f64),
    #[error("radius base must be positive, got {0}")]
    BadBase(f64),
    #[error("log base must be 10 or e, got {0:?}")]
    BadLogBase(String),
}

/// `Pᵢ = 100 × |{ j : X_j < X_i }| / n` for each count, aligned with the input.
/// Tied counts share a percentile.
pub fn percentile_ranks(counts: &[usize]) -> Result<Vec<f64>, ClassifyError> {
    if counts.is_empty() {
        return Err(ClassifyError::Empty);
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(ClassifyError::ZeroCount(i));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = counts.len() as f64;
    Ok(counts
        .iter()
        .map(|&c| {
            let below = sorted.partition_point(|&x| x < c);
            100.0 * below as f64 / n
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileClass {
    Top1,
    P95_99,
    P90_95,
    P75_90,
    P50_75,
    Bottom50,
}

impl PercentileClass {
    /// Best to worst.
    pub const ALL: [PercentileClass; 6] = [
        PercentileClass::Top1,
        PercentileClass::P95_99,
        PercentileClass::P90_95,
        PercentileClass::P75_90,
        PercentileClass::P50_75,
        PercentileClass::Bottom50,
    ];

    pub fn color_name(&self) -> &'static str {
        match self {
            PercentileClass::Top1 => "red",
            PercentileClass::P95_99 => "fuchsia",
            PercentileClass::P90_95 => "pink",
            PercentileClass::P75_90 => "orange",
            PercentileClass::P50_75 => "cyan",
            PercentileClass::Bottom50 => "blue",
        }
    }

    pub fn color_hex(&self) -> &'static str {
        match self {
            PercentileClass::Top1 => "#FF0000",
            PercentileClass::P95_99 => "#FF00FF",
            PercentileClass::P90_95 => "#FFC0CB",
            PercentileClass::P75_90 => "#FFA500",
            PercentileClass::P50_75 => "#00FFFF",
            PercentileClass::Bottom50 => "#0000FF",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PercentileClass::Top1 => "top 1%",
            PercentileClass::P95_99 => "95th – 99th",
            PercentileClass::P90_95 => "90th – 95th",
            PercentileClass::P75_90 => "75th – 90th",
            PercentileClass::P50_75 => "50th – 75th",
            PercentileClass::Bottom50 => "bottom 50%",
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PercentileClass::Top1 => "top1",
            PercentileClass::P95_99 => "p95_99",
            PercentileClass::P90_95 => "p90_95",
            PercentileClass::P75_90 => "p75_90",
            PercentileClass::P50_75 => "p50_75",
            PercentileClass::Bottom50 => "bottom50",
        }
    }
}

impl fmt::Display for PercentileClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lower bounds are inclusive: 99 is top 1%, 50 is the 50th–75th class.
pub fn classify_percentile(p: f64) -> Result<PercentileClass, ClassifyError> {
    if !(0.0..=100.0).contains(&p) {
        return Err(ClassifyError::PercentileOutOfRange(p));
    }
    Ok(if p >= 99.0 {
        PercentileClass::Top1
    } else if p >= 95.0 {
        PercentileClass::P95_99
    } else if p >= 90.0 {
        PercentileClass::P90_95
    } else if p >= 75.0 {
        PercentileClass::P75_90
    } else if p >= 50.0 {
        PercentileClass::P50_75
    } else {
        PercentileClass::Bottom50
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LogBase {
    #[default]
    #[serde(rename = "10")]
    Ten,
    #[serde(rename = "e")]
    E,
}

impl FromStr for LogBase {
    type Err = ClassifyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "10" => Ok(LogBase::Ten),
            "e" | "E" => Ok(LogBase::E),
            other => Err(ClassifyError::BadLogBase(other.to_string())),
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogBase::Ten => "10",
            LogBase::E => "e",
        })
    }
}

/// `base × (1 + log(count))`; the `+1` keeps a count of one visible.
pub fn display_radius(count: usize, base: f64, log_base: LogBase) -> Result<f64, ClassifyError> {
    if count == 0 {
        return Err(ClassifyError::ZeroCount(0));
    }
    if !(base.is_finite() && base > 0.0) {
        return Err(ClassifyError::BadBase(base));
    }
    let log = match log_base {
        LogBase::Ten => (count as f64).log10(),
        LogBase::E => (count as f64).ln(),
    };
    Ok(base * (1.0 + log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedCircle {
    pub cluster: CityCluster,
    pub percentile: f64,
    pub class: PercentileClass,
    pub display_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub radius_base: f64,
    pub log_base: LogBase,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { radius_base: DEFAULT_RADIUS_BASE, log_base: LogBase::Ten }
    }
}

/// Classify every cluster of one map. An empty map yields no circles.
pub fn classify_clusters(
    clusters: &[CityCluster],
    options: ClassifyOptions,
) -> Result<Vec<ClassifiedCircle>, ClassifyError> {
    if clusters.is_empty() {
        return Ok(Vec::new());
    }
    let counts: Vec<usize> = clusters.iter().map(|c| c.count).collect();
    let ranks = percentile_ranks(&counts)?;
    clusters
        .iter()
        .zip(ranks)
        .map(|(c, p)| {
            Ok(ClassifiedCircle {
                cluster: c.clone(),
                percentile: p,
                class: classify_percentile(p)?,
                display_radius: display_radius(c.count, options.radius_base, options.log_base)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(counts: &[usize]) -> Vec<f64> {
        let n = counts.len() as f64;
        counts
            .iter()
            .map(|&x| 100.0 * counts.iter().filter(|&&y| y < x).count() as f64 / n)
            .collect()
    }

    #[test]
    fn small_example() {
        assert_eq!(percentile_ranks(&[5, 3, 3, 1]).unwrap(), vec![75.0, 25.0, 25.0, 0.0]);
        assert_eq!(brute_force(&[5, 3, 3, 1]), vec![75.0, 25.0, 25.0, 0.0]);
    }

    #[test]
    fn single_city_is_bottom() {
        let p = percentile_ranks(&[7]).unwrap();
        assert_eq!(p, vec![0.0]);
        assert_eq!(classify_percentile(p[0]).unwrap(), PercentileClass::Bottom50);
    }

    #[test]
    fn ninetieth_percentile_example() {
        let mut counts = vec![50];
        counts.extend([49, 40, 30, 12, 12, 5, 3, 1, 1]);
        assert_eq!(percentile_ranks(&counts).unwrap()[0], 90.0);
    }

    #[test]
    fn rejects_bad_counts() {
        assert_eq!(percentile_ranks(&[]), Err(ClassifyError::Empty));
        assert_eq!(percentile_ranks(&[3, 0]), Err(ClassifyError::ZeroCount(1)));
    }

    #[test]
    fn classes_and_boundaries() {
        let cases = [
            (99.5, PercentileClass::Top1),
            (96.0, PercentileClass::P95_99),
            (92.0, PercentileClass::P90_95),
            (80.0, PercentileClass::P75_90),
            (60.0, PercentileClass::P50_75),
            (10.0, PercentileClass::Bottom50),
            (100.0, PercentileClass::Top1),
            (99.0, PercentileClass::Top1),
            (95.0, PercentileClass::P95_99),
            (90.0, PercentileClass::P90_95),
            (75.0, PercentileClass::P75_90),
            (50.0, PercentileClass::P50_75),
            (0.0, PercentileClass::Bottom50),
        ];
        for (p, want) in cases {
            assert_eq!(classify_percentile(p).unwrap(), want, "P = {p}");
        }
        assert!(classify_percentile(-0.1).is_err());
        assert!(classify_percentile(100.1).is_err());
        assert!(classify_percentile(f64::NAN).is_err());
    }

    #[test]
    fn colors() {
        let names: Vec<_> = PercentileClass::ALL.iter().map(|c| c.color_name()).collect();
        assert_eq!(names, vec!["red", "fuchsia", "pink", "orange", "cyan", "blue"]);
        assert_eq!(PercentileClass::P90_95.color_hex(), "#FFC0CB");
    }

    #[test]
    fn radii() {
        assert_eq!(display_radius(1, 4.0, LogBase::Ten).unwrap(), 4.0);
        assert_eq!(display_radius(10, 4.0, LogBase::Ten).unwrap(), 8.0);
        assert_eq!(display_radius(100, 4.0, LogBase::Ten).unwrap(), 12.0);
        assert!((display_radius(1000, 4.0, LogBase::Ten).unwrap() - 16.0).abs() < 1e-12);
        assert_eq!(display_radius(1, 4.0, LogBase::E).unwrap(), 4.0);
        assert!(display_radius(0, 4.0, LogBase::Ten).is_err());
        assert!(display_radius(3, 0.0, LogBase::Ten).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(counts in prop::collection::vec(1usize..50, 1..200)) {
            prop_assert_eq!(percentile_ranks(&counts).unwrap(), brute_force(&counts));
        }

        #[test]
        fn scale_invariant(counts in prop::collection::vec(1usize..50, 1..100), k in 1usize..20) {
            let scaled: Vec<usize> = counts.iter().map(|c| c * k).collect();
            prop_assert_eq!(percentile_ranks(&counts).unwrap(), percentile_ranks(&scaled).unwrap());
        }

        #[test]
        fn class_monotone_in_count(counts in prop::collection::vec(1usize..50, 1..100)) {
            let p = percentile_ranks(&counts).unwrap();
            for i in 0..counts.len() {
                for j in 0..counts.len() {
                    if counts[i] >= counts[j] {
                        // Top1 < Bottom50 in declaration order
                        prop_assert!(classify_percentile(p[i]).unwrap() <= classify_percentile(p[j]).unwrap());
                    }
                }
            }
        }

        #[test]
        fn every_percentile_has_one_class(p in 0.0f64..=100.0) {
            let c = classify_percentile(p).unwrap();
            let hits = PercentileClass::ALL.iter().filter(|k| {
                let (lo, hi) = match k {
                    PercentileClass::Top1 => (99.0, f64::INFINITY),
                    PercentileClass::P95_99 => (95.0, 99.0),
                    PercentileClass::P90_95 => (90.0, 95.0),
                    PercentileClass::P75_90 => (75.0, 90.0),
                    PercentileClass::P50_75 => (50.0, 75.0),
                    PercentileClass::Bottom50 => (f64::NEG_INFINITY, 50.0),
                };
                p >= lo && p < hi
            }).count();
            prop_assert_eq!(hits, 1);
            prop_assert!(PercentileClass::ALL.contains(&c));
        }

        #[test]
        fn radius_strictly_increasing(a in 1usize..100_000, b in 1usize..100_000) {
            prop_assume!(a < b);
            prop_assert!(display_radius(a, 4.0, LogBase::Ten).unwrap() < display_radius(b, 4.0, LogBase::Ten).unwrap());
        }
    }
}
