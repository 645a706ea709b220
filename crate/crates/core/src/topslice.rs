//! Top-x% selection of the most-cited papers, inclusive of ties at the threshold.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::PaperRecord;

/// Default warning level for the selected set size (the vendor download ceiling).
pub const DEFAULT_MAX_SLICE_WARN: usize = 2000;

/// An exact fraction in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Fraction {
    num: u64,
    den: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FractionError {
    #[error("invalid fraction {0:?}")]
    Syntax(String),
    #[error("fraction {0} is outside (0, 1]")]
    OutOfRange(String),
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Result<Self, FractionError> {
        if den == 0 || num == 0 || num > den {
            return Err(FractionError::OutOfRange(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        Ok(Fraction { num: num / g, den: den / g })
    }

    pub fn one_percent() -> Self {
        Fraction { num: 1, den: 100 }
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `ceil(self × n)`, computed exactly.
    pub fn ceil_of(&self, n: usize) -> usize {
        let prod = self.num as u128 * n as u128;
        prod.div_ceil(self.den as u128) as usize
    }
}

impl FromStr for Fraction {
    type Err = FractionError;

    /// Accepts decimals (`0.01`, `1`), percentages (`1%`) and ratios (`1/100`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let syntax = || FractionError::Syntax(s.to_string());
        let digits = |d: &str| !d.is_empty() && d.len() <= 18 && d.bytes().all(|b| b.is_ascii_digit());

        if let Some((n, d)) = t.split_once('/') {
            let (n, d) = (n.trim(), d.trim());
            if !digits(n) || !digits(d) {
                return Err(syntax());
            }
            return Fraction::new(n.parse().map_err(|_| syntax())?, d.parse().map_err(|_| syntax())?)
                .map_err(|_| FractionError::OutOfRange(s.to_string()));
        }
        let (body, scale) = match t.strip_suffix('%') {
            Some(b) => (b.trim(), 100u64),
            None => (t, 1u64),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if (int.is_empty() && frac.is_empty())
            || !(int.is_empty() || digits(int))
            || !(frac.is_empty() || digits(frac))
            || int.len() + frac.len() > 18
        {
            return Err(syntax());
        }
        let num: u64 = format!("{int}{frac}").parse().map_err(|_| syntax())?;
        let den = 10u64
            .checked_pow(frac.len() as u32)
            .and_then(|p| p.checked_mul(scale))
            .ok_or_else(syntax)?;
        Fraction::new(num, den).map_err(|_| FractionError::OutOfRange(s.to_string()))
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.num == self.den {
            write!(f, "1")
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl TryFrom<String> for Fraction {
    type Error = FractionError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Fraction> for String {
    fn from(f: Fraction) -> String {
        f.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceResult {
    pub fraction: Fraction,
    pub corpus_size: usize,
    /// `ceil(fraction × corpus_size)`, the cut before ties are added.
    pub nominal_k: usize,
    pub threshold_citations: u64,
    /// Sorted by citation count descending, then paper id.
    pub selected: Vec<PaperRecord>,
}

impl SliceResult {
    pub fn exceeds(&self, max_slice_warn: usize) -> bool {
        self.selected.len() > max_slice_warn
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SliceError {
    #[error("corpus is empty")]
    EmptyCorpus,
}

fn rank_order(a: &PaperRecord, b: &PaperRecord) -> Ordering {
    b.citation_count
        .cmp(&a.citation_count)
        .then_with(|| a.paper_id.cmp(&b.paper_id))
        .then_with(|| a.affiliations_raw.cmp(&b.affiliations_raw))
        .then_with(|| a.publication_year.cmp(&b.publication_year))
}

/// Select the top `fraction` of `records` by citation count.
///
/// The nominal cut is `k = ceil(fraction × n)`; the threshold is the citation
/// count of the k-th most cited record and every record at or above it is kept,
/// so tied ranks at the cut are all included.
pub fn select_top_slice(records: &[PaperRecord], fraction: Fraction) -> Result<SliceResult, SliceError> {
    if records.is_empty() {
        return Err(SliceError::EmptyCorpus);
    }
    let mut sorted: Vec<&PaperRecord> = records.iter().collect();
    sorted.sort_by(|a, b| rank_order(a, b));

    let nominal_k = fraction.ceil_of(records.len()).max(1);
    let threshold = sorted[nominal_k - 1].citation_count;
    let selected: Vec<PaperRecord> = sorted
        .into_iter()
        .take_while(|r| r.citation_count >= threshold)
        .cloned()
        .collect();

    Ok(SliceResult {
        fraction,
        corpus_size: records.len(),
        nominal_k,
        threshold_citations: threshold,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: usize, c: u64) -> PaperRecord {
        PaperRecord {
            paper_id: format!("p{id:06}"),
            citation_count: c,
            publication_year: 2007,
            affiliations_raw: vec![],
        }
    }

    #[test]
    fn parses_fractions() {
        assert_eq!("0.01".parse::<Fraction>().unwrap(), Fraction::one_percent());
        assert_eq!("1%".parse::<Fraction>().unwrap(), Fraction::one_percent());
        assert_eq!("1/100".parse::<Fraction>().unwrap(), Fraction::one_percent());
        assert_eq!("1".parse::<Fraction>().unwrap(), Fraction::new(1, 1).unwrap());
        assert_eq!(".5".parse::<Fraction>().unwrap(), Fraction::new(1, 2).unwrap());
        assert!(matches!("0".parse::<Fraction>(), Err(FractionError::OutOfRange(_))));
        assert!(matches!("1.5".parse::<Fraction>(), Err(FractionError::OutOfRange(_))));
        assert!(matches!("-0.1".parse::<Fraction>(), Err(FractionError::Syntax(_))));
        assert!(matches!("abc".parse::<Fraction>(), Err(FractionError::Syntax(_))));
        assert!(matches!(".".parse::<Fraction>(), Err(FractionError::Syntax(_))));
    }

    #[test]
    fn ceiling_arithmetic() {
        let f = Fraction::one_percent();
        assert_eq!(f.ceil_of(40_082), 401);
        assert_eq!(f.ceil_of(146_081), 1461);
        assert_eq!(f.ceil_of(76_534), 766);
        assert_eq!(f.ceil_of(100), 1);
        assert_eq!(f.ceil_of(1), 1);
    }

    #[test]
    fn distinct_counts_select_the_maximum() {
        let recs: Vec<_> = (0..100).map(|i| rec(i, i as u64)).collect();
        let s = select_top_slice(&recs, Fraction::one_percent()).unwrap();
        assert_eq!(s.selected.len(), 1);
        assert_eq!(s.selected[0].citation_count, 99);
        assert_eq!(s.threshold_citations, 99);
    }

    #[test]
    fn all_tied_selects_everything() {
        let recs: Vec<_> = (0..250).map(|i| rec(i, 7)).collect();
        let s = select_top_slice(&recs, Fraction::one_percent()).unwrap();
        assert_eq!(s.selected.len(), 250);
        assert_eq!(s.nominal_k, 3);
    }

    #[test]
    fn empty_corpus() {
        assert_eq!(select_top_slice(&[], Fraction::one_percent()), Err(SliceError::EmptyCorpus));
    }

    #[test]
    fn warn_level() {
        let recs: Vec<_> = (0..10).map(|i| rec(i, 1)).collect();
        let s = select_top_slice(&recs, Fraction::one_percent()).unwrap();
        assert!(s.exceeds(9));
        assert!(!s.exceeds(DEFAULT_MAX_SLICE_WARN));
    }

    fn corpus() -> impl Strategy<Value = Vec<PaperRecord>> {
        prop::collection::vec(0u64..30, 1..300)
            .prop_map(|cs| cs.into_iter().enumerate().map(|(i, c)| rec(i, c)).collect())
    }

    proptest! {
        #[test]
        fn slice_invariants(recs in corpus(), num in 1u64..=100) {
            let f = Fraction::new(num, 100).unwrap();
            let s = select_top_slice(&recs, f).unwrap();
            prop_assert!(s.selected.len() >= f.ceil_of(recs.len()));
            prop_assert!(s.selected.iter().all(|r| r.citation_count >= s.threshold_citations));
            let chosen: std::collections::HashSet<_> = s.selected.iter().map(|r| &r.paper_id).collect();
            prop_assert!(recs.iter().filter(|r| !chosen.contains(&r.paper_id))
                .all(|r| r.citation_count <= s.threshold_citations));
        }

        #[test]
        fn monotone_in_fraction(recs in corpus(), a in 1u64..=100, b in 1u64..=100) {
            let (lo, hi) = (a.min(b), a.max(b));
            let s_lo = select_top_slice(&recs, Fraction::new(lo, 100).unwrap()).unwrap();
            let s_hi = select_top_slice(&recs, Fraction::new(hi, 100).unwrap()).unwrap();
            prop_assert!(s_lo.selected.len() <= s_hi.selected.len());
            prop_assert_eq!(&s_hi.selected[..s_lo.selected.len()], &s_lo.selected[..]);
        }

        #[test]
        fn reslicing_at_one_is_identity(recs in corpus(), num in 1u64..=100) {
            let s = select_top_slice(&recs, Fraction::new(num, 100).unwrap()).unwrap();
            let again = select_top_slice(&s.selected, Fraction::new(1, 1).unwrap()).unwrap();
            prop_assert_eq!(again.selected, s.selected);
        }

        #[test]
        fn permutation_invariant(recs in corpus(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = recs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = select_top_slice(&recs, Fraction::one_percent()).unwrap();
            let b = select_top_slice(&shuffled, Fraction::one_percent()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
