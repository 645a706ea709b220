//! Affiliation address parsing and name normalization.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Letters that carry no Unicode decomposition but have an obvious ASCII spelling.
fn fold_special(c: char, out: &mut String) -> bool {
    let s = match c {
        'ß' => "ss",
        'æ' => "ae",
        'œ' => "oe",
        'ø' => "o",
        'ł' => "l",
        'đ' | 'ð' => "d",
        'þ' => "th",
        'ı' => "i",
        _ => return false,
    };
    out.push_str(s);
    true
}

/// Trim, collapse whitespace, lowercase and strip diacritics.
///
/// `"  Zürich "` becomes `"zurich"`, `"MÜNCHEN"` becomes `"munchen"`.
pub fn normalize(s: &str) -> String {
    let mut folded = String::with_capacity(s.len());
    for c in s.nfd() {
        if is_combining_mark(c) {
            continue;
        }
        for lower in c.to_lowercase() {
            if !fold_special(lower, &mut folded) {
                folded.push(lower);
            }
        }
    }
    // lowercasing can itself produce combining marks (e.g. U+0130)
    let folded: String = folded.nfd().filter(|c| !is_combining_mark(*c)).collect();

    let mut out = String::with_capacity(folded.len());
    for word in folded.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// A postal code standing where a place name is expected: short, digits present,
/// nothing but ASCII alphanumerics, spaces and hyphens.
pub fn is_postcode_like(field: &str) -> bool {
    let field = field.trim();
    !field.is_empty()
        && field.len() <= 12
        && field.chars().any(|c| c.is_ascii_digit())
        && field
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == ' ' || c == '-')
}

fn is_postcode_token(token: &str) -> bool {
    token.chars().any(|c| c.is_ascii_digit())
        && token.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressRecord {
    pub paper_id: String,
    pub raw: String,
    pub institution: String,
    pub city: String,
    pub country: String,
    pub trailing_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("address has fewer than two comma-separated fields")]
    TooFewFields,
    #[error("no country field (trailing tokens: {trailing:?})")]
    MissingCountry { city: String, trailing: Vec<String> },
    #[error("no city field before country {country:?}")]
    MissingCity { country: String },
}

/// Split an address on commas into institution, city and country.
///
/// The country is the last field. A postcode in the country position is moved to
/// `trailing_tokens` and leaves the country empty, which is an error: the
/// `"…, Lausanne, 61801"` case. Postcode fields and postcode tokens glued to the
/// city name (`"D-80539 Munich"`) are skipped when looking for the city.
pub fn parse_address(paper_id: &str, raw: &str) -> Result<AddressRecord, AddressError> {
    let fields: Vec<&str> = raw
        .split(',')
        .map(str::trim)
        .filter(|f| !f.is_empty())
        .collect();
    if fields.len() < 2 {
        return Err(AddressError::TooFewFields);
    }

    let mut trailing = Vec::new();
    let mut rest = &fields[..];

    let last = rest[rest.len() - 1];
    rest = &rest[..rest.len() - 1];
    let country = if is_postcode_like(last) {
        trailing.push(last.to_string());
        String::new()
    } else {
        normalize(last.trim_end_matches('.'))
    };

    let mut city = String::new();
    while let Some((&field, head)) = rest.split_last() {
        rest = head;
        if is_postcode_like(field) {
            trailing.push(field.to_string());
            continue;
        }
        let words: Vec<&str> = field.split_whitespace().collect();
        let start = words.iter().take_while(|w| is_postcode_token(w)).count();
        let end = words.len() - words[start..].iter().rev().take_while(|w| is_postcode_token(w)).count();
        trailing.extend(words[..start].iter().map(|w| w.to_string()));
        trailing.extend(words[end..].iter().map(|w| w.to_string()));
        let name = normalize(&words[start..end].join(" "));
        if !name.is_empty() {
            city = name;
            break;
        }
    }

    if country.is_empty() {
        return Err(AddressError::MissingCountry { city, trailing });
    }
    if city.is_empty() {
        return Err(AddressError::MissingCity { country });
    }
    let institution = rest.first().map(|s| s.to_string()).unwrap_or_default();

    Ok(AddressRecord {
        paper_id: paper_id.to_string(),
        raw: raw.to_string(),
        institution,
        city,
        country,
        trailing_tokens: trailing,
    })
}
