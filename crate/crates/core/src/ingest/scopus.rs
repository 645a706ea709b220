//! Scopus-style CSV exports.
//!
//! Required columns: `Title`, `Year`, `Cited by`, `Affiliations`. `EID` is used as
//! the paper identifier when present; `Document Type` is read only when a
//! document-type filter is requested.

use std::io::Read;

use super::{split_affiliations, IngestError, PaperRecord, ParseOptions, ParsedCorpus, RowError};

const REQUIRED: [&str; 4] = ["Title", "Year", "Cited by", "Affiliations"];

struct Columns {
    year: usize,
    cited_by: usize,
    affiliations: usize,
    eid: Option<usize>,
    doc_type: Option<usize>,
}

fn locate(headers: &csv::StringRecord, options: &ParseOptions) -> Result<Columns, IngestError> {
    let names: Vec<&str> = headers
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').trim())
        .collect();
    let find = |name: &str| names.iter().position(|h| *h == name);
    for name in REQUIRED {
        if find(name).is_none() {
            return Err(IngestError::MissingColumn(name.to_string()));
        }
    }
    let doc_type = find("Document Type");
    if options.document_type.is_some() && doc_type.is_none() {
        return Err(IngestError::MissingColumn("Document Type".to_string()));
    }
    Ok(Columns {
        year: find("Year").unwrap(),
        cited_by: find("Cited by").unwrap(),
        affiliations: find("Affiliations").unwrap(),
        eid: find("EID"),
        doc_type,
    })
}

pub(super) fn parse<R: Read>(source: R, options: &ParseOptions) -> Result<ParsedCorpus, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);

    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(IngestError::Header(e.to_string())),
    };
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(IngestError::Empty);
    }
    let cols = locate(&headers, options)?;

    let mut corpus = ParsedCorpus::default();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(IngestError::Io(std::io::Error::other(e.to_string())));
                }
                corpus.row_errors.push(RowError { line, message: e.to_string() });
                continue;
            }
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);

        if let (Some(want), Some(col)) = (&options.document_type, cols.doc_type) {
            if !record[col].trim().eq_ignore_ascii_case(want.trim()) {
                corpus.filtered += 1;
                continue;
            }
        }

        let cited = record[cols.cited_by].trim();
        let citation_count = if cited.is_empty() {
            0
        } else {
            match cited.parse::<u64>() {
                Ok(n) => n,
                Err(_) => {
                    corpus.row_errors.push(RowError {
                        line,
                        message: format!("invalid \"Cited by\" value {cited:?}"),
                    });
                    continue;
                }
            }
        };
        let year = record[cols.year].trim();
        let publication_year = match year.parse::<i32>() {
            Ok(y) => y,
            Err(_) => {
                corpus.row_errors.push(RowError {
                    line,
                    message: format!("invalid \"Year\" value {year:?}"),
                });
                continue;
            }
        };
        let paper_id = match cols.eid.map(|c| record[c].trim()) {
            Some(eid) if !eid.is_empty() => eid.to_string(),
            _ => format!("scopus:{line}"),
        };
        corpus.records.push(PaperRecord {
            paper_id,
            citation_count,
            publication_year,
            affiliations_raw: split_affiliations(&record[cols.affiliations]),
        });
    }
    Ok(corpus)
}
