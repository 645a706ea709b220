//! Web of Science tagged plain-text exports.
//!
//! Each field starts with a two-character tag in columns 1–2 followed by a space;
//! continuation lines are indented by three spaces. Records end with `ER`, the file
//! with `EF`. Required tags per record: `TI`, `PY`, `TC`. Each `C1` line is one
//! address, optionally prefixed by a bracketed author list.

use std::collections::HashMap;
use std::io::Read;

use super::{IngestError, PaperRecord, ParseOptions, ParsedCorpus, RowError};

#[derive(Default)]
struct Pending {
    start_line: u64,
    fields: HashMap<String, Vec<String>>,
    last_tag: Option<String>,
    problem: Option<String>,
}

impl Pending {
    fn is_empty(&self) -> bool {
        self.fields.is_empty() && self.problem.is_none()
    }
}

fn strip_author_bracket(line: &str) -> &str {
    let line = line.trim();
    if let Some(rest) = line.strip_prefix('[') {
        if let Some(end) = rest.find(']') {
            return rest[end + 1..].trim();
        }
    }
    line
}

fn finish(p: Pending, options: &ParseOptions, corpus: &mut ParsedCorpus) {
    let line = p.start_line;
    if let Some(problem) = p.problem {
        corpus.row_errors.push(RowError { line, message: problem });
        return;
    }
    let first = |tag: &str| p.fields.get(tag).and_then(|v| v.first()).map(|s| s.trim());
    for tag in ["TI", "PY", "TC"] {
        if first(tag).is_none() {
            corpus.row_errors.push(RowError { line, message: format!("missing tag {tag}") });
            return;
        }
    }
    if let Some(want) = &options.document_type {
        let dt = first("DT").unwrap_or("");
        if !dt.eq_ignore_ascii_case(want.trim()) {
            corpus.filtered += 1;
            return;
        }
    }
    let tc = first("TC").unwrap();
    let Ok(citation_count) = tc.parse::<u64>() else {
        corpus.row_errors.push(RowError { line, message: format!("invalid TC value {tc:?}") });
        return;
    };
    let py = first("PY").unwrap();
    let Ok(publication_year) = py.parse::<i32>() else {
        corpus.row_errors.push(RowError { line, message: format!("invalid PY value {py:?}") });
        return;
    };
    let paper_id = match first("UT") {
        Some(ut) if !ut.is_empty() => ut.to_string(),
        _ => format!("wos:{line}"),
    };
    let affiliations_raw = p
        .fields
        .get("C1")
        .map(|lines| {
            lines
                .iter()
                .map(|l| strip_author_bracket(l).trim_end_matches('.').trim().to_string())
                .filter(|l| !l.is_empty())
                .collect()
        })
        .unwrap_or_default();
    corpus.records.push(PaperRecord {
        paper_id,
        citation_count,
        publication_year,
        affiliations_raw,
    });
}

fn is_tag(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 2 && b[0].is_ascii_uppercase() && (b[1].is_ascii_uppercase() || b[1].is_ascii_digit())
}

pub(super) fn parse<R: Read>(mut source: R, options: &ParseOptions) -> Result<ParsedCorpus, IngestError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let text = String::from_utf8_lossy(&bytes);
    let text = text.trim_start_matches('\u{feff}');
    if text.trim().is_empty() {
        return Err(IngestError::Empty);
    }

    let mut corpus = ParsedCorpus::default();
    let mut pending = Pending::default();
    let mut saw_record_tag = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(cont) = line.strip_prefix("   ") {
            match &pending.last_tag {
                Some(tag) => pending.fields.get_mut(tag).unwrap().push(cont.trim().to_string()),
                None => {
                    if pending.problem.is_none() {
                        pending.start_line = line_no;
                        pending.problem = Some("continuation line outside a field".into());
                    }
                }
            }
            continue;
        }
        let (tag, value) = match line.split_at_checked(2) {
            Some((t, rest)) if is_tag(t) && (rest.is_empty() || rest.starts_with(' ')) => {
                (t, rest.trim())
            }
            _ => {
                if pending.is_empty() {
                    pending.start_line = line_no;
                }
                if pending.problem.is_none() {
                    pending.problem = Some(format!("unrecognized line {line:?}"));
                }
                continue;
            }
        };
        match tag {
            "FN" | "VR" if pending.is_empty() => {}
            "EF" => break,
            "ER" => {
                let done = std::mem::take(&mut pending);
                if !done.is_empty() {
                    finish(done, options, &mut corpus);
                }
            }
            _ => {
                saw_record_tag = true;
                if pending.is_empty() {
                    pending.start_line = line_no;
                }
                pending
                    .fields
                    .entry(tag.to_string())
                    .or_default()
                    .push(value.to_string());
                pending.last_tag = Some(tag.to_string());
            }
        }
    }
    if !pending.is_empty() {
        corpus.row_errors.push(RowError {
            line: pending.start_line,
            message: "record not terminated by ER".into(),
        });
    }
    if !saw_record_tag && corpus.row_errors.is_empty() {
        return Err(IngestError::Header("no tagged records found".into()));
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::super::{parse_corpus, InputFormat};
    use super::*;

    const SAMPLE: &str = concat!(
        "FN Clarivate Analytics Web of Science\n",
        "VR 1.0\n",
        "PT J\n",
        "AU Smith, J\n",
        "   Doe, A\n",
        "TI A study of\n",
        "   something\n",
        "C1 [Smith, J; Doe, A] Univ Vienna, Dept Neurosci, Vienna, Austria.\n",
        "   [Roe, B] ETH, Zurich, Switzerland.\n",
        "PY 2007\n",
        "TC 71\n",
        "UT WOS:000001\n",
        "DT Article\n",
        "ER\n",
        "\n",
        "PT J\n",
        "TI Second\n",
        "PY 2007\n",
        "TC 3\n",
        "DT Review\n",
        "ER\n",
        "EF\n",
    );

    fn run(input: &str, options: &ParseOptions) -> ParsedCorpus {
        parse_corpus(input.as_bytes(), InputFormat::WosTagged, options).unwrap()
    }

    #[test]
    fn parses_records() {
        let c = run(SAMPLE, &ParseOptions::default());
        assert_eq!(c.records.len(), 2);
        let r = &c.records[0];
        assert_eq!(r.paper_id, "WOS:000001");
        assert_eq!(r.citation_count, 71);
        assert_eq!(
            r.affiliations_raw,
            vec![
                "Univ Vienna, Dept Neurosci, Vienna, Austria".to_string(),
                "ETH, Zurich, Switzerland".to_string()
            ]
        );
        assert!(c.records[1].affiliations_raw.is_empty());
        assert_eq!(c.records[1].paper_id, "wos:16");
    }

    #[test]
    fn document_type_filter() {
        let c = run(SAMPLE, &ParseOptions { document_type: Some("article".into()) });
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.filtered, 1);
    }

    #[test]
    fn missing_tag_is_a_row_error() {
        let c = run("PT J\nTI x\nPY 2007\nER\nPT J\nTI y\nPY 2007\nTC 4\nER\n", &ParseOptions::default());
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.row_errors, vec![RowError { line: 1, message: "missing tag TC".into() }]);
    }

    #[test]
    fn unterminated_record() {
        let c = run("PT J\nTI x\nPY 2007\nTC 1\n", &ParseOptions::default());
        assert!(c.records.is_empty());
        assert_eq!(c.row_errors.len(), 1);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(parse_corpus(&b"hello world\n"[..], InputFormat::WosTagged, &ParseOptions::default())
            .map(|c| c.records.is_empty() && c.row_errors.len() == 1)
            .unwrap());
        assert!(matches!(
            parse_corpus(&b"FN x\nVR 1.0\nEF\n"[..], InputFormat::WosTagged, &ParseOptions::default()),
            Err(IngestError::Header(_))
        ));
        assert!(matches!(
            parse_corpus(&b"  \n"[..], InputFormat::WosTagged, &ParseOptions::default()),
            Err(IngestError::Empty)
        ));
    }
}
