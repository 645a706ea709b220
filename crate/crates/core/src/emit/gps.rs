//! Tab-separated waypoint text for GPS Visualizer style uploads (`ucities.txt`).

use super::{circle_label, EmitError, MapDocument};

pub const GPS_HEADER: &str = "name\tlatitude\tlongitude\tcolor\tn";

pub fn emit_gps_text(doc: &MapDocument) -> Vec<u8> {
    let mut out = String::from(GPS_HEADER);
    out.push('\n');
    for c in &doc.circles {
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{}\t{}\n",
            circle_label(c),
            c.cluster.anchor.latitude,
            c.cluster.anchor.longitude,
            c.class.color_hex(),
            c.cluster.count
        ));
    }
    out.into_bytes()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpsRow {
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub color: String,
    pub n: usize,
}

/// Parse and validate waypoint text produced by [`emit_gps_text`].
pub fn parse_gps_text(text: &str) -> Result<Vec<GpsRow>, EmitError> {
    let invalid = |line: usize, message: String| EmitError::Invalid { format: "gps", line, message };
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(invalid(text.lines().count(), "missing final newline".into()));
    }
    if text.contains('\r') {
        return Err(invalid(0, "CR line endings".into()));
    }
    let mut lines = text.lines();
    match lines.next() {
        Some(GPS_HEADER) => {}
        other => return Err(invalid(1, format!("bad header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(invalid(line_no, format!("expected 5 fields, found {}", f.len())));
        }
        if f[0].is_empty() {
            return Err(invalid(line_no, "empty name".into()));
        }
        let coord = |s: &str, lim: f64| -> Result<f64, EmitError> {
            let v: f64 = s.parse().map_err(|_| invalid(line_no, format!("bad coordinate {s:?}")))?;
            let decimals = s.split_once('.').map(|(_, d)| d.len());
            if decimals != Some(6) || !(-lim..=lim).contains(&v) {
                return Err(invalid(line_no, format!("coordinate {s:?} not a 6-decimal value in range")));
            }
            Ok(v)
        };
        let latitude = coord(f[1], 90.0)?;
        let longitude = coord(f[2], 180.0)?;
        let color = f[3];
        if !(color.len() == 7
            && color.starts_with('#')
            && color[1..].chars().all(|c| c.is_ascii_hexdigit()))
        {
            return Err(invalid(line_no, format!("bad color {color:?}")));
        }
        let n: usize = f[4].parse().map_err(|_| invalid(line_no, format!("bad n {:?}", f[4])))?;
        if n == 0 {
            return Err(invalid(line_no, "n must be positive".into()));
        }
        rows.push(GpsRow { name: f[0].to_string(), latitude, longitude, color: color.to_string(), n });
    }
    Ok(rows)
}
