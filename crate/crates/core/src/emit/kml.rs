//! KML document with one styled placemark per circle.

use std::fmt::Write;

use super::{circle_label, round6, MapDocument};

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            // not representable in XML 1.0
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => out.push('\u{FFFD}'),
            c => out.push(c),
        }
    }
    out
}

/// `#RRGGBB` to KML's `aabbggrr`.
fn kml_color(hex: &str) -> String {
    let (r, g, b) = (&hex[1..3], &hex[3..5], &hex[5..7]);
    format!("ff{b}{g}{r}").to_ascii_lowercase()
}

pub fn emit_kml(doc: &MapDocument) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<kml xmlns=\"http://www.opengis.net/kml/2.2\">\n<Document>\n");
    let _ = writeln!(out, "<name>{}</name>", escape(&doc.title));
    out.push_str("<ExtendedData>\n");
    let _ = writeln!(out, "<Data name=\"generated_at\"><value>{}</value></Data>", escape(&doc.generated_at));
    for (k, v) in &doc.parameters {
        let _ = writeln!(out, "<Data name=\"{}\"><value>{}</value></Data>", escape(k), escape(v));
    }
    out.push_str("</ExtendedData>\n");

    for c in &doc.circles {
        let scale = c.display_radius / doc.radius_base;
        out.push_str("<Placemark>\n");
        let _ = writeln!(out, "<name>{}</name>", escape(&circle_label(c)));
        let _ = writeln!(
            out,
            "<Style><IconStyle><color>{}</color><scale>{}</scale></IconStyle></Style>",
            kml_color(c.class.color_hex()),
            scale
        );
        out.push_str("<ExtendedData>\n");
        for (k, v) in [
            ("city", escape(&c.cluster.canonical_name)),
            ("country", escape(&c.cluster.country)),
            ("count", c.cluster.count.to_string()),
            ("percentile", c.percentile.to_string()),
            ("class", c.class.to_string()),
            ("color", c.class.color_name().to_string()),
            ("display_radius", c.display_radius.to_string()),
        ] {
            let _ = writeln!(out, "<Data name=\"{k}\"><value>{v}</value></Data>");
        }
        out.push_str("</ExtendedData>\n");
        let _ = writeln!(
            out,
            "<Point><coordinates>{},{}</coordinates></Point>",
            round6(c.cluster.anchor.longitude),
            round6(c.cluster.anchor.latitude)
        );
        out.push_str("</Placemark>\n");
    }
    out.push_str("</Document>\n</kml>\n");
    out.into_bytes()
}
