//! Single-file HTML map: circle data embedded as JSON, drawn with Leaflet over
//! an OpenStreetMap tile layer.

use std::fmt::Write;

use serde::Serialize;

use super::{circle_label, round6, MapDocument};
use crate::classify::PercentileClass;

#[derive(Serialize)]
struct Payload<'a> {
    title: &'a str,
    generated_at: &'a str,
    parameters: &'a std::collections::BTreeMap<String, String>,
    circles: Vec<Row>,
}

#[derive(Serialize)]
struct Row {
    label: String,
    lat: f64,
    lon: f64,
    count: usize,
    percentile: f64,
    class: &'static str,
    color: &'static str,
    radius: f64,
}

fn escape_html(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// JSON that is safe inside a `<script>` element.
fn script_safe_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v)
        .expect("payload serializes")
        .replace('<', "\\u003c")
        .replace('>', "\\u003e")
        .replace('&', "\\u0026")
}

const SCRIPT: &str = r#"(function () {
  var data = JSON.parse(document.getElementById("map-data").textContent);
  var map = L.map("map").setView([50, 10], 4);
  L.tileLayer("https://{s}.tile.openstreetmap.org/{z}/{x}/{y}.png", {
    maxZoom: 18,
    opacity: 0.8,
    attribution: "&copy; OpenStreetMap contributors"
  }).addTo(map);
  var bounds = [];
  data.circles.forEach(function (c) {
    L.circleMarker([c.lat, c.lon], {
      radius: c.radius, color: c.color, fillColor: c.color, fillOpacity: 0.6, weight: 1
    }).bindPopup(c.label + "<br>n = " + c.count + "<br>percentile " + c.percentile)
      .addTo(map);
    bounds.push([c.lat, c.lon]);
  });
  if (bounds.length > 0) { map.fitBounds(bounds, { padding: [20, 20] }); }
})();"#;

pub fn emit_html(doc: &MapDocument) -> Vec<u8> {
    let payload = Payload {
        title: &doc.title,
        generated_at: &doc.generated_at,
        parameters: &doc.parameters,
        circles: doc
            .circles
            .iter()
            .map(|c| Row {
                label: circle_label(c),
                lat: round6(c.cluster.anchor.latitude),
                lon: round6(c.cluster.anchor.longitude),
                count: c.cluster.count,
                percentile: c.percentile,
                class: c.class.as_str(),
                color: c.class.color_hex(),
                radius: c.display_radius,
            })
            .collect(),
    };

    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(out, "<title>{}</title>", escape_html(&doc.title));
    out.push_str(
        "<link rel=\"stylesheet\" href=\"https://unpkg.com/leaflet@1.9.4/dist/leaflet.css\">\n\
         <script src=\"https://unpkg.com/leaflet@1.9.4/dist/leaflet.js\"></script>\n\
         <style>\nhtml, body, #map { height: 100%; margin: 0; }\n\
         #legend { position: absolute; bottom: 20px; left: 10px; z-index: 1000; background: #fff; \
         padding: 6px 10px; font: 12px sans-serif; border-radius: 4px; }\n\
         #legend span { display: inline-block; width: 12px; height: 12px; margin-right: 6px; \
         border-radius: 50%; vertical-align: middle; }\n</style>\n</head>\n<body>\n\
         <div id=\"map\"></div>\n<div id=\"legend\">\n",
    );
    let _ = writeln!(out, "<strong>{}</strong><br>", escape_html(&doc.title));
    for class in PercentileClass::ALL {
        let _ = writeln!(
            out,
            "<div class=\"legend-row\" data-class=\"{}\"><span style=\"background:{}\"></span>{} ({})</div>",
            class.as_str(),
            class.color_hex(),
            class.color_name(),
            escape_html(class.label())
        );
    }
    out.push_str("</div>\n");
    let _ = writeln!(
        out,
        "<script id=\"map-data\" type=\"application/json\">{}</script>",
        script_safe_json(&payload)
    );
    let _ = writeln!(out, "<script>\n{SCRIPT}\n</script>");
    out.push_str("</body>\n</html>\n");
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;

    fn data_block(html: &str) -> serde_json::Value {
        let start = html.find("<script id=\"map-data\" type=\"application/json\">").unwrap();
        let rest = &html[start..];
        let open = rest.find('>').unwrap() + 1;
        let close = rest.find("</script>").unwrap();
        serde_json::from_str(&rest[open..close]).unwrap()
    }

    #[test]
    fn empty_page_has_empty_data() {
        let html = String::from_utf8(emit_html(&doc(vec![]))).unwrap();
        assert_eq!(data_block(&html)["circles"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn legend_in_class_order() {
        let html = String::from_utf8(emit_html(&doc(vec![]))).unwrap();
        let positions: Vec<usize> = ["red", "fuchsia", "pink", "orange", "cyan", "blue"]
            .iter()
            .map(|c| html.find(&format!("></span>{c} (")).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn embedded_data_cannot_close_script() {
        let html = String::from_utf8(emit_html(&doc(vec![circle("</script><b>", "x", 1.0, 1.0, 2, 0.0)]))).unwrap();
        assert_eq!(html.matches("</script>").count(), 3);
        assert_eq!(data_block(&html)["circles"][0]["label"], "</script><b>, x");
    }
}
