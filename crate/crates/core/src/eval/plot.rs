//! Minimal static SVG charts.

use std::fmt::Write as _;

use crate::dataio::ManeuverLabel;

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of percentages: one polyline per series over shared x labels.
pub fn line_chart(title: &str, x_labels: &[String], series: &[(String, Vec<f64>)]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 120.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let nx = x_labels.len().max(2) - 1;
    let x = |i: usize| left + pw * i as f64 / nx as f64;
    let y = |v: f64| top + ph * (1.0 - v.clamp(0.0, 100.0) / 100.0);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    for tick in (0..=100).step_by(20) {
        let ty = y(tick as f64);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{ty:.1}" x2="{:.1}" y2="{ty:.1}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{tick}</text>"#, left - 6.0, ty + 4.0);
    }
    for (i, l) in x_labels.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#, x(i), h - bottom + 18.0, escape(l));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">T (s)</text>"#, left + pw / 2.0, h - 10.0);
    for (k, (name, vals)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = vals.iter().enumerate().map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for p in &pts {
            let (px, py) = p.split_once(',').unwrap();
            let _ = writeln!(s, r#"<circle cx="{px}" cy="{py}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{:.1}" y="{:.1}" width="12" height="12" fill="{color}"/>"#, w - right + 14.0, ly);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#, w - right + 32.0, ly + 10.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

/// Confusion-matrix heatmap with counts in each cell.
pub fn confusion_heatmap(title: &str, counts: &[[u64; 5]; 5]) -> String {
    let cell = 70.0;
    let (left, top) = (150.0, 60.0);
    let (w, h) = (left + 5.0 * cell + 20.0, top + 5.0 * cell + 120.0);
    let max = counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="28" font-size="16" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    for (r, row) in counts.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            let shade = 255 - (200.0 * n as f64 / max).round() as u8;
            let (x, y) = (left + c as f64 * cell, top + r as f64 * cell);
            let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="white"/>"#);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{n}</text>"#, x + cell / 2.0, y + cell / 2.0 + 5.0);
        }
    }
    for (i, l) in ManeuverLabel::ALL.iter().enumerate() {
        let ty = top + i as f64 * cell + cell / 2.0 + 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ty:.1}" font-size="11" text-anchor="end">{l}</text>"#, left - 6.0);
        let tx = left + i as f64 * cell + cell / 2.0;
        let ly = top + 5.0 * cell + 12.0;
        let _ = writeln!(s, r#"<text x="{tx:.1}" y="{ly:.1}" font-size="11" text-anchor="end" transform="rotate(-40 {tx:.1} {ly:.1})">{l}</text>"#);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">predicted</text>"#, left + 2.5 * cell, h - 8.0);
    s.push_str("</svg>\n");
    s
}
