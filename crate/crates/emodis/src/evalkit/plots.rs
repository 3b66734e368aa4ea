//! Minimal SVG plot writers: scatter, line series, and heatmap. Enough to
//! render the evaluation figures without a plotting dependency.

use std::path::Path;

use crate::error::{Error, Result};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

/// Scatter plot of labeled 2-d points with a legend.
pub fn svg_scatter(
    points: &[([f64; 2], usize)],
    class_names: &[String],
    title: &str,
    path: &Path,
) -> Result<()> {
    let (x_lo, x_hi) = bounds(points.iter().map(|(p, _)| p[0]));
    let (y_lo, y_hi) = bounds(points.iter().map(|(p, _)| p[1]));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y_lo) / (y_hi - y_lo) * (H - 2.0 * MARGIN);

    let mut svg = header(title);
    svg.push_str(&format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    ));
    for (p, class) in points {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
            sx(p[0]),
            sy(p[1]),
            PALETTE[class % PALETTE.len()]
        ));
    }
    for (i, name) in class_names.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        svg.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"{}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            W - MARGIN + 12.0,
            y,
            PALETTE[i % PALETTE.len()],
            W - MARGIN + 20.0,
            y + 4.0,
            escape(name)
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// Line plot of one or more labeled series over their index.
pub fn svg_lines(series: &[(String, Vec<f64>)], title: &str, path: &Path) -> Result<()> {
    let max_len = series.iter().map(|(_, s)| s.len()).max().unwrap_or(1).max(2);
    let (y_lo, y_hi) = bounds(series.iter().flat_map(|(_, s)| s.iter().copied()));
    let sx = |i: usize| MARGIN + i as f64 / (max_len - 1) as f64 * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y_lo) / (y_hi - y_lo) * (H - 2.0 * MARGIN);

    let mut svg = header(title);
    svg.push_str(&format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    ));
    for (k, (name, s)) in series.iter().enumerate() {
        if s.is_empty() {
            continue;
        }
        let pts: Vec<String> =
            s.iter().enumerate().map(|(i, v)| format!("{:.2},{:.2}", sx(i), sy(*v))).collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.7\"/>\n",
            pts.join(" "),
            PALETTE[k % PALETTE.len()]
        ));
        let y = MARGIN + 14.0 * k as f64;
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"3\" fill=\"{}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            W - MARGIN + 8.0,
            y,
            PALETTE[k % PALETTE.len()],
            W - MARGIN + 22.0,
            y + 6.0,
            escape(name)
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// Heatmap with per-cell value labels (used for 3x3 strength confusions).
pub fn svg_heatmap(
    matrix: &[Vec<f64>],
    row_labels: &[String],
    col_labels: &[String],
    title: &str,
    path: &Path,
) -> Result<()> {
    let rows = matrix.len().max(1);
    let cols = matrix.first().map(|r| r.len()).unwrap_or(1).max(1);
    let cell_w = (W - 2.0 * MARGIN) / cols as f64;
    let cell_h = (H - 2.0 * MARGIN) / rows as f64;
    let mut svg = header(title);
    for (r, row) in matrix.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let x = MARGIN + c as f64 * cell_w;
            let y = MARGIN + r as f64 * cell_h;
            let intensity = (v.clamp(0.0, 1.0) * 255.0) as u8;
            let color = format!("rgb({},{},{})", 255 - intensity, 255 - intensity / 3, 255);
            svg.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell_w:.1}\" height=\"{cell_h:.1}\" fill=\"{color}\" stroke=\"#555\"/>\n\
                 <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{v:.2}</text>\n",
                x + cell_w / 2.0,
                y + cell_h / 2.0 + 5.0,
            ));
        }
    }
    for (r, label) in row_labels.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
            MARGIN - 6.0,
            MARGIN + r as f64 * cell_h + cell_h / 2.0 + 4.0,
            escape(label)
        ));
    }
    for (c, label) in col_labels.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            MARGIN + c as f64 * cell_w + cell_w / 2.0,
            MARGIN - 8.0,
            escape(label)
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
