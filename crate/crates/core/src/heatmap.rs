//! CSV and SVG export of similarity matrices.
//!
//! The SVG draws one `<rect class="cell">` per matrix entry (text rows top to
//! bottom, audio frames left to right), the reference path as a white
//! polyline and the MAS path as a red polyline.

use std::fmt::Write as _;

use crate::simkernel::SimilarityMatrix;

const CELL: f64 = 8.0;
const TOP: f64 = 28.0;
const BOTTOM: f64 = 32.0;
const RIGHT: f64 = 12.0;
const CHAR_WIDTH: f64 = 6.5;
const MAX_LABEL_CHARS: usize = 24;

/// Similarity matrix as CSV: header row of frame indices, one row per label.
pub fn render_csv(matrix: &SimilarityMatrix, labels: &[String]) -> Result<String, csv::Error> {
    assert_eq!(labels.len(), matrix.rows(), "one label per text row");
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header = vec![String::new()];
    header.extend((0..matrix.cols()).map(|i| i.to_string()));
    w.write_record(&header)?;
    for (j, label) in labels.iter().enumerate() {
        let mut record = vec![label.clone()];
        record.extend((0..matrix.cols()).map(|i| format!("{:.6}", matrix.get(j, i))));
        w.write_record(&record)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 strings"))
}

// viridis, sampled at 0, 0.25, 0.5, 0.75, 1
const STOPS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

/// Color for a cosine in `[-1, 1]`.
pub fn color(value: f32) -> String {
    let t = ((f64::from(value) + 1.0) / 2.0).clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let k = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - k as f64;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '&' => "&amp;".to_string(),
            '<' => "&lt;".to_string(),
            '>' => "&gt;".to_string(),
            '"' => "&quot;".to_string(),
            '\'' => "&apos;".to_string(),
            c => c.to_string(),
        })
        .collect()
}

fn polyline(path: &[usize], left: f64, class: &str, stroke: &str) -> String {
    let points: Vec<String> = path
        .iter()
        .enumerate()
        .map(|(i, &j)| format!("{:.1},{:.1}", left + (i as f64 + 0.5) * CELL, TOP + (j as f64 + 0.5) * CELL))
        .collect();
    format!(
        "<polyline class=\"{class}\" points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>\n",
        points.join(" ")
    )
}

fn tick_step(frames: usize) -> usize {
    let raw = (frames / 10).max(1);
    [1, 2, 5, 10, 20, 25, 50, 100, 200, 250, 500, 1000]
        .into_iter()
        .find(|&s| s >= raw)
        .unwrap_or(raw)
}

/// Heatmap with the reference path (white) and MAS path (red) overlaid.
pub fn render_svg(matrix: &SimilarityMatrix, labels: &[String], reference: &[usize], predicted: &[usize], title: &str) -> String {
    assert_eq!(labels.len(), matrix.rows(), "one label per text row");
    let (rows, cols) = (matrix.rows(), matrix.cols());
    let label_chars = labels.iter().map(|l| l.chars().count()).max().unwrap_or(0).min(MAX_LABEL_CHARS);
    let left = 10.0 + CHAR_WIDTH * label_chars as f64;
    let width = left + CELL * cols as f64 + RIGHT;
    let height = TOP + CELL * rows as f64 + BOTTOM;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"monospace\" font-size=\"7\">"
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(title));
    let _ = writeln!(svg, "<text x=\"{left:.1}\" y=\"14\" font-size=\"10\">{}</text>", escape(title));

    svg.push_str("<g class=\"cells\" shape-rendering=\"crispEdges\">\n");
    for j in 0..rows {
        for i in 0..cols {
            let _ = writeln!(
                svg,
                "<rect class=\"cell\" x=\"{:.1}\" y=\"{:.1}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\"/>",
                left + i as f64 * CELL,
                TOP + j as f64 * CELL,
                color(matrix.get(j, i))
            );
        }
    }
    svg.push_str("</g>\n");

    svg.push_str("<g class=\"row-labels\" text-anchor=\"end\">\n");
    for (j, label) in labels.iter().enumerate() {
        let shown: String = label.chars().take(MAX_LABEL_CHARS).collect();
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            left - 3.0,
            TOP + (j as f64 + 0.75) * CELL,
            escape(&shown)
        );
    }
    svg.push_str("</g>\n");

    svg.push_str("<g class=\"frame-labels\" text-anchor=\"middle\">\n");
    let bottom = TOP + rows as f64 * CELL;
    for i in (0..cols).step_by(tick_step(cols)) {
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\">{i}</text>", left + (i as f64 + 0.5) * CELL, bottom + 10.0);
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"9\">audio frame</text>",
        left + cols as f64 * CELL / 2.0,
        bottom + 24.0
    );
    svg.push_str("</g>\n");

    svg.push_str(&polyline(reference, left, "reference", "#ffffff"));
    svg.push_str(&polyline(predicted, left, "mas", "#ff0000"));
    svg.push_str("</svg>\n");
    svg
}
