//! Scatter plot output as standalone SVG 1.1.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Layout2D;
use crate::error::{Error, Result};

/// Okabe-Ito colors; classes beyond eight reuse the palette cyclically.
pub const PALETTE: [&str; 8] = [
    "#E69F00", "#56B4E9", "#009E73", "#F0E442", "#0072B2", "#D55E00", "#CC79A7", "#000000",
];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 30.0;
const LEGEND_WIDTH: f64 = 180.0;
const RADIUS: f64 = 3.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Maps `[lo, hi]` onto `[start, start + span]`; a degenerate range lands in the middle.
fn scale(v: f64, lo: f64, hi: f64, start: f64, span: f64) -> f64 {
    if hi > lo {
        start + (v - lo) / (hi - lo) * span
    } else {
        start + span / 2.0
    }
}

pub fn scatter_svg(layout: &Layout2D, label_names: &[String]) -> Result<String> {
    if let Some(&bad) = layout.labels().iter().find(|&&l| l >= label_names.len()) {
        return Err(Error::InvalidConfig(format!(
            "label {bad} has no name ({} label names given)",
            label_names.len()
        )));
    }
    let pts = layout.points();
    let col = |c: usize| {
        pts.column(c)
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (x_lo, x_hi) = col(0);
    let (y_lo, y_hi) = col(1);
    let plot_w = WIDTH - LEGEND_WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    s.push_str("<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g id=\"points\">\n");
    for (i, &label) in layout.labels().iter().enumerate() {
        let cx = scale(pts[[i, 0]], x_lo, x_hi, MARGIN, plot_w);
        // SVG y grows downward
        let cy = HEIGHT - scale(pts[[i, 1]], y_lo, y_hi, MARGIN, plot_h);
        let _ = writeln!(
            s,
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{RADIUS}\" fill=\"{}\" fill-opacity=\"0.8\"/>",
            PALETTE[label % PALETTE.len()]
        );
    }
    s.push_str("</g>\n<g id=\"legend\" font-family=\"sans-serif\" font-size=\"13\">\n");
    let lx = WIDTH - LEGEND_WIDTH + 10.0;
    for (k, name) in label_names.iter().enumerate() {
        let ly = MARGIN + 22.0 * k as f64;
        let _ = writeln!(
            s,
            "<g class=\"legend-entry\"><rect x=\"{lx}\" y=\"{ly}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{}</text></g>",
            PALETTE[k % PALETTE.len()],
            lx + 18.0,
            ly + 11.0,
            escape(name)
        );
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

pub fn render_scatter(layout: &Layout2D, label_names: &[String], path: &Path) -> Result<()> {
    let svg = scatter_svg(layout, label_names)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
