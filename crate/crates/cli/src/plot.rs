//! Minimal SVG line plots of loss traces.

use std::fmt::Write;

use anyhow::{ensure, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// A labelled series of `(epoch, mean_loss)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi - lo)
    } else {
        (lo - 0.5, 1.0)
    }
}

/// One polyline per series on shared axes. Output depends only on the input.
pub fn render_svg(title: &str, series: &[Series]) -> Result<String> {
    ensure!(!series.is_empty(), "nothing to plot");
    for s in series {
        ensure!(!s.points.is_empty(), "trace `{}` has no points", s.label);
    }
    let all = || series.iter().flat_map(|s| s.points.iter());
    let fold =
        |f: fn(f64, f64) -> f64, init, pick: fn(&(f64, f64)) -> f64| all().map(pick).fold(init, f);
    let (x0, dx) = span(
        fold(f64::min, f64::INFINITY, |p| p.0),
        fold(f64::max, f64::NEG_INFINITY, |p| p.0),
    );
    let (y0, dy) = span(
        fold(f64::min, f64::INFINITY, |p| p.1),
        fold(f64::max, f64::NEG_INFINITY, |p| p.1),
    );
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let px = |x: f64| MARGIN + (x - x0) / dx * pw;
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / dy * ph;

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )?;
    let (left, bottom, right, top) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    writeln!(
        out,
        r#"<path d="M{left:.2} {top:.2} L{left:.2} {bottom:.2} L{right:.2} {bottom:.2}" fill="none" stroke="black"/>"#
    )?;
    for (x, y, anchor, text) in [
        (left, bottom + 16.0, "start", format!("{x0}")),
        (right, bottom + 16.0, "end", format!("{}", x0 + dx)),
        (left - 6.0, bottom, "end", format!("{y0:.4}")),
        (left - 6.0, top + 4.0, "end", format!("{:.4}", y0 + dy)),
    ] {
        writeln!(
            out,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{text}</text>"#
        )?;
    }
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">epoch</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    )?;
    writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.2})">mean_loss</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        )?;
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" fill="{color}">{}</text>"#,
            right - 150.0,
            top + 12.0 + 12.0 * i as f64,
            escape(&s.label)
        )?;
    }
    out.push_str("</svg>\n");
    Ok(out)
}
