//! Minimal standalone SVG line/scatter charts. No dependencies; CSV stays
//! the canonical output, these are quick-look companions.

use std::fmt::Write;

pub(crate) struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

pub(crate) const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x_min == x_max {
        x_max = x_min + 1.0;
    }
    if y_min == y_max {
        y_max = y_min + 1.0;
    }
    (x_min, x_max, y_min, y_max)
}

/// One chart as a positioned `<g>` group.
pub(crate) fn chart_group(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    y_offset: f64,
) -> String {
    let (x_min, x_max, y_min, y_max) = bounds(series);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_TOP + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut g = String::new();
    let _ = writeln!(
        g,
        r#"<g transform="translate(0,{y_offset})" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(
        g,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        title
    );
    // axes
    let _ = writeln!(
        g,
        r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/><line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        l = MARGIN_LEFT,
        t = MARGIN_TOP,
        b = MARGIN_TOP + plot_h,
        r = MARGIN_LEFT + plot_w
    );
    // extent labels
    let _ = writeln!(
        g,
        r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
        MARGIN_LEFT - 6.0,
        MARGIN_TOP + plot_h + 4.0,
        y_min
    );
    let _ = writeln!(
        g,
        r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
        MARGIN_LEFT - 6.0,
        MARGIN_TOP + 4.0,
        y_max
    );
    let _ = writeln!(
        g,
        r#"<text x="{}" y="{}" text-anchor="middle">{:.0}</text>"#,
        MARGIN_LEFT,
        MARGIN_TOP + plot_h + 18.0,
        x_min
    );
    let _ = writeln!(
        g,
        r#"<text x="{}" y="{}" text-anchor="middle">{:.0}</text>"#,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h + 18.0,
        x_max
    );
    let _ = writeln!(
        g,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        MARGIN_TOP + plot_h + 36.0,
        x_label
    );
    let _ = writeln!(
        g,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        y_label
    );
    for (i, s) in series.iter().enumerate() {
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if path.len() > 1 {
            let _ = writeln!(
                g,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                path.join(" "),
                s.color
            );
        }
        for &(x, y) in &s.points {
            let _ = writeln!(
                g,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                sx(x),
                sy(y),
                s.color
            );
        }
        let _ = writeln!(
            g,
            r#"<text x="{}" y="{}" fill="{}">{}</text>"#,
            MARGIN_LEFT + plot_w - 120.0,
            MARGIN_TOP + 16.0 * (i + 1) as f64,
            s.color,
            s.label
        );
    }
    g.push_str("</g>\n");
    g
}

/// A standalone document holding `charts` stacked vertically.
pub(crate) fn document(charts: &[String]) -> String {
    let total_h = HEIGHT * charts.len() as f64;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{total_h}" viewBox="0 0 {WIDTH} {total_h}">"#
    );
    out.push('\n');
    out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    out.push('\n');
    for c in charts {
        out.push_str(c);
    }
    out.push_str("</svg>\n");
    out
}
