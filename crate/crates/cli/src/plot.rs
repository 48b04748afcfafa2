//! Minimal SVG rendering of sweep reports: one line per method over a shaded
//! 5th–95th percentile band.

use std::fmt::Write;

use krrbw::eval::SweepRow;
use krrbw::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Series<'a> {
    method: &'a str,
    points: Vec<(f64, f64, f64, f64)>,
}

fn group<'a>(rows: &'a [SweepRow], sigma: bool) -> Vec<Series<'a>> {
    let mut out: Vec<Series<'a>> = Vec::new();
    for r in rows {
        let point = if sigma {
            (r.axis_value, r.mean_sigma, r.p05_sigma, r.p95_sigma)
        } else {
            (r.axis_value, r.mean_r2, r.p05_r2, r.p95_r2)
        };
        if ![point.1, point.2, point.3].iter().all(|v| v.is_finite()) {
            continue;
        }
        match out.iter_mut().find(|s| s.method == r.method) {
            Some(s) => s.points.push(point),
            None => out.push(Series {
                method: &r.method,
                points: vec![point],
            }),
        }
    }
    for s in &mut out {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Renders the mean (line) and 5th–95th percentiles (band) of R² or σ
/// against the axis value. The horizontal axis is logarithmic when every
/// axis value is positive and they span at least two decades.
pub fn render(rows: &[SweepRow], sigma: bool) -> Result<String> {
    let series = group(rows, sigma);
    if series.is_empty() {
        return Err(Error::Degenerate("sweep report has no finite values to plot".into()));
    }
    let xs = || series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (x_lo, x_hi) = span(xs());
    let log_x = x_lo > 0.0 && x_hi / x_lo >= 100.0;
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let (tx_lo, tx_hi) = span(xs().map(tx));
    let (y_lo, y_hi) = span(series.iter().flat_map(|s| s.points.iter().flat_map(|p| [p.2, p.3])));

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (tx(x) - tx_lo) / (tx_hi - tx_lo) * plot_w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let axis_name = rows.first().map(|r| r.axis.as_str()).unwrap_or("x");
    let y_name = if sigma { "sigma" } else { "R2" };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let y = y_lo + f * (y_hi - y_lo);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.4}</text>"#,
            LEFT - 6.0,
            py(y) + 4.0,
            y
        );
        let tick = tx_lo + f * (tx_hi - tx_lo);
        let x = if log_x { 10f64.powf(tick) } else { tick };
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.4e}</text>"#,
            px(x),
            TOP + plot_h + 18.0,
            x
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{axis_name}{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        if log_x { " (log scale)" } else { "" }
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{y_name}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let band: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.0), py(p.3)))
            .chain(s.points.iter().rev().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.2))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = TOP + 16.0 + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            s.method
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
