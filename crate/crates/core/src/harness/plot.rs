//! Minimal deterministic SVG line charts of logged quantities.

use std::fmt::Write as _;
use std::path::Path;

use crate::agents::LogRow;
use crate::error::{Error, Result};

use super::logio::CSV_HEADER;

/// Plottable CSV columns (everything except `step`).
pub fn quantities() -> &'static [&'static str] {
    &CSV_HEADER[1..]
}

pub fn column(row: &LogRow, quantity: &str) -> Option<f64> {
    Some(match quantity {
        "episode_return_mean" => row.episode_return_mean,
        "policy_entropy" => row.policy_entropy,
        "log_alpha" => row.log_alpha,
        "target_entropy" => row.target_entropy,
        "q_loss" => row.q_loss,
        "pi_loss" => row.pi_loss,
        "alpha_loss" => row.alpha_loss,
        "policy_shift_tv" => row.policy_shift_tv,
        _ => return None,
    })
}

/// All seeds of one labelled configuration.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub runs: Vec<Vec<LogRow>>,
}

struct Band {
    steps: Vec<f64>,
    mean: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn band(series: &Series, quantity: &str) -> Result<Band> {
    let first = series
        .runs
        .first()
        .filter(|r| !r.is_empty())
        .ok_or(Error::InsufficientData { need: 1, have: 0 })?;
    let steps: Vec<u64> = first.iter().map(|r| r.step).collect();
    for run in &series.runs {
        if run.iter().map(|r| r.step).ne(steps.iter().copied()) {
            return Err(Error::config("plot", "logs do not share a step axis"));
        }
    }
    let n = series.runs.len() as f64;
    let mut out = Band {
        steps: steps.iter().map(|&s| s as f64).collect(),
        mean: Vec::with_capacity(steps.len()),
        lo: Vec::with_capacity(steps.len()),
        hi: Vec::with_capacity(steps.len()),
    };
    for j in 0..steps.len() {
        let values: Vec<f64> = series
            .runs
            .iter()
            .map(|run| column(&run[j], quantity).expect("quantity checked"))
            .collect();
        out.mean.push(values.iter().sum::<f64>() / n);
        out.lo
            .push(values.iter().copied().fold(f64::INFINITY, f64::min));
        out.hi
            .push(values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(out)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".to_string()
        } else {
            s.to_string()
        }
    }
}

/// Renders the seed mean and min-max band of `quantity` for every series.
pub fn plot_svg(series: &[Series], quantity: &str) -> Result<String> {
    if !quantities().contains(&quantity) {
        return Err(Error::UnknownQuantity {
            name: quantity.to_string(),
            valid: quantities().join(", "),
        });
    }
    if series.is_empty() {
        return Err(Error::InsufficientData { need: 1, have: 0 });
    }
    let bands = series
        .iter()
        .map(|s| band(s, quantity))
        .collect::<Result<Vec<_>>>()?;

    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for b in &bands {
        for &x in &b.steps {
            x0 = x0.min(x);
            x1 = x1.max(x);
        }
        for (&lo, &hi) in b.lo.iter().zip(&b.hi) {
            y0 = y0.min(lo);
            y1 = y1.max(hi);
        }
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 - y0 > 1e-12) {
        let pad = (y0.abs() * 0.1).max(0.5);
        y0 -= pad;
        y1 += pad;
    } else {
        let pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(quantity)
    );

    // axes, grid and ticks
    let _ = writeln!(
        svg,
        r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/></g>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h,
        TOP + plot_h
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 19.0,
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT + plot_w,
            LEFT - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">step</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(quantity)
    );

    for (i, (s, b)) in series.iter().zip(&bands).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut band_pts = String::new();
        for (&x, &hi) in b.steps.iter().zip(&b.hi) {
            let _ = write!(band_pts, "{:.2},{:.2} ", sx(x), sy(hi));
        }
        for (&x, &lo) in b.steps.iter().zip(&b.lo).rev() {
            let _ = write!(band_pts, "{:.2},{:.2} ", sx(x), sy(lo));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band_pts.trim_end()
        );
        let mut line_pts = String::new();
        for (&x, &m) in b.steps.iter().zip(&b.mean) {
            let _ = write!(line_pts, "{:.2},{:.2} ", sx(x), sy(m));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            line_pts.trim_end()
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{} (n={})</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label),
            s.runs.len()
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn plot(series: &[Series], quantity: &str, output: &Path) -> Result<()> {
    let svg = plot_svg(series, quantity)?;
    std::fs::write(output, svg).map_err(|e| Error::io(output, e))
}
