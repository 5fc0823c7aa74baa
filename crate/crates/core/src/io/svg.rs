//! Minimal static SVG rendering of the stability, QQ and RMSE panels.

use crate::inference::{QqTable, ThresholdProfile, ThresholdSelection};
use crate::simulation::RmseCell;
use std::fmt::Write;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 50.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Style {
    Line,
    Dashed,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
    pub colour: &'static str,
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub series: Vec<Series>,
    /// Vertical reference lines at these x values.
    pub vlines: Vec<f64>,
    /// Horizontal reference lines at these y values.
    pub hlines: Vec<f64>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn render_panel(out: &mut String, p: &Panel, ox: f64, oy: f64) {
    let (x0, x1) = range(p.series.iter().flat_map(|s| s.points.iter().map(|q| q.0)).chain(p.vlines.iter().copied()));
    let (y0, y1) = range(p.series.iter().flat_map(|s| s.points.iter().map(|q| q.1)).chain(p.hlines.iter().copied()));
    let (w, h) = (PANEL_W - 1.5 * MARGIN, PANEL_H - 1.5 * MARGIN);
    let (left, top) = (ox + MARGIN, oy + 0.5 * MARGIN);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * w;
    let sy = |y: f64| top + h - (y - y0) / (y1 - y0) * h;

    let _ = writeln!(out, r##"<rect x="{left:.2}" y="{top:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#444"/>"##);
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#, left + w / 2.0, top - 8.0, esc(&p.title));
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#, left + w / 2.0, top + h + 32.0, esc(&p.xlabel));
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        left - 36.0,
        top + h / 2.0,
        left - 36.0,
        top + h / 2.0,
        esc(&p.ylabel)
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="9">{:.3}</text>"#, sx(fx), top + h + 14.0, fx);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="9">{:.3}</text>"#, left - 4.0, sy(fy) + 3.0, fy);
    }
    for &v in &p.vlines {
        let _ = writeln!(out, r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#000" stroke-dasharray="2,3"/>"##, sx(v), top, top + h);
    }
    for &v in &p.hlines {
        let _ = writeln!(out, r##"<line x1="{1:.2}" y1="{0:.2}" x2="{2:.2}" y2="{0:.2}" stroke="#888" stroke-dasharray="2,3"/>"##, sy(v), left, left + w);
    }
    for (i, s) in p.series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s.points.iter().copied().filter(|q| q.0.is_finite() && q.1.is_finite()).collect();
        match s.style {
            Style::Points => {
                for (x, y) in &pts {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}"/>"#, sx(*x), sy(*y), s.colour);
                }
            }
            Style::Line | Style::Dashed => {
                if pts.len() >= 2 {
                    let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
                    let dash = if s.style == Style::Dashed { r#" stroke-dasharray="5,3""# } else { "" };
                    let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}"{dash}/>"#, path.join(" "), s.colour);
                }
            }
        }
        if !s.label.is_empty() {
            let ly = top + 12.0 + 12.0 * i as f64;
            let _ = writeln!(out, r#"<text x="{:.2}" y="{ly:.2}" font-size="9" fill="{}">{}</text>"#, left + w - 4.0 - 6.0 * s.label.len() as f64, s.colour, esc(&s.label));
        }
    }
}

/// Lays panels out on a grid with `cols` columns.
pub fn render(panels: &[Panel], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif">"#,
        PANEL_W * cols as f64,
        PANEL_H * rows as f64
    );
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, PANEL_W * (i % cols) as f64, PANEL_H * (i / cols) as f64);
    }
    out.push_str("</svg>\n");
    out
}

fn band(label: &str, colour: &'static str, est: Vec<(f64, f64)>, lo: Vec<(f64, f64)>, hi: Vec<(f64, f64)>) -> Vec<Series> {
    vec![
        Series { label: label.into(), points: est, style: Style::Line, colour },
        Series { label: String::new(), points: lo, style: Style::Dashed, colour },
        Series { label: String::new(), points: hi, style: Style::Dashed, colour },
    ]
}

/// κ̂, σ* and ξ̂ against threshold, with the recommended threshold marked.
pub fn stability_svg(profile: &ThresholdProfile, selection: Option<&ThresholdSelection>) -> String {
    let e = &profile.entries;
    let vlines: Vec<f64> = selection.and_then(|s| s.threshold).into_iter().collect();
    let panel = |title: &str, hline: Option<f64>, f: &dyn Fn(&crate::inference::ThresholdEntry) -> (f64, f64, f64)| Panel {
        title: format!("{title} ({})", profile.family),
        xlabel: "threshold u".into(),
        ylabel: title.into(),
        series: band(
            "",
            COLOURS[0],
            e.iter().map(|t| (t.u, f(t).0)).collect(),
            e.iter().map(|t| (t.u, f(t).1)).collect(),
            e.iter().map(|t| (t.u, f(t).2)).collect(),
        ),
        vlines: vlines.clone(),
        hlines: hline.into_iter().collect(),
    };
    let panels = [
        panel("kappa", Some(1.0), &|t| (t.kappa_hat, t.kappa_ci.lo, t.kappa_ci.hi)),
        panel("sigma*", None, &|t| (t.sigma_star, t.sigma_star_ci.lo, t.sigma_star_ci.hi)),
        panel("xi", None, &|t| (t.xi_hat, t.xi_ci.lo, t.xi_ci.hi)),
    ];
    render(&panels, 3)
}

pub fn qq_svg(table: &QqTable, title: &str) -> String {
    let r = &table.rows;
    let diag: Vec<(f64, f64)> = match (r.first(), r.last()) {
        (Some(a), Some(b)) => vec![(a.model_quantile, a.model_quantile), (b.model_quantile, b.model_quantile)],
        _ => Vec::new(),
    };
    let mut series = band(
        "",
        COLOURS[0],
        Vec::new(),
        r.iter().map(|q| (q.model_quantile, q.lower)).collect(),
        r.iter().map(|q| (q.model_quantile, q.upper)).collect(),
    );
    series[0] = Series { label: String::new(), points: diag, style: Style::Line, colour: "#888" };
    series.push(Series {
        label: String::new(),
        points: r.iter().map(|q| (q.model_quantile, q.observed)).collect(),
        style: Style::Points,
        colour: COLOURS[1],
    });
    let panel = Panel {
        title: title.into(),
        xlabel: "model quantile".into(),
        ylabel: "observed excess".into(),
        series,
        ..Panel::default()
    };
    render(&[panel], 1)
}

/// One panel per (n, T) pair, one line per family.
pub fn rmse_svg(studies: &[(usize, Vec<RmseCell>)]) -> String {
    let mut panels = Vec::new();
    for (n, cells) in studies {
        let mut ts: Vec<f64> = cells.iter().map(|c| c.t).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let mut fams: Vec<_> = cells.iter().map(|c| c.family).collect();
        fams.sort();
        fams.dedup();
        for t in ts {
            let series = fams
                .iter()
                .enumerate()
                .map(|(i, f)| Series {
                    label: f.to_string(),
                    points: cells.iter().filter(|c| c.family == *f && c.t == t).map(|c| (c.threshold, c.rmse)).collect(),
                    style: Style::Line,
                    colour: COLOURS[i % COLOURS.len()],
                })
                .collect();
            panels.push(Panel {
                title: format!("n = {n}, T = {t}"),
                xlabel: "threshold u".into(),
                ylabel: "RMSE".into(),
                series,
                ..Panel::default()
            });
        }
    }
    render(&panels, 2)
}
