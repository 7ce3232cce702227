// SPDX-License-Identifier: Apache-2.0

//! Minimal static SVG line charts: log2 buffer axis, error bars, reference
//! lines and a legend. Output depends only on the input, so it is stable
//! byte for byte.

use std::fmt::Write as _;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 46.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    /// `(x, y, standard error)`.
    pub points: Vec<(f64, f64, f64)>,
    /// Drawn dashed without markers, as for analytic curves.
    pub analytic: bool,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed y range; fitted to the data (from zero) when `None`.
    pub y_range: Option<(f64, f64)>,
    /// Horizontal dashed reference lines with their labels.
    pub references: Vec<(f64, String)>,
}

impl Panel {
    fn x_extent(&self) -> (f64, f64) {
        let xs = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if lo.is_finite() {
            (lo.log2().floor(), hi.log2().ceil().max(lo.log2().floor() + 1.0))
        } else {
            (0.0, 1.0)
        }
    }

    fn y_extent(&self) -> (f64, f64) {
        if let Some(r) = self.y_range {
            return r;
        }
        let top = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1 + p.2))
            .chain(self.references.iter().map(|r| r.0))
            .fold(0.0f64, f64::max);
        (0.0, nice_ceiling(top))
    }
}

/// Smallest of 1, 2, 2.5, 5 times a power of ten not below `v`.
fn nice_ceiling(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&c| c >= v * (1.0 - 1e-12))
        .unwrap_or(10.0 * mag)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick label without trailing zeros.
fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Renders `panels` in a grid of `columns` under an optional figure title.
pub fn render(title: &str, panels: &[Panel], columns: usize) -> String {
    let columns = columns.max(1);
    let rows = panels.len().div_ceil(columns).max(1);
    let head = if title.is_empty() { 0.0 } else { 28.0 };
    let (w, h) = (PANEL_W * columns as f64, PANEL_H * rows as f64 + head);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if !title.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="19" text-anchor="middle" font-size="15">{}</text>"#,
            w / 2.0,
            esc(title)
        );
    }
    for (i, p) in panels.iter().enumerate() {
        let ox = (i % columns) as f64 * PANEL_W;
        let oy = head + (i / columns) as f64 * PANEL_H;
        panel(&mut out, p, ox, oy);
    }
    out.push_str("</svg>\n");
    out
}

fn panel(out: &mut String, p: &Panel, ox: f64, oy: f64) {
    let (x0, x1) = p.x_extent();
    let (y0, y1) = p.y_extent();
    let (left, right) = (ox + MARGIN_L, ox + PANEL_W - MARGIN_R);
    let (top, bottom) = (oy + MARGIN_T, oy + PANEL_H - MARGIN_B);
    let sx = |x: f64| left + (x.log2() - x0) / (x1 - x0) * (right - left);
    let sy = |y: f64| bottom - (y.clamp(y0, y1) - y0) / (y1 - y0) * (bottom - top);

    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
        (left + right) / 2.0,
        oy + 20.0,
        esc(&p.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
        right - left,
        bottom - top
    );
    for e in (x0 as i32)..=(x1 as i32) {
        let x = sx(2f64.powi(e));
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{bottom:.1}" x2="{x:.1}" y2="{:.1}" stroke="#444"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            bottom + 4.0,
            bottom + 17.0,
            tick(2f64.powi(e))
        );
    }
    for k in 0..=4 {
        let v = y0 + (y1 - y0) * f64::from(k) / 4.0;
        let y = sy(v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{left:.1}" y2="{y:.1}" stroke="#444"/><line x1="{left:.1}" y1="{y:.1}" x2="{right:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            left - 4.0,
            left - 6.0,
            y + 4.0,
            tick(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        bottom + 34.0,
        esc(&p.x_label)
    );
    let (lx, ly) = (ox + 14.0, (top + bottom) / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.1}" y="{ly:.1}" text-anchor="middle" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#,
        esc(&p.y_label)
    );
    for (v, label) in &p.references {
        let y = sy(*v);
        let _ = writeln!(
            out,
            r##"<line x1="{left:.1}" y1="{y:.1}" x2="{right:.1}" y2="{y:.1}" stroke="#888" stroke-dasharray="6 4"/><text x="{:.1}" y="{:.1}" text-anchor="end" fill="#888">{}</text>"##,
            right - 4.0,
            y - 4.0,
            esc(label)
        );
    }
    for (i, s) in p.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s.points.iter().map(|&(x, y, _)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let dash = if s.analytic { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
            path.join(" ")
        );
        if !s.analytic {
            for &(x, y, e) in &s.points {
                let (cx, cy) = (sx(x), sy(y));
                if e > 0.0 {
                    let _ = writeln!(
                        out,
                        r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{color}"/>"#,
                        sy(y - e),
                        sy(y + e)
                    );
                }
                let _ = writeln!(out, r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="3" fill="{color}"/>"#);
            }
        }
        let ey = top + 14.0 + 15.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ey:.1}" x2="{:.1}" y2="{ey:.1}" stroke="{color}" stroke-width="1.8"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            left + 8.0,
            left + 28.0,
            left + 32.0,
            ey + 4.0,
            esc(&s.name)
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Panel {
        Panel {
            title: "t".into(),
            x_label: "buffer (BDP)".into(),
            y_label: "share".into(),
            series: vec![Series {
                name: "a<b".into(),
                points: vec![(1.0, 0.7, 0.02), (64.0, 0.2, 0.0)],
                analytic: false,
            }],
            y_range: Some((0.0, 1.0)),
            references: vec![(0.5, "fair share".into())],
        }
    }

    #[test]
    fn renders_well_formed_document() {
        let svg = render("fig", &[sample(), sample()], 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("stroke-dasharray=\"6 4\""));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg, render("fig", &[sample(), sample()], 2));
    }

    #[test]
    fn nice_ceilings() {
        assert_eq!(nice_ceiling(0.37), 0.5);
        assert_eq!(nice_ceiling(0.04), 0.05);
        assert_eq!(nice_ceiling(1.0), 1.0);
        assert_eq!(nice_ceiling(0.0), 1.0);
    }
}
