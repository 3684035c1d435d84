//! Minimal stacked line plots as standalone SVG.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const PANEL: f64 = 180.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 20.0;
const PAD_V: f64 = 28.0;
const MAX_POINTS: usize = 1500;

pub struct Series<'a> {
    pub label: &'a str,
    pub values: Vec<f64>,
}

/// One panel per series, sharing the time axis.
pub fn stacked(title: &str, t: &[f64], series: &[Series]) -> String {
    let height = PAD_V + series.len() as f64 * (PANEL + PAD_V);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{PAD_L}" y="18" font-size="14">{}</text>"#,
        escape(title)
    );
    let (t0, t1) = (t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(1.0));
    let stride = t.len().div_ceil(MAX_POINTS).max(1);
    for (k, s) in series.iter().enumerate() {
        let top = PAD_V + k as f64 * (PANEL + PAD_V);
        let finite = s.values.iter().copied().filter(|v| v.is_finite());
        let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 * (1.0 + hi.abs()) {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        let x = |tv: f64| PAD_L + (tv - t0) / (t1 - t0).max(1e-300) * (WIDTH - PAD_L - PAD_R);
        let y = |v: f64| top + PANEL - (v - lo) / (hi - lo) * PANEL;
        let _ = writeln!(
            out,
            r##"<rect x="{PAD_L}" y="{top}" width="{}" height="{PANEL}" fill="none" stroke="#999"/>"##,
            WIDTH - PAD_L - PAD_R
        );
        if lo < 0.0 && hi > 0.0 {
            let _ = writeln!(
                out,
                r##"<line x1="{PAD_L}" x2="{}" y1="{y0:.2}" y2="{y0:.2}" stroke="#ccc"/>"##,
                WIDTH - PAD_R,
                y0 = y(0.0)
            );
        }
        let _ = writeln!(out, r#"<text x="4" y="{:.1}">{}</text>"#, top + 14.0, escape(s.label));
        let _ = writeln!(out, r#"<text x="4" y="{:.1}">{hi:.3e}</text>"#, top + 30.0);
        let _ = writeln!(out, r#"<text x="4" y="{:.1}">{lo:.3e}</text>"#, top + PANEL);
        let mut pts = String::new();
        for (tv, v) in t.iter().zip(&s.values).step_by(stride) {
            if v.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", x(*tv), y(*v));
            }
        }
        let _ = writeln!(
            out,
            r##"<polyline fill="none" stroke="#1f4e9c" stroke-width="1.2" points="{}"/>"##,
            pts.trim_end()
        );
    }
    let last = PAD_V + series.len() as f64 * (PANEL + PAD_V) - 8.0;
    let _ = writeln!(out, r#"<text x="{PAD_L}" y="{last}">t = {t0}</text>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{last}" text-anchor="end">t = {t1:.3}</text>"#,
        WIDTH - PAD_R
    );
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_series() {
        let t: Vec<f64> = (0..5000).map(|i| i as f64 * 0.01).collect();
        let s = stacked(
            "a<b",
            &t,
            &[
                Series {
                    label: "y",
                    values: t.iter().map(|x| x.sin()).collect(),
                },
                Series {
                    label: "flat",
                    values: vec![1.0; t.len()],
                },
            ],
        );
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("a&lt;b"));
        let pts = s.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert!(pts.split(' ').count() <= MAX_POINTS);
    }
}
