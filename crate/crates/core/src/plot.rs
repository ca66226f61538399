//! Dependency-free SVG line plots and the min-max decimation shared with the
//! HTTP series endpoint.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlotError {
    #[error("nothing to plot: {0}")]
    Empty(String),
    #[error("series `{0}` has mismatched x/y lengths")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Draw as unconnected circles (event markers) instead of a polyline.
    pub points_only: bool,
}

impl PlotSeries {
    pub fn new(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { label: label.into(), x, y, points_only: false }
    }

    pub fn markers(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { label: label.into(), x, y, points_only: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub title: String,
    /// Axis labels including units, e.g. `time (s)`.
    pub x_label: String,
    pub y_label: String,
    pub width: u32,
    pub height: u32,
    /// Series longer than this are min-max decimated before drawing.
    pub max_points: usize,
    /// Keep x and y on the same scale (stabilograms).
    pub equal_aspect: bool,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            width: 800,
            height: 400,
            max_points: 4000,
            equal_aspect: false,
        }
    }
}

impl PlotStyle {
    pub fn titled(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), ..Self::default() }
    }
}

/// Summary of one decimation bucket `[first, last]` of the input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub first: usize,
    pub last: usize,
    pub min_index: usize,
    pub min: f64,
    pub max_index: usize,
    pub max: f64,
}

/// Splits `y` into `buckets` contiguous runs of near-equal length and keeps
/// the extrema of each, so peaks survive decimation. Non-finite samples are
/// ignored; an all-gap bucket reports NaN extrema.
pub fn min_max_decimate(y: &[f64], buckets: usize) -> Vec<Bucket> {
    let n = y.len();
    let buckets = buckets.min(n).max(1);
    if n == 0 {
        return Vec::new();
    }
    (0..buckets)
        .map(|b| {
            let first = b * n / buckets;
            let last = (b + 1) * n / buckets - 1;
            let mut out = Bucket { first, last, min_index: first, min: f64::NAN, max_index: first, max: f64::NAN };
            for (i, &v) in y.iter().enumerate().take(last + 1).skip(first) {
                if !v.is_finite() {
                    continue;
                }
                if !(v >= out.min) {
                    out.min = v;
                    out.min_index = i;
                }
                if !(v <= out.max) {
                    out.max = v;
                    out.max_index = i;
                }
            }
            out
        })
        .collect()
}

/// Indices to draw for `y`: everything when short enough, otherwise each
/// bucket's extrema in time order.
fn draw_indices(y: &[f64], max_points: usize) -> Vec<usize> {
    if y.len() <= max_points.max(2) {
        return (0..y.len()).collect();
    }
    let mut idx = Vec::with_capacity(max_points);
    for b in min_max_decimate(y, max_points / 2) {
        if b.min.is_nan() {
            continue;
        }
        let (a, c) = if b.min_index <= b.max_index { (b.min_index, b.max_index) } else { (b.max_index, b.min_index) };
        idx.push(a);
        if c != a {
            idx.push(c);
        }
    }
    idx
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_owned()
    } else {
        s
    }
}

/// Renders the series as one `<polyline>` each, with labelled axes and a
/// legend when there is more than one series.
pub fn emit_plot(series: &[PlotSeries], style: &PlotStyle) -> Result<String, PlotError> {
    if series.is_empty() {
        return Err(PlotError::Empty("no series given".into()));
    }
    for s in series {
        if s.x.len() != s.y.len() {
            return Err(PlotError::Shape(s.label.clone()));
        }
        if s.y.is_empty() {
            return Err(PlotError::Empty(format!("series `{}` is empty", s.label)));
        }
    }
    let finite = |v: &f64| v.is_finite();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for (x, y) in s.x.iter().zip(&s.y) {
            if finite(x) && finite(y) {
                x0 = x0.min(*x);
                x1 = x1.max(*x);
                y0 = y0.min(*y);
                y1 = y1.max(*y);
            }
        }
    }
    if !x0.is_finite() {
        return Err(PlotError::Empty("no finite points".into()));
    }
    let pad = |lo: &mut f64, hi: &mut f64| {
        if *hi - *lo <= f64::EPSILON * lo.abs().max(1.0) {
            *lo -= 0.5;
            *hi += 0.5;
        } else {
            let m = 0.04 * (*hi - *lo);
            *lo -= m;
            *hi += m;
        }
    };
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);

    let (w, h) = (style.width as f64, style.height as f64);
    let (left, right, top, bottom) = (70.0, 20.0, 36.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    if style.equal_aspect {
        let (sx, sy) = ((x1 - x0) / pw, (y1 - y0) / ph);
        if sx > sy {
            let extra = (sx * ph - (y1 - y0)) / 2.0;
            y0 -= extra;
            y1 += extra;
        } else {
            let extra = (sy * pw - (x1 - x0)) / 2.0;
            x0 -= extra;
            x1 += extra;
        }
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        style.width, style.height, style.width, style.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if !style.title.is_empty() {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(&style.title));
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black" stroke-width="1"/>"#
    );

    let xs = tick_step(x1 - x0);
    let mut t = (x0 / xs).ceil() * xs;
    while t <= x1 {
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/><text x="{0:.2}" y="{3:.2}" text-anchor="middle">{4}</text>"#,
            px(t),
            top + ph,
            top + ph + 5.0,
            top + ph + 18.0,
            fmt_tick(t, xs)
        );
        t += xs;
    }
    let ys = tick_step(y1 - y0);
    let mut t = (y0 / ys).ceil() * ys;
    while t <= y1 {
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="black"/><text x="{3:.2}" y="{4:.2}" text-anchor="end">{5}</text>"#,
            left - 5.0,
            py(t),
            left,
            left - 8.0,
            py(t) + 4.0,
            fmt_tick(t, ys)
        );
        t += ys;
    }
    let _ = writeln!(
        svg,
        r#"<text class="x-label" x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 10.0,
        escape(&style.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="16" y="{0:.1}" text-anchor="middle" transform="rotate(-90 16 {0:.1})">{1}</text>"#,
        top + ph / 2.0,
        escape(&style.y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if s.points_only {
            for (&x, &y) in s.x.iter().zip(&s.y) {
                if finite(&x) && finite(&y) {
                    let _ = writeln!(
                        svg,
                        r#"<circle data-label="{}" cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                        escape(&s.label),
                        px(x),
                        py(y)
                    );
                }
            }
            continue;
        }
        let mut pts = String::new();
        for i in draw_indices(&s.y, style.max_points) {
            let (x, y) = (s.x[i], s.y[i]);
            if finite(&x) && finite(&y) {
                if !pts.is_empty() {
                    pts.push(' ');
                }
                let _ = write!(pts, "{:.2},{:.2}", px(x), py(y));
            }
        }
        let _ = writeln!(
            svg,
            r#"<polyline data-label="{}" fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>"#,
            escape(&s.label)
        );
    }
    if series.len() > 1 {
        for (k, s) in series.iter().enumerate() {
            let y = top + 14.0 + 16.0 * k as f64;
            let color = PALETTE[k % PALETTE.len()];
            let _ = writeln!(
                svg,
                r#"<g class="legend"><line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text></g>"#,
                left + pw - 130.0,
                left + pw - 110.0,
                left + pw - 104.0,
                y + 4.0,
                escape(&s.label)
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn polyline_points(svg: &str) -> Vec<usize> {
        svg.lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| {
                let p = l.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
                p.split(' ').filter(|s| !s.is_empty()).count()
            })
            .collect()
    }

    #[test]
    fn single_series_one_polyline() {
        let s = PlotSeries::new("a", (0..10).map(f64::from).collect(), (0..10).map(|k| (k * k) as f64).collect());
        let svg = emit_plot(&[s], &PlotStyle::titled("t", "time (s)", "force (N)")).unwrap();
        assert_eq!(polyline_points(&svg), vec![10]);
        assert!(svg.contains("time (s)") && svg.contains("force (N)"));
        assert!(!svg.contains("class=\"legend\""));
    }

    #[test]
    fn two_series_have_legend() {
        let a = PlotSeries::new("left", vec![0.0, 1.0], vec![0.0, 1.0]);
        let b = PlotSeries::new("right", vec![0.0, 1.0], vec![1.0, 0.0]);
        let svg = emit_plot(&[a, b], &PlotStyle::default()).unwrap();
        assert_eq!(polyline_points(&svg).len(), 2);
        assert_eq!(svg.matches("class=\"legend\"").count(), 2);
        assert!(svg.contains(">left<") && svg.contains(">right<"));
    }

    #[test]
    fn empty_input_is_error() {
        assert!(matches!(emit_plot(&[], &PlotStyle::default()), Err(PlotError::Empty(_))));
        let e = PlotSeries::new("e", vec![], vec![]);
        assert!(emit_plot(&[e], &PlotStyle::default()).is_err());
    }

    #[test]
    fn decimation_keeps_global_max() {
        let n = 1_000_000;
        let mut y: Vec<f64> = (0..n).map(|k| ((k as f64) * 0.001).sin()).collect();
        y[654_321] = 5.0;
        let b = min_max_decimate(&y, 2000);
        assert_eq!(b.len(), 2000);
        assert_eq!(b.iter().map(|b| b.max).fold(f64::MIN, f64::max), 5.0);
        assert_eq!(b.first().unwrap().first, 0);
        assert_eq!(b.last().unwrap().last, n - 1);
    }

    proptest! {
        #[test]
        fn buckets_tile_the_input(n in 1usize..500, k in 1usize..100) {
            let y: Vec<f64> = (0..n).map(|i| (i as f64 * 1.7).sin()).collect();
            let b = min_max_decimate(&y, k);
            prop_assert_eq!(b.len(), k.min(n));
            prop_assert_eq!(b[0].first, 0);
            for w in b.windows(2) {
                prop_assert_eq!(w[0].last + 1, w[1].first);
            }
            let gmax = y.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert_eq!(b.iter().map(|b| b.max).fold(f64::MIN, f64::max), gmax);
        }
    }
}
