//! SVG figures of functional boxplots.
//!
//! A figure contains the central region as a filled polygon, the median and
//! the two envelopes as polylines, and a pair of axes with numeric ticks.
//! Output depends only on the boxplot and the style, so identical inputs give
//! identical documents.

use std::fmt::Write as _;

use crate::fboxplot::BoxplotCurves;

#[derive(Debug, Clone, PartialEq)]
pub struct SvgStyle {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub region_fill: String,
    pub median_stroke: String,
    pub envelope_stroke: String,
    pub axis_stroke: String,
    pub title: Option<String>,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self {
            width: 640.0,
            height: 400.0,
            margin: 56.0,
            region_fill: "magenta".into(),
            median_stroke: "yellow".into(),
            envelope_stroke: "blue".into(),
            axis_stroke: "black".into(),
            title: None,
        }
    }
}

/// Mapping between data coordinates and the plotting area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Plot area as (left, top, right, bottom) in pixels.
    pub area: (f64, f64, f64, f64),
}

impl Frame {
    /// Frame covering the envelopes of `curves`, widened to tick boundaries.
    pub fn fit(curves: &BoxplotCurves, style: &SvgStyle) -> Self {
        let w = curves.grid().len();
        let lo = curves.envelope_min.values().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = curves.envelope_max.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            (lo - pad, hi + pad)
        };
        let step = nice_step(hi - lo, 5);
        let y_range = ((lo / step).floor() * step, (hi / step).ceil() * step);
        let x_hi = (w.max(2) - 1) as f64;
        Self {
            x_range: (0.0, x_hi),
            y_range,
            area: (
                style.margin,
                style.margin * 0.5,
                style.width - style.margin * 0.5,
                style.height - style.margin,
            ),
        }
    }

    pub fn x_px(&self, x: f64) -> f64 {
        let (l, _, r, _) = self.area;
        l + (x - self.x_range.0) / (self.x_range.1 - self.x_range.0) * (r - l)
    }

    pub fn y_px(&self, y: f64) -> f64 {
        let (_, t, _, b) = self.area;
        b - (y - self.y_range.0) / (self.y_range.1 - self.y_range.0) * (b - t)
    }

    /// Inverse of [`Frame::y_px`].
    pub fn y_value(&self, px: f64) -> f64 {
        let (_, t, _, b) = self.area;
        self.y_range.0 + (b - px) / (b - t) * (self.y_range.1 - self.y_range.0)
    }
}

/// Tick spacing from the 1-2-5 sequence giving roughly `target` intervals.
pub fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// Tick positions from `lo` to `hi` inclusive.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let step = nice_step(hi - lo, target);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn points(frame: &Frame, values: impl Iterator<Item = (usize, f64)>) -> String {
    let mut s = String::new();
    for (t, v) in values {
        if !s.is_empty() {
            s.push(' ');
        }
        write!(s, "{:.3},{:.3}", frame.x_px(t as f64), frame.y_px(v)).expect("string write");
    }
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_fbp_svg(curves: &BoxplotCurves, style: &SvgStyle) -> String {
    let frame = Frame::fit(curves, style);
    let (l, t, r, b) = frame.area;
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{1}" viewBox="0 0 {0} {1}">"#,
        style.width, style.height
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(title) = &style.title {
        let _ = writeln!(
            w,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="middle" font-size="14">{}</text>"#,
            (l + r) / 2.0,
            t * 0.7,
            escape(title)
        );
    }

    let upper = curves.box_upper.values().iter().copied().enumerate();
    let lower = curves.box_lower.values().iter().copied().enumerate().rev();
    let _ = writeln!(
        w,
        r#"<polygon class="central-region" fill="{}" fill-opacity="0.6" stroke="none" points="{}"/>"#,
        escape(&style.region_fill),
        points(&frame, upper.chain(lower))
    );
    for (class, curve) in [("envelope-min", &curves.envelope_min), ("envelope-max", &curves.envelope_max)] {
        let _ = writeln!(
            w,
            r#"<polyline class="{class}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            escape(&style.envelope_stroke),
            points(&frame, curve.values().iter().copied().enumerate())
        );
    }
    let _ = writeln!(
        w,
        r#"<polyline class="median" fill="none" stroke="{}" stroke-width="2.5" points="{}"/>"#,
        escape(&style.median_stroke),
        points(&frame, curves.median.values().iter().copied().enumerate())
    );

    let axis = escape(&style.axis_stroke);
    let _ = writeln!(w, r#"<g class="axes" stroke="{axis}" font-size="11" font-family="sans-serif">"#);
    let _ = writeln!(w, r#"<line class="x-axis" x1="{l:.3}" y1="{b:.3}" x2="{r:.3}" y2="{b:.3}"/>"#);
    let _ = writeln!(w, r#"<line class="y-axis" x1="{l:.3}" y1="{b:.3}" x2="{l:.3}" y2="{t:.3}"/>"#);
    let x_step = nice_step(frame.x_range.1 - frame.x_range.0, 6);
    for x in ticks(frame.x_range.0, frame.x_range.1, 6) {
        let px = frame.x_px(x);
        let _ = writeln!(w, r#"<line class="tick" x1="{px:.3}" y1="{b:.3}" x2="{px:.3}" y2="{:.3}"/>"#, b + 5.0);
        let _ = writeln!(
            w,
            r#"<text class="tick-label" x="{px:.3}" y="{:.3}" text-anchor="middle" stroke="none">{}</text>"#,
            b + 18.0,
            label(x, x_step)
        );
    }
    let y_step = nice_step(frame.y_range.1 - frame.y_range.0, 5);
    for y in ticks(frame.y_range.0, frame.y_range.1, 5) {
        let py = frame.y_px(y);
        let _ = writeln!(w, r#"<line class="tick" x1="{:.3}" y1="{py:.3}" x2="{l:.3}" y2="{py:.3}"/>"#, l - 5.0);
        let _ = writeln!(
            w,
            r#"<text class="tick-label" x="{:.3}" y="{:.3}" text-anchor="end" stroke="none">{}</text>"#,
            l - 8.0,
            py + 4.0,
            label(y, y_step)
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, "</svg>");
    out
}
