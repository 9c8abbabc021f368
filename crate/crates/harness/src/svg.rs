//! Minimal SVG scatter and line charts.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

pub struct Point {
    pub x: f64,
    pub y: f64,
    /// Colour position in `[0, 1]`, blue to red.
    pub shade: f64,
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (x0, x1) = range(xs);
        let (y0, y1) = range(ys);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

fn colour(shade: f64) -> String {
    let t = shade.clamp(0.0, 1.0);
    format!("rgb({},{},{})", (40.0 + 200.0 * t) as u8, 60, (240.0 - 200.0 * t) as u8)
}

fn frame(out: &mut String, axes: &Axes, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>
<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>
<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>
"#,
        W / 2.0,
        escape(title),
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD,
        W / 2.0,
        H - 10.0,
        escape(xlabel),
        H / 2.0,
        H / 2.0,
        escape(ylabel),
    );
    for (v, x, y, anchor) in [
        (axes.x0, PAD, H - PAD + 14.0, "start"),
        (axes.x1, W - PAD, H - PAD + 14.0, "end"),
        (axes.y0, PAD - 4.0, H - PAD, "end"),
        (axes.y1, PAD - 4.0, PAD + 4.0, "end"),
    ] {
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{v:.3}</text>"#);
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter plot, optionally with the line `y = slope * x + intercept`.
pub fn scatter(points: &[Point], line: Option<(f64, f64)>, title: &str, xlabel: &str, ylabel: &str) -> String {
    let axes = Axes::fit(points.iter().map(|p| p.x), points.iter().map(|p| p.y));
    let mut out = String::new();
    frame(&mut out, &axes, title, xlabel, ylabel);
    if let Some((slope, intercept)) = line {
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#555" stroke-dasharray="4 3"/>"##,
            axes.px(axes.x0),
            axes.py(slope * axes.x0 + intercept),
            axes.px(axes.x1),
            axes.py(slope * axes.x1 + intercept),
        );
    }
    for p in points.iter().filter(|p| p.x.is_finite() && p.y.is_finite()) {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{}" fill-opacity="0.8"/>"#,
            axes.px(p.x),
            axes.py(p.y),
            colour(p.shade)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One polyline per series with a legend.
pub fn lines(series: &[Series], title: &str, xlabel: &str, ylabel: &str) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let axes = Axes::fit(all().map(|p| p.0), all().map(|p| p.1));
    let mut out = String::new();
    frame(&mut out, &axes, title, xlabel, ylabel);
    for (k, s) in series.iter().enumerate() {
        let shade = if series.len() > 1 { k as f64 / (series.len() - 1) as f64 } else { 0.0 };
        let c = colour(shade);
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", axes.px(x), axes.py(y)))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, pts.join(" "));
        let ly = PAD + 14.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{c}" text-anchor="end">{}</text>"#,
            W - PAD,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}
