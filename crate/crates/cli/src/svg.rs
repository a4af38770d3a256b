//! Minimal static SVG line plots.
//!
//! Output depends only on the input numbers: coordinates are written with a
//! fixed number of decimals and no timestamps or ids are emitted, so equal
//! inputs give byte-identical files.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 52.0;

pub const PALETTE: [&str; 4] = ["#1f5fa8", "#c0392b", "#27864a", "#7d3c98"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub dashed: bool,
}

/// Vertical line at `x` with a label at its top.
#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub x: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub markers: Vec<Marker>,
}

/// Fixed-decimal formatting without a negative zero.
fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick step of 1, 2 or 5 times a power of ten giving about `target` ticks.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn decimals_for(step: f64) -> usize {
    if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    }
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn from_values(values: impl Iterator<Item = f64>, pad: f64) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Axis { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            let half = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 1.0 };
            return Axis { lo: lo - half, hi: hi + half };
        }
        let p = (hi - lo) * pad;
        Axis { lo: lo - p, hi: hi + p }
    }

    fn ticks(&self) -> (Vec<f64>, usize) {
        let step = nice_step(self.hi - self.lo, 6.0);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        ((first..=last).map(|k| k as f64 * step).collect(), decimals_for(step))
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }
}

impl LinePlot {
    pub fn render(&self) -> String {
        let x_axis = Axis::from_values(
            self.series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.0))
                .chain(self.markers.iter().map(|m| m.x)),
            0.0,
        );
        let y_axis = Axis::from_values(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)), 0.05);
        let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
        let px = |x: f64| fixed(x_axis.map(x, left, right), 2);
        let py = |y: f64| fixed(y_axis.map(y, bottom, top), 2);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            fixed(WIDTH / 2.0, 2),
            escape(&self.title)
        );

        // grid and tick labels
        let (xt, xd) = x_axis.ticks();
        for x in xt {
            let _ = writeln!(
                svg,
                r##"<line x1="{0}" y1="{top}" x2="{0}" y2="{bottom}" stroke="#e4e4e4"/><text x="{0}" y="{1}" text-anchor="middle">{2}</text>"##,
                px(x),
                fixed(bottom + 16.0, 2),
                fixed(x, xd)
            );
        }
        let (yt, yd) = y_axis.ticks();
        for y in yt {
            let _ = writeln!(
                svg,
                r##"<line x1="{left}" y1="{0}" x2="{right}" y2="{0}" stroke="#e4e4e4"/><text x="{1}" y="{0}" text-anchor="end" dominant-baseline="middle">{2}</text>"##,
                py(y),
                fixed(left - 6.0, 2),
                fixed(y, yd)
            );
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            fixed(right - left, 2),
            fixed(bottom - top, 2)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            fixed((left + right) / 2.0, 2),
            fixed(HEIGHT - 12.0, 2),
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            fixed((top + bottom) / 2.0, 2),
            escape(&self.y_label)
        );

        for s in &self.series {
            if s.points.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let _ = write!(d, "{}{} {}", if i == 0 { "M" } else { " L" }, px(x), py(y));
            }
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
                s.color
            );
        }

        for m in &self.markers {
            let x = px(m.x);
            let _ = writeln!(
                svg,
                r##"<line class="marker" x1="{x}" y1="{top}" x2="{x}" y2="{bottom}" stroke="#444" stroke-dasharray="2 3"/><text x="{x}" y="{}" text-anchor="middle" font-size="10">{}</text>"##,
                fixed(top - 4.0, 2),
                escape(&m.label)
            );
        }

        // legend
        for (i, s) in self.series.iter().enumerate() {
            let y = top + 14.0 + 16.0 * i as f64;
            let _ = writeln!(
                svg,
                r#"<line x1="{x1}" y1="{y}" x2="{x2}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{tx}" y="{y}" dominant-baseline="middle">{label}</text>"#,
                x1 = fixed(right - 150.0, 2),
                y = fixed(y, 2),
                x2 = fixed(right - 128.0, 2),
                color = s.color,
                tx = fixed(right - 122.0, 2),
                label = escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LinePlot {
        LinePlot {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "s".into(),
                points: (0..20).map(|i| (i as f64 * 0.1, (i as f64).sin())).collect(),
                color: PALETTE[0],
                dashed: false,
            }],
            markers: vec![Marker {
                x: 0.5,
                label: "m".into(),
            }],
        }
    }

    #[test]
    fn rendering_is_stable() {
        assert_eq!(sample().render(), sample().render());
    }

    #[test]
    fn labels_escaped_and_markers_drawn() {
        let svg = sample().render();
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches(r#"class="marker""#).count(), 1);
    }

    #[test]
    fn marker_sits_at_its_data_x() {
        // x spans [0, 1.9] over [72, 696]: 0.5 maps to 72 + 0.5 / 1.9 * 624
        let svg = sample().render();
        let expect = fixed(72.0 + 0.5 / 1.9 * 624.0, 2);
        assert!(svg.contains(&format!(r#"class="marker" x1="{expect}""#)));
    }

    #[test]
    fn no_negative_zero() {
        assert_eq!(fixed(-0.0001, 2), "0.00");
        assert_eq!(fixed(-1.5, 1), "-1.5");
    }

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(100.0, 5.0), 20.0);
        assert_eq!(nice_step(1.0, 5.0), 0.2);
        assert_eq!(nice_step(7.0, 5.0), 1.0);
    }

    #[test]
    fn flat_and_empty_series_render() {
        let mut p = sample();
        p.series[0].points = vec![(0.0, 3.0), (1.0, 3.0)];
        assert!(p.render().contains("<path"));
        p.series.clear();
        p.markers.clear();
        assert!(p.render().ends_with("</svg>\n"));
    }
}
