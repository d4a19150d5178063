use std::fmt::Write;

use super::{png, FlightLogError, TimeSeries};

/// Series longer than this are reduced by min/max bucket decimation.
pub const MAX_PLOT_POINTS: usize = 4000;

const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [(&str, [u8; 3]); 6] = [
    ("#1f77b4", [0x1f, 0x77, 0xb4]),
    ("#d62728", [0xd6, 0x27, 0x28]),
    ("#2ca02c", [0x2c, 0xa0, 0x2c]),
    ("#ff7f0e", [0xff, 0x7f, 0x0e]),
    ("#9467bd", [0x94, 0x67, 0xbd]),
    ("#8c564b", [0x8c, 0x56, 0x4b]),
];
const AXIS_RGB: [u8; 3] = [0x33, 0x33, 0x33];
const GRID_RGB: [u8; 3] = [0xdd, 0xdd, 0xdd];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub series: TimeSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub series: Vec<PlotSeries>,
    pub x_label: String,
    pub y_label: String,
    pub width: u32,
    pub height: u32,
}

impl PlotSpec {
    pub fn new(title: impl Into<String>, y_label: impl Into<String>, series: Vec<PlotSeries>) -> Self {
        Self {
            title: title.into(),
            series,
            x_label: "time (s)".into(),
            y_label: y_label.into(),
            width: 800,
            height: 400,
        }
    }

    pub fn single(title: &str, label: &str, series: TimeSeries) -> Self {
        Self::new(
            title,
            label,
            vec![PlotSeries {
                label: label.to_string(),
                series,
            }],
        )
    }

    pub fn validate(&self) -> Result<(), FlightLogError> {
        let bad = |m: String| Err(FlightLogError::InvalidSpec(m));
        if self.series.is_empty() {
            return bad("at least one series is required".into());
        }
        if self.width < 200 || self.height < 150 || self.width > 4096 || self.height > 4096 {
            return bad(format!("unsupported size {}x{}", self.width, self.height));
        }
        for s in &self.series {
            if s.series.len() < 2 {
                return bad(format!("series {:?} has fewer than 2 points", s.label));
            }
            s.series
                .check()
                .map_err(|e| FlightLogError::InvalidSpec(format!("series {:?}: {e}", s.label)))?;
        }
        if self.series.iter().all(|s| s.series.values.iter().all(|v| v.is_nan())) {
            return bad("no finite values to plot".into());
        }
        Ok(())
    }
}

/// Data ranges after padding. `x` is seconds since the earliest timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axes {
    pub t0: u64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

pub fn axes_for(spec: &PlotSpec) -> Result<Axes, FlightLogError> {
    spec.validate()?;
    let t0 = spec.series.iter().map(|s| s.series.timestamps[0]).min().unwrap_or(0);
    let t1 = spec.series.iter().filter_map(|s| s.series.timestamps.last()).max().copied().unwrap_or(t0);
    let (x_min, x_max) = padded(0.0, (t1 - t0) as f64 / 1e6);
    let finite = spec.series.iter().flat_map(|s| s.series.values.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (y_min, y_max) = padded(lo, hi);
    Ok(Axes {
        t0,
        x_min,
        x_max,
        y_min,
        y_max,
    })
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// Min/max bucket decimation: keeps the extreme values of each bucket so
/// spikes survive. NaN samples never count as extremes.
pub fn decimate(series: &TimeSeries, max_points: usize) -> Vec<(u64, f64)> {
    let n = series.len();
    if n <= max_points || max_points < 2 {
        return series.points().collect();
    }
    let buckets = max_points / 2;
    let mut out = Vec::with_capacity(buckets * 2);
    for b in 0..buckets {
        let start = b * n / buckets;
        let end = ((b + 1) * n / buckets).max(start + 1);
        let mut lo: Option<usize> = None;
        let mut hi: Option<usize> = None;
        for i in start..end {
            let v = series.values[i];
            if v.is_nan() {
                continue;
            }
            if lo.is_none_or(|j| v < series.values[j]) {
                lo = Some(i);
            }
            if hi.is_none_or(|j| v > series.values[j]) {
                hi = Some(i);
            }
        }
        match (lo, hi) {
            (Some(a), Some(b)) if a != b => {
                let (a, b) = (a.min(b), a.max(b));
                out.push((series.timestamps[a], series.values[a]));
                out.push((series.timestamps[b], series.values[b]));
            }
            (Some(a), _) => out.push((series.timestamps[a], series.values[a])),
            _ => out.push((series.timestamps[start], series.values[start])),
        }
    }
    out
}

struct Frame {
    axes: Axes,
    width: f64,
    height: f64,
}

impl Frame {
    fn plot_w(&self) -> f64 {
        self.width - MARGIN_LEFT - MARGIN_RIGHT
    }

    fn plot_h(&self) -> f64 {
        self.height - MARGIN_TOP - MARGIN_BOTTOM
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.axes.x_min) / (self.axes.x_max - self.axes.x_min) * self.plot_w()
    }

    fn py(&self, y: f64) -> f64 {
        MARGIN_TOP + (self.axes.y_max - y) / (self.axes.y_max - self.axes.y_min) * self.plot_h()
    }

    fn point(&self, ts: u64, v: f64) -> (f64, f64) {
        self.point_secs((ts - self.axes.t0) as f64 / 1e6, v)
    }

    fn point_secs(&self, x: f64, v: f64) -> (f64, f64) {
        (self.px(x), self.py(v))
    }

    fn ticks(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
        (0..TICKS).map(move |i| lo + (hi - lo) * i as f64 / (TICKS - 1) as f64)
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' && c != '\n' => {}
            c => out.push(c),
        }
    }
    out
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" { "0.00".into() } else { s }
}

fn render_svg(spec: &PlotSpec, frame: &Frame, points: &[Vec<(f64, f64)>]) -> String {
    let (w, h) = (frame.width, frame.height);
    let (left, top) = (MARGIN_LEFT, MARGIN_TOP);
    let (right, bottom) = (w - MARGIN_RIGHT, h - MARGIN_BOTTOM);
    let a = frame.axes;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="11">"#,
        spec.width, spec.height, spec.width, spec.height
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##, spec.width, spec.height);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        xml_escape(&spec.title)
    );
    for x in Frame::ticks(a.x_min, a.x_max) {
        let px = frame.px(x);
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{top:.2}" x2="{px:.2}" y2="{bottom:.2}" stroke="#dddddd"/>"##);
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bottom + 15.0,
            tick_label(x)
        );
    }
    for y in Frame::ticks(a.y_min, a.y_max) {
        let py = frame.py(y);
        let _ = writeln!(s, r##"<line x1="{left:.2}" y1="{py:.2}" x2="{right:.2}" y2="{py:.2}" stroke="#dddddd"/>"##);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 5.0,
            py + 4.0,
            tick_label(y)
        );
    }
    let _ = writeln!(s, r##"<line x1="{left:.2}" y1="{bottom:.2}" x2="{right:.2}" y2="{bottom:.2}" stroke="#333333"/>"##);
    let _ = writeln!(s, r##"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{bottom:.2}" stroke="#333333"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        h - 12.0,
        xml_escape(&spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        xml_escape(&spec.y_label)
    );
    for (i, (series, pts)) in spec.series.iter().zip(points).enumerate() {
        let colour = PALETTE[i % PALETTE.len()].0;
        let mut coords = String::new();
        for (j, (x, y)) in pts.iter().enumerate() {
            if j > 0 {
                coords.push(' ');
            }
            let _ = write!(coords, "{x:.2},{y:.2}");
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{coords}"/>"#
        );
        let ly = top + 12.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            right - 150.0,
            right - 130.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            right - 125.0,
            ly + 4.0,
            xml_escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

struct Canvas {
    w: i64,
    h: i64,
    px: Vec<u8>,
}

impl Canvas {
    fn new(w: u32, h: u32) -> Self {
        Self {
            w: w as i64,
            h: h as i64,
            px: vec![0xff; w as usize * h as usize * 4],
        }
    }

    fn set(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.w || y >= self.h {
            return;
        }
        let i = ((y * self.w + x) * 4) as usize;
        self.px[i..i + 3].copy_from_slice(&rgb);
        self.px[i + 3] = 0xff;
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), rgb: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.set(x, y, rgb);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }
}

fn to_px((x, y): (f64, f64)) -> (i64, i64) {
    (x.round() as i64, y.round() as i64)
}

fn render_png(spec: &PlotSpec, frame: &Frame, points: &[Vec<(f64, f64)>]) -> Vec<u8> {
    let mut c = Canvas::new(spec.width, spec.height);
    let a = frame.axes;
    let (left, top) = (MARGIN_LEFT, MARGIN_TOP);
    let (right, bottom) = (frame.width - MARGIN_RIGHT, frame.height - MARGIN_BOTTOM);
    for x in Frame::ticks(a.x_min, a.x_max) {
        let px = frame.px(x);
        c.line(to_px((px, top)), to_px((px, bottom)), GRID_RGB);
    }
    for y in Frame::ticks(a.y_min, a.y_max) {
        let py = frame.py(y);
        c.line(to_px((left, py)), to_px((right, py)), GRID_RGB);
    }
    c.line(to_px((left, bottom)), to_px((right, bottom)), AXIS_RGB);
    c.line(to_px((left, top)), to_px((left, bottom)), AXIS_RGB);
    for (i, pts) in points.iter().enumerate() {
        let rgb = PALETTE[i % PALETTE.len()].1;
        for w in pts.windows(2) {
            c.line(to_px(w[0]), to_px(w[1]), rgb);
        }
        if pts.len() == 1 {
            c.set(to_px(pts[0]).0, to_px(pts[0]).1, rgb);
        }
        let ly = top + 12.0 + 14.0 * i as f64;
        for dy in [-1.0, 0.0, 1.0] {
            c.line(to_px((right - 150.0, ly + dy)), to_px((right - 130.0, ly + dy)), rgb);
        }
    }
    png::encode_rgba(spec.width, spec.height, &c.px)
}

/// Renders `spec` as SVG and as an RGBA PNG of the same geometry.
/// Output depends only on the spec, never on locale, clock or platform.
pub fn render_plot(spec: &PlotSpec) -> Result<(Vec<u8>, Vec<u8>), FlightLogError> {
    let axes = axes_for(spec)?;
    let frame = Frame {
        axes,
        width: spec.width as f64,
        height: spec.height as f64,
    };
    let points: Vec<Vec<(f64, f64)>> = spec
        .series
        .iter()
        .map(|s| {
            decimate(&s.series, MAX_PLOT_POINTS)
                .into_iter()
                .filter(|(_, v)| !v.is_nan())
                .map(|(t, v)| frame.point(t, v))
                .collect()
        })
        .collect();
    let svg = render_svg(spec, &frame, &points);
    let png = render_png(spec, &frame, &points);
    Ok((svg.into_bytes(), png))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, f: impl Fn(usize) -> f64) -> TimeSeries {
        TimeSeries::new((0..n as u64).map(|i| i * 100_000).collect(), (0..n).map(f).collect()).unwrap()
    }

    #[test]
    fn deterministic_output() {
        let spec = PlotSpec::single("Baro", "baro_alt_meter", ramp(50, |i| (i as f64).sin()));
        let a = render_plot(&spec).unwrap();
        let b = render_plot(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_series_widens_to_unit_band() {
        let spec = PlotSpec::single("c", "c", ramp(10, |_| 5.0));
        let ax = axes_for(&spec).unwrap();
        assert_eq!((ax.y_min, ax.y_max), (4.0, 6.0));
    }

    #[test]
    fn padding_is_five_percent() {
        let spec = PlotSpec::single("r", "r", ramp(11, |i| i as f64 * 10.0));
        let ax = axes_for(&spec).unwrap();
        assert!((ax.y_min - -5.0).abs() < 1e-12 && (ax.y_max - 105.0).abs() < 1e-12);
        assert!((ax.x_min - -0.05).abs() < 1e-12 && (ax.x_max - 1.05).abs() < 1e-12);
    }

    #[test]
    fn one_polyline_per_series() {
        let spec = PlotSpec::new(
            "two",
            "v",
            vec![
                PlotSeries { label: "a".into(), series: ramp(5, |i| i as f64) },
                PlotSeries { label: "b <&>".into(), series: ramp(5, |i| -(i as f64)) },
            ],
        );
        let (svg, png) = render_plot(&spec).unwrap();
        let svg = String::from_utf8(svg).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b &lt;&amp;&gt;"));
        assert!(svg.contains("time (s)"));
        assert_eq!(&png[1..4], b"PNG");
    }

    #[test]
    fn invalid_specs() {
        let short = PlotSpec::single("s", "s", ramp(1, |_| 0.0));
        assert!(matches!(render_plot(&short), Err(FlightLogError::InvalidSpec(_))));
        let empty = PlotSpec::new("e", "e", vec![]);
        assert!(matches!(render_plot(&empty), Err(FlightLogError::InvalidSpec(_))));
        let nans = PlotSpec::single("n", "n", ramp(3, |_| f64::NAN));
        assert!(matches!(render_plot(&nans), Err(FlightLogError::InvalidSpec(_))));
    }

    #[test]
    fn decimation_keeps_extremes() {
        let s = ramp(10_000, |i| if i == 7777 { 1e3 } else if i == 1234 { -1e3 } else { (i % 7) as f64 });
        let d = decimate(&s, MAX_PLOT_POINTS);
        assert!(d.len() <= MAX_PLOT_POINTS);
        assert!(d.iter().any(|p| p.1 == 1e3) && d.iter().any(|p| p.1 == -1e3));
        assert!(d.windows(2).all(|w| w[0].0 < w[1].0));
    }
}
