//! Static SVG charts written as plain text.

use std::fmt::Write;

use nirbench_core::metrics::{ModelReport, CLARKE_MAX};
use nirbench_core::neural::HistoryRow;

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 440.0;
const PALETTE: [&str; 6] = ["#1b6ca8", "#d1495b", "#edae49", "#00798c", "#66a182", "#8d5a97"];

/// Maps a data rectangle onto a pixel rectangle (y grows downwards on screen).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Frame {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            left: 70.0,
            top: 40.0,
            width: WIDTH - 100.0,
            height: HEIGHT - 100.0,
            x,
            y,
        }
    }

    pub fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * self.width
    }

    pub fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y.0) / (self.y.1 - self.y.0) * self.height
    }

    pub fn data_x(&self, px: f64) -> f64 {
        self.x.0 + (px - self.left) / self.width * (self.x.1 - self.x.0)
    }

    pub fn data_y(&self, py: f64) -> f64 {
        self.y.0 + (self.top + self.height - py) / self.height * (self.y.1 - self.y.0)
    }
}

/// The frame used by [`clarke_svg`].
pub fn clarke_frame() -> Frame {
    Frame::new((0.0, 400.0), (0.0, 400.0))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Svg(String);

impl Svg {
    fn new(title: &str) -> Self {
        let mut s = String::new();
        let _ = write!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">\n<title>{}</title>\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n<text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            escape(title),
            WIDTH / 2.0,
            escape(title)
        );
        Self(s)
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        let _ = writeln!(self.0, "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" {style}/>");
    }

    fn polyline(&mut self, pts: &[(f64, f64)], style: &str) {
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(self.0, "<polyline points=\"{}\" fill=\"none\" {style}/>", path.join(" "));
    }

    fn polygon(&mut self, pts: &[(f64, f64)], style: &str) {
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(self.0, "<polygon points=\"{}\" {style}/>", path.join(" "));
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.0, "<circle cx=\"{x:.4}\" cy=\"{y:.4}\" r=\"{r}\" fill=\"{fill}\" fill-opacity=\"0.7\"/>");
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(self.0, "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\">{}</text>", escape(s));
    }

    fn axes(&mut self, f: &Frame, xlabel: &str, ylabel: &str, ticks: usize) {
        let style = "stroke=\"#333\" stroke-width=\"1\"";
        let (x0, y0) = (f.left, f.top + f.height);
        self.line(x0, y0, x0 + f.width, y0, style);
        self.line(x0, f.top, x0, y0, style);
        for k in 0..=ticks {
            let t = k as f64 / ticks as f64;
            let xv = f.x.0 + t * (f.x.1 - f.x.0);
            let yv = f.y.0 + t * (f.y.1 - f.y.0);
            let (px, py) = (f.px(xv), f.py(yv));
            self.line(px, y0, px, y0 + 4.0, style);
            self.text(px, y0 + 16.0, "middle", &tick(xv));
            self.line(x0 - 4.0, py, x0, py, style);
            self.text(x0 - 7.0, py + 4.0, "end", &tick(yv));
        }
        self.text(f.left + f.width / 2.0, HEIGHT - 18.0, "middle", xlabel);
        let _ = writeln!(
            self.0,
            "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
            f.top + f.height / 2.0,
            f.top + f.height / 2.0,
            escape(ylabel)
        );
    }

    fn finish(mut self) -> String {
        self.0.push_str("</svg>\n");
        self.0
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else if (v - v.round()).abs() < 1e-9 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn range(values: impl Iterator<Item = f64>, pad: f64) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let p = (hi - lo) * pad;
    (lo - p, hi + p)
}

/// Zone boundaries of the error grid, in mg/dL.
const CLARKE_LINES: [((f64, f64), (f64, f64)); 13] = [
    ((0.0, 70.0), (175.0 / 3.0, 70.0)),
    ((175.0 / 3.0, 70.0), (400.0 / 1.2, 400.0)),
    ((70.0, 84.0), (70.0, 400.0)),
    ((0.0, 180.0), (70.0, 180.0)),
    ((70.0, 180.0), (290.0, 400.0)),
    ((70.0, 0.0), (70.0, 56.0)),
    ((70.0, 56.0), (400.0, 320.0)),
    ((180.0, 0.0), (180.0, 70.0)),
    ((180.0, 70.0), (400.0, 70.0)),
    ((240.0, 70.0), (240.0, 180.0)),
    ((240.0, 180.0), (400.0, 180.0)),
    ((130.0, 0.0), (180.0, 70.0)),
    ((0.0, 0.0), (400.0, 400.0)),
];

pub fn clarke_svg(model: &str, reference: &[f64], prediction: &[f64]) -> String {
    let f = clarke_frame();
    let mut svg = Svg::new(&format!("Clarke error grid: {model}"));
    svg.axes(&f, "Reference glucose (mg/dL)", "Predicted glucose (mg/dL)", 8);
    for (k, ((x1, y1), (x2, y2))) in CLARKE_LINES.iter().enumerate() {
        let style = if k == CLARKE_LINES.len() - 1 {
            "stroke=\"#999\" stroke-dasharray=\"4 3\""
        } else {
            "stroke=\"#444\" stroke-width=\"1\""
        };
        svg.line(f.px(*x1), f.py(*y1), f.px(*x2), f.py(*y2), style);
    }
    for (label, x, y) in [("A", 30.0, 15.0), ("A", 370.0, 340.0), ("B", 370.0, 250.0), ("B", 280.0, 370.0), ("C", 160.0, 370.0), ("C", 160.0, 15.0), ("D", 30.0, 120.0), ("D", 370.0, 120.0), ("E", 30.0, 370.0), ("E", 370.0, 15.0)] {
        svg.text(f.px(x), f.py(y), "middle", label);
    }
    for (r, p) in reference.iter().zip(prediction) {
        let (r, p) = (r.clamp(0.0, 400.0), p.clamp(0.0, CLARKE_MAX.min(400.0)));
        svg.circle(f.px(r), f.py(p), 3.0, PALETTE[0]);
    }
    svg.finish()
}

pub fn bland_altman_svg(model: &str, reference: &[f64], prediction: &[f64], report: &ModelReport) -> String {
    let means: Vec<f64> = reference.iter().zip(prediction).map(|(r, p)| (r + p) / 2.0).collect();
    let diffs: Vec<f64> = reference.iter().zip(prediction).map(|(r, p)| p - r).collect();
    let ba = report.bland_altman;
    let f = Frame::new(
        range(means.iter().copied(), 0.05),
        range(diffs.iter().copied().chain([ba.loa_low, ba.loa_high]), 0.1),
    );
    let mut svg = Svg::new(&format!("Bland-Altman: {model}"));
    svg.axes(&f, "Mean of prediction and reference (mg/dL)", "Prediction - reference (mg/dL)", 5);
    for (label, v, style) in [
        ("bias", ba.bias, "stroke=\"#d1495b\""),
        ("-1.96 sd", ba.loa_low, "stroke=\"#999\" stroke-dasharray=\"5 3\""),
        ("+1.96 sd", ba.loa_high, "stroke=\"#999\" stroke-dasharray=\"5 3\""),
    ] {
        svg.line(f.left, f.py(v), f.left + f.width, f.py(v), style);
        svg.text(f.left + f.width - 2.0, f.py(v) - 4.0, "end", &format!("{label} {v:.1}"));
    }
    for (m, d) in means.iter().zip(&diffs) {
        svg.circle(f.px(*m), f.py(*d), 3.0, PALETTE[0]);
    }
    svg.finish()
}

pub fn linearity_svg(model: &str, reference: &[f64], prediction: &[f64], report: &ModelReport) -> String {
    let all = reference.iter().chain(prediction).copied();
    let span = range(all, 0.05);
    let f = Frame::new(span, span);
    let mut svg = Svg::new(&format!("Linearity: {model}"));
    svg.axes(&f, "Reference glucose (mg/dL)", "Predicted glucose (mg/dL)", 5);
    svg.line(f.px(span.0), f.py(span.0), f.px(span.1), f.py(span.1), "stroke=\"#999\" stroke-dasharray=\"4 3\"");
    let l = report.linearity;
    svg.line(
        f.px(span.0),
        f.py(l.intercept + l.slope * span.0),
        f.px(span.1),
        f.py(l.intercept + l.slope * span.1),
        "stroke=\"#d1495b\"",
    );
    svg.text(
        f.left + 8.0,
        f.top + 12.0,
        "start",
        &format!("slope {:.3}, intercept {:.1}, r {:.3}", l.slope, l.intercept, l.r),
    );
    for (r, p) in reference.iter().zip(prediction) {
        svg.circle(f.px(*r), f.py(*p), 3.0, PALETTE[0]);
    }
    svg.finish()
}

/// Loss curves on a log10 axis.
pub fn loss_svg(model: &str, history: &[HistoryRow]) -> String {
    let log = |v: f64| v.max(1e-12).log10();
    let mut series: Vec<(&str, Vec<(f64, f64)>)> = vec![
        ("train data", history.iter().map(|h| (h.epoch as f64, log(h.train_data))).collect()),
        ("validation data", history.iter().map(|h| (h.epoch as f64, log(h.val_data))).collect()),
    ];
    if history.iter().any(|h| h.train_phys > 0.0) {
        series.push(("train physics", history.iter().map(|h| (h.epoch as f64, log(h.train_phys))).collect()));
    }
    let f = Frame::new(
        range(history.iter().map(|h| h.epoch as f64), 0.0),
        range(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)), 0.05),
    );
    let mut svg = Svg::new(&format!("Loss history: {model}"));
    svg.axes(&f, "Epoch", "log10 loss", 5);
    for (k, (label, pts)) in series.iter().enumerate() {
        let px: Vec<(f64, f64)> = pts.iter().map(|(x, y)| (f.px(*x), f.py(*y))).collect();
        svg.polyline(&px, &format!("stroke=\"{}\" stroke-width=\"1.5\"", PALETTE[k]));
        let ly = f.top + 12.0 + 14.0 * k as f64;
        svg.line(f.left + f.width - 120.0, ly - 4.0, f.left + f.width - 100.0, ly - 4.0, &format!("stroke=\"{}\"", PALETTE[k]));
        svg.text(f.left + f.width - 95.0, ly, "start", label);
    }
    svg.finish()
}

/// Axis names of the radar chart.
pub const RADAR_AXES: [&str; 6] = ["RMSE", "MARD", "Clarke A", "Within 15%", "Linearity r", "Parameters"];

/// Each axis scores 1 for the best model; error-like axes use `best / value`.
pub fn radar_scores(reports: &[ModelReport]) -> Vec<[f64; 6]> {
    let min_of = |f: &dyn Fn(&ModelReport) -> f64| reports.iter().map(f).fold(f64::INFINITY, f64::min);
    let max_of = |f: &dyn Fn(&ModelReport) -> f64| reports.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let lower = |v: f64, best: f64| if v > 0.0 { (best / v).clamp(0.0, 1.0) } else { 1.0 };
    let higher = |v: f64, best: f64| if best > 0.0 { (v / best).clamp(0.0, 1.0) } else { 0.0 };
    let log_params = |r: &ModelReport| ((r.param_count + 1) as f64).log10();
    let best_rmse = min_of(&|r| r.rmse);
    let best_mard = min_of(&|r| r.mard);
    let best_a = max_of(&|r| r.clarke_zone_pct[0]);
    let best_w = max_of(&|r| r.within_15pct);
    let best_r = max_of(&|r| r.linearity.r.max(0.0));
    let best_p = min_of(&log_params);
    reports
        .iter()
        .map(|r| {
            [
                lower(r.rmse, best_rmse),
                lower(r.mard, best_mard),
                higher(r.clarke_zone_pct[0], best_a),
                higher(r.within_15pct, best_w),
                higher(r.linearity.r.max(0.0), best_r),
                lower(log_params(r), best_p),
            ]
        })
        .collect()
}

pub fn radar_svg(reports: &[ModelReport]) -> String {
    let mut svg = Svg::new("Multi-criteria comparison (1 = best)");
    let (cx, cy, radius) = (WIDTH / 2.0 - 60.0, HEIGHT / 2.0 + 10.0, 150.0);
    let n = RADAR_AXES.len();
    let at = |k: usize, v: f64| {
        let a = -std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        (cx + radius * v * a.cos(), cy + radius * v * a.sin())
    };
    for ring in [0.25, 0.5, 0.75, 1.0] {
        let pts: Vec<(f64, f64)> = (0..n).map(|k| at(k, ring)).collect();
        svg.polygon(&pts, "fill=\"none\" stroke=\"#ddd\"");
    }
    for (k, name) in RADAR_AXES.iter().enumerate() {
        let (x, y) = at(k, 1.0);
        svg.line(cx, cy, x, y, "stroke=\"#bbb\" class=\"axis\"");
        let (lx, ly) = at(k, 1.13);
        svg.text(lx, ly + 4.0, "middle", name);
    }
    for (m, (r, scores)) in reports.iter().zip(radar_scores(reports)).enumerate() {
        let color = PALETTE[m % PALETTE.len()];
        let pts: Vec<(f64, f64)> = scores.iter().enumerate().map(|(k, v)| at(k, *v)).collect();
        svg.polygon(&pts, &format!("fill=\"{color}\" fill-opacity=\"0.12\" stroke=\"{color}\" stroke-width=\"1.5\""));
        let ly = 60.0 + 16.0 * m as f64;
        svg.line(WIDTH - 150.0, ly - 4.0, WIDTH - 132.0, ly - 4.0, &format!("stroke=\"{color}\" stroke-width=\"3\""));
        svg.text(WIDTH - 128.0, ly, "start", &r.model);
    }
    svg.finish()
}
