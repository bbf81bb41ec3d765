//! Plain SVG rendering of trade-off and fine-tuning-only curves.

use std::fmt::Write as _;
use std::path::Path;

use super::output::CurvePoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMode {
    /// `L_ft` on x, `L_pre` on y.
    Tradeoff,
    /// `τ` on x, `L_ft` on y; τ-free estimators as horizontal lines.
    FtOnly,
}

pub const DEFAULT_SERIES: [&str; 4] = ["ensemble", "pretrained", "ridgeless_ft", "ridge_ft"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn color(series: &str) -> &'static str {
    match series {
        "ensemble" => "#d62728",
        "pretrained" => "#1f77b4",
        "ridgeless_ft" => "#2ca02c",
        "ridge_ft" => "#9467bd",
        _ => "#7f7f7f",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    from: f64,
    to: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, from: f64, to: f64) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        let log = lo > 0.0 && hi / lo > 50.0;
        let (mut lo, mut hi) = if log { (lo.log10(), hi.log10()) } else { (lo, hi) };
        if hi - lo < 1e-300 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
            log,
            from,
            to,
        }
    }

    fn map(&self, v: f64) -> f64 {
        let v = if self.log { v.max(1e-300).log10() } else { v };
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if !self.log && self.lo < 0.0 && self.lo > -0.1 && self.hi > 1.0 && self.hi < 1.1 {
            return (0..5).map(|i| (self.map(i as f64 / 4.0), format!("{}", i as f64 / 4.0))).collect();
        }
        (0..5)
            .map(|i| {
                let u = self.lo + (self.hi - self.lo) * i as f64 / 4.0;
                let v = if self.log { 10f64.powf(u) } else { u };
                (self.from + (u - self.lo) / (self.hi - self.lo) * (self.to - self.from), format!("{v:.3e}"))
            })
            .collect()
    }
}

fn polyline(out: &mut String, pts: &[(f64, f64)], stroke: &str, dashed: bool) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="{stroke}" stroke-width="2"{dash} points="{}"/>"#,
        coords.join(" ")
    );
}

fn marker(out: &mut String, series: &str, x: f64, y: f64) {
    let c = color(series);
    let _ = match series {
        "pretrained" => writeln!(
            out,
            r#"<polygon fill="{c}" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}"/>"#,
            x,
            y - 6.0,
            x - 6.0,
            y + 5.0,
            x + 6.0,
            y + 5.0
        ),
        "ridgeless_ft" => writeln!(out, r#"<rect fill="{c}" x="{:.2}" y="{:.2}" width="10" height="10"/>"#, x - 5.0, y - 5.0),
        _ => writeln!(out, r#"<circle fill="{c}" cx="{x:.2}" cy="{y:.2}" r="4"/>"#),
    };
}

/// Build the SVG document. Every name in `series` must occur in `points`.
pub fn tradeoff_svg(points: &[CurvePoint], mode: PlotMode, series: &[&str], title: &str) -> Result<String> {
    for s in series {
        if !points.iter().any(|p| p.estimator == *s) {
            return Err(Error::MissingSeries((*s).to_string()));
        }
    }
    let shown: Vec<&CurvePoint> = points.iter().filter(|p| series.contains(&p.estimator.as_str())).collect();
    let (xa, ya) = match mode {
        PlotMode::Tradeoff => (
            Axis::fit(shown.iter().map(|p| p.ft), LEFT, WIDTH - RIGHT),
            Axis::fit(shown.iter().map(|p| p.pre), HEIGHT - BOTTOM, TOP),
        ),
        PlotMode::FtOnly => (
            Axis { lo: -0.02, hi: 1.02, log: false, from: LEFT, to: WIDTH - RIGHT },
            Axis::fit(shown.iter().map(|p| p.ft), HEIGHT - BOTTOM, TOP),
        ),
    };
    let (xlabel, ylabel) = match mode {
        PlotMode::Tradeoff => ("fine-tuning risk", "pretraining risk"),
        PlotMode::FtOnly => ("tau", "fine-tuning risk"),
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    for (x, label) in xa.ticks() {
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#, HEIGHT - BOTTOM + 16.0);
    }
    for (y, label) in ya.ticks() {
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let log = |a: &Axis| if a.log { " (log)" } else { "" };
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 20.0,
        log(&xa)
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{ylabel}{1}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        log(&ya)
    );

    let mut lambdas: Vec<f64> = shown
        .iter()
        .filter(|p| p.estimator == "ensemble")
        .filter_map(|p| p.lambda)
        .collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    for lam in lambdas {
        let mut curve: Vec<&&CurvePoint> = shown
            .iter()
            .filter(|p| p.estimator == "ensemble" && p.lambda == Some(lam))
            .collect();
        curve.sort_by(|a, b| a.tau.unwrap_or(0.0).total_cmp(&b.tau.unwrap_or(0.0)));
        let xy: Vec<(f64, f64)> = curve
            .iter()
            .map(|p| match mode {
                PlotMode::Tradeoff => (xa.map(p.ft), ya.map(p.pre)),
                PlotMode::FtOnly => (xa.map(p.tau.unwrap_or(0.0)), ya.map(p.ft)),
            })
            .collect();
        polyline(&mut out, &xy, color("ensemble"), false);
        for (x, y) in xy {
            let _ = writeln!(out, r#"<circle fill="{}" cx="{x:.2}" cy="{y:.2}" r="2"/>"#, color("ensemble"));
        }
    }

    let mut family: Vec<&&CurvePoint> = shown.iter().filter(|p| p.estimator == "ridge_ft").collect();
    family.sort_by(|a, b| a.lambda.unwrap_or(0.0).total_cmp(&b.lambda.unwrap_or(0.0)));
    match mode {
        PlotMode::Tradeoff => {
            if family.len() > 1 {
                let xy: Vec<(f64, f64)> = family.iter().map(|p| (xa.map(p.ft), ya.map(p.pre))).collect();
                polyline(&mut out, &xy, color("ridge_ft"), true);
            }
            for p in shown.iter().filter(|p| p.estimator != "ensemble") {
                marker(&mut out, &p.estimator, xa.map(p.ft), ya.map(p.pre));
            }
        }
        PlotMode::FtOnly => {
            for p in shown.iter().filter(|p| p.estimator != "ensemble") {
                let y = ya.map(p.ft);
                polyline(&mut out, &[(xa.map(0.0), y), (xa.map(1.0), y)], color(&p.estimator), true);
                marker(&mut out, &p.estimator, xa.map(1.0), y);
            }
        }
    }

    let legend_x = WIDTH - RIGHT + 14.0;
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 12.0 + 20.0 * i as f64;
        marker(&mut out, s, legend_x + 5.0, y);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}">{}</text>"#, legend_x + 16.0, y + 4.0, escape(s));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn render_tradeoff_svg(points: &[CurvePoint], mode: PlotMode, series: &[&str], title: &str, path: &Path) -> Result<()> {
    let svg = tradeoff_svg(points, mode, series, title)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
