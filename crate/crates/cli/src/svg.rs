//! Minimal SVG rendering of plot artifacts: log-log axes with one polyline
//! or marker set per series, and residuals in a linear strip below.

use std::fmt::Write;

use saskit_core::{PlotArtifact, PlotSeries, SeriesKind};

const WIDTH: f64 = 640.0;
const MAIN_HEIGHT: f64 = 400.0;
const RESIDUAL_HEIGHT: f64 = 140.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    from: f64,
    to: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool, from: f64, to: f64) -> Option<Self> {
        let t = |v: f64| if log { v.log10() } else { v };
        let (lo, hi) = values
            .filter(|v| v.is_finite() && (!log || *v > 0.0))
            .map(t)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
        if !lo.is_finite() {
            return None;
        }
        let pad = if hi > lo { 0.0 } else { 0.5 };
        Some(Self {
            lo: lo - pad,
            hi: hi + pad,
            log,
            from,
            to,
        })
    }

    fn map(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let t = if self.log { v.log10() } else { v };
        Some(self.from + (t - self.lo) / (self.hi - self.lo) * (self.to - self.from))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn draw_series(out: &mut String, s: &PlotSeries, x: &Axis, y: &Axis, color: &str) {
    let pts: Vec<(f64, f64)> =
        s.x.iter()
            .zip(&s.y)
            .filter_map(|(&a, &b)| Some((x.map(a)?, y.map(b)?)))
            .collect();
    match s.kind {
        SeriesKind::Curve => {
            let path: Vec<String> = pts.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
        }
        SeriesKind::Points | SeriesKind::Residuals => {
            for (a, b) in pts {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{a:.2}" cy="{b:.2}" r="2" fill="{color}"/>"#
                );
            }
        }
    }
}

fn frame(out: &mut String, top: f64, height: f64) {
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{top}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        WIDTH - 2.0 * MARGIN,
        height - MARGIN
    );
}

pub fn render(plot: &PlotArtifact) -> String {
    let (residuals, main): (Vec<&PlotSeries>, Vec<&PlotSeries>) = plot
        .series
        .iter()
        .partition(|s| s.kind == SeriesKind::Residuals);
    let height = MAIN_HEIGHT
        + if residuals.is_empty() {
            0.0
        } else {
            RESIDUAL_HEIGHT
        };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(&plot.title)
    );

    let all_x = || plot.series.iter().flat_map(|s| s.x.iter().copied());
    let main_y = || main.iter().flat_map(|s| s.y.iter().copied());
    let bottom = MAIN_HEIGHT - MARGIN / 2.0;
    frame(&mut out, MARGIN / 2.0 + 10.0, MAIN_HEIGHT - 10.0);
    if let (Some(x), Some(y)) = (
        Axis::fit(all_x(), plot.x_log, MARGIN, WIDTH - MARGIN),
        Axis::fit(main_y(), plot.y_log, bottom, MARGIN / 2.0 + 10.0),
    ) {
        for (i, s) in main.iter().enumerate() {
            draw_series(&mut out, s, &x, &y, COLORS[i % COLORS.len()]);
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        WIDTH / 2.0,
        MAIN_HEIGHT - 6.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {0})">{1}</text>"#,
        MAIN_HEIGHT / 2.0,
        escape(&plot.y_label)
    );

    if !residuals.is_empty() {
        let top = MAIN_HEIGHT + 10.0;
        frame(&mut out, top, RESIDUAL_HEIGHT + MARGIN / 2.0 - 10.0);
        let res_y = || residuals.iter().flat_map(|s| s.y.iter().copied());
        if let (Some(x), Some(y)) = (
            Axis::fit(all_x(), plot.x_log, MARGIN, WIDTH - MARGIN),
            Axis::fit(res_y(), false, height - MARGIN / 2.0, top),
        ) {
            for s in &residuals {
                draw_series(&mut out, s, &x, &y, "#555");
            }
        }
    }
    out.push_str("</svg>\n");
    out
}
