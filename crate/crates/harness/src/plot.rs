//! Static SVG charts: box plots per swept value and mean ± std against goal y.

use std::fmt::Write;

use reach_core::metrics::{self, YBin};

use crate::sweep::{reports_for, SweepResult};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = values
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Self {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (H - TOP - BOTTOM) * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + (W - LEFT - RIGHT) * (v - self.lo) / (self.hi - self.lo)
    }
}

fn header(out: &mut String, title: &str, ylabel: &str, xlabel: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>
<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>
"#,
        W / 2.0,
        escape(title),
        H / 2.0,
        H / 2.0,
        escape(ylabel),
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0,
        escape(xlabel),
        H - BOTTOM,
        H - BOTTOM,
        W - RIGHT,
        H - BOTTOM,
    );
}

fn y_ticks(out: &mut String, axis: &Axis) {
    for k in 0..=4 {
        let v = axis.lo + (axis.hi - axis.lo) * k as f64 / 4.0;
        let y = axis.y(v);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 4.0,
            LEFT - 6.0,
            y + 4.0,
            tick(v)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Box plot (quartiles, median, min/max whiskers) of one sample per label.
pub fn box_plot(title: &str, ylabel: &str, xlabel: &str, groups: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    header(&mut out, title, ylabel, xlabel);
    let axis = Axis::new(groups.iter().flat_map(|g| g.1.iter().copied()));
    y_ticks(&mut out, &axis);
    let slot = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    for (k, (label, values)) in groups.iter().enumerate() {
        let cx = LEFT + slot * (k as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#,
            H - BOTTOM + 16.0,
            escape(label)
        );
        let Some(s) = metrics::stats(values) else { continue };
        let half = (slot * 0.3).min(40.0);
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{color}"/>
<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.25" stroke="{color}"/>
<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            axis.y(s.max),
            axis.y(s.min),
            cx - half,
            axis.y(s.q3),
            2.0 * half,
            (axis.y(s.q1) - axis.y(s.q3)).max(0.5),
            cx - half,
            axis.y(s.median),
            cx + half,
            axis.y(s.median),
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Mean ± std per goal-y bin, one line per label.
pub fn mean_std_by_y(title: &str, ylabel: &str, jerk: bool, series: &[(String, Vec<YBin<f64>>)]) -> String {
    let mut out = String::new();
    header(&mut out, title, ylabel, "goal y (m)");
    let xs = Axis::new(series.iter().flat_map(|s| s.1.iter().flat_map(|b| [b.lo, b.hi])));
    let ys = Axis::new(series.iter().flat_map(|s| {
        s.1.iter().flat_map(|b| match mean_std(b, jerk) {
            Some((m, sd)) => [m - sd, m + sd],
            None => [f64::NAN; 2],
        })
    }));
    y_ticks(&mut out, &ys);
    for k in 0..=4 {
        let v = xs.lo + (xs.hi - xs.lo) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            xs.x(v),
            H - BOTTOM + 16.0,
            tick(v)
        );
    }
    for (k, (label, bins)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<(f64, f64, f64)> = bins
            .iter()
            .filter_map(|b| mean_std(b, jerk).map(|(m, sd)| (0.5 * (b.lo + b.hi), m, sd)))
            .collect();
        let poly: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", xs.x(p.0), ys.y(p.1))).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            poly.join(" ")
        );
        for (x, m, sd) in pts {
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}"/><circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                xs.x(x),
                ys.y(m - sd),
                xs.x(x),
                ys.y(m + sd),
                xs.x(x),
                ys.y(m)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - RIGHT - 140.0,
            TOP + 14.0 * (k as f64 + 1.0),
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn mean_std(b: &YBin<f64>, jerk: bool) -> Option<(f64, f64)> {
    if jerk {
        Some((b.mean_jerk?, b.std_jerk?))
    } else {
        Some((b.mean_error?, b.std_error?))
    }
}

/// File name and contents of every plot for a sweep.
pub fn sweep_plots(result: &SweepResult) -> Vec<(String, String)> {
    let kind = result.kind.name();
    let mut jerk_groups = Vec::new();
    let mut err_groups = Vec::new();
    let mut series = Vec::new();
    for v in &result.values {
        let reports = reports_for(result, v);
        jerk_groups.push((v.clone(), reports.iter().map(|r| r.norm_jerk).collect()));
        err_groups.push((v.clone(), reports.iter().map(|r| r.end_effector_error).collect()));
        if let Some(s) = metrics::summarize(&reports) {
            series.push((v.clone(), s.by_goal_y));
        }
    }
    vec![
        (
            format!("sweep_{kind}_jerk_box.svg"),
            box_plot(&format!("norm jerk by {kind}"), "norm jerk (rad/step^3)", kind, &jerk_groups),
        ),
        (
            format!("sweep_{kind}_error_box.svg"),
            box_plot(&format!("end-effector error by {kind}"), "end-effector error (m)", kind, &err_groups),
        ),
        (
            format!("sweep_{kind}_jerk_goal_y.svg"),
            mean_std_by_y(&format!("norm jerk vs goal y ({kind})"), "norm jerk (rad/step^3)", true, &series),
        ),
        (
            format!("sweep_{kind}_error_goal_y.svg"),
            mean_std_by_y(&format!("end-effector error vs goal y ({kind})"), "end-effector error (m)", false, &series),
        ),
    ]
}
