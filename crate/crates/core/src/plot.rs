//! Minimal SVG charts: per-user bars and metric-versus-count curves.

use std::fmt::Write as _;

use crate::harness::{SweepRow, UserReport};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(title: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let (x0, y0, y1) = (LEFT, H - BOTTOM, TOP);
    let _ = write!(s, r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#, W - RIGHT);
    let _ = write!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let y = y0 - v * (y0 - y1);
        let _ = write!(s, r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/>"#, x0 - 4.0);
        let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, x0 - 6.0, y + 4.0);
    }
    let _ = write!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    s
}

fn y_of(v: f64) -> f64 {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    (H - BOTTOM) - v * (H - BOTTOM - TOP)
}

/// Bar chart of values in [0, 1], one bar per label.
pub fn bar_chart(title: &str, y_label: &str, labels: &[String], values: &[f64]) -> String {
    let mut s = frame(title, y_label);
    let n = labels.len().max(1) as f64;
    let slot = (W - LEFT - RIGHT) / n;
    for (i, (l, &v)) in labels.iter().zip(values).enumerate() {
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let y = y_of(v);
        let _ = write!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            slot * 0.7,
            (H - BOTTOM) - y,
            COLOURS[0]
        );
        let _ = write!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x + slot * 0.35,
            H - BOTTOM + 16.0,
            escape(l)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Line chart with a shared x axis; y values are clamped to [0, 1].
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = frame(title, y_label);
    let xs: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (0.0, 1.0) };
    let x_of = |x: f64| LEFT + (x - lo) / (hi - lo) * (W - LEFT - RIGHT);
    let mut ticks: Vec<f64> = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for t in ticks {
        let _ = write!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{t}</text>"#, x_of(t), H - BOTTOM + 16.0);
    }
    let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, H - 12.0, escape(x_label));
    for (i, (name, pts)) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", x_of(x), y_of(y))).collect();
        let _ = write!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = write!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#, x_of(x), y_of(y));
        }
        let ly = TOP + 14.0 * i as f64;
        let _ = write!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{colour}"/>"#, W - RIGHT - 150.0, ly);
        let _ = write!(s, r#"<text x="{}" y="{}">{}</text>"#, W - RIGHT - 135.0, ly + 9.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

/// FAR@0 per user, one bar per report.
pub fn far_by_user(reports: &[UserReport]) -> String {
    let labels: Vec<String> = reports.iter().map(|r| r.user_id.to_string()).collect();
    let values: Vec<f64> = reports.iter().map(|r| r.summary.far_at_zero).collect();
    bar_chart("FAR@0 per user", "FAR@0", &labels, &values)
}

/// FAR@0 and AUROC against real gestures per terminal, one line per arm. Unavailable cells are skipped.
pub fn sweep_curves(rows: &[SweepRow]) -> String {
    let mut arms: Vec<String> = rows.iter().map(|r| r.arm.clone()).collect();
    arms.sort();
    arms.dedup();
    let mut series = Vec::new();
    for arm in &arms {
        for (metric, f) in [("FAR@0", (|m: &crate::metrics::MetricSummary| m.far_at_zero) as fn(&_) -> f64), ("AUROC", |m| m.auroc)] {
            let pts = rows
                .iter()
                .filter(|r| &r.arm == arm)
                .filter_map(|r| r.summary.as_ref().map(|s| (r.real_gestures_per_terminal as f64, f(s))))
                .collect();
            series.push((format!("{arm} {metric}"), pts));
        }
    }
    line_chart("Enrolment burden", "real gestures per terminal", "metric", &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_svg() {
        let b = bar_chart("t<1>", "y", &["a".into(), "b".into()], &[0.2, 1.5]);
        assert!(b.starts_with("<svg") && b.trim_end().ends_with("</svg>"));
        assert!(b.contains("t&lt;1&gt;"));
        let l = line_chart("t", "x", "y", &[("s".into(), vec![(2.0, 0.5), (4.0, 0.25)])]);
        assert_eq!(l.matches("<circle").count(), 2);
    }
}
