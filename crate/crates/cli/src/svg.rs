//! Hand-written SVG bar chart of a split report.

use std::fmt::Write as _;

use otfuse_core::EvalReport;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 320.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 270.0;
const LABELS: [&str; 4] = ["mAcc", "mRecall", "mF1", "mIoU"];
const KNOWN_COLOUR: &str = "#4878a8";
const UNKNOWN_COLOUR: &str = "#d8823a";
const DELTA_COLOUR: &str = "#6a9f58";

fn bar(out: &mut String, x: f64, y: f64, w: f64, h: f64, fill: &str, title: &str) {
    let _ = writeln!(
        out,
        r#"  <rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"><title>{title}</title></rect>"#
    );
}

fn text(out: &mut String, x: f64, y: f64, anchor: &str, size: u32, body: &str) {
    let _ = writeln!(
        out,
        r#"  <text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="{size}">{body}</text>"#
    );
}

/// Known vs Unknown bars for each metric (left, 0–100 scale) and the
/// Unknown − Known delta (right, symmetric scale).
pub fn report_chart(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"  <rect width="100%" height="100%" fill="white"/>"#);
    text(&mut out, WIDTH / 2.0, 22.0, "middle", 15, "Known vs Unknown scene combinations");

    let known = report.known.map(|s| s.metrics.as_array());
    let unknown = report.unknown.map(|s| s.metrics.as_array());
    let plot_h = BOTTOM - TOP;

    // Left panel: absolute metrics.
    let (left_x, left_w) = (60.0, 400.0);
    let _ = writeln!(
        out,
        r##"  <line x1="{left_x}" y1="{BOTTOM}" x2="{:.2}" y2="{BOTTOM}" stroke="#333"/>"##,
        left_x + left_w
    );
    for tick in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let y = BOTTOM - plot_h * tick / 100.0;
        text(&mut out, left_x - 6.0, y + 4.0, "end", 10, &format!("{tick:.0}"));
        let _ = writeln!(
            out,
            r##"  <line x1="{left_x}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            left_x + left_w
        );
    }
    let group = left_w / 4.0;
    for (i, label) in LABELS.iter().enumerate() {
        let gx = left_x + group * i as f64;
        for (j, (values, colour, split)) in
            [(known, KNOWN_COLOUR, "Known"), (unknown, UNKNOWN_COLOUR, "Unknown")].into_iter().enumerate()
        {
            if let Some(v) = values {
                let value = v[i].clamp(0.0, 100.0);
                let h = plot_h * value / 100.0;
                let x = gx + 12.0 + j as f64 * 38.0;
                bar(&mut out, x, BOTTOM - h, 34.0, h, colour, &format!("{split} {label}: {:.2}", v[i]));
            }
        }
        text(&mut out, gx + group / 2.0, BOTTOM + 16.0, "middle", 11, label);
    }

    // Right panel: deltas around zero.
    let (right_x, right_w) = (520.0, 170.0);
    let delta = report.delta.map(|d| d.as_array());
    let span = delta.map_or(1.0, |d| d.iter().fold(1.0_f64, |m, v| m.max(v.abs())));
    let zero = TOP + plot_h / 2.0;
    let _ = writeln!(
        out,
        r##"  <line x1="{right_x}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="#333"/>"##,
        right_x + right_w
    );
    text(&mut out, right_x - 6.0, TOP + 4.0, "end", 10, &format!("+{span:.2}"));
    text(&mut out, right_x - 6.0, BOTTOM + 4.0, "end", 10, &format!("-{span:.2}"));
    let slot = right_w / 4.0;
    for (i, label) in LABELS.iter().enumerate() {
        let x = right_x + slot * i as f64 + 6.0;
        if let Some(d) = delta {
            let h = (plot_h / 2.0) * d[i].abs() / span;
            let y = if d[i] >= 0.0 { zero - h } else { zero };
            bar(&mut out, x, y, slot - 12.0, h, DELTA_COLOUR, &format!("Delta {label}: {:+.2}", d[i]));
        }
        text(&mut out, x + (slot - 12.0) / 2.0, BOTTOM + 16.0, "middle", 11, label);
    }
    text(&mut out, right_x + right_w / 2.0, TOP - 6.0, "middle", 12, "Unknown - Known");

    // Legend.
    for (j, (colour, name)) in [(KNOWN_COLOUR, "Known"), (UNKNOWN_COLOUR, "Unknown")].into_iter().enumerate() {
        let x = left_x + j as f64 * 90.0;
        bar(&mut out, x, HEIGHT - 22.0, 12.0, 12.0, colour, name);
        text(&mut out, x + 16.0, HEIGHT - 12.0, "start", 11, name);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use otfuse_core::metrics::{SegmentationMetrics, SplitMetrics};

    fn split(v: f64) -> SplitMetrics {
        SplitMetrics { samples: 3, metrics: SegmentationMetrics { macc: v, mrecall: v, mf1: v, miou: v } }
    }

    #[test]
    fn chart_has_bars_for_both_splits_and_deltas() {
        let report = EvalReport {
            overall: split(90.0),
            known: Some(split(95.0)),
            unknown: Some(split(85.0)),
            delta: Some(split(85.0).metrics.minus(&split(95.0).metrics)),
        };
        let svg = report_chart(&report);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("Known mIoU: 95.00"));
        assert!(svg.contains("Unknown mIoU: 85.00"));
        assert!(svg.contains("Delta mIoU: -10.00"));
    }

    #[test]
    fn missing_split_draws_no_bar() {
        let report = EvalReport { overall: split(90.0), known: Some(split(90.0)), unknown: None, delta: None };
        let svg = report_chart(&report);
        assert!(!svg.contains("Unknown mIoU"));
        assert!(!svg.contains("Delta"));
    }
}
