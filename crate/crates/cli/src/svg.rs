//! Minimal self-contained SVG output: scatter plots with axes and the
//! stacked POS-share chart. No plotting dependency; coordinates are
//! formatted with fixed precision so output is byte-deterministic.

use std::fmt::Write;

const SCATTER_WIDTH: f64 = 640.0;
const SCATTER_HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 74.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 46.0;
const MARGIN_BOTTOM: f64 = 58.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs();
    if (0.01..1000.0).contains(&magnitude) {
        format!("{v:.2}")
    } else {
        format!("{v:.2e}")
    }
}

struct Range {
    min: f64,
    max: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Range {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() || !max.is_finite() {
            return Range { min: 0.0, max: 1.0 };
        }
        if min == max {
            let pad = if min == 0.0 { 0.5 } else { min.abs() * 0.1 };
            return Range { min: min - pad, max: max + pad };
        }
        let pad = (max - min) * 0.05;
        Range { min: min - pad, max: max + pad }
    }

    fn scale(&self, v: f64, lo: f64, hi: f64) -> f64 {
        lo + (v - self.min) / (self.max - self.min) * (hi - lo)
    }
}

/// Scatter plot of `(x, y)` points with axis ticks and labels.
pub fn scatter_plot(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let xs = Range::of(points.iter().map(|p| p.0));
    let ys = Range::of(points.iter().map(|p| p.1));
    let plot_left = MARGIN_LEFT;
    let plot_right = SCATTER_WIDTH - MARGIN_RIGHT;
    let plot_top = MARGIN_TOP;
    let plot_bottom = SCATTER_HEIGHT - MARGIN_BOTTOM;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SCATTER_WIDTH}" height="{SCATTER_HEIGHT}" viewBox="0 0 {SCATTER_WIDTH} {SCATTER_HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        SCATTER_WIDTH / 2.0,
        escape(title)
    );

    // Axes.
    let _ = writeln!(
        svg,
        r#"<line x1="{plot_left:.2}" y1="{plot_bottom:.2}" x2="{plot_right:.2}" y2="{plot_bottom:.2}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{plot_left:.2}" y1="{plot_top:.2}" x2="{plot_left:.2}" y2="{plot_bottom:.2}" stroke="black"/>"#
    );

    // Five ticks per axis.
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = xs.min + f * (xs.max - xs.min);
        let xpix = xs.scale(xv, plot_left, plot_right);
        let _ = writeln!(
            svg,
            r#"<line x1="{xpix:.2}" y1="{plot_bottom:.2}" x2="{xpix:.2}" y2="{:.2}" stroke="black"/>"#,
            plot_bottom + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{xpix:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            plot_bottom + 18.0,
            tick_label(xv)
        );
        let yv = ys.min + f * (ys.max - ys.min);
        let ypix = ys.scale(yv, plot_bottom, plot_top);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ypix:.2}" x2="{plot_left:.2}" y2="{ypix:.2}" stroke="black"/>"#,
            plot_left - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            plot_left - 8.0,
            ypix + 4.0,
            tick_label(yv)
        );
    }

    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        (plot_left + plot_right) / 2.0,
        SCATTER_HEIGHT - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (plot_top + plot_bottom) / 2.0,
        (plot_top + plot_bottom) / 2.0,
        escape(y_label)
    );

    for (x, y) in points {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4" fill-opacity="0.6"/>"##,
            xs.scale(*x, plot_left, plot_right),
            ys.scale(*y, plot_bottom, plot_top)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// One bar of the stacked POS chart.
pub struct PositionShare {
    pub label: String,
    pub noun: f64,
    pub verb: f64,
    pub other: f64,
}

/// Stacked horizontal bars of POS shares per syntactic position, one panel
/// per language.
pub fn stacked_position_chart(title: &str, panels: &[(String, Vec<PositionShare>)]) -> String {
    const BAR_HEIGHT: f64 = 16.0;
    const BAR_GAP: f64 = 6.0;
    const BAR_WIDTH: f64 = 380.0;
    const LABEL_WIDTH: f64 = 150.0;
    const PANEL_GAP: f64 = 44.0;
    const TOP: f64 = 70.0;

    let total_rows: usize = panels.iter().map(|(_, rows)| rows.len()).sum();
    let height = TOP
        + panels.len() as f64 * PANEL_GAP
        + total_rows as f64 * (BAR_HEIGHT + BAR_GAP)
        + 30.0;
    let width = LABEL_WIDTH + BAR_WIDTH + 120.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="26" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    );

    // Legend.
    let legend = [("noun", "#1f77b4"), ("verb", "#d62728"), ("other", "#bbbbbb")];
    for (i, (name, color)) in legend.iter().enumerate() {
        let x = LABEL_WIDTH + i as f64 * 90.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="40" width="12" height="12" fill="{color}"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="50" font-family="sans-serif" font-size="12">{name}</text>"#,
            x + 16.0
        );
    }

    let mut y = TOP;
    for (panel_label, rows) in panels {
        let _ = writeln!(
            svg,
            r#"<text x="{LABEL_WIDTH:.2}" y="{:.2}" font-family="sans-serif" font-size="14" font-weight="bold" text-anchor="end">{}</text>"#,
            y + 4.0,
            escape(panel_label)
        );
        y += PANEL_GAP / 2.0;
        for row in rows {
            let total = (row.noun + row.verb + row.other).max(f64::MIN_POSITIVE);
            let widths = [
                row.noun / total * BAR_WIDTH,
                row.verb / total * BAR_WIDTH,
                row.other / total * BAR_WIDTH,
            ];
            let colors = ["#1f77b4", "#d62728", "#bbbbbb"];
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>"#,
                LABEL_WIDTH - 8.0,
                y + BAR_HEIGHT - 4.0,
                escape(&row.label)
            );
            let mut x = LABEL_WIDTH;
            for (w, color) in widths.iter().zip(colors) {
                if *w > 0.0 {
                    let _ = writeln!(
                        svg,
                        r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{BAR_HEIGHT:.2}" fill="{color}"/>"#
                    );
                }
                x += w;
            }
            y += BAR_HEIGHT + BAR_GAP;
        }
        y += PANEL_GAP / 2.0;
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_is_deterministic_and_contains_points() {
        let points = vec![(0.0, 1.0), (0.5, 2.0), (1.0, 1.5)];
        let a = scatter_plot("t", "x", "y", &points);
        let b = scatter_plot("t", "x", "y", &points);
        assert_eq!(a, b);
        assert_eq!(a.matches("<circle").count(), 3);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn scatter_handles_degenerate_ranges() {
        let svg = scatter_plot("t", "x", "y", &[(1.0, 1.0), (1.0, 1.0)]);
        assert!(!svg.contains("NaN"));
        let empty = scatter_plot("t", "x", "y", &[]);
        assert!(!empty.contains("NaN"));
    }

    #[test]
    fn stacked_chart_emits_one_group_per_row() {
        let panels = vec![(
            "classical".to_string(),
            vec![
                PositionShare { label: "clause-initial".into(), noun: 3.0, verb: 1.0, other: 1.0 },
                PositionShare { label: "before 之".into(), noun: 0.0, verb: 2.0, other: 0.0 },
            ],
        )];
        let svg = stacked_position_chart("positions", &panels);
        // First row paints three segments, second only one.
        assert_eq!(svg.matches("<rect").count(), 1 + 3 + 3 + 1);
        assert!(svg.contains("之"));
    }

    #[test]
    fn labels_are_escaped() {
        let svg = scatter_plot("a<b&c", "x", "y", &[(0.0, 0.0)]);
        assert!(svg.contains("a&lt;b&amp;c"));
    }
}
