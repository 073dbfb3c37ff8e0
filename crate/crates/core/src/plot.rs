//! Minimal static SVG charts for reports.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        escape(y_label),
        y = HEIGHT / 2.0
    );
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(out, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" stroke="black" fill="none"/>"#);
}

fn y_ticks(out: &mut String, y_max: f64) {
    for k in 0..=5 {
        let v = y_max * k as f64 / 5.0;
        let y = HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * k as f64 / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#,
            MARGIN - 6.0,
            y + 4.0
        );
    }
}

fn legend(out: &mut String, labels: &[&str]) {
    for (k, label) in labels.iter().enumerate() {
        let y = MARGIN + 16.0 * k as f64;
        let x = WIDTH - MARGIN - 150.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y - 10.0,
            COLORS[k % COLORS.len()],
            x + 18.0,
            y,
            escape(label)
        );
    }
}

/// Polylines over the unit square, e.g. precision against recall.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title, x_label, y_label);
    y_ticks(&mut out, 1.0);
    let (w, h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    for (k, s) in series.iter().enumerate() {
        let mut d = String::new();
        for (n, &(x, y)) in s.points.iter().enumerate() {
            let px = MARGIN + w * x.clamp(0.0, 1.0);
            let py = HEIGHT - MARGIN - h * y.clamp(0.0, 1.0);
            let _ = write!(d, "{}{px:.2} {py:.2} ", if n == 0 { "M" } else { "L" });
        }
        let _ = writeln!(
            out,
            r#"<path d="{}" stroke="{}" stroke-width="1.5" fill="none"/>"#,
            d.trim_end(),
            COLORS[k % COLORS.len()]
        );
    }
    legend(&mut out, &series.iter().map(|s| s.label.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one group per category, one bar per named series.
pub fn bar_chart(title: &str, y_label: &str, categories: &[String], series: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    header(&mut out, title, "", y_label);
    let y_max = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    y_ticks(&mut out, y_max);
    let (w, h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let group_w = w / categories.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    for (c, cat) in categories.iter().enumerate() {
        let gx = MARGIN + group_w * c as f64 + group_w * 0.1;
        for (k, (_, values)) in series.iter().enumerate() {
            let v = values.get(c).copied().unwrap_or(0.0).max(0.0);
            let bh = h * v / y_max;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                gx + bar_w * k as f64,
                HEIGHT - MARGIN - bh,
                bar_w,
                bh,
                COLORS[k % COLORS.len()]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            gx + group_w * 0.4,
            HEIGHT - MARGIN + 16.0,
            escape(cat)
        );
    }
    legend(&mut out, &series.iter().map(|s| s.0.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_draws_one_path_per_series() {
        let s = vec![
            Series { label: "a".into(), points: vec![(0.0, 1.0), (1.0, 0.5)] },
            Series { label: "b<c".into(), points: vec![(0.0, 0.0), (0.5, 0.5)] },
        ];
        let svg = line_chart("PR", "recall", "precision", &s);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("stroke-width=\"1.5\"").count(), 2);
        assert!(svg.contains("b&lt;c"));
        assert!(svg.contains("M56.00 56.00 L584.00 210.00"));
    }

    #[test]
    fn bar_chart_draws_every_bar() {
        let cats: Vec<String> = ["L=2", "L=4"].iter().map(|s| s.to_string()).collect();
        let svg = bar_chart("AUC", "auc", &cats, &[("base".into(), vec![0.5, 0.6]), ("pred".into(), vec![0.7, 0.8])]);
        // four bars, two legend swatches
        assert_eq!(svg.matches("<rect x=").count(), 6);
    }
}
