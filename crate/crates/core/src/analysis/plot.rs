//! Minimal static SVG bar charts.

use std::fmt::Write;

pub fn bar_chart_svg(title: &str, labels: &[String], values: &[f64]) -> String {
    let (w, h) = (720.0, 360.0);
    let (left, right, top, bottom) = (50.0, 10.0, 30.0, 60.0);
    let n = values.len().max(1) as f64;
    let max = values.iter().copied().fold(0.0_f64, f64::max).max(1e-12);
    let slot = (w - left - right) / n;
    let plot_h = h - top - bottom;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top + plot_h,
        w - right,
        top + plot_h
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{max:.3}</text>"#,
        left - 4.0,
        top + 4.0
    );
    for (i, v) in values.iter().enumerate() {
        let bh = plot_h * v / max;
        let x = left + slot * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="gray"/>"#,
            x + slot * 0.1,
            top + plot_h - bh,
            slot * 0.8,
            bh
        );
        if let Some(label) = labels.get(i) {
            let (lx, ly) = (x + slot / 2.0, top + plot_h + 12.0);
            let _ = writeln!(
                s,
                r#"<text x="{lx:.2}" y="{ly:.2}" font-family="sans-serif" font-size="9" text-anchor="end" transform="rotate(-60 {lx:.2} {ly:.2})">{}</text>"#,
                escape(label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
