//! Minimal standalone SVG charts. The plotted numbers are repeated in an XML
//! comment so the file doubles as a data record.

use std::fmt::Write;

/// One bar of a [`bar_chart`].
#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub value: f64,
    /// Drawn in the accent colour.
    pub highlight: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

// `--` may not appear inside an XML comment.
fn comment_safe(s: &str) -> String {
    s.replace("--", "- -")
}

/// Vertical bar chart with values in `[0, max]`, `header` lines written into
/// a leading comment.
pub fn bar_chart(title: &str, y_label: &str, bars: &[Bar], header: &[String]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const LEFT: f64 = 60.0;
    const BOTTOM: f64 = 90.0;
    const TOP: f64 = 40.0;
    let plot_w = W - LEFT - 20.0;
    let plot_h = H - TOP - BOTTOM;
    let max = bars
        .iter()
        .map(|b| b.value)
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-12);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    s.push_str("<!--\n");
    for line in header {
        let _ = writeln!(s, "{}", comment_safe(line));
    }
    s.push_str("label,value\n");
    for b in bars {
        let _ = writeln!(s, "{},{:.10}", comment_safe(&b.label), b.value);
    }
    s.push_str("-->\n");
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    let base = TOP + plot_h;
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        LEFT + plot_w
    );
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="black"/>"#);
    for i in 0..=4 {
        let v = max * i as f64 / 4.0;
        let y = base - plot_h * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{:.3}</text>"#,
            LEFT - 4.0,
            y + 3.0,
            v
        );
    }
    let slot = plot_w / bars.len().max(1) as f64;
    for (i, b) in bars.iter().enumerate() {
        let v = if b.value.is_finite() { b.value.max(0.0) } else { 0.0 };
        let h = plot_h * v / max;
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let fill = if b.highlight { "#c0392b" } else { "#7f8c8d" };
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{fill}"/>"#,
            base - h,
            slot * 0.7
        );
        let cx = x + slot * 0.35;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="10">{:.4}</text>"#,
            base - h - 4.0,
            b.value
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" transform="rotate(30 {cx:.2} {:.2})" font-family="sans-serif" font-size="11">{}</text>"#,
            base + 16.0,
            base + 16.0,
            escape(&b.label)
        );
    }
    s.push_str("</svg>\n");
    s
}
