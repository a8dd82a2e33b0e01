use std::fmt::Write as _;

use super::RocPoint;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Self-contained SVG of BPCER (x) against APCER (y), both in percent.
pub fn roc_svg(points: &[RocPoint], title: &str) -> String {
    let span = SIZE - 2.0 * MARGIN;
    let px = |bpcer: f64| MARGIN + span * bpcer / 100.0;
    let py = |apcer: f64| SIZE - MARGIN - span * apcer / 100.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..=4 {
        let v = 25.0 * f64::from(i);
        let _ = writeln!(
            s,
            r##"<line x1="{x}" y1="{y0}" x2="{x}" y2="{y1}" stroke="#ddd"/><line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/>"##,
            x = px(v),
            y0 = py(0.0),
            y1 = py(100.0),
            y = py(v),
            x0 = px(0.0),
            x1 = px(100.0)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{v}</text><text x="{}" y="{}" font-size="10" text-anchor="end">{v}</text>"#,
            px(v),
            py(0.0) + 14.0,
            px(0.0) - 4.0,
            py(v) + 3.0
        );
    }
    let path: Vec<String> = points
        .iter()
        .map(|p| format!("{:.2},{:.2}", px(p.bpcer), py(p.apcer)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#c0392b" stroke-width="2" points="{}"/>"##,
        path.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">BPCER [%]</text>"#,
        SIZE / 2.0,
        SIZE - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">APCER [%]</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="13" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        escape(title)
    );
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
