//! Static SVG line plots of sweep events against the IoU threshold, one
//! panel per event column.

use std::fmt::Write;

pub struct Line {
    pub label: String,
    pub points: Vec<(f64, [f64; 6])>,
}

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 40.0;
const COLORS: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

pub fn render(lines: &[Line], columns: &[&str; 6]) -> String {
    let cols = 3.0;
    let width = cols * (PANEL_W + MARGIN) + MARGIN + 180.0;
    let height = 2.0 * (PANEL_H + MARGIN) + MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let (x0, x1) = bounds(lines.iter().flat_map(|l| l.points.iter().map(|p| p.0)));
    for (k, name) in columns.iter().enumerate() {
        let ox = MARGIN + (k % 3) as f64 * (PANEL_W + MARGIN);
        let oy = MARGIN + (k / 3) as f64 * (PANEL_H + MARGIN);
        let (y0, y1) = bounds(lines.iter().flat_map(|l| l.points.iter().map(move |p| p.1[k])));
        let px = |x: f64| ox + (x - x0) / (x1 - x0) * PANEL_W;
        let py = |y: f64| oy + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;
        let _ = writeln!(
            s,
            r#"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{name}</text>"#, ox, oy - 6.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{y1:.1}</text>"#, ox + 3.0, oy + 12.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{y0:.1}</text>"#, ox + 3.0, oy + PANEL_H - 3.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{x0}</text>"#, ox, oy + PANEL_H + 14.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{x1}</text>"#, ox + PANEL_W, oy + PANEL_H + 14.0);
        for (i, l) in lines.iter().enumerate() {
            let pts: Vec<String> = l
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1[k])))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                pts.join(" "),
                COLORS[i % COLORS.len()]
            );
        }
    }
    let lx = MARGIN + cols * (PANEL_W + MARGIN);
    for (i, l) in lines.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            COLORS[i % COLORS.len()],
            lx + 22.0,
            y + 4.0,
            l.label
        );
    }
    s.push_str("</svg>\n");
    s
}
