//! Heatmap of an interaction matrix as a standalone SVG document.

use std::fmt::Write;

use crate::model::Factor;

const CELL: usize = 64;
const LEFT: usize = 96;
const TOP: usize = 56;
const LOW: (u8, u8, u8) = (0x21, 0x66, 0xac);
const MID: (u8, u8, u8) = (0xf7, 0xf7, 0xf7);
const HIGH: (u8, u8, u8) = (0xb2, 0x18, 0x2b);
const MISSING: &str = "#d9d9d9";

/// Diverging colour for `q` in [0, 1]: blue at 0, near-white at 0.5, red at 1.
pub fn diverging_color(q: f64) -> String {
    let q = if q.is_finite() { q.clamp(0.0, 1.0) } else { 0.0 };
    let (from, to, t) = if q <= 0.5 { (LOW, MID, q * 2.0) } else { (MID, HIGH, (q - 0.5) * 2.0) };
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(from.0, to.0), mix(from.1, to.1), mix(from.2, to.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Lower triangle and diagonal of a 7x7 matrix, labelled with factor names.
pub fn heatmap(title: &str, matrix: &[[Option<f64>; 7]; 7]) -> String {
    let n = Factor::ALL.len();
    let legend_x = LEFT + n * CELL + 24;
    let width = legend_x + 72;
    let height = TOP + n * CELL + 48;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r##"<rect width="{width}" height="{height}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="24" font-size="14" font-weight="bold">{}</text>"#, escape(title));
    for (i, row_factor) in Factor::ALL.iter().enumerate() {
        let y = TOP + i * CELL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            LEFT - 8,
            y + CELL / 2,
            row_factor.label()
        );
        for (j, cell) in matrix[i].iter().enumerate().take(i + 1) {
            let x = LEFT + j * CELL;
            let (fill, text) = match cell {
                Some(q) => (diverging_color(*q), format!("{q:.3}")),
                None => (MISSING.to_string(), "NA".to_string()),
            };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#ffffff"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" dominant-baseline="middle">{text}</text>"#,
                x + CELL / 2,
                y + CELL / 2
            );
        }
    }
    for (j, f) in Factor::ALL.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + j * CELL + CELL / 2,
            TOP + n * CELL + 18,
            f.label()
        );
    }
    // colour bar, q = 1 at the top
    let bar_h = n * CELL;
    let steps = 20;
    for k in 0..steps {
        let q = 1.0 - (k as f64 + 0.5) / steps as f64;
        let y0 = TOP + k * bar_h / steps;
        let y1 = TOP + (k + 1) * bar_h / steps;
        let _ = writeln!(
            s,
            r##"<rect x="{legend_x}" y="{y0}" width="16" height="{}" fill="{}"/>"##,
            y1 - y0,
            diverging_color(q)
        );
    }
    for (q, y) in [(1.0, TOP), (0.5, TOP + bar_h / 2), (0.0, TOP + bar_h)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" dominant-baseline="middle">{q:.1}</text>"#,
            legend_x + 22
        );
    }
    s.push_str("</svg>\n");
    s
}
