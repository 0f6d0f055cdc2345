//! Standalone SVG heatmaps on a diverging scale centred at zero.

use std::fmt::Write;

const CELL: usize = 22;
const LEFT: usize = 56;
const TOP: usize = 40;
const LEGEND: usize = 70;

const NEG: (f64, f64, f64) = (33.0, 102.0, 172.0);
const POS: (f64, f64, f64) = (178.0, 24.0, 43.0);

/// Color for `v` on the symmetric range `[-m, m]`.
pub fn color(v: f64, m: f64) -> String {
    let t = if m > 0.0 {
        (v / m).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let end = if t < 0.0 { NEG } else { POS };
    let a = t.abs();
    let mix = |c: f64| (255.0 + (c - 255.0) * a).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// `values[row][col]`; rows are layers.
pub fn heatmap(
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &[Vec<f64>],
) -> String {
    let rows = values.len();
    let cols = values.first().map_or(0, Vec::len);
    let m = values.iter().flatten().fold(0.0f64, |a, &v| a.max(v.abs()));
    let width = LEFT + cols * CELL + LEGEND;
    let height = TOP + rows.max(1) * CELL + 30;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="16" font-size="12">{}</text>"#,
        esc(title)
    );
    for (j, label) in col_labels.iter().enumerate() {
        let x = LEFT + j * CELL + CELL / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            TOP - 6,
            esc(label)
        );
    }
    for (i, row) in values.iter().enumerate() {
        let y = TOP + i * CELL;
        let label = row_labels.get(i).map_or("", String::as_str);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 6,
            y + CELL / 2 + 3,
            esc(label)
        );
        for (j, &v) in row.iter().enumerate() {
            let x = LEFT + j * CELL;
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#dddddd"><title>{} {}: {v:.3}</title></rect>"##,
                color(v, m),
                esc(label),
                esc(col_labels.get(j).map_or("", String::as_str))
            );
        }
    }

    // legend: top = +m, bottom = -m
    let lx = LEFT + cols * CELL + 16;
    let steps = 10;
    let lh = rows.max(1) * CELL;
    for k in 0..steps {
        let v = m * (1.0 - 2.0 * (k as f64 + 0.5) / steps as f64);
        let y0 = TOP + k * lh / steps;
        let y1 = TOP + (k + 1) * lh / steps;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{y0}" width="12" height="{}" fill="{}"/>"#,
            y1 - y0,
            color(v, m)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">{:+.2}</text>"#,
        lx + 16,
        TOP + 8,
        m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">0</text>"#,
        lx + 16,
        TOP + lh / 2 + 3
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">{:+.2}</text>"#,
        lx + 16,
        TOP + lh,
        -m
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_white_and_ends_are_saturated() {
        assert_eq!(color(0.0, 3.0), "#ffffff");
        assert_eq!(color(3.0, 3.0), "#b2182b");
        assert_eq!(color(-3.0, 3.0), "#2166ac");
        assert_eq!(color(-9.0, 3.0), color(-3.0, 3.0));
        assert_eq!(color(1.0, 0.0), "#ffffff");
    }

    #[test]
    fn one_rect_per_cell() {
        let rows: Vec<String> = (0..3).map(|l| l.to_string()).collect();
        let cols: Vec<String> = (0..4).map(|h| h.to_string()).collect();
        let v = vec![vec![1.0, -2.0, 0.0, 0.5]; 3];
        let svg = heatmap("t", &rows, &cols, &v);
        assert_eq!(svg.matches("<title>").count(), 12);
        assert_eq!(svg, heatmap("t", &rows, &cols, &v));
    }
}
