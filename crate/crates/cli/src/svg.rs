//! Minimal SVG renderings of the CSV outputs.

use std::fmt::Write;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
    /// Windows marked with a star.
    pub marked: Vec<bool>,
}

/// Per-window accuracy curves with a dashed chance line and stars over
/// marked windows.
pub fn timecourse(series: &[Series], window_ms: u32, chance: f64) -> String {
    let (w, h) = (720.0, 400.0);
    let (left, right, top, bottom) = (60.0, 130.0, 30.0, 50.0);
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(1);
    let finite = series.iter().flat_map(|s| &s.values).copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((chance, chance), |(a, b), v| (a.min(v), b.max(v)));
    let pad = ((hi - lo) * 0.1).max(0.02);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |i: usize| {
        let span = (n - 1).max(1) as f64;
        left + (w - left - right) * i as f64 / span
    };
    let y = |v: f64| top + (h - top - bottom) * (hi - v) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r##"<line x1="{left}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
        y(chance),
        w - right
    );
    let _ = writeln!(
        out,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
        h - bottom
    );
    let _ = writeln!(
        out,
        r#"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.2}</text>"#,
            left - 6.0,
            y(v) + 4.0
        );
    }
    let step = n.div_ceil(8).max(1);
    for i in (0..n).step_by(step) {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x(i),
            h - bottom + 16.0,
            i as u64 * window_ms as u64
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">time (ms)</text>"#,
        (left + w - right) / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {0})" text-anchor="middle">2v2 accuracy</text>"#,
        (top + h - bottom) / 2.0
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| format!("{:.2},{:.2}", x(i), y(*v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        for (i, (&v, &m)) in s.values.iter().zip(&s.marked).enumerate() {
            if m && v.is_finite() {
                let _ = writeln!(
                    out,
                    r#"<text x="{:.2}" y="{:.2}" fill="{color}" text-anchor="middle" font-size="13">*</text>"#,
                    x(i),
                    y(v) - 6.0 - 8.0 * k as f64
                );
            }
        }
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{4}</text>"#,
            w - right + 12.0,
            w - right + 32.0,
            w - right + 38.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub struct Heatmap {
    pub label: String,
    pub row_labels: Vec<String>,
    /// Row-major values, one row per `row_labels` entry.
    pub values: Vec<Vec<f64>>,
}

/// Diverging color around `center`: blue below, red above.
fn color(v: f64, center: f64, span: f64) -> String {
    if !v.is_finite() {
        return "#cccccc".into();
    }
    let t = ((v - center) / span).clamp(-1.0, 1.0);
    let fade = |t: f64| (255.0 * (1.0 - t.abs())).round() as u8;
    if t >= 0.0 {
        format!("#ff{0:02x}{0:02x}", fade(t))
    } else {
        format!("#{0:02x}{0:02x}ff", fade(t))
    }
}

/// One sensor × window panel per heatmap, stacked vertically.
pub fn heatmaps(panels: &[Heatmap], center: f64) -> String {
    let cell = 14.0;
    let left = 110.0;
    let span = panels
        .iter()
        .flat_map(|p| p.values.iter().flatten())
        .filter(|v| v.is_finite())
        .map(|v| (v - center).abs())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let width = panels
        .iter()
        .map(|p| p.values.first().map_or(0, |r| r.len()))
        .max()
        .unwrap_or(0) as f64
        * cell
        + left
        + 20.0;
    let mut body = String::new();
    let mut y0 = 10.0;
    for p in panels {
        let _ = writeln!(body, r#"<text x="4" y="{:.1}" font-weight="bold">{}</text>"#, y0 + 12.0, escape(&p.label));
        y0 += 20.0;
        for (r, row) in p.values.iter().enumerate() {
            let y = y0 + r as f64 * cell;
            let _ = writeln!(
                body,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="9">{}</text>"#,
                left - 4.0,
                y + cell - 3.0,
                escape(p.row_labels.get(r).map(String::as_str).unwrap_or(""))
            );
            for (c, &v) in row.iter().enumerate() {
                let _ = writeln!(
                    body,
                    r#"<rect x="{:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{}"><title>{v}</title></rect>"#,
                    left + c as f64 * cell,
                    color(v, center, span)
                );
            }
        }
        y0 += p.values.len() as f64 * cell + 16.0;
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{y0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{y0}" fill="white"/>"#);
    out.push_str(&body);
    out.push_str("</svg>\n");
    out
}

/// Square matrix of pairwise significance: cell `(i, j)` shows how many
/// windows had `i` significantly above `j`, starred when nonzero.
pub fn significance_matrix(labels: &[String], wins: &[Vec<usize>]) -> String {
    let cell = 60.0;
    let left = 140.0;
    let top = 120.0;
    let n = labels.len();
    let (w, h) = (left + cell * n as f64 + 20.0, top + cell * n as f64 + 20.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (i, l) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            top + cell * (i as f64 + 0.55),
            escape(l)
        );
        let cx = left + cell * (i as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{:.1}" transform="rotate(-45 {cx:.1} {0:.1})">{}</text>"#,
            top - 8.0,
            escape(l)
        );
    }
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (left + cell * j as f64, top + cell * i as f64);
            let k = wins.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0);
            let fill = if i == j { "#eeeeee" } else if k > 0 { "#fdd0a2" } else { "white" };
            let _ = writeln!(
                out,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{fill}" stroke="#999"/>"##
            );
            if i != j {
                let text = if k > 0 { format!("* {k}") } else { "0".into() };
                let _ = writeln!(
                    out,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{text}</text>"#,
                    x + cell / 2.0,
                    y + cell / 2.0 + 4.0
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}
