//! Deterministic standalone SVG figures.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Palette {
    /// Perceptually ordered dark-blue to yellow ramp.
    Viridis,
    /// Ten categorical colors, indexed by `value mod 10`.
    Digits,
}

const VIRIDIS: [(u8, u8, u8); 6] = [
    (68, 1, 84),
    (65, 68, 135),
    (42, 120, 142),
    (34, 168, 132),
    (122, 209, 81),
    (253, 231, 37),
];

const DIGITS: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn ramp(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    let mix = |p: u8, q: u8| (p as f64 + (q as f64 - p as f64) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

pub fn digit_color(d: usize) -> &'static str {
    DIGITS[d % 10]
}

fn header(out: &mut String, w: u32, h: u32, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"18\" text-anchor=\"middle\" {FONT} font-size=\"14\">{}</text>",
        w / 2,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

fn finite_range(values: impl Iterator<Item = f64>) -> Result<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if lo > hi {
        return Err(Error::Empty("finite values to plot"));
    }
    Ok((lo, hi))
}

/// `values[row * xs.len() + col]`, rows follow `ys` upwards.
pub fn render_heatmap_svg(
    title: &str,
    xs: &[u64],
    ys: &[u64],
    values: &[f64],
    palette: Palette,
) -> Result<String> {
    if xs.is_empty() || ys.is_empty() || values.is_empty() {
        return Err(Error::Empty("heatmap grid"));
    }
    if values.len() != xs.len() * ys.len() {
        return Err(Error::Structure(format!(
            "heatmap has {} values for a {}×{} grid",
            values.len(),
            xs.len(),
            ys.len()
        )));
    }
    let (lo, hi) = finite_range(values.iter().copied())?;
    let (left, top, plot) = (60.0, 30.0, 400.0);
    let cw = plot / xs.len() as f64;
    let ch = plot / ys.len() as f64;
    let color = |v: f64| match palette {
        Palette::Viridis => ramp(if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }),
        Palette::Digits => digit_color(v.max(0.0) as usize).to_string(),
    };
    let mut out = String::new();
    header(&mut out, 560, 490, title);
    for (r, _) in ys.iter().enumerate() {
        for (c, _) in xs.iter().enumerate() {
            let v = values[r * xs.len() + c];
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                left + c as f64 * cw,
                top + plot - (r + 1) as f64 * ch,
                cw + 0.05,
                ch + 0.05,
                color(v)
            );
        }
    }
    let bottom = top + plot;
    let _ = writeln!(
        out,
        "<text x=\"{left}\" y=\"{}\" {FONT}>{}</text>\n<text x=\"{}\" y=\"{}\" text-anchor=\"end\" {FONT}>{}</text>",
        bottom + 15.0,
        xs[0],
        left + plot,
        bottom + 15.0,
        xs[xs.len() - 1]
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{bottom}\" text-anchor=\"end\" {FONT}>{}</text>\n<text x=\"{}\" y=\"{}\" text-anchor=\"end\" {FONT}>{}</text>",
        left - 4.0,
        ys[0],
        left - 4.0,
        top + 10.0,
        ys[ys.len() - 1]
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT}>a</text>\n<text x=\"15\" y=\"{}\" text-anchor=\"middle\" {FONT}>b</text>",
        left + plot / 2.0,
        bottom + 30.0,
        top + plot / 2.0
    );
    // Legend.
    let lx = left + plot + 25.0;
    match palette {
        Palette::Viridis => {
            for i in 0..50 {
                let t = 1.0 - i as f64 / 49.0;
                let _ = writeln!(
                    out,
                    "<rect x=\"{lx}\" y=\"{:.2}\" width=\"16\" height=\"8.2\" fill=\"{}\"/>",
                    top + i as f64 * 8.0,
                    ramp(t)
                );
            }
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" {FONT}>{}</text>\n<text x=\"{}\" y=\"{bottom}\" {FONT}>{}</text>",
                lx + 20.0,
                top + 10.0,
                num(hi),
                lx + 20.0,
                num(lo)
            );
        }
        Palette::Digits => {
            for d in 0..10 {
                let y = top + d as f64 * 18.0;
                let _ = writeln!(
                    out,
                    "<rect x=\"{lx}\" y=\"{y}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"{}\" y=\"{}\" {FONT}>{d}</text>",
                    digit_color(d),
                    lx + 16.0,
                    y + 10.0
                );
            }
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub fn render_curve_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::Empty("curve series"));
    }
    let (x0, x1) = finite_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)))?;
    let (y0, y1) = finite_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)))?;
    let (y0, y1) = (y0.min(0.0), if y1 > y0.min(0.0) { y1 } else { y0.min(0.0) + 1.0 });
    let x1 = if x1 > x0 { x1 } else { x0 + 1.0 };
    let (left, top, w, h) = (60.0, 30.0, 460.0, 300.0);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * w;
    let py = |y: f64| top + h - (y - y0) / (y1 - y0) * h;
    let mut out = String::new();
    header(&mut out, 660, 380, title);
    let _ = writeln!(
        out,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#444\"/>"
    );
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\" {FONT}>{}</text>",
            left - 4.0,
            py(y) + 4.0,
            num((y * 1000.0).round() / 1000.0)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{left}\" y=\"{}\" {FONT}>{}</text>\n<text x=\"{}\" y=\"{}\" text-anchor=\"end\" {FONT}>{}</text>",
        top + h + 15.0,
        num(x0),
        left + w,
        top + h + 15.0,
        num(x1)
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT}>{}</text>\n<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\" {FONT}>{}</text>",
        left + w / 2.0,
        top + h + 32.0,
        escape(x_label),
        top + h / 2.0,
        top + h / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = digit_color(i);
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            pts.join(" ")
        );
        let ly = top + 12.0 + i as f64 * 16.0;
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{}\" y=\"{}\" {FONT}>{}</text>",
            left + w + 10.0,
            left + w + 28.0,
            left + w + 32.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Three-dimensional points under a fixed oblique projection, colored by class.
pub fn render_scatter3d_svg(title: &str, points: &[[f64; 3]], classes: &[u8]) -> Result<String> {
    if points.is_empty() {
        return Err(Error::Empty("scatter points"));
    }
    if points.len() != classes.len() {
        return Err(Error::Structure(format!(
            "{} points but {} class labels",
            points.len(),
            classes.len()
        )));
    }
    let (ca, sa) = (0.6f64.cos(), 0.6f64.sin());
    let (ce, se) = (0.45f64.cos(), 0.45f64.sin());
    let proj: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let x = ca * p[0] - sa * p[1];
            let y = sa * p[0] + ca * p[1];
            (x, ce * p[2] - se * y)
        })
        .collect();
    let (x0, x1) = finite_range(proj.iter().map(|p| p.0))?;
    let (y0, y1) = finite_range(proj.iter().map(|p| p.1))?;
    let sx = if x1 > x0 { x1 - x0 } else { 1.0 };
    let sy = if y1 > y0 { y1 - y0 } else { 1.0 };
    let (left, top, size) = (30.0, 30.0, 420.0);
    let mut out = String::new();
    header(&mut out, 540, 480, title);
    for (&(x, y), &c) in proj.iter().zip(classes) {
        if !(x.is_finite() && y.is_finite()) {
            continue;
        }
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.6\" fill=\"{}\" fill-opacity=\"0.7\"/>",
            left + (x - x0) / sx * size,
            top + size - (y - y0) / sy * size,
            digit_color(c as usize)
        );
    }
    for d in 0..10 {
        let y = top + d as f64 * 18.0;
        let _ = writeln!(
            out,
            "<rect x=\"480\" y=\"{y}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"496\" y=\"{}\" {FONT}>{d}</text>",
            digit_color(d),
            y + 10.0
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// One bar group per row of a probability matrix (rows × vocabulary).
pub fn render_prob_bars_svg(title: &str, row_labels: &[String], rows: &[Vec<f64>]) -> Result<String> {
    if rows.is_empty() || rows.iter().any(Vec::is_empty) {
        return Err(Error::Empty("probability rows"));
    }
    if row_labels.len() != rows.len() {
        return Err(Error::Structure(format!(
            "{} labels for {} probability rows",
            row_labels.len(),
            rows.len()
        )));
    }
    let v = rows[0].len();
    let (left, top, gh, gw) = (70.0, 30.0, 50.0, 10.0 * v as f64 + 20.0);
    let height = top + gh * rows.len() as f64 + 30.0;
    let mut out = String::new();
    header(&mut out, (left + gw + 20.0) as u32, height as u32, title);
    for (r, (row, label)) in rows.iter().zip(row_labels).enumerate() {
        let base = top + gh * (r + 1) as f64 - 8.0;
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\" {FONT}>{}</text>",
            left - 6.0,
            base - 12.0,
            escape(label)
        );
        for (i, &p) in row.iter().enumerate() {
            let bh = if p.is_finite() { p.clamp(0.0, 1.0) * (gh - 14.0) } else { 0.0 };
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"8\" height=\"{bh:.2}\" fill=\"{}\"/>",
                left + i as f64 * 10.0,
                base - bh,
                digit_color(i)
            );
        }
    }
    for i in 0..v {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{i}</text>",
            left + i as f64 * 10.0 + 4.0,
            height - 12.0
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
