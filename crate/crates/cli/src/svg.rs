//! Minimal self-contained SVG line plots.

use std::fmt::Write;

pub struct Series<'a> {
    pub label: &'a str,
    pub y: &'a [f64],
    pub color: &'a str,
}

const W: f64 = 720.0;
const H: f64 = 420.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 50.0;

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-300);
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Line plot of several series over a shared x axis; NaN points break the line.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, x: &[f64], series: &[Series]) -> String {
    let finite = |v: &&f64| v.is_finite();
    let (x0, x1) = (
        x.iter().filter(finite).copied().fold(f64::INFINITY, f64::min),
        x.iter().filter(finite).copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let ys = series.iter().flat_map(|s| s.y.iter()).filter(finite).copied();
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !y0.is_finite() {
        (y0, y1) = (-1.0, 1.0);
    }
    if y1 - y0 < 1e-12 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let x1 = if x1 > x0 { x1 } else { x0 + 1.0 };
    let px = |v: f64| ML + (v - x0) / (x1 - x0) * (W - ML - MR);
    let py = |v: f64| H - MB - (v - y0) / (y1 - y0) * (H - MT - MB);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<rect x="{ML}" y="{MT}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - ML - MR,
        H - MT - MB
    );
    for t in nice_ticks(x0, x1, 5) {
        let xp = px(t);
        let _ = writeln!(s, r#"<line x1="{xp:.2}" y1="{}" x2="{xp:.2}" y2="{}" stroke="black"/>"#, H - MB, H - MB + 5.0);
        let _ = writeln!(s, r#"<text x="{xp:.2}" y="{}" text-anchor="middle">{}</text>"#, H - MB + 18.0, label(t));
    }
    for t in nice_ticks(y0, y1, 5) {
        let yp = py(t);
        let _ = writeln!(s, r#"<line x1="{}" y1="{yp:.2}" x2="{ML}" y2="{yp:.2}" stroke="black"/>"#, ML - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, ML - 8.0, yp + 4.0, label(t));
    }
    if y0 < 0.0 && y1 > 0.0 {
        let yp = py(0.0);
        let _ = writeln!(s, r##"<line x1="{ML}" y1="{yp:.2}" x2="{}" y2="{yp:.2}" stroke="#999" stroke-dasharray="4 3"/>"##, W - MR);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (ML + W - MR) / 2.0, H - 10.0, esc(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
        esc(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let mut seg = String::new();
        let flush = |seg: &mut String, s: &mut String| {
            if !seg.is_empty() {
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{}" stroke-width="1.4" points="{}"/>"#, ser.color, seg.trim_end());
                seg.clear();
            }
        };
        for (&xv, &yv) in x.iter().zip(ser.y) {
            if xv.is_finite() && yv.is_finite() {
                let _ = write!(seg, "{:.2},{:.2} ", px(xv), py(yv));
            } else {
                flush(&mut seg, &mut s);
            }
        }
        flush(&mut seg, &mut s);
        let ly = MT + 16.0 + 16.0 * k as f64;
        let lx = W - MR - 110.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/>"#, lx + 20.0, ser.color);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, esc(ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
