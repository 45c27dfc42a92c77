//! Plain SVG charts: layer curves with shaded 95% CI bands and bar charts.

use std::fmt::Write;

use crate::encoding::CurveRow;

const W: f64 = 640.0;
const H: f64 = 400.0;
const M_LEFT: f64 = 60.0;
const M_RIGHT: f64 = 150.0;
const M_TOP: f64 = 40.0;
const M_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = if self.x1 > self.x0 { self.x1 - self.x0 } else { 1.0 };
        M_LEFT + (x - self.x0) / span * (W - M_LEFT - M_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let span = if self.y1 > self.y0 { self.y1 - self.y0 } else { 1.0 };
        H - M_BOTTOM - (y - self.y0) / span * (H - M_TOP - M_BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (W - M_RIGHT + M_LEFT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (M_LEFT, W - M_RIGHT, M_TOP, H - M_BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{l:.1} {t:.1} L{l:.1} {b:.1} L{r:.1} {b:.1}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let y = f.py(v);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            l - 6.0,
            y + 4.0
        );
        let _ = writeln!(
            out,
            r##"<line x1="{l:.1}" y1="{y:.1}" x2="{r:.1}" y2="{y:.1}" stroke="#dddddd"/>"##
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Layer curves for one model: one line per ROI with its CI band.
/// `rows` must all belong to the same model.
pub fn layer_curve_svg(model: &str, rows: &[CurveRow]) -> String {
    let mut rois: Vec<&str> = rows.iter().map(|r| r.roi.as_str()).collect();
    rois.dedup();
    let max_layer = rows.iter().map(|r| r.layer).max().unwrap_or(0);
    let lo = rows
        .iter()
        .map(|r| r.summary.ci_low)
        .fold(f64::INFINITY, f64::min);
    let hi = rows
        .iter()
        .map(|r| r.summary.ci_high)
        .fold(f64::NEG_INFINITY, f64::max);
    let (y0, y1) = padded_range(lo.min(0.0), hi.max(0.0));
    let f = Frame {
        x0: 0.0,
        x1: max_layer as f64,
        y0,
        y1,
    };
    let mut out = String::new();
    header(&mut out, &format!("{model}: encoding performance by layer"));
    axes(&mut out, &f, "layer", "mean rho (95% CI)");
    for layer in 0..=max_layer {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{layer}</text>"#,
            f.px(layer as f64),
            H - M_BOTTOM + 16.0
        );
    }
    for (i, roi) in rois.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<&CurveRow> = rows.iter().filter(|r| r.roi == *roi).collect();
        let mut band = String::new();
        for r in &pts {
            let _ = write!(
                band,
                "{:.2},{:.2} ",
                f.px(r.layer as f64),
                f.py(r.summary.ci_high)
            );
        }
        for r in pts.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", f.px(r.layer as f64), f.py(r.summary.ci_low));
        }
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", f.px(r.layer as f64), f.py(r.summary.mean)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = M_TOP + 18.0 * i as f64 + 10.0;
        let lx = W - M_RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            ly - 10.0,
            lx + 18.0,
            ly,
            escape(roi)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical bar chart; bars are drawn in the order given.
pub fn bar_chart_svg(title: &str, ylabel: &str, bars: &[(String, f64)]) -> String {
    let lo = bars.iter().map(|b| b.1).fold(0.0, f64::min);
    let hi = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let (y0, y1) = padded_range(lo, hi);
    let n = bars.len().max(1) as f64;
    let f = Frame {
        x0: 0.0,
        x1: n,
        y0,
        y1,
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "", ylabel);
    let slot = (W - M_LEFT - M_RIGHT) / n;
    let base = f.py(0.0);
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = f.px(i as f64) + 0.15 * slot;
        let top = f.py(*v);
        let (y, h) = if top < base {
            (top, base - top)
        } else {
            (base, top - base)
        };
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{h:.2}" fill="{}"/>"#,
            0.7 * slot,
            PALETTE[i % PALETTE.len()]
        );
        let cx = x + 0.35 * slot;
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="end" transform="rotate(-40 {cx:.2} {:.2})">{}</text>"#,
            H - M_BOTTOM + 14.0,
            H - M_BOTTOM + 14.0,
            escape(label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">{v:.3}</text>"#,
            y - 3.0
        );
    }
    out.push_str("</svg>\n");
    out
}
