//! Standalone SVG of an evidence report: one panel per channel with the
//! peak-normalised UBM (red) and reference (blue) densities and a marker at
//! the questioned LR.

use std::fmt::Write;

use sigproof_core::evidence::{ChannelCurve, EvidenceReport};

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 36.0;
const COLS: usize = 2;

fn polyline(out: &mut String, xs: &[f64], ys: &[f64], map: impl Fn(f64, f64) -> (f64, f64), colour: &str) {
    let points: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let (px, py) = map(x, y);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
        points.join(" ")
    );
}

fn panel(out: &mut String, x0: f64, y0: f64, title: &str, curve: &ChannelCurve, readout: &str) {
    let (lo, hi) = (curve.x[0], curve.x[curve.x.len() - 1]);
    let lo = lo.min(curve.lr_q);
    let hi = hi.max(curve.lr_q);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let w = PANEL_W - 2.0 * MARGIN;
    let h = PANEL_H - 2.0 * MARGIN;
    let map = |x: f64, y: f64| (x0 + MARGIN + (x - lo) / span * w, y0 + MARGIN + (1.0 - y) * h);

    let _ = writeln!(
        out,
        r##"<rect x="{:.1}" y="{:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#999"/>"##,
        x0 + MARGIN,
        y0 + MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" font-family="sans-serif">{title}</text>"#,
        x0 + MARGIN,
        y0 + MARGIN - 8.0
    );
    polyline(out, &curve.x, &curve.ubm_pdf, map, "#d62728");
    if let Some(r) = &curve.ref_pdf {
        polyline(out, &curve.x, r, map, "#1f77b4");
    }
    let (qx, _) = map(curve.lr_q, 0.0);
    let _ = writeln!(
        out,
        r#"<line x1="{qx:.2}" x2="{qx:.2}" y1="{:.1}" y2="{:.1}" stroke="black" stroke-dasharray="4 3"/>"#,
        y0 + MARGIN,
        y0 + MARGIN + h
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{:.1}" font-size="10" font-family="sans-serif" fill="#333">{lo:.2}</text>"##,
        x0 + MARGIN,
        y0 + MARGIN + h + 12.0
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{:.1}" font-size="10" font-family="sans-serif" fill="#333" text-anchor="end">{hi:.2}</text>"##,
        x0 + MARGIN + w,
        y0 + MARGIN + h + 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" font-family="sans-serif">{readout}</text>"#,
        x0 + MARGIN,
        y0 + MARGIN + h + 26.0
    );
}

pub fn report_svg(report: &EvidenceReport) -> String {
    let n = report.curves.len().max(1);
    let rows = n.div_ceil(COLS);
    let width = PANEL_W * COLS.min(n) as f64;
    let height = PANEL_H * rows as f64 + 30.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="10" y="20" font-size="14" font-family="sans-serif">metric {} | fused score {:.4} | UBM {} ({} members)</text>"#,
        report.metric,
        report.fused_score,
        report.ubm.provenance,
        report.ubm.size
    );
    for (k, (channel, curve)) in report.curves.iter().enumerate() {
        let ev = &report.per_channel[channel];
        let p_r = ev.p_r.map(|p| format!("{p:.3}")).unwrap_or_else(|| "n/a (needs 2+ references)".into());
        let readout = format!("LR_q {:.3}  P(U) {:.3}  P(R) {p_r}", ev.lr_q, ev.p_u);
        let (col, row) = (k % COLS, k / COLS);
        panel(&mut out, col as f64 * PANEL_W, 30.0 + row as f64 * PANEL_H, &channel.to_string(), curve, &readout);
    }
    out.push_str("</svg>\n");
    out
}
