//! SVG line charts of `predictions.csv`: one panel per battery, true and
//! predicted RUL against sample index, with a ±2σ band when variances are
//! present.

use std::fmt::Write;

use bgn::rundir::PredictionRow;

const WIDTH: f64 = 720.0;
const PANEL: f64 = 220.0;
const MARGIN: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    top: f64,
    x_max: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn x(&self, i: usize) -> f64 {
        let span = (WIDTH - 2.0 * MARGIN).max(1.0);
        MARGIN + if self.x_max > 0.0 { i as f64 / self.x_max * span } else { span / 2.0 }
    }

    fn y(&self, v: f64) -> f64 {
        let h = PANEL - 2.0 * MARGIN / 1.5;
        let base = self.top + PANEL - MARGIN / 1.5;
        base - (v - self.y_lo) / (self.y_hi - self.y_lo) * h
    }
}

fn points(frame: &Frame, values: impl Iterator<Item = f64>) -> String {
    values
        .enumerate()
        .map(|(i, v)| format!("{:.2},{:.2}", frame.x(i), frame.y(v)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Groups rows by battery (first-seen order) and sorts each by `end_index`.
fn panels(rows: &[PredictionRow]) -> Vec<(String, Vec<&PredictionRow>)> {
    let mut out: Vec<(String, Vec<&PredictionRow>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(id, _)| *id == r.battery_id) {
            Some((_, v)) => v.push(r),
            None => out.push((r.battery_id.clone(), vec![r])),
        }
    }
    for (_, v) in &mut out {
        v.sort_by_key(|r| r.end_index);
    }
    out
}

pub fn render_svg(rows: &[PredictionRow]) -> String {
    let groups = panels(rows);
    let height = PANEL * groups.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, (id, rs)) in groups.iter().enumerate() {
        let band: Option<Vec<(f64, f64)>> = rs
            .iter()
            .map(|r| r.var.map(|v| (r.y_pred - 2.0 * v.sqrt(), r.y_pred + 2.0 * v.sqrt())))
            .collect();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in rs {
            lo = lo.min(r.y_true).min(r.y_pred);
            hi = hi.max(r.y_true).max(r.y_pred);
        }
        if let Some(b) = &band {
            for &(a, c) in b {
                lo = lo.min(a);
                hi = hi.max(c);
            }
        }
        if !(hi > lo) {
            lo -= 1.0;
            hi += 1.0;
        }
        let frame = Frame {
            top: k as f64 * PANEL,
            x_max: (rs.len() - 1) as f64,
            y_lo: lo,
            y_hi: hi,
        };
        let _ = writeln!(s, r#"<g id="panel-{k}">"#);
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN}" y="{:.2}">{} (RUL {lo:.1} to {hi:.1})</text>"#,
            frame.top + 18.0,
            escape(id)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#999"/>"##,
            WIDTH - MARGIN,
            y = frame.y(lo)
        );
        if let Some(b) = &band {
            let upper = points(&frame, b.iter().map(|p| p.1));
            let lower: Vec<String> = b
                .iter()
                .enumerate()
                .rev()
                .map(|(i, p)| format!("{:.2},{:.2}", frame.x(i), frame.y(p.0)))
                .collect();
            let _ = writeln!(
                s,
                r##"<polygon class="band" points="{upper} {}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##,
                lower.join(" ")
            );
        }
        let _ = writeln!(
            s,
            r#"<polyline class="y_true" points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
            points(&frame, rs.iter().map(|r| r.y_true))
        );
        let _ = writeln!(
            s,
            r##"<polyline class="y_pred" points="{}" fill="none" stroke="#3182bd" stroke-width="1.5"/>"##,
            points(&frame, rs.iter().map(|r| r.y_pred))
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}
