//! Static SVG export for the 2D scene kinds.

use std::fmt::Write;

use super::scene::{SceneDocument, SceneItem, SceneKind};
use super::LayoutError;

const WIDTH: f64 = 800.0;
const ROW_HEIGHT: f64 = 24.0;
const LABEL_WIDTH: f64 = 200.0;
const PLOT: f64 = 560.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, r##"<rect width="{WIDTH}" height="{height}" fill="#ffffff"/>"##);
}

/// Renders GANTT, BUBBLE, TIMESERIES and TABLE scenes. 3D kinds are
/// exported as structured scenes only.
pub fn render_svg(doc: &SceneDocument) -> Result<String, LayoutError> {
    let mut out = String::new();
    let title = doc.meta.node.clone();
    if doc.items.is_empty() {
        header(&mut out, 60.0, &title);
        let msg = doc.meta.message.clone().unwrap_or_else(|| "no data".into());
        let _ = writeln!(out, r#"<text x="20" y="35">{}</text>"#, escape(&msg));
        out.push_str("</svg>\n");
        if doc.kind.is_3d() {
            return Err(LayoutError::Unsupported(doc.kind));
        }
        return Ok(out);
    }
    match doc.kind {
        SceneKind::Gantt => gantt(doc, &mut out),
        SceneKind::Bubble => bubble(doc, &mut out),
        SceneKind::Timeseries => timeseries(doc, &mut out),
        SceneKind::Table => table(doc, &mut out),
        kind => return Err(LayoutError::Unsupported(kind)),
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn gantt(doc: &SceneDocument, out: &mut String) {
    let rows: Vec<_> = doc
        .items
        .iter()
        .filter_map(|i| if let SceneItem::GanttRow(r) = i { Some(r) } else { None })
        .collect();
    let today = doc.items.iter().find_map(|i| if let SceneItem::Today { x } = i { Some(*x) } else { None });
    let span = rows
        .iter()
        .flat_map(|r| [r.planned.end, r.actual.map(|a| a.end).unwrap_or(0.0)])
        .chain(today)
        .fold(1.0, f64::max);
    let sx = PLOT / span;
    let height = ROW_HEIGHT * (rows.len() as f64 + 1.0);
    header(out, height, &doc.meta.node);
    for (i, r) in rows.iter().enumerate() {
        let y = ROW_HEIGHT * i as f64 + 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            8.0 + 12.0 * r.depth as f64,
            y + 13.0,
            escape(&r.name)
        );
        let x0 = LABEL_WIDTH + r.planned.start * sx;
        let w = (r.planned.end - r.planned.start) * sx;
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.2}" y="{y:.2}" width="{w:.2}" height="10" fill="#dddddd" stroke="#888888"/>"##
        );
        let pw = (r.progress_end - r.planned.start) * sx;
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.2}" y="{y:.2}" width="{pw:.2}" height="10" fill="{}"/>"#,
            r.color.hex()
        );
        if let Some(a) = r.actual {
            let _ = writeln!(
                out,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="4" fill="#333333"/>"##,
                LABEL_WIDTH + a.start * sx,
                y + 12.0,
                (a.end - a.start) * sx
            );
        }
    }
    if let Some(x) = today {
        let tx = LABEL_WIDTH + x * sx;
        let _ = writeln!(
            out,
            r##"<line x1="{tx:.2}" y1="0" x2="{tx:.2}" y2="{height:.2}" stroke="#d62728" stroke-dasharray="4 2"/>"##
        );
    }
}

fn bubble(doc: &SceneDocument, out: &mut String) {
    let size = 600.0;
    header(out, size + 40.0, &doc.meta.node);
    let (ox, oy) = (100.0, 20.0);
    let _ = writeln!(
        out,
        r##"<rect x="{ox}" y="{oy}" width="{size}" height="{size}" fill="none" stroke="#888888"/>"##
    );
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{oy}" x2="{}" y2="{}" stroke="#bbbbbb"/><line x1="{ox}" y1="{}" x2="{}" y2="{}" stroke="#bbbbbb"/>"##,
        ox + size / 2.0,
        ox + size / 2.0,
        oy + size,
        oy + size / 2.0,
        ox + size,
        oy + size / 2.0
    );
    for item in &doc.items {
        if let SceneItem::Bubble(b) = item {
            let cx = ox + b.x * size;
            let cy = oy + (1.0 - b.y) * size;
            let _ = writeln!(
                out,
                r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="{}" fill-opacity="0.7" stroke="#444444"><title>{}</title></circle>"##,
                b.r * size,
                b.color.hex(),
                escape(&b.name)
            );
        }
    }
}

fn timeseries(doc: &SceneDocument, out: &mut String) {
    let lines: Vec<_> = doc
        .items
        .iter()
        .filter_map(|i| if let SceneItem::Line(l) = i { Some(l) } else { None })
        .collect();
    let pts = lines.iter().flat_map(|l| l.points.iter());
    let (mut x_max, mut y_min, mut y_max) = (1.0_f64, f64::MAX, f64::MIN);
    for p in pts {
        x_max = x_max.max(p[0]);
        y_min = y_min.min(p[1]);
        y_max = y_max.max(p[1]);
    }
    if y_min > y_max {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-12 {
        y_max = y_min + 1.0;
    }
    let h = 300.0;
    header(out, h + 40.0 + 16.0 * lines.len() as f64, &doc.meta.node);
    let (ox, oy) = (60.0, 20.0);
    for (i, l) in lines.iter().enumerate() {
        let path: Vec<String> = l
            .points
            .iter()
            .map(|p| {
                format!(
                    "{:.2},{:.2}",
                    ox + p[0] / x_max * (WIDTH - 100.0),
                    oy + (1.0 - (p[1] - y_min) / (y_max - y_min)) * h
                )
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            l.color.hex(),
            path.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{ox}" y="{}" fill="{}">{} ({})</text>"#,
            oy + h + 30.0 + 16.0 * i as f64,
            l.color.hex(),
            escape(&l.label),
            l.status
        );
    }
}

fn table(doc: &SceneDocument, out: &mut String) {
    let rows: Vec<_> = doc
        .items
        .iter()
        .filter_map(|i| if let SceneItem::Row(r) = i { Some(r) } else { None })
        .collect();
    header(out, ROW_HEIGHT * (rows.len() as f64 + 1.0), &doc.meta.node);
    for (i, r) in rows.iter().enumerate() {
        let y = ROW_HEIGHT * i as f64 + 16.0;
        let _ = writeln!(
            out,
            r#"<circle cx="14" cy="{:.2}" r="6" fill="{}"/><text x="28" y="{y:.2}">{}</text><text x="{LABEL_WIDTH}" y="{y:.2}">{}</text><text x="{}" y="{y:.2}">{}</text>"#,
            y - 4.0,
            r.color.hex(),
            escape(&r.name),
            r.latest.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            LABEL_WIDTH + 100.0,
            escape(&r.explanation)
        );
    }
}
