//! Deterministic SVG figures and plain-text tables for evaluation reports.

use std::fmt::Write as _;

use marstag::calibration::ReliabilityBins;

use crate::artifacts::{ConfusionTable, PrRow, ShiftTableRow};

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";
const ISO_F1: [f64; 2] = [0.2, 0.6];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    fn push(&mut self, line: std::fmt::Arguments<'_>) {
        self.body.write_fmt(line).expect("string write");
        self.body.push('\n');
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, style: &str) {
        self.push(format_args!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" {style}/>"
        ));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        self.push(format_args!(
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" {style}/>"
        ));
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        self.push(format_args!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" {FONT}>{}</text>",
            esc(s)
        ));
    }

    fn text_rotated(&mut self, x: f64, y: f64, deg: f64, s: &str) {
        self.push(format_args!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" transform=\"rotate({deg:.0} {x:.2} {y:.2})\" {FONT}>{}</text>",
            esc(s)
        ));
    }

    fn polyline(&mut self, pts: &[(f64, f64)], style: &str) {
        let mut p = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            if i > 0 {
                p.push(' ');
            }
            write!(p, "{x:.2},{y:.2}").expect("string write");
        }
        self.push(format_args!("<polyline points=\"{p}\" fill=\"none\" {style}/>"));
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Unit-square axes with ticks every 0.2; returns a mapper from data to
/// pixel coordinates.
fn unit_axes(
    svg: &mut Svg,
    x0: f64,
    y0: f64,
    side: f64,
    xlabel: &str,
    ylabel: &str,
) -> impl Fn(f64, f64) -> (f64, f64) {
    svg.rect(x0, y0, side, side, "fill=\"none\" stroke=\"black\"");
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let px = x0 + v * side;
        let py = y0 + side - v * side;
        svg.line(px, y0 + side, px, y0 + side + 4.0, "stroke=\"black\"");
        svg.text(px, y0 + side + 16.0, "middle", &format!("{v:.1}"));
        svg.line(x0 - 4.0, py, x0, py, "stroke=\"black\"");
        svg.text(x0 - 7.0, py + 4.0, "end", &format!("{v:.1}"));
    }
    svg.text(x0 + side / 2.0, y0 + side + 34.0, "middle", xlabel);
    svg.text_rotated(x0 - 36.0, y0 + side / 2.0, -90.0, ylabel);
    move |x, y| (x0 + x * side, y0 + side - y * side)
}

/// Accuracy bars per confidence bin with the identity diagonal.
pub fn reliability_svg(bins: &ReliabilityBins, title: &str) -> String {
    let (x0, y0, side) = (60.0, 40.0, 360.0);
    let mut svg = Svg::new(460.0, 460.0);
    svg.text(x0 + side / 2.0, 24.0, "middle", title);
    let map = unit_axes(&mut svg, x0, y0, side, "confidence", "accuracy");
    let m = bins.num_bins();
    for k in 0..m {
        if bins.counts[k] == 0 {
            continue;
        }
        let (lo, hi) = (k as f64 / m as f64, (k + 1) as f64 / m as f64);
        let (ax, ay) = map(lo, bins.accuracy[k]);
        let (bx, by) = map(hi, 0.0);
        svg.rect(ax, ay, bx - ax, by - ay, "fill=\"#4477aa\" stroke=\"#223355\"");
        let (_, cy) = map(hi, bins.confidence[k]);
        svg.line(ax, cy, bx, cy, "stroke=\"#cc3311\" stroke-width=\"2\"");
    }
    let (a, b) = (map(0.0, 0.0), map(1.0, 1.0));
    svg.line(a.0, a.1, b.0, b.1, "stroke=\"gray\" stroke-dasharray=\"4 3\"");
    svg.finish()
}

/// Points on the F1 = `f` curve inside the unit square.
pub fn iso_f1_curve(f: f64, samples: usize) -> Vec<(f64, f64)> {
    let r_min = f / (2.0 - f);
    (0..=samples)
        .map(|i| {
            let r = r_min + (1.0 - r_min) * i as f64 / samples as f64;
            (r, (f * r / (2.0 * r - f)).min(1.0))
        })
        .collect()
}

/// Recall on x, precision on y, with F1 iso-curves.
pub fn pr_scatter_svg(rows: &[PrRow]) -> String {
    let (x0, y0, side) = (60.0, 40.0, 360.0);
    let mut svg = Svg::new(600.0, 460.0);
    svg.text(x0 + side / 2.0, 24.0, "middle", "Per-class precision and recall");
    let map = unit_axes(&mut svg, x0, y0, side, "recall", "precision");
    for f in ISO_F1 {
        let pts: Vec<(f64, f64)> = iso_f1_curve(f, 60).into_iter().map(|(r, p)| map(r, p)).collect();
        svg.polyline(&pts, "stroke=\"gray\" stroke-dasharray=\"5 3\"");
        let (lx, ly) = map(1.0, f / (2.0 - f));
        svg.text(lx + 4.0, ly, "start", &format!("F1={f:.1}"));
    }
    for r in rows {
        let (px, py) = map(r.recall, r.precision);
        let color = if r.f1 > 0.6 {
            "#228833"
        } else if r.f1 >= 0.2 {
            "#ccbb44"
        } else {
            "#ee6677"
        };
        svg.push(format_args!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"4\" fill=\"{color}\" stroke=\"black\"/>"
        ));
        svg.text(px + 6.0, py - 4.0, "start", &r.class);
    }
    svg.finish()
}

/// Row-normalized heat table; the last column holds abstentions.
pub fn confusion_svg(t: &ConfusionTable) -> String {
    let k = t.classes.len();
    let cell = 34.0;
    let (x0, y0) = (130.0, 110.0);
    let mut svg = Svg::new(x0 + cell * (k + 1) as f64 + 20.0, y0 + cell * k as f64 + 40.0);
    svg.text(x0, 20.0, "start", "Confusion matrix (rows: actual, columns: predicted)");
    let mut cols: Vec<&str> = t.classes.iter().map(String::as_str).collect();
    cols.push("abstain");
    for (j, name) in cols.iter().enumerate() {
        svg.text_rotated(x0 + cell * j as f64 + cell / 2.0, y0 - 6.0, -45.0, name);
    }
    for (i, row) in t.counts.iter().enumerate() {
        let y = y0 + cell * i as f64;
        svg.text(x0 - 6.0, y + cell / 2.0 + 4.0, "end", &t.classes[i]);
        let total: usize = row.iter().sum();
        for (j, &c) in row.iter().enumerate() {
            let share = if total > 0 { c as f64 / total as f64 } else { 0.0 };
            let level = (255.0 - 200.0 * share).round() as u8;
            let fill = format!("fill=\"rgb({level},{level},255)\" stroke=\"#999999\"");
            svg.rect(x0 + cell * j as f64, y, cell, cell, &fill);
            svg.text(
                x0 + cell * j as f64 + cell / 2.0,
                y + cell / 2.0 + 4.0,
                "middle",
                &c.to_string(),
            );
        }
    }
    svg.finish()
}

/// Labeled versus archive class shares as paired horizontal bars.
pub fn shift_svg(rows: &[ShiftTableRow]) -> String {
    let bar = 10.0;
    let (x0, y0, width) = (130.0, 50.0, 360.0);
    let max = rows
        .iter()
        .flat_map(|r| [r.labeled_percent, r.archive_percent])
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let mut svg = Svg::new(x0 + width + 90.0, y0 + rows.len() as f64 * (2.0 * bar + 8.0) + 30.0);
    svg.text(x0, 20.0, "start", "Class share: labeled set (dark) vs archive (light)");
    for (i, r) in rows.iter().enumerate() {
        let y = y0 + i as f64 * (2.0 * bar + 8.0);
        svg.text(x0 - 6.0, y + bar + 4.0, "end", &r.class);
        svg.rect(x0, y, width * r.labeled_percent / max, bar, "fill=\"#004488\"");
        svg.rect(x0, y + bar, width * r.archive_percent / max, bar, "fill=\"#88ccee\"");
        svg.text(x0 + width + 8.0, y + bar + 4.0, "start", &format!("x{}", r.ratio));
    }
    svg.line(
        x0,
        y0 - 4.0,
        x0,
        y0 + rows.len() as f64 * (2.0 * bar + 8.0),
        "stroke=\"black\"",
    );
    svg.finish()
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let fmt_row = |out: &mut String, cells: &[String]| {
        let line: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    };
    fmt_row(&mut out, &header.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    fmt_row(&mut out, &widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for r in rows {
        fmt_row(&mut out, r);
    }
    out
}

pub fn reliability_table(bins: &ReliabilityBins) -> String {
    let m = bins.num_bins();
    let rows: Vec<Vec<String>> = (0..m)
        .map(|k| {
            vec![
                format!("({:.2}, {:.2}]", k as f64 / m as f64, (k + 1) as f64 / m as f64),
                bins.counts[k].to_string(),
                format!("{:.4}", bins.confidence[k]),
                format!("{:.4}", bins.accuracy[k]),
            ]
        })
        .collect();
    let mut out = table(&["bin", "count", "confidence", "accuracy"], &rows);
    writeln!(out, "ECE {:.4}  MCE {:.4}", bins.ece(), bins.mce()).expect("string write");
    out
}

pub fn per_class_table(rows: &[PrRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.class.clone(),
                format!("{:.3}", r.precision),
                format!("{:.3}", r.recall),
                format!("{:.3}", r.f1),
                r.support.to_string(),
            ]
        })
        .collect();
    table(&["class", "precision", "recall", "f1", "support"], &body)
}

pub fn confusion_table(t: &ConfusionTable) -> String {
    let mut header = vec!["actual"];
    header.extend(t.classes.iter().map(String::as_str));
    header.push("abstain");
    let body: Vec<Vec<String>> = t
        .classes
        .iter()
        .zip(&t.counts)
        .map(|(n, r)| {
            std::iter::once(n.clone())
                .chain(r.iter().map(usize::to_string))
                .collect()
        })
        .collect();
    table(&header, &body)
}

pub fn shift_table(rows: &[ShiftTableRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.class.clone(),
                format!("{:.2}", r.labeled_percent),
                format!("{:.2}", r.archive_percent),
                r.ratio.clone(),
            ]
        })
        .collect();
    table(&["class", "labeled %", "archive %", "ratio"], &body)
}
