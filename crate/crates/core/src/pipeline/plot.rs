//! Static SVG renderings of the layer sweep and of the concept scores.

use std::fmt::Write;

use crate::pipeline::report::{RSquaredEntry, ScoreEntry};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
const FONT: &str = "font-family=\"sans-serif\" font-size=\"12\"";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Vertical axis mapping `[lo, hi]` onto pixel rows `[bottom, top]`.
struct Axis {
    lo: f64,
    hi: f64,
    top: f64,
    bottom: f64,
}

impl Axis {
    fn y(&self, v: f64) -> f64 {
        let v = v.clamp(self.lo, self.hi);
        self.bottom - (v - self.lo) / (self.hi - self.lo) * (self.bottom - self.top)
    }

    fn draw(&self, svg: &mut String, left: f64, right: f64, ticks: &[f64]) {
        for &t in ticks {
            let y = self.y(t);
            let _ = writeln!(
                svg,
                "<line x1=\"{left:.1}\" y1=\"{y:.1}\" x2=\"{right:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>"
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" {FONT}>{t:.2}</text>",
                left - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            svg,
            "<line x1=\"{left:.1}\" y1=\"{:.1}\" x2=\"{left:.1}\" y2=\"{:.1}\" stroke=\"#333333\"/>",
            self.top, self.bottom
        );
    }
}

fn open(width: f64, height: f64) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    svg
}

fn title(svg: &mut String, x: f64, y: f64, text: &str) {
    let _ = writeln!(
        svg,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" font-weight=\"bold\">{}</text>",
        escape(text)
    );
}

/// R² against layer depth, one line per concept.
pub fn rsquared_svg(entries: &[RSquaredEntry]) -> String {
    let layers = unique(entries.iter().map(|e| e.layer_id.as_str()));
    let concepts = unique(entries.iter().map(|e| e.concept_name.as_str()));
    let (left, right, top, bottom) = (60.0, 60.0 + 120.0 * layers.len().max(2) as f64, 40.0, 300.0);
    let legend_x = right + 20.0;
    let width = legend_x + 160.0;
    let lo = entries
        .iter()
        .map(|e| e.r_squared)
        .fold(0.0f64, f64::min)
        .max(-1.0);
    let axis = Axis {
        lo,
        hi: 1.0,
        top,
        bottom,
    };

    let mut svg = open(width, bottom + 50.0);
    title(&mut svg, (left + right) / 2.0, 24.0, "R\u{b2} by layer");
    let ticks: Vec<f64> = if lo < 0.0 {
        vec![lo, 0.0, 0.5, 1.0]
    } else {
        vec![0.0, 0.25, 0.5, 0.75, 1.0]
    };
    axis.draw(&mut svg, left, right, &ticks);
    let step = (right - left) / layers.len() as f64;
    let x_of = |i: usize| left + step * (i as f64 + 0.5);
    for (i, l) in layers.iter().enumerate() {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>{}</text>",
            x_of(i),
            bottom + 20.0,
            escape(l)
        );
    }
    for (ci, c) in concepts.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let points: Vec<(f64, f64)> = layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                entries
                    .iter()
                    .find(|e| e.layer_id == *l && e.concept_name == *c)
                    .map(|e| (x_of(i), axis.y(e.r_squared)))
            })
            .collect();
        let path: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{x:.1},{y:.1}"))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            path.join(" ")
        );
        for (x, y) in &points {
            let _ = writeln!(
                svg,
                "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3.5\" fill=\"{color}\"/>"
            );
        }
        let ly = top + 18.0 * ci as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{legend_x:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{color}\"/>",
            ly
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" {FONT}>{}</text>",
            legend_x + 18.0,
            ly + 10.0,
            escape(c)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bar_panel(
    svg: &mut String,
    x0: f64,
    top: f64,
    heading: &str,
    axis_range: (f64, f64),
    baseline: f64,
    bars: &[(&str, f64)],
) {
    let (bar_w, gap) = (36.0, 24.0);
    let left = x0 + 50.0;
    let right = left + (bar_w + gap) * bars.len() as f64 + gap;
    let axis = Axis {
        lo: axis_range.0,
        hi: axis_range.1,
        top: top + 30.0,
        bottom: top + 210.0,
    };
    title(svg, (left + right) / 2.0, top + 16.0, heading);
    let mid = (axis_range.0 + axis_range.1) / 2.0;
    axis.draw(svg, left, right, &[axis_range.0, mid, axis_range.1]);
    let by = axis.y(baseline);
    for (i, (name, v)) in bars.iter().enumerate() {
        let x = left + gap + (bar_w + gap) * i as f64;
        let vy = axis.y(*v);
        let (y, h) = if vy < by {
            (vy, by - vy)
        } else {
            (by, vy - by)
        };
        let color = if *v >= baseline {
            PALETTE[0]
        } else {
            PALETTE[1]
        };
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" fill=\"{color}\"/>"
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>{v:.2}</text>",
            x + bar_w / 2.0,
            if *v >= baseline {
                y - 4.0
            } else {
                y + h + 14.0
            }
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>{}</text>",
            x + bar_w / 2.0,
            axis.bottom + 28.0,
            escape(name)
        );
    }
    let _ = writeln!(
        svg,
        "<line x1=\"{left:.1}\" y1=\"{by:.1}\" x2=\"{right:.1}\" y2=\"{by:.1}\" stroke=\"#333333\" stroke-dasharray=\"4 3\"/>"
    );
}

/// TCAV and normalized Br bars per concept, one row of panels per layer.
pub fn scores_svg(entries: &[ScoreEntry]) -> String {
    let layers = unique(entries.iter().map(|e| e.layer_id.as_str()));
    let n_max = layers
        .iter()
        .map(|l| entries.iter().filter(|e| e.layer_id == *l).count())
        .max()
        .unwrap_or(1);
    let panel_w = 50.0 + 60.0 * n_max as f64 + 24.0 + 40.0;
    let row_h = 270.0;
    let mut svg = open(2.0 * panel_w + 20.0, row_h * layers.len() as f64 + 10.0);
    for (li, layer) in layers.iter().enumerate() {
        let rows: Vec<&ScoreEntry> = entries.iter().filter(|e| e.layer_id == *layer).collect();
        let top = row_h * li as f64;
        let tcav: Vec<(&str, f64)> = rows
            .iter()
            .map(|e| (e.concept_name.as_str(), e.tcav))
            .collect();
        let br: Vec<(&str, f64)> = rows
            .iter()
            .map(|e| (e.concept_name.as_str(), e.br_normalized))
            .collect();
        bar_panel(
            &mut svg,
            10.0,
            top,
            &format!("TCAV ({layer})"),
            (0.0, 1.0),
            0.5,
            &tcav,
        );
        bar_panel(
            &mut svg,
            10.0 + panel_w,
            top,
            &format!("Br ({layer})"),
            (-1.0, 1.0),
            0.0,
            &br,
        );
    }
    svg.push_str("</svg>\n");
    svg
}
