//! Reliability-diagram export: CSV rows and a deterministic SVG chart.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::bins::ReliabilityBins;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagramRow {
    pub bin_midpoint: f64,
    pub accuracy: f64,
    pub confidence: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityDiagram {
    pub rows: Vec<DiagramRow>,
    pub svg: String,
}

impl ReliabilityDiagram {
    pub fn csv(&self) -> String {
        let mut out = String::from("bin_midpoint,accuracy,confidence,count\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.6},{:.6},{:.6},{}",
                r.bin_midpoint, r.accuracy, r.confidence, r.count
            );
        }
        out
    }
}

const SIZE: f64 = 400.0;
const MARGIN: f64 = 40.0;

fn px(v: f64) -> f64 {
    MARGIN + v * (SIZE - 2.0 * MARGIN)
}

fn py(v: f64) -> f64 {
    SIZE - MARGIN - v * (SIZE - 2.0 * MARGIN)
}

pub fn reliability_export(bins: &ReliabilityBins, title: &str) -> Result<ReliabilityDiagram> {
    for (g, b) in bins.bins.iter().enumerate() {
        let valid = (0.0..=1.0).contains(&b.accuracy)
            && (0.0..=1.0).contains(&b.confidence)
            && b.lower <= b.upper;
        if !valid {
            return invalid(format!("bin {g} has out-of-range statistics"));
        }
    }
    let rows: Vec<DiagramRow> = bins
        .bins
        .iter()
        .map(|b| DiagramRow {
            bin_midpoint: b.midpoint(),
            accuracy: b.accuracy,
            confidence: b.confidence,
            count: b.count,
        })
        .collect();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE:.0}" height="{SIZE:.0}" viewBox="0 0 {SIZE:.0} {SIZE:.0}">"#
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(title));
    let _ = writeln!(
        svg,
        r##"<rect x="0" y="0" width="{SIZE:.0}" height="{SIZE:.0}" fill="#ffffff"/>"##
    );
    for b in &bins.bins {
        let (x0, x1) = (px(b.lower), px(b.upper));
        let width = (x1 - x0).max(0.0);
        let top = py(b.accuracy);
        let _ = writeln!(svg, "<g>");
        let _ = writeln!(
            svg,
            "<title>[{:.4}, {:.4}] n={} acc={:.4} conf={:.4} gap={:.4}</title>",
            b.lower,
            b.upper,
            b.count,
            b.accuracy,
            b.confidence,
            b.gap()
        );
        let _ = writeln!(
            svg,
            r##"<rect class="acc" x="{x0:.3}" y="{top:.3}" width="{width:.3}" height="{:.3}" fill="#3b6fb6" stroke="#1f3d66" stroke-width="0.5"/>"##,
            py(0.0) - top
        );
        if b.count > 0 {
            let conf = py(b.confidence);
            let (y, h) = if conf < top {
                (conf, top - conf)
            } else {
                (top, conf - top)
            };
            let _ = writeln!(
                svg,
                r##"<rect class="gap" x="{x0:.3}" y="{y:.3}" width="{width:.3}" height="{h:.3}" fill="#d9534f" fill-opacity="0.35" stroke="#d9534f" stroke-width="0.5"/>"##
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(
        svg,
        r##"<line class="diagonal" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#555555" stroke-dasharray="4 3"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    let _ = writeln!(
        svg,
        r##"<polyline fill="none" stroke="#000000" points="{:.3},{:.3} {:.3},{:.3} {:.3},{:.3}"/>"##,
        px(0.0),
        py(1.0),
        px(0.0),
        py(0.0),
        px(1.0),
        py(0.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.3}" y="{:.3}" font-size="12" text-anchor="middle">confidence</text>"#,
        px(0.5),
        SIZE - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="12" y="{:.3}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {:.3})">accuracy</text>"#,
        py(0.5),
        py(0.5)
    );
    svg.push_str("</svg>\n");
    Ok(ReliabilityDiagram { rows, svg })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
