//! Dependency-free SVG emission for the experiment artifacts: partition
//! pies, direction quivers, weight histories, and trajectories. Output is
//! deterministic byte-for-byte for a given input.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::emulation::{CellRegion, PartitionCell};

const SIZE: f64 = 800.0;
const CENTER: f64 = 400.0;
const RADIUS: f64 = 320.0;

const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac", "#86bcb6", "#d37295",
];

fn header(out: &mut String) {
    out.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"0 0 800 800\">\n",
    );
    out.push_str("<rect width=\"800\" height=\"800\" fill=\"#ffffff\"/>\n");
}

fn footer(out: &mut String) {
    out.push_str("</svg>\n");
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// screen coordinates of a point on/inside the unit circle (y flipped)
fn screen(x: f64, y: f64) -> (f64, f64) {
    (CENTER + RADIUS * x, CENTER - RADIUS * y)
}

fn arrow(out: &mut String, from: (f64, f64), to: (f64, f64), color: &str, width: f64) {
    let (x1, y1) = from;
    let (x2, y2) = to;
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"{}\"/>",
        fmt(x1),
        fmt(y1),
        fmt(x2),
        fmt(y2),
        fmt(width)
    );
    // arrowhead
    let dx = x2 - x1;
    let dy = y2 - y1;
    let len = (dx * dx + dy * dy).sqrt();
    if len > 1e-9 {
        let (ux, uy) = (dx / len, dy / len);
        let (px, py) = (-uy, ux);
        let tip = 6.0;
        let _ = writeln!(
            out,
            "<path d=\"M {} {} L {} {} L {} {} Z\" fill=\"{color}\"/>",
            fmt(x2),
            fmt(y2),
            fmt(x2 - tip * ux + 0.5 * tip * px),
            fmt(y2 - tip * uy + 0.5 * tip * py),
            fmt(x2 - tip * ux - 0.5 * tip * px),
            fmt(y2 - tip * uy - 0.5 * tip * py),
        );
    }
}

/// Short gray segments of the continuous field `x ↦ Hx` on concentric
/// rings, the backdrop of the partition plot.
fn field_backdrop(out: &mut String, target: &DMatrix<f64>) {
    for ring in 1..=4 {
        let r = ring as f64 / 4.0;
        for k in 0..36 {
            let theta = k as f64 * std::f64::consts::TAU / 36.0;
            let x = r * theta.cos();
            let y = r * theta.sin();
            let v = target * DVector::from_vec(vec![x, y]);
            let norm = v.norm().max(1e-9);
            let scale = 0.06 / norm;
            let from = screen(x, y);
            let to = screen(x + v[0] * scale, y + v[1] * scale);
            let _ = writeln!(
                out,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#bbbbbb\" stroke-width=\"1\"/>",
                fmt(from.0),
                fmt(from.1),
                fmt(to.0),
                fmt(to.1)
            );
        }
    }
}

/// Partition of the unit circle as colored pie sectors with the selected
/// quantized direction drawn from each sector's midpoint.
pub fn render_partition(cells: &[PartitionCell], target: Option<&DMatrix<f64>>) -> String {
    let mut out = String::new();
    header(&mut out);
    if let Some(t) = target {
        field_backdrop(&mut out, t);
    }
    for (k, cell) in cells.iter().enumerate() {
        let CellRegion::Arc { lo, hi } = &cell.region else {
            continue;
        };
        let color = PALETTE[k % PALETTE.len()];
        let (x1, y1) = screen(lo.cos(), lo.sin());
        let (x2, y2) = screen(hi.cos(), hi.sin());
        let large = if hi - lo > std::f64::consts::PI { 1 } else { 0 };
        let _ = writeln!(
            out,
            "<path d=\"M {} {} L {} {} A {} {} 0 {large} 0 {} {} Z\" fill=\"{color}\" fill-opacity=\"0.35\" stroke=\"{color}\" stroke-width=\"1\"/>",
            fmt(CENTER),
            fmt(CENTER),
            fmt(x1),
            fmt(y1),
            fmt(RADIUS),
            fmt(RADIUS),
            fmt(x2),
            fmt(y2),
        );
        // quantized direction at the sector midpoint
        let mid = 0.5 * (lo + hi);
        let base = (0.65 * mid.cos(), 0.65 * mid.sin());
        let norm = cell.direction.norm().max(1e-9);
        let scale = 0.14 * cell.direction.norm().min(2.5) / (2.5 * norm);
        arrow(
            &mut out,
            screen(base.0, base.1),
            screen(base.0 + cell.direction[0] * scale, base.1 + cell.direction[1] * scale),
            "#222222",
            2.0,
        );
    }
    let _ = writeln!(
        out,
        "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1.5\"/>",
        fmt(CENTER),
        fmt(CENTER),
        fmt(RADIUS)
    );
    footer(&mut out);
    out
}

/// Quiver of alphabet directions from the origin, weighted by multiplicity.
pub fn render_quiver(directions: &[(DVector<f64>, usize)]) -> String {
    let mut out = String::new();
    header(&mut out);
    let max_norm = directions
        .iter()
        .map(|(d, _)| d.norm())
        .fold(1e-9, f64::max);
    for (k, (d, alpha)) in directions.iter().enumerate() {
        if d.norm() < 1e-12 {
            continue;
        }
        let color = PALETTE[k % PALETTE.len()];
        let scale = 0.9 / max_norm;
        let to = screen(d[0] * scale, d[1] * scale);
        arrow(&mut out, (CENTER, CENTER), to, color, 2.0);
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"16\" fill=\"#333333\">{alpha}</text>",
            fmt(to.0 + 6.0),
            fmt(to.1 - 6.0)
        );
    }
    footer(&mut out);
    out
}

/// Line chart of one curve per series (weight histories, error norms, ...).
pub fn render_curves(series: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    header(&mut out);
    let margin = 60.0;
    let span = SIZE - 2.0 * margin;
    let len = series.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, s) in series {
        for &v in s {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || len < 2 {
        // empty axes
        let _ = writeln!(
            out,
            "<line x1=\"60\" y1=\"740\" x2=\"740\" y2=\"740\" stroke=\"#333333\"/>\n<line x1=\"60\" y1=\"60\" x2=\"60\" y2=\"740\" stroke=\"#333333\"/>"
        );
        footer(&mut out);
        return out;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let _ = writeln!(
        out,
        "<line x1=\"60\" y1=\"740\" x2=\"740\" y2=\"740\" stroke=\"#333333\"/>\n<line x1=\"60\" y1=\"60\" x2=\"60\" y2=\"740\" stroke=\"#333333\"/>"
    );
    for (k, (name, s)) in series.iter().enumerate() {
        if s.len() < 2 {
            continue;
        }
        let color = PALETTE[k % PALETTE.len()];
        let mut path = String::new();
        for (i, &v) in s.iter().enumerate() {
            let x = margin + span * i as f64 / (len - 1) as f64;
            let y = SIZE - margin - span * (v - lo) / (hi - lo);
            let _ = write!(path, "{}{} {}", if i == 0 { "M " } else { " L " }, fmt(x), fmt(y));
        }
        let _ = writeln!(
            out,
            "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"14\" fill=\"{color}\">{name}</text>",
            fmt(margin + 8.0),
            fmt(margin + 18.0 * (k + 1) as f64)
        );
    }
    footer(&mut out);
    out
}
