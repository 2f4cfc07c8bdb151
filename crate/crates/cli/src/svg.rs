//! Deterministic SVG scatter plots of 2-D features and anchors.
//!
//! All markers live inside one group carrying the data-to-screen transform,
//! so marker coordinates in the file are exact data values: feature points as
//! circle centers, anchors as `translate(x y)` star groups whose x and y are
//! the full-precision display-scaled anchor coordinates.

use std::fmt::Write as _;

/// One fill per class; classes beyond ten cycle.
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const CANVAS: f64 = 640.0;
const MARGIN: f64 = 40.0;

pub struct Scatter<'a> {
    /// (label, x, y) per sample.
    pub points: &'a [(usize, f64, f64)],
    /// Anchor rows in class order, already multiplied by the display scale.
    pub anchors: &'a [(f64, f64)],
}

/// Five-pointed star outline with the given outer radius, centered at the
/// origin; the enclosing group supplies the position.
fn star_path(radius: f64) -> String {
    let inner = radius * 0.4;
    let mut d = String::new();
    for k in 0..10 {
        // Point 0 at twelve o'clock; y grows downward after the flip the
        // data transform applies, so start at -radius in data units.
        let angle = std::f64::consts::PI * (0.5 + k as f64 / 5.0);
        let r = if k % 2 == 0 { radius } else { inner };
        let _ = write!(
            d,
            "{}{} {}",
            if k == 0 { "M" } else { " L" },
            r * angle.cos(),
            r * angle.sin()
        );
    }
    d.push_str(" Z");
    d
}

/// Renders the scatter. Deterministic: identical inputs produce identical
/// bytes.
pub fn render(scatter: &Scatter) -> String {
    let mut max_abs = 1e-9f64;
    for &(_, x, y) in scatter.points {
        max_abs = max_abs.max(x.abs()).max(y.abs());
    }
    for &(x, y) in scatter.anchors {
        max_abs = max_abs.max(x.abs()).max(y.abs());
    }
    let scale = (CANVAS / 2.0 - MARGIN) / max_abs;
    let center = CANVAS / 2.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CANVAS}\" height=\"{CANVAS}\" \
         viewBox=\"0 0 {CANVAS} {CANVAS}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{CANVAS}\" height=\"{CANVAS}\" fill=\"white\"/>");
    // Flip y so the data's y axis points up on screen.
    let _ = writeln!(
        svg,
        "<g transform=\"translate({center} {center}) scale({scale} -{scale})\">"
    );

    let point_radius = 2.0 / scale;
    for &(label, x, y) in scatter.points {
        let fill = PALETTE[label % PALETTE.len()];
        let _ = writeln!(
            svg,
            "<circle cx=\"{x}\" cy=\"{y}\" r=\"{point_radius}\" fill=\"{fill}\" \
             fill-opacity=\"0.6\"/>"
        );
    }

    let star = star_path(8.0 / scale);
    let stroke_width = 1.0 / scale;
    for (class, &(x, y)) in scatter.anchors.iter().enumerate() {
        let fill = PALETTE[class % PALETTE.len()];
        let _ = writeln!(
            svg,
            "<g transform=\"translate({x} {y})\"><path d=\"{star}\" fill=\"{fill}\" \
             stroke=\"black\" stroke-width=\"{stroke_width}\"/></g>"
        );
    }

    svg.push_str("</g>\n</svg>\n");
    svg
}
