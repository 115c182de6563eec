//! Deterministic SVG output: chart scatter plots colored by ground truth and
//! sweep line plots.

use std::fmt::Write as _;
use std::path::Path;

use super::result::ChartResult;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 16.0;

/// Maps normalized ground truth `(u, v) ∈ [0, 1]²` to an RGB color: `u` sets
/// the hue from red (0°) to blue (240°), `v` the lightness from 0.25 to 0.75
/// at full saturation. The map is injective, so distinct positions get
/// distinct colors.
pub fn position_color(u: f64, v: f64) -> [u8; 3] {
    let hue = 240.0 * u.clamp(0.0, 1.0);
    let light = 0.25 + 0.5 * v.clamp(0.0, 1.0);
    let chroma = 1.0 - (2.0 * light - 1.0).abs();
    let h = hue / 60.0;
    let x = chroma * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        _ => (x, 0.0, chroma),
    };
    let m = light - chroma / 2.0;
    let byte = |c: f64| ((c + m) * 255.0).round() as u8;
    [byte(r), byte(g), byte(b)]
}

fn bounds(points: impl Iterator<Item = [f64; 2]>) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn normalize(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.5
    }
}

/// Colors for every row from its first two ground-truth coordinates.
pub fn row_colors(result: &ChartResult) -> Vec<[u8; 3]> {
    let (lo, hi) = bounds(result.rows.iter().map(|r| [r.x[0], r.x[1]]));
    result
        .rows
        .iter()
        .map(|r| position_color(normalize(r.x[0], lo[0], hi[0]), normalize(r.x[1], lo[1], hi[1])))
        .collect()
}

/// Scatter plot with equal axis scaling; `y` points up.
fn scatter_svg(points: &[[f64; 2]], colors: &[[u8; 3]]) -> String {
    let (lo, hi) = bounds(points.iter().copied());
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let scale = if span > 0.0 { (SIZE - 2.0 * MARGIN) / span } else { 0.0 };
    let offset = [
        (SIZE - scale * (hi[0] - lo[0])) / 2.0,
        (SIZE - scale * (hi[1] - lo[1])) / 2.0,
    ];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>\n"
    );
    for (p, c) in points.iter().zip(colors) {
        let x = offset[0] + scale * (p[0] - lo[0]);
        let y = SIZE - (offset[1] + scale * (p[1] - lo[1]));
        let _ = writeln!(
            svg,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2\" fill=\"#{:02x}{:02x}{:02x}\"/>",
            c[0], c[1], c[2]
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// SVG scatter of the chart `(z1, z2)` colored by ground-truth position.
pub fn chart_svg(result: &ChartResult) -> String {
    let points: Vec<[f64; 2]> = result.rows.iter().map(|r| r.z).collect();
    scatter_svg(&points, &row_colors(result))
}

/// SVG scatter of the ground-truth `(x1, x2)` with the same coloring as
/// [`chart_svg`].
pub fn truth_svg(result: &ChartResult) -> String {
    let points: Vec<[f64; 2]> = result.rows.iter().map(|r| [r.x[0], r.x[1]]).collect();
    scatter_svg(&points, &row_colors(result))
}

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("nothing to plot")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes [`chart_svg`] to `path`.
pub fn emit_plot(result: &ChartResult, path: impl AsRef<Path>) -> Result<(), PlotError> {
    if result.is_empty() {
        return Err(PlotError::Empty);
    }
    std::fs::write(path, chart_svg(result))?;
    Ok(())
}

/// Writes [`truth_svg`] to `path`.
pub fn emit_truth_plot(result: &ChartResult, path: impl AsRef<Path>) -> Result<(), PlotError> {
    if result.is_empty() {
        return Err(PlotError::Empty);
    }
    std::fs::write(path, truth_svg(result))?;
    Ok(())
}

/// Line plot of CT, TW and KS against a swept parameter, with a log axis when
/// requested.
pub fn sweep_svg(parameter: &str, xs: &[f64], series: &[(&str, Vec<f64>)], log_x: bool) -> String {
    const W: f64 = 560.0;
    const H: f64 = 360.0;
    const L: f64 = 56.0;
    const B: f64 = 40.0;
    const PALETTE: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let (xmin, xmax) = xs
        .iter()
        .map(|&v| tx(v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let px = |v: f64| {
        let t = if xmax > xmin { (tx(v) - xmin) / (xmax - xmin) } else { 0.5 };
        L + t * (W - L - 16.0)
    };
    // Metrics live in [0, 1].
    let py = |v: f64| H - B - v.clamp(0.0, 1.0) * (H - B - 16.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <line x1=\"{L}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{L}\" y1=\"{y0}\" x2=\"{L}\" y2=\"16\" stroke=\"black\"/>\n",
        y0 = H - B,
        x1 = W - 16.0
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{tick}</text>",
            L - 6.0,
            py(tick) + 4.0
        );
    }
    for &x in xs {
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{x}</text>",
            px(x),
            H - B + 16.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{parameter}</text>",
        (L + W) / 2.0,
        H - 6.0
    );
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            path.join(" ")
        );
        for (&x, &y) in xs.iter().zip(ys) {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                px(x),
                py(y)
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\">{name}</text>",
            W - 60.0,
            28.0 + 14.0 * k as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::result::ChartRow;

    fn dist(a: [u8; 3], b: [u8; 3]) -> f64 {
        a.iter()
            .zip(&b)
            .map(|(&p, &q)| (p as f64 - q as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn opposite_corners_are_farthest_apart() {
        let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let colors: Vec<[u8; 3]> = corners.iter().map(|c| position_color(c[0], c[1])).collect();
        let diagonal = dist(colors[0], colors[2]).min(dist(colors[1], colors[3]));
        for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            assert!(dist(colors[i], colors[j]) < diagonal);
        }
    }

    #[test]
    fn colors_are_distinct_on_a_grid() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..=20 {
            for j in 0..=20 {
                assert!(seen.insert(position_color(i as f64 / 20.0, j as f64 / 20.0)));
            }
        }
    }

    #[test]
    fn identity_chart_matches_truth_plot() {
        let rows = (0..30)
            .map(|i| {
                let x = vec![(i % 6) as f64 * 0.7, (i / 6) as f64 * 1.3];
                ChartRow {
                    index: i,
                    z: [x[0], x[1]],
                    x,
                    timestamp: i as f64,
                }
            })
            .collect();
        let result = ChartResult { rows, provenance: None };
        assert_eq!(chart_svg(&result), truth_svg(&result));
        assert!(emit_plot(&ChartResult { rows: vec![], provenance: None }, "/dev/null").is_err());
    }

    #[test]
    fn sweep_plot_is_deterministic() {
        let xs = [10.0, 100.0, 1000.0];
        let series = [("CT", vec![0.7, 0.8, 0.9]), ("KS", vec![0.5, 0.3, 0.2])];
        let a = sweep_svg("r", &xs, &series, true);
        assert_eq!(a, sweep_svg("r", &xs, &series, true));
        assert_eq!(a.matches("<polyline").count(), 2);
    }
}
