use std::fmt::Write as _;

use sgp_core::{GasketGraph, VertexField};

const WIDTH: f64 = 600.0;
const MARGIN: f64 = 20.0;
const LEGEND_HEIGHT: f64 = 60.0;

/// Blue-white-red map of `s` in `[-1, 1]`.
pub fn diverging_color(s: f64) -> [u8; 3] {
    let s = if s.is_finite() {
        s.clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let blue = [33.0, 102.0, 172.0];
    let red = [178.0, 24.0, 43.0];
    let (end, t) = if s < 0.0 { (blue, -s) } else { (red, s) };
    let mix = |c: f64| (255.0 + (c - 255.0) * t).round() as u8;
    [mix(end[0]), mix(end[1]), mix(end[2])]
}

fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// SVG of the gasket with one filled triangle per cell, colored by the mean
/// of the field over the cell corners. The map is symmetric about zero with
/// the largest absolute value at the ends; the legend prints the data range.
pub fn render_svg(g: &GasketGraph, f: &VertexField, title: &str) -> String {
    let vals = f.values();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs());
    let norm = |x: f64| if scale > 0.0 { x / scale } else { 0.0 };

    let pts = g.vertices();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &[x, y] in g.corners() {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    let k = (WIDTH - 2.0 * MARGIN) / (xmax - xmin).max(ymax - ymin);
    let plot_h = (ymax - ymin) * k;
    let height = plot_h + 2.0 * MARGIN + LEGEND_HEIGHT;
    let map = |[x, y]: [f64; 2]| (MARGIN + (x - xmin) * k, MARGIN + plot_h - (y - ymin) * k);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height:.0}" viewBox="0 0 {WIDTH} {height:.0}">"#
    )
    .unwrap();
    writeln!(s, "<title>{}</title>", escape(title)).unwrap();
    writeln!(s, r#"<g id="cells" stroke="none">"#).unwrap();
    for cell in g.cells() {
        let mean = cell.iter().map(|&i| vals[i]).sum::<f64>() / 3.0;
        let corners: Vec<String> = cell
            .iter()
            .map(|&i| {
                let (x, y) = map(pts[i]);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        writeln!(
            s,
            r#"<polygon points="{}" fill="{}"/>"#,
            corners.join(" "),
            hex(diverging_color(norm(mean)))
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();

    let ly = plot_h + 2.0 * MARGIN;
    let bar_w = WIDTH - 2.0 * MARGIN;
    writeln!(s, r#"<defs><linearGradient id="cmap">"#).unwrap();
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        writeln!(
            s,
            r#"<stop offset="{t}" stop-color="{}"/>"#,
            hex(diverging_color(2.0 * t - 1.0))
        )
        .unwrap();
    }
    writeln!(s, "</linearGradient></defs>").unwrap();
    writeln!(
        s,
        r#"<g id="legend"><rect x="{MARGIN}" y="{ly:.1}" width="{bar_w}" height="12" fill="url(#cmap)"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.1}" font-size="12" font-family="monospace">color range [{:e}, {:e}]; data range [{lo:e}, {hi:e}]</text></g>"#,
        ly + 30.0,
        -scale,
        scale
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_map_ends_and_center() {
        assert_eq!(diverging_color(0.0), [255, 255, 255]);
        assert_eq!(diverging_color(-1.0), [33, 102, 172]);
        assert_eq!(diverging_color(1.0), [178, 24, 43]);
        assert_eq!(diverging_color(f64::NAN), [255, 255, 255]);
    }

    #[test]
    fn one_polygon_per_cell() {
        let g = GasketGraph::standard(3).unwrap();
        let f = VertexField::from_fn(&g, |k| k as f64 - 20.0);
        let svg = render_svg(&g, &f, "u <plus>");
        assert_eq!(svg.matches("<polygon").count(), 27);
        assert!(svg.contains("&lt;plus&gt;"));
    }
}
