//! Deterministic SVG plot rendering.
//!
//! SVG rather than raster: byte-identical output for fixed input, diffable
//! in tests. All coordinates are written with fixed precision.

use crate::geom::MultiPolygon;
use crate::spatial::{fisher_jenks, JenksClassification};
use crate::stats::{lowess, pearson_r};

/// Sequential fill ramp (light to dark).
const RAMP: [&str; 9] = [
    "#ffffcc", "#ffeda0", "#fed976", "#feb24c", "#fd8d3c", "#fc4e2a", "#e31a1c", "#bd0026",
    "#800026",
];

/// Categorical palette for cluster maps.
const CATEGORICAL: [&str; 10] = [
    "#e31a1c", "#1f78b4", "#33a02c", "#ff7f00", "#6a3d9a", "#b15928", "#a6cee3", "#b2df8a",
    "#fb9a99", "#fdbf6f",
];

fn ramp_for(k: usize) -> Vec<&'static str> {
    let k = k.clamp(1, RAMP.len());
    let idx = |i: usize| {
        if k == 1 {
            RAMP.len() / 2
        } else {
            i * (RAMP.len() - 1) / (k - 1)
        }
    };
    (0..k).map(|i| RAMP[idx(i)]).collect()
}

struct Viewport {
    min_x: f64,
    min_y: f64,
    scale: f64,
    width: f64,
    height: f64,
}

impl Viewport {
    fn fit(geoms: &[MultiPolygon], width: f64) -> Viewport {
        let mut min_x = f64::INFINITY;
        let mut min_y = f64::INFINITY;
        let mut max_x = f64::NEG_INFINITY;
        let mut max_y = f64::NEG_INFINITY;
        for g in geoms {
            let (lo, hi) = g.bbox();
            min_x = min_x.min(lo.x);
            min_y = min_y.min(lo.y);
            max_x = max_x.max(hi.x);
            max_y = max_y.max(hi.y);
        }
        let span_x = (max_x - min_x).max(1e-9);
        let span_y = (max_y - min_y).max(1e-9);
        let scale = width / span_x;
        Viewport { min_x, min_y, scale, width, height: span_y * scale }
    }

    fn path(&self, g: &MultiPolygon) -> String {
        let mut d = String::new();
        for part in g.parts() {
            for ring in part.rings() {
                for (i, p) in ring[..ring.len() - 1].iter().enumerate() {
                    let x = (p.x - self.min_x) * self.scale;
                    let y = self.height - (p.y - self.min_y) * self.scale;
                    d.push(if i == 0 { 'M' } else { 'L' });
                    d.push_str(&format!("{x:.2},{y:.2}"));
                }
                d.push('Z');
            }
        }
        d
    }
}

/// Choropleth of one complete value column, classed by Fisher-Jenks.
///
/// A constant column renders as a single class with a notice in the legend.
pub fn render_choropleth(
    geoms: &[MultiPolygon],
    values: &[f64],
    title: &str,
    k_classes: usize,
) -> String {
    assert_eq!(geoms.len(), values.len());
    let distinct = {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v.len()
    };
    let k = k_classes.min(distinct).max(1);
    let constant_notice = distinct < 2;
    let classification: JenksClassification =
        fisher_jenks(values, k).expect("class count bounded by distinct values");
    render_classed_map(geoms, &classification.labels, title, &MapLegend::Ranges {
        breaks: classification.breaks.clone(),
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        constant_notice,
    })
}

/// Categorical map (cluster typologies); labels must be `0..k`.
pub fn render_category_map(
    geoms: &[MultiPolygon],
    labels: &[usize],
    names: &[String],
    title: &str,
) -> String {
    render_classed_map(geoms, labels, title, &MapLegend::Categories(names.to_vec()))
}

enum MapLegend {
    Ranges { breaks: Vec<f64>, min: f64, constant_notice: bool },
    Categories(Vec<String>),
}

fn render_classed_map(
    geoms: &[MultiPolygon],
    labels: &[usize],
    title: &str,
    legend: &MapLegend,
) -> String {
    let width = 800.0;
    let vp = Viewport::fit(geoms, width);
    let k = labels.iter().max().map_or(1, |&m| m + 1);
    let fills: Vec<&str> = match legend {
        MapLegend::Ranges { .. } => ramp_for(k),
        MapLegend::Categories(_) => (0..k).map(|i| CATEGORICAL[i % CATEGORICAL.len()]).collect(),
    };
    let legend_height = 26.0 * (k as f64 + 1.0) + 30.0;
    let total_height = vp.height + legend_height;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{total_height:.0}\" viewBox=\"0 0 {width:.0} {total_height:.0}\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"10\" y=\"18\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        escape(title)
    ));
    svg.push_str("<g transform=\"translate(0,28)\">\n");
    for (g, &label) in geoms.iter().zip(labels) {
        svg.push_str(&format!(
            "<path d=\"{}\" fill=\"{}\" fill-rule=\"evenodd\" stroke=\"#555555\" stroke-width=\"0.5\"/>\n",
            vp.path(g),
            fills[label],
        ));
    }
    svg.push_str("</g>\n");

    let legend_y = vp.height + 44.0;
    svg.push_str(&format!(
        "<g transform=\"translate(10,{legend_y:.2})\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    match legend {
        MapLegend::Ranges { breaks, min, constant_notice } => {
            let mut lo = *min;
            for (i, b) in breaks.iter().enumerate() {
                svg.push_str(&format!(
                    "<rect x=\"0\" y=\"{y:.1}\" width=\"18\" height=\"18\" fill=\"{fill}\"/><text x=\"24\" y=\"{ty:.1}\" class=\"legend-entry\">{lo:.2} &#8211; {hi:.2}</text>\n",
                    y = i as f64 * 26.0,
                    fill = fills[i],
                    ty = i as f64 * 26.0 + 14.0,
                    hi = b,
                ));
                lo = *b;
            }
            if *constant_notice {
                svg.push_str(&format!(
                    "<text x=\"0\" y=\"{y:.1}\" fill=\"#995500\">constant column: single-class rendering</text>\n",
                    y = breaks.len() as f64 * 26.0 + 16.0
                ));
            }
        }
        MapLegend::Categories(names) => {
            for (i, name) in names.iter().enumerate() {
                svg.push_str(&format!(
                    "<rect x=\"0\" y=\"{y:.1}\" width=\"18\" height=\"18\" fill=\"{fill}\"/><text x=\"24\" y=\"{ty:.1}\" class=\"legend-entry\">{name}</text>\n",
                    y = i as f64 * 26.0,
                    fill = fills[i % fills.len()],
                    ty = i as f64 * 26.0 + 14.0,
                    name = escape(name),
                ));
            }
        }
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}

/// Scatter plot with an optional LOWESS overlay and a Pearson r annotation.
pub fn render_scatter(
    x: &[f64],
    y: &[f64],
    x_label: &str,
    y_label: &str,
    lowess_overlay: bool,
    lowess_frac: f64,
) -> String {
    assert_eq!(x.len(), y.len());
    let (w, h, margin) = (640.0, 480.0, 50.0);
    let min_max = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let (x0, x1) = min_max(x);
    let (y0, y1) = min_max(y);
    let sx = |v: f64| margin + (v - x0) / (x1 - x0) * (w - 2.0 * margin);
    let sy = |v: f64| h - margin - (v - y0) / (y1 - y0) * (h - 2.0 * margin);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"{margin}\" y=\"{margin}\" width=\"{pw:.1}\" height=\"{ph:.1}\" fill=\"none\" stroke=\"#333333\"/>\n",
        pw = w - 2.0 * margin,
        ph = h - 2.0 * margin,
    ));
    svg.push_str(&format!(
        "<text x=\"{tx:.1}\" y=\"{ty:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        escape(x_label),
        tx = w / 2.0,
        ty = h - 12.0,
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{ty:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {ty:.1})\">{}</text>\n",
        escape(y_label),
        ty = h / 2.0,
    ));
    // axis extremes
    svg.push_str(&format!(
        "<text x=\"{margin}\" y=\"{ty:.1}\" font-family=\"sans-serif\" font-size=\"10\">{x0:.2}</text>\n",
        ty = h - margin + 14.0
    ));
    svg.push_str(&format!(
        "<text x=\"{tx:.1}\" y=\"{ty:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{x1:.2}</text>\n",
        tx = w - margin,
        ty = h - margin + 14.0
    ));

    for (&xi, &yi) in x.iter().zip(y) {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f78b4\" fill-opacity=\"0.7\"/>\n",
            sx(xi),
            sy(yi),
        ));
    }

    if lowess_overlay && x.len() >= 5 {
        if let Ok(fit) = lowess(x, y, lowess_frac) {
            let mut order: Vec<usize> = (0..x.len()).collect();
            order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap().then(a.cmp(&b)));
            let mut d = String::new();
            for (i, &idx) in order.iter().enumerate() {
                d.push(if i == 0 { 'M' } else { 'L' });
                d.push_str(&format!("{:.2},{:.2}", sx(x[idx]), sy(fit[idx])));
            }
            svg.push_str(&format!(
                "<path d=\"{d}\" fill=\"none\" stroke=\"#e31a1c\" stroke-width=\"2\" class=\"lowess\"/>\n"
            ));
        }
    }

    let xo: Vec<Option<f64>> = x.iter().map(|&v| Some(v)).collect();
    let yo: Vec<Option<f64>> = y.iter().map(|&v| Some(v)).collect();
    if let Ok(r) = pearson_r(&xo, &yo) {
        svg.push_str(&format!(
            "<text x=\"{tx:.1}\" y=\"{ty:.1}\" font-family=\"sans-serif\" font-size=\"13\">r = {r:.2}</text>\n",
            tx = margin + 8.0,
            ty = margin + 18.0,
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Crs;

    fn grid(n: usize) -> Vec<MultiPolygon> {
        (0..n)
            .map(|i| {
                let x = (i % 4) as f64 * 10.0;
                let y = (i / 4) as f64 * 10.0;
                MultiPolygon::rect(x, y, x + 10.0, y + 10.0, Crs::WebMercator)
            })
            .collect()
    }

    #[test]
    fn choropleth_structure() {
        let geoms = grid(8);
        let values: Vec<f64> = (0..8).map(|i| i as f64 * 3.0).collect();
        let svg = render_choropleth(&geoms, &values, "demo", 5);
        assert_eq!(svg.matches("<path").count(), 8, "one path per tract");
        assert_eq!(svg.matches("legend-entry").count(), 5, "legend entries = k");
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn choropleth_constant_column_notice() {
        let geoms = grid(4);
        let svg = render_choropleth(&geoms, &[7.0; 4], "flat", 5);
        assert!(svg.contains("single-class rendering"));
        assert_eq!(svg.matches("legend-entry").count(), 1);
    }

    #[test]
    fn choropleth_bytes_deterministic() {
        let geoms = grid(8);
        let values: Vec<f64> = (0..8).map(|i| (i * i) as f64).collect();
        let a = render_choropleth(&geoms, &values, "demo", 5);
        let b = render_choropleth(&geoms, &values, "demo", 5);
        assert_eq!(a, b);
    }

    #[test]
    fn scatter_linear_annotates_r_one() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let svg = render_scatter(&x, &y, "x", "y", true, 0.5);
        assert!(svg.contains("r = 1.00"), "missing annotation");
        assert!(svg.contains("class=\"lowess\""));
    }

    #[test]
    fn scatter_overlay_off_has_no_curve() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - v).collect();
        let svg = render_scatter(&x, &y, "x", "y", false, 0.5);
        assert!(!svg.contains("class=\"lowess\""));
    }

    #[test]
    fn scatter_overlay_needs_five_points() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        let svg = render_scatter(&x, &y, "x", "y", true, 0.5);
        assert!(!svg.contains("class=\"lowess\""), "overlay must require 5 points");
    }
}
