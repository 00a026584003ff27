//! Static SVG views of dendrograms, cluster roles, feature matrices and
//! pruned networks. Every renderer is a pure function of its numeric input.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterReport, Dendrogram, RoleMatrix};
use crate::lnn::Network;
use crate::{Error, Result};

const NEGATIVE: (f64, f64, f64) = (33.0, 102.0, 172.0);
const POSITIVE: (f64, f64, f64) = (178.0, 24.0, 43.0);

/// 20-colour categorical palette for cluster membership.
pub const PALETTE: [&str; 20] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
];

pub fn cluster_color(label: usize) -> &'static str {
    PALETTE[label % PALETTE.len()]
}

/// Diverging colour on a fixed [−1, 1] scale: blue for negative, white at
/// zero, red for positive. Values outside the scale saturate.
pub fn diverging_color(v: f64) -> String {
    let v = if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
    let (r, g, b) = if v >= 0.0 { POSITIVE } else { NEGATIVE };
    let t = v.abs();
    let mix = |c: f64| (255.0 + (c - 255.0) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(r), mix(g), mix(b))
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#);
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn title(out: &mut String, x: f64, y: f64, text: &str) {
    let _ = writeln!(
        out,
        r#"<text x="{x:.2}" y="{y:.2}" font-size="13" font-weight="bold">{}</text>"#,
        escape(text)
    );
}

/// Screen positions of a dendrogram drawing.
#[derive(Clone, Debug, PartialEq)]
pub struct DendrogramLayout {
    pub width: f64,
    pub height: f64,
    /// x of every node: leaves `0..n`, then merges.
    pub node_x: Vec<f64>,
    /// y of every node; leaves sit on the baseline.
    pub node_y: Vec<f64>,
    pub baseline: f64,
    pub top: f64,
    pub max_height: f64,
}

const LEAF_SPACING: f64 = 14.0;
const DENDRO_LEFT: f64 = 60.0;
const DENDRO_TOP: f64 = 40.0;
const DENDRO_PLOT: f64 = 280.0;

pub fn dendrogram_layout(d: &Dendrogram) -> DendrogramLayout {
    let n = d.n_leaves();
    let max_height = d.heights().fold(0.0, f64::max);
    let baseline = DENDRO_TOP + DENDRO_PLOT;
    let y_of = |h: f64| {
        if max_height > 0.0 {
            baseline - DENDRO_PLOT * h / max_height
        } else {
            baseline
        }
    };
    let mut node_x = vec![0.0; 2 * n - 1];
    let mut node_y = vec![baseline; 2 * n - 1];
    for (slot, leaf) in d.leaf_order().into_iter().enumerate() {
        node_x[leaf] = DENDRO_LEFT + LEAF_SPACING * (slot as f64 + 0.5);
    }
    for (m, merge) in d.merges().iter().enumerate() {
        node_x[n + m] = 0.5 * (node_x[merge.left] + node_x[merge.right]);
        node_y[n + m] = y_of(merge.height);
    }
    DendrogramLayout {
        width: DENDRO_LEFT + LEAF_SPACING * n as f64 + 20.0,
        height: baseline + 60.0,
        node_x,
        node_y,
        baseline,
        top: DENDRO_TOP,
        max_height,
    }
}

/// Dendrogram with leaves in merge order and merge height on the y axis.
/// Leaves are optionally coloured by a cluster assignment.
pub fn render_dendrogram(d: &Dendrogram, heading: &str, assignment: Option<&[usize]>) -> String {
    let n = d.n_leaves();
    let layout = dendrogram_layout(d);
    let mut out = String::new();
    header(&mut out, layout.width, layout.height);
    title(&mut out, 10.0, 20.0, heading);

    // height axis
    let axis_x = DENDRO_LEFT - 10.0;
    let _ = writeln!(
        out,
        r##"<line x1="{axis_x:.2}" y1="{:.2}" x2="{axis_x:.2}" y2="{:.2}" stroke="#444"/>"##,
        layout.top, layout.baseline
    );
    for frac in [0.0, 0.5, 1.0] {
        let y = layout.baseline - DENDRO_PLOT * frac;
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{axis_x:.2}" y2="{y:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" font-size="9" text-anchor="end">{:.3}</text>"##,
            axis_x - 4.0,
            axis_x - 6.0,
            y + 3.0,
            layout.max_height * frac
        );
    }

    let _ = writeln!(out, r##"<g fill="none" stroke="#222" stroke-width="1.2">"##);
    for (m, merge) in d.merges().iter().enumerate() {
        let (xl, yl) = (layout.node_x[merge.left], layout.node_y[merge.left]);
        let (xr, yr) = (layout.node_x[merge.right], layout.node_y[merge.right]);
        let y = layout.node_y[n + m];
        let _ = writeln!(out, r#"<path d="M{xl:.2} {yl:.2}V{y:.2}H{xr:.2}V{yr:.2}"/>"#);
    }
    out.push_str("</g>\n");

    for (k, unit) in d.leaves().iter().enumerate() {
        let x = layout.node_x[k];
        let y = layout.baseline + 8.0;
        let fill = assignment.map_or("#222", |a| cluster_color(a[k]));
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="8" fill="{fill}" transform="rotate(90 {x:.2} {y:.2})">L{}_{}</text>"#,
            unit.layer, unit.position
        );
    }
    out.push_str("</svg>\n");
    out
}

/// How a role vector's input part is drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RoleLayout {
    /// Inputs are a row-major image.
    ImageGrid { rows: usize, cols: usize },
    /// Inputs are item-major blocks of `window` monthly lags, oldest first.
    Series { items: Vec<String>, window: usize },
    /// Inputs as a single row of cells.
    Strip,
}

impl RoleLayout {
    fn check(&self, n_inputs: usize) -> Result<()> {
        let expected = match self {
            RoleLayout::ImageGrid { rows, cols } => rows * cols,
            RoleLayout::Series { items, window } => items.len() * window,
            RoleLayout::Strip => n_inputs,
        };
        if expected != n_inputs {
            return Err(Error::DimensionMismatch {
                what: "role layout inputs",
                expected,
                actual: n_inputs,
            });
        }
        Ok(())
    }
}

const CELL: f64 = 14.0;
const PANEL_H: f64 = 120.0;
const BAR_W: f64 = 16.0;

fn output_bars(out: &mut String, x0: f64, y0: f64, values: &[f64]) {
    let mid = y0 + PANEL_H / 2.0;
    let _ = writeln!(
        out,
        r##"<text x="{x0:.2}" y="{:.2}" font-size="10">outputs</text>"##,
        y0 - 6.0
    );
    let _ = writeln!(
        out,
        r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{PANEL_H:.2}" fill="none" stroke="#999"/>"##,
        BAR_W * values.len() as f64 + 8.0
    );
    for (j, &v) in values.iter().enumerate() {
        let v = v.clamp(-1.0, 1.0);
        let x = x0 + 4.0 + BAR_W * j as f64;
        let h = v.abs() * PANEL_H / 2.0;
        let y = if v >= 0.0 { mid - h } else { mid };
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{h:.2}" fill="{}"/>"#,
            x + 2.0,
            BAR_W - 4.0,
            diverging_color(v)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="middle">{j}</text>"#,
            x + BAR_W / 2.0,
            y0 + PANEL_H + 11.0
        );
    }
    let _ = writeln!(
        out,
        r##"<line x1="{x0:.2}" y1="{mid:.2}" x2="{:.2}" y2="{mid:.2}" stroke="#444"/>"##,
        x0 + BAR_W * values.len() as f64 + 8.0
    );
}

fn role_panel(inputs: &[f64], outputs: &[f64], layout: &RoleLayout, heading: &str) -> String {
    let mut out = String::new();
    match layout {
        RoleLayout::ImageGrid { rows, cols } => {
            let grid_w = CELL * *cols as f64;
            let grid_h = CELL * *rows as f64;
            let width = 20.0 + grid_w + 30.0 + BAR_W * outputs.len() as f64 + 20.0;
            let height = 40.0 + grid_h.max(PANEL_H + 20.0) + 20.0;
            header(&mut out, width, height);
            title(&mut out, 10.0, 20.0, heading);
            for r in 0..*rows {
                for c in 0..*cols {
                    let _ = writeln!(
                        out,
                        r#"<rect x="{:.2}" y="{:.2}" width="{CELL:.2}" height="{CELL:.2}" fill="{}"/>"#,
                        20.0 + CELL * c as f64,
                        40.0 + CELL * r as f64,
                        diverging_color(inputs[r * cols + c])
                    );
                }
            }
            let _ = writeln!(
                out,
                r##"<rect x="20" y="40" width="{grid_w:.2}" height="{grid_h:.2}" fill="none" stroke="#999"/>"##
            );
            output_bars(&mut out, 20.0 + grid_w + 30.0, 40.0, outputs);
        }
        RoleLayout::Series { items, window } => {
            let chart_w = 4.0 * *window as f64;
            let chart_h = 60.0;
            let width = 60.0 + chart_w + 40.0 + BAR_W * outputs.len() as f64 + 20.0;
            let height = (40.0 + (chart_h + 24.0) * items.len() as f64).max(40.0 + PANEL_H + 30.0) + 10.0;
            header(&mut out, width, height);
            title(&mut out, 10.0, 20.0, heading);
            for (i, name) in items.iter().enumerate() {
                let y0 = 40.0 + (chart_h + 24.0) * i as f64;
                let mid = y0 + chart_h / 2.0;
                let _ = writeln!(
                    out,
                    r##"<rect x="60" y="{y0:.2}" width="{chart_w:.2}" height="{chart_h:.2}" fill="none" stroke="#999"/><line x1="60" y1="{mid:.2}" x2="{:.2}" y2="{mid:.2}" stroke="#ccc"/><text x="54" y="{:.2}" font-size="10" text-anchor="end">{}</text>"##,
                    60.0 + chart_w,
                    mid + 3.0,
                    escape(name)
                );
                let block = &inputs[i * window..(i + 1) * window];
                let points: Vec<String> = block
                    .iter()
                    .enumerate()
                    .map(|(t, &v)| {
                        format!(
                            "{:.2},{:.2}",
                            60.0 + 4.0 * (t as f64 + 0.5),
                            mid - v.clamp(-1.0, 1.0) * chart_h / 2.0
                        )
                    })
                    .collect();
                let _ = writeln!(
                    out,
                    r##"<polyline points="{}" fill="none" stroke="#333" stroke-width="1"/>"##,
                    points.join(" ")
                );
                for (t, &v) in block.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="1.6" fill="{}"/>"#,
                        60.0 + 4.0 * (t as f64 + 0.5),
                        mid - v.clamp(-1.0, 1.0) * chart_h / 2.0,
                        diverging_color(v)
                    );
                }
            }
            output_bars(&mut out, 60.0 + chart_w + 40.0, 40.0, outputs);
        }
        RoleLayout::Strip => {
            let cell = (600.0 / inputs.len().max(1) as f64).clamp(2.0, CELL);
            let strip_w = cell * inputs.len() as f64;
            let width = 20.0 + strip_w + 30.0 + BAR_W * outputs.len() as f64 + 20.0;
            let height = 40.0 + PANEL_H + 30.0;
            header(&mut out, width, height);
            title(&mut out, 10.0, 20.0, heading);
            for (i, &v) in inputs.iter().enumerate() {
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="40" width="{cell:.2}" height="{CELL:.2}" fill="{}"/>"#,
                    20.0 + cell * i as f64,
                    diverging_color(v)
                );
            }
            output_bars(&mut out, 20.0 + strip_w + 30.0, 40.0, outputs);
        }
    }
    out.push_str("</svg>\n");
    out
}

/// One SVG per cluster role.
pub fn render_roles(roles: &RoleMatrix, sizes: &[usize], layout: &RoleLayout) -> Result<Vec<String>> {
    let n_inputs = roles.inputs.first().map_or(0, Vec::len);
    layout.check(n_inputs)?;
    Ok((0..roles.len())
        .map(|m| {
            let heading = match sizes.get(m) {
                Some(size) => format!("Cluster {} ({size} units)", m + 1),
                None => format!("Cluster {}", m + 1),
            };
            role_panel(&roles.inputs[m], &roles.outputs[m], layout, &heading)
        })
        .collect())
}

pub fn render_report_roles(report: &ClusterReport, layout: &RoleLayout) -> Result<Vec<String>> {
    render_roles(&crate::clustering::cluster_roles(report), &report.sizes, layout)
}

/// Feature matrix heatmap, one row per unit, inputs then outputs.
pub fn render_feature_heatmap(rows: &[Vec<f64>], n_inputs: usize, heading: &str) -> String {
    let dim = rows.first().map_or(0, Vec::len);
    let cw = (800.0 / dim.max(1) as f64).clamp(2.0, 20.0);
    let ch = (600.0 / rows.len().max(1) as f64).clamp(3.0, 20.0);
    let width = 20.0 + cw * dim as f64 + 20.0;
    let height = 40.0 + ch * rows.len() as f64 + 20.0;
    let mut out = String::new();
    header(&mut out, width, height);
    title(&mut out, 10.0, 20.0, heading);
    for (k, row) in rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{cw:.2}" height="{ch:.2}" fill="{}"/>"#,
                20.0 + cw * i as f64,
                40.0 + ch * k as f64,
                diverging_color(v)
            );
        }
    }
    let sep = 20.0 + cw * n_inputs as f64;
    let _ = writeln!(
        out,
        r##"<line x1="{sep:.2}" y1="40" x2="{sep:.2}" y2="{:.2}" stroke="#000" stroke-width="1.5"/>"##,
        40.0 + ch * rows.len() as f64
    );
    out.push_str("</svg>\n");
    out
}

/// Line plot of a scalar series (e.g. the alignment cosine sum).
pub fn render_series(values: &[f64], heading: &str) -> String {
    let (w, h) = (600.0, 260.0);
    let (x0, y0, pw, ph) = (60.0, 40.0, 500.0, 180.0);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = String::new();
    header(&mut out, w, h);
    title(&mut out, 10.0, 20.0, heading);
    let _ = writeln!(
        out,
        r##"<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>"##
    );
    if !values.is_empty() {
        let n = values.len().max(2) - 1;
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                format!(
                    "{:.2},{:.2}",
                    x0 + pw * i as f64 / n as f64,
                    y0 + ph * (1.0 - (v - lo) / span)
                )
            })
            .collect();
        let _ = writeln!(
            out,
            r##"<polyline points="{}" fill="none" stroke="#b2182b" stroke-width="1.5"/>"##,
            points.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="end">{hi:.3}</text><text x="{:.2}" y="{:.2}" font-size="9" text-anchor="end">{lo:.3}</text>"#,
            x0 - 4.0,
            y0 + 4.0,
            x0 - 4.0,
            y0 + ph
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Layered drawing of the network keeping only edges with `|w| >= threshold`.
/// Hidden units are coloured by `assignment` (indexed in hidden-unit order).
pub fn render_network(net: &Network, threshold: f64, assignment: Option<&[usize]>, heading: &str) -> String {
    let sizes = net.layer_sizes();
    let (col_gap, plot_h, top) = (220.0, 600.0, 40.0);
    let width = 60.0 + col_gap * (sizes.len() - 1) as f64 + 60.0;
    let height = top + plot_h + 30.0;
    let pos = |layer: usize, unit: usize| {
        let n = sizes[layer] as f64;
        (60.0 + col_gap * layer as f64, top + plot_h * (unit as f64 + 0.5) / n)
    };
    let mut out = String::new();
    header(&mut out, width, height);
    title(&mut out, 10.0, 20.0, heading);
    out.push_str("<g stroke-width=\"0.6\" stroke-opacity=\"0.6\">\n");
    for e in net.prune_view(threshold) {
        let (x1, y1) = pos(e.layer, e.from);
        let (x2, y2) = pos(e.layer + 1, e.to);
        let color = if e.weight >= 0.0 { "#b2182b" } else { "#2166ac" };
        let _ = writeln!(
            out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{color}"/>"#
        );
    }
    out.push_str("</g>\n");
    let mut hidden_index = 0;
    for (layer, &n) in sizes.iter().enumerate() {
        let hidden = layer > 0 && layer + 1 < sizes.len();
        let r = (plot_h / n as f64 * 0.4).clamp(1.2, 6.0);
        for unit in 0..n {
            let (x, y) = pos(layer, unit);
            let fill = match (hidden, assignment) {
                (true, Some(a)) => cluster_color(a[hidden_index]),
                (true, None) => "#555",
                _ => "#bbb",
            };
            if hidden {
                hidden_index += 1;
            }
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}"/>"#);
        }
    }
    out.push_str("</svg>\n");
    out
}
