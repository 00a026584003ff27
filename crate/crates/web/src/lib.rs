//! WebAssembly bindings for three small interactive demos. The plain Rust
//! functions return `Result<String, String>` and are tested natively; the
//! `#[wasm_bindgen]` wrappers only convert the error type.

use hiermod::clustering::{cluster_roles, cut, ward_cluster};
use hiermod::features::{align_signs, feature_vectors};
use hiermod::lnn::{Network, TrainConfig};
use hiermod::report::{render_dendrogram, render_feature_heatmap, render_roles, render_series, RoleLayout};
use hiermod::{Dataset, FeatureMatrix};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Parses whitespace- or comma-separated numbers, one row per line.
pub fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>, String> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|_| format!("line {}: {t:?} is not a number", i + 1)))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    match rows.first() {
        None => Err("enter at least one row".into()),
        Some(first) if rows.iter().any(|r| r.len() != first.len()) => {
            Err("every row needs the same number of values".into())
        }
        Some(_) => Ok(rows),
    }
}

fn matrix(text: &str) -> Result<FeatureMatrix, String> {
    FeatureMatrix::from_rows(parse_rows(text)?, 0).map_err(|e| e.to_string())
}

/// Ward dendrogram SVG of the given points, leaves coloured by a cut into
/// `clusters` groups.
pub fn ward_svg(text: &str, clusters: usize) -> Result<String, String> {
    let fm = matrix(text)?;
    let d = ward_cluster(&fm).map_err(|e| e.to_string())?;
    let labels = d.partition(clusters.clamp(1, fm.len())).map_err(|e| e.to_string())?;
    Ok(render_dendrogram(&d, &format!("{} points", fm.len()), Some(&labels)))
}

/// Sign alignment of the given rows: JSON with before/after heatmaps, the
/// cosine-sum trace and flip count.
pub fn align_json(text: &str, iterations: usize, seed: u64) -> Result<String, String> {
    let fm = matrix(text)?;
    let (aligned, trace) = align_signs(&fm, iterations, seed);
    let mut series = vec![trace.initial];
    series.extend(&trace.cosine_sum_series);
    Ok(json!({
        "initial": trace.initial,
        "final": trace.final_sum(),
        "flips": trace.flip_count(),
        "before": render_feature_heatmap(fm.rows(), 0, "Before"),
        "after": render_feature_heatmap(aligned.rows(), 0, "After"),
        "trace": render_series(&series, "Cosine sum"),
    })
    .to_string())
}

fn xor_data() -> Dataset {
    let inputs = vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]];
    let outputs = vec![vec![0.01, 0.99], vec![0.99, 0.01], vec![0.99, 0.01], vec![0.01, 0.99]];
    Dataset::new(inputs, outputs).expect("fixed dataset is valid")
}

/// Trains a 2-`hidden`-2 network on XOR with L1 strength `lambda`, clusters
/// its hidden units into `clusters` roles and returns JSON with the final
/// error, the dendrogram and one panel per role.
pub fn xor_roles_json(hidden: usize, clusters: usize, lambda: f64, seed: u64) -> Result<String, String> {
    let hidden = hidden.clamp(2, 32);
    let data = xor_data();
    let mut net = Network::init(&[2, hidden, 2], seed).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        lambda,
        a1: 2500.0,
        seed: seed.wrapping_add(1),
        ..TrainConfig::default()
    };
    net.train(&data, &cfg).map_err(|e| e.to_string())?;
    let error = net.training_error(&data).map_err(|e| e.to_string())?;
    let fm = feature_vectors(&net, &data).map_err(|e| e.to_string())?;
    let (aligned, _) = align_signs(&fm, 200, seed.wrapping_add(2));
    let d = ward_cluster(&aligned).map_err(|e| e.to_string())?;
    let report = cut(&d, &aligned, clusters.clamp(1, hidden)).map_err(|e| e.to_string())?;
    let roles = render_roles(&cluster_roles(&report), &report.sizes, &RoleLayout::Strip).map_err(|e| e.to_string())?;
    Ok(json!({
        "error": error,
        "dendrogram": render_dendrogram(&d, "Hidden units", Some(&report.assignment)),
        "roles": roles,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn ward_demo(text: &str, clusters: usize) -> Result<String, JsValue> {
    ward_svg(text, clusters).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn align_demo(text: &str, iterations: usize, seed: u32) -> Result<String, JsValue> {
    align_json(text, iterations, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn xor_demo(hidden: usize, clusters: usize, lambda: f64, seed: u32) -> Result<String, JsValue> {
    xor_roles_json(hidden, clusters, lambda, seed as u64).map_err(|e| JsValue::from_str(&e))
}
