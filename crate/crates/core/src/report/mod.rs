//! SVG rendering and the end-to-end pipeline.

mod pipeline;
pub mod svg;

pub use pipeline::{
    load_data, role_layout, run_pipeline, DataSource, FileEntry, Manifest, NnmfConfig, RunConfig, RunStatus, RunSummary,
    MANIFEST_FILE, MANIFEST_FORMAT_VERSION, PRESETS,
};
pub use svg::{
    dendrogram_layout, diverging_color, render_dendrogram, render_feature_heatmap, render_network,
    render_report_roles, render_roles, render_series, DendrogramLayout, RoleLayout,
};
