//! End-to-end run: data, training, features, alignment, clustering, cuts,
//! optional NNMF, rendering, and a hashed manifest of every artifact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::svg::{self, RoleLayout};
use crate::clustering::{self, cut, is_refinement, ward_cluster, ClusterReport};
use crate::data::{self, Dataset, TimeSeriesTable, IMAGE_SIDE};
use crate::features::{align_signs, feature_vectors_with, OutputSource};
use crate::lnn::{Network, OrderPolicy, TrainConfig, TrainingMeta};
use crate::nnmf::{nnmf_assign, nnmf_best_of, nonneg_features};
use crate::{Error, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Where the training data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    /// IDX image and label files; optionally the first `per_class` images of
    /// each class.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        per_class: Option<usize>,
    },
    /// Generated seven-segment digit images.
    SynthDigits { seed: u64, per_class: usize },
    /// Monthly series CSV (`month,item...`) cut into lag windows.
    Csv { path: PathBuf, window: usize, horizon: usize },
    /// Generated monthly price indices cut into lag windows.
    SynthCpi {
        seed: u64,
        months: usize,
        items: usize,
        window: usize,
        horizon: usize,
    },
    /// A directory written by [`Dataset::save_dir`].
    DatasetDir { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnmfConfig {
    pub rank: usize,
    pub iterations: usize,
    pub restarts: usize,
}

/// Everything that determines a run. The output directory is not part of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    /// Master seed. Initialization uses it directly; sample order, alignment
    /// and NNMF use `seed + 1`, `seed + 2`, `seed + 3`.
    pub seed: u64,
    pub data: DataSource,
    pub hidden: Vec<usize>,
    pub lambda: f64,
    pub epsilon1: f64,
    pub a1: f64,
    pub eta0: f64,
    #[serde(default)]
    pub total_steps: Option<u64>,
    pub order: OrderPolicy,
    pub align_iterations: usize,
    #[serde(default)]
    pub output_source: OutputSource,
    pub resolutions: Vec<usize>,
    pub prune_threshold: f64,
    #[serde(default)]
    pub nnmf: Option<NnmfConfig>,
}

pub const PRESETS: [&str; 5] = ["e1", "e1-desk", "e2", "e2-desk", "smoke"];

impl RunConfig {
    /// Digit images, 196-64-10.
    pub fn e1() -> Self {
        RunConfig {
            name: "e1".into(),
            seed: 1,
            data: DataSource::SynthDigits { seed: 7, per_class: 500 },
            hidden: vec![64],
            lambda: 1.1e-5,
            epsilon1: 0.001,
            a1: 100.0,
            eta0: 0.7,
            total_steps: None,
            order: OrderPolicy::CyclicByClass,
            align_iterations: 5000,
            output_source: OutputSource::Model,
            resolutions: vec![4, 8, 16],
            prune_threshold: 0.6,
            nnmf: Some(NnmfConfig {
                rank: 16,
                iterations: 1000,
                restarts: 100,
            }),
        }
    }

    /// Reduced digit run for a single machine in minutes.
    pub fn e1_desk() -> Self {
        RunConfig {
            name: "e1-desk".into(),
            data: DataSource::SynthDigits { seed: 7, per_class: 100 },
            a1: 20.0,
            nnmf: Some(NnmfConfig {
                rank: 16,
                iterations: 1000,
                restarts: 5,
            }),
            ..Self::e1()
        }
    }

    /// Monthly prices of three items, 108-40-3.
    pub fn e2() -> Self {
        RunConfig {
            name: "e2".into(),
            seed: 1,
            data: DataSource::SynthCpi {
                seed: 11,
                months: 306,
                items: 3,
                window: 36,
                horizon: 1,
            },
            hidden: vec![40],
            lambda: 2e-5,
            epsilon1: 0.001,
            a1: 500.0,
            eta0: 0.7,
            total_steps: None,
            order: OrderPolicy::UniformRandom,
            align_iterations: 5000,
            output_source: OutputSource::Model,
            resolutions: vec![3, 6, 12],
            prune_threshold: 0.001,
            nnmf: Some(NnmfConfig {
                rank: 12,
                iterations: 1000,
                restarts: 100,
            }),
        }
    }

    pub fn e2_desk() -> Self {
        RunConfig {
            name: "e2-desk".into(),
            nnmf: Some(NnmfConfig {
                rank: 12,
                iterations: 1000,
                restarts: 5,
            }),
            ..Self::e2()
        }
    }

    /// Seconds-long run for checking an installation.
    pub fn smoke() -> Self {
        RunConfig {
            name: "smoke".into(),
            data: DataSource::SynthDigits { seed: 7, per_class: 10 },
            hidden: vec![12],
            a1: 5.0,
            align_iterations: 200,
            resolutions: vec![2, 4],
            nnmf: Some(NnmfConfig {
                rank: 4,
                iterations: 100,
                restarts: 2,
            }),
            ..Self::e1()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "e1" => Some(Self::e1()),
            "e1-desk" => Some(Self::e1_desk()),
            "e2" => Some(Self::e2()),
            "e2-desk" => Some(Self::e2_desk()),
            "smoke" => Some(Self::smoke()),
            _ => None,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            epsilon1: self.epsilon1,
            a1: self.a1,
            eta0: self.eta0,
            seed: self.seed.wrapping_add(1),
            total_steps: self.total_steps,
            order: self.order,
        }
    }

    pub fn align_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    pub fn nnmf_seed(&self) -> u64 {
        self.seed.wrapping_add(3)
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden.iter().sum()
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidArchitecture(format!(
                "hidden layer sizes must be non-empty and positive, got {:?}",
                self.hidden
            )));
        }
        let k0 = self.n_hidden();
        if self.resolutions.is_empty() {
            return Err(Error::param("at least one resolution is required"));
        }
        for &c in &self.resolutions {
            if c == 0 || c > k0 {
                return Err(Error::ClusterCount { c, max: k0 });
            }
        }
        if !(self.prune_threshold >= 0.0) {
            return Err(Error::param("prune threshold must be >= 0"));
        }
        if let Some(n) = &self.nnmf {
            if n.rank == 0 || n.rank > k0 {
                return Err(Error::param(format!("NNMF rank {} out of range 1..={k0}", n.rank)));
            }
            if n.restarts == 0 {
                return Err(Error::param("NNMF needs at least one restart"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Loads a [`DataSource`] as a normalized dataset plus the layout its inputs
/// are drawn with.
pub fn load_data(source: &DataSource) -> Result<(Dataset, RoleLayout)> {
    let grid = RoleLayout::ImageGrid {
        rows: IMAGE_SIDE,
        cols: IMAGE_SIDE,
    };
    match source {
        DataSource::Idx {
            images,
            labels,
            per_class,
        } => {
            let set = data::load_idx(images, labels)?;
            let mut ds = data::preprocess_images(&set)?;
            if let Some(limit) = per_class {
                let mut taken = [0usize; 256];
                let keep: Vec<usize> = set
                    .labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| {
                        taken[l as usize] += 1;
                        taken[l as usize] <= *limit
                    })
                    .map(|(i, _)| i)
                    .collect();
                ds = ds.select(&keep);
            }
            Ok((ds, grid))
        }
        DataSource::SynthDigits { seed, per_class } => {
            Ok((data::preprocess_images(&data::synth_digits(*seed, *per_class))?, grid))
        }
        DataSource::Csv { path, window, horizon } => {
            let table = TimeSeriesTable::load_csv(path)?;
            series(&table, *window, *horizon)
        }
        DataSource::SynthCpi {
            seed,
            months,
            items,
            window,
            horizon,
        } => series(&data::synth_cpi(*seed, *months, *items)?, *window, *horizon),
        DataSource::DatasetDir { path } => Ok((Dataset::load_dir(path)?, RoleLayout::Strip)),
    }
}

/// Panel layout for role vectors of a network trained on `source`.
pub fn role_layout(source: &DataSource) -> Result<RoleLayout> {
    match source {
        DataSource::Idx { .. } | DataSource::SynthDigits { .. } => Ok(RoleLayout::ImageGrid {
            rows: IMAGE_SIDE,
            cols: IMAGE_SIDE,
        }),
        DataSource::Csv { path, window, .. } => Ok(RoleLayout::Series {
            items: TimeSeriesTable::load_csv(path)?.names().to_vec(),
            window: *window,
        }),
        DataSource::SynthCpi {
            seed,
            months,
            items,
            window,
            ..
        } => Ok(RoleLayout::Series {
            items: data::synth_cpi(*seed, *months, *items)?.names().to_vec(),
            window: *window,
        }),
        DataSource::DatasetDir { .. } => Ok(RoleLayout::Strip),
    }
}

fn series(table: &TimeSeriesTable, window: usize, horizon: usize) -> Result<(Dataset, RoleLayout)> {
    let ds = data::window_timeseries(table, window, horizon)?;
    let layout = RoleLayout::Series {
        items: table.names().to_vec(),
        window,
    };
    Ok((ds, layout))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RunStatus {
    Complete,
    Failed { stage: String, error: String },
}

/// Headline numbers of a finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub samples: usize,
    pub layer_sizes: Vec<usize>,
    pub training_steps: u64,
    pub final_error: f64,
    pub zero_variance_entries: usize,
    pub cosine_sum_initial: f64,
    pub cosine_sum_final: f64,
    pub flips: usize,
    pub top_height_aligned: f64,
    pub top_height_unaligned: f64,
    pub resolutions: Vec<usize>,
    /// Each finer cut refines each coarser one.
    pub nested: bool,
    pub nnmf_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    pub config_sha256: String,
    pub status: RunStatus,
    pub files: Vec<FileEntry>,
    pub summary: Option<RunSummary>,
}

impl Manifest {
    /// Digest over the config hash, status and every file digest.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.config_sha256.as_bytes());
        h.update(serde_json::to_vec(&self.status).expect("status serializes"));
        for f in &self.files {
            h.update(f.path.as_bytes());
            h.update(f.sha256.as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

struct Artifacts {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl Artifacts {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(FileEntry {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write(rel, &text)
    }

    fn csv(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage,
        source: Box::new(e),
    })
}

/// Runs every stage and writes the artifacts under `out_dir`. A manifest is
/// written in all cases; on failure it names the failing stage and lists the
/// files written so far.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    let mut art = Artifacts {
        root: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    let outcome = stages(cfg, &mut art);
    let status = match &outcome {
        Ok(_) => RunStatus::Complete,
        Err(Error::Stage { stage, source }) => RunStatus::Failed {
            stage: stage.to_string(),
            error: source.to_string(),
        },
        Err(e) => RunStatus::Failed {
            stage: "unknown".into(),
            error: e.to_string(),
        },
    };
    let manifest = Manifest {
        version: MANIFEST_FORMAT_VERSION,
        name: cfg.name.clone(),
        seed: cfg.seed,
        config_sha256: cfg.hash(),
        status,
        files: art.files.clone(),
        summary: outcome.as_ref().ok().cloned(),
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    outcome.map(|_| manifest)
}

fn stages(cfg: &RunConfig, art: &mut Artifacts) -> Result<RunSummary> {
    staged("validate", cfg.validate())?;
    art.json("config.json", cfg)?;

    let (ds, layout) = staged("data", load_data(&cfg.data))?;
    if let Some(norm) = ds.normalization() {
        art.json("normalization.json", norm)?;
    }

    let mut sizes = vec![ds.n_inputs()];
    sizes.extend(&cfg.hidden);
    sizes.push(ds.n_outputs());
    let train_cfg = cfg.train_config();
    let mut net = staged("train", Network::init(&sizes, cfg.seed))?;
    let trace = staged("train", net.train(&ds, &train_cfg))?;
    let final_error = staged("train", net.training_error(&ds))?;
    let steps = train_cfg.total_steps(ds.len());
    art.json(
        "network.json",
        &net.to_document(Some(TrainingMeta {
            config: train_cfg,
            steps,
            final_error,
            error_trace: trace,
        })),
    )?;

    let raw = staged("features", feature_vectors_with(&net, &ds, cfg.output_source))?;
    art.csv("features_raw.csv", |b| raw.write_csv(b))?;
    art.json("features_raw.json", &raw)?;
    art.write(
        "features_raw.svg",
        svg::render_feature_heatmap(raw.rows(), raw.n_inputs(), "Feature vectors before alignment").as_bytes(),
    )?;

    let (aligned, align_trace) = align_signs(&raw, cfg.align_iterations, cfg.align_seed());
    art.csv("features_aligned.csv", |b| aligned.write_csv(b))?;
    art.json("features_aligned.json", &aligned)?;
    art.csv("alignment_trace.csv", |b| align_trace.write_csv(b))?;
    art.write(
        "features_aligned.svg",
        svg::render_feature_heatmap(aligned.rows(), aligned.n_inputs(), "Feature vectors after alignment")
            .as_bytes(),
    )?;
    let mut series = vec![align_trace.initial];
    series.extend(&align_trace.cosine_sum_series);
    art.write(
        "alignment_trace.svg",
        svg::render_series(&series, "Sum of pairwise cosines during alignment").as_bytes(),
    )?;

    let dendro = staged("cluster", ward_cluster(&aligned))?;
    let dendro_raw = staged("cluster", ward_cluster(&raw))?;
    art.json("dendrogram.json", &dendro)?;
    art.write("dendrogram.nwk", dendro.to_newick().as_bytes())?;
    art.json("dendrogram_unaligned.json", &dendro_raw)?;
    art.write("dendrogram_unaligned.nwk", dendro_raw.to_newick().as_bytes())?;
    art.write(
        "dendrogram.svg",
        svg::render_dendrogram(&dendro, "Ward dendrogram (aligned features)", None).as_bytes(),
    )?;
    art.write(
        "dendrogram_unaligned.svg",
        svg::render_dendrogram(&dendro_raw, "Ward dendrogram (unaligned features)", None).as_bytes(),
    )?;

    let mut resolutions = cfg.resolutions.clone();
    resolutions.sort_unstable();
    resolutions.dedup();
    let mut reports: Vec<ClusterReport> = Vec::new();
    for &c in &resolutions {
        let report = staged("cut", cut(&dendro, &aligned, c))?;
        let dir = format!("c{c:02}");
        art.csv(&format!("{dir}/assignment.csv"), |b| report.write_assignment_csv(b))?;
        art.csv(&format!("{dir}/roles.csv"), |b| report.write_roles_csv(b))?;
        let panels = staged("render", svg::render_report_roles(&report, &layout))?;
        for (m, panel) in panels.iter().enumerate() {
            art.write(&format!("{dir}/role_{:02}.svg", m + 1), panel.as_bytes())?;
        }
        art.write(
            &format!("{dir}/network.svg"),
            svg::render_network(
                &net,
                cfg.prune_threshold,
                Some(&report.assignment),
                &format!("Pruned network, |w| >= {}, {c} clusters", cfg.prune_threshold),
            )
            .as_bytes(),
        )?;
        reports.push(report);
    }
    let nested = reports
        .windows(2)
        .all(|p| is_refinement(&p[1].assignment, &p[0].assignment));

    let mut nnmf_residual = None;
    if let Some(n) = &cfg.nnmf {
        let v = nonneg_features(&aligned);
        let result = staged("nnmf", nnmf_best_of(&v, n.rank, n.iterations, n.restarts, cfg.nnmf_seed()))?;
        let assignment = nnmf_assign(&result);
        let report = staged(
            "nnmf",
            ClusterReport::from_assignment(&aligned, assignment, n.rank),
        )?;
        art.json("nnmf/result.json", &result)?;
        art.csv("nnmf/assignment.csv", |b| report.write_assignment_csv(b))?;
        art.csv("nnmf/roles.csv", |b| report.write_roles_csv(b))?;
        nnmf_residual = Some(result.residual);
    }

    let top = |d: &clustering::Dendrogram| d.merges().last().map_or(0.0, |m| m.height);
    let summary = RunSummary {
        samples: ds.len(),
        layer_sizes: sizes,
        training_steps: steps,
        final_error,
        zero_variance_entries: raw.flagged_count(),
        cosine_sum_initial: align_trace.initial,
        cosine_sum_final: align_trace.final_sum(),
        flips: align_trace.flip_count(),
        top_height_aligned: top(&dendro),
        top_height_unaligned: top(&dendro_raw),
        resolutions,
        nested,
        nnmf_residual,
    };
    art.json("summary.json", &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            RunConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(RunConfig::preset("nope").is_none());
    }

    #[test]
    fn resolution_above_unit_count_is_rejected() {
        let mut cfg = RunConfig::smoke();
        cfg.resolutions = vec![2, 13];
        assert!(matches!(cfg.validate(), Err(Error::ClusterCount { c: 13, max: 12 })));
    }

    #[test]
    fn hash_ignores_nothing_but_changes_with_config() {
        let a = RunConfig::smoke();
        let mut b = RunConfig::smoke();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = RunConfig::e2();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn failed_validation_writes_partial_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::smoke();
        cfg.resolutions = vec![99];
        let err = run_pipeline(&cfg, dir.path()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "validate", .. }));
        let m = Manifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(matches!(m.status, RunStatus::Failed { ref stage, .. } if stage == "validate"));
        assert!(m.files.is_empty());
    }
}
