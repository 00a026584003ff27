use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hiermod::clustering::{cut, ward_cluster, ClusterReport, Dendrogram};
use hiermod::features::{align_signs, feature_vectors_with, FeatureMatrix, OutputSource};
use hiermod::lnn::{Network, NetworkDocument, OrderPolicy, TrainingMeta};
use hiermod::nnmf::{nnmf_assign, nnmf_best_of, nonneg_features};
use hiermod::report::{
    load_data, render_dendrogram, render_feature_heatmap, render_network, render_report_roles, role_layout,
    run_pipeline, NnmfConfig, RunConfig, RunStatus, PRESETS,
};
use hiermod::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Cluster the hidden units of L1-regularized sigmoid networks into a hierarchy of roles.
///
/// Settings come from `--config` (a JSON run configuration) or `--preset`,
/// then individual flags override single fields. Stage commands read and
/// write files under the output root.
#[derive(Parser)]
#[command(name = "hiermod", version)]
struct Cli {
    /// JSON run configuration. Takes precedence over --preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Named preset: e1, e1-desk, e2, e2-desk, smoke.
    #[arg(long, global = true, default_value = "e1-desk")]
    preset: String,

    /// Output root for every artifact.
    #[arg(long, global = true, env = "HIERMOD_OUT", default_value = "hiermod-out")]
    out: PathBuf,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    UniformRandom,
    CyclicByClass,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Model,
    Targets,
}

#[derive(clap::Args, Default)]
struct Overrides {
    /// Master seed [presets: 1].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Hidden layer sizes, comma separated [E1: 64, E2: 40].
    #[arg(long, global = true, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// L1 strength λ [E1: 1.1e-5, E2: 2e-5].
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Derivative floor ε₁ added to o(1−o) [0.001].
    #[arg(long, global = true)]
    epsilon1: Option<f64>,
    /// Mean updates per sample a₁; total steps a₁·n₁ [E1: 100, E1 desk: 20, E2: 500].
    #[arg(long, global = true)]
    a1: Option<f64>,
    /// Step-size numerator η₀ [0.7].
    #[arg(long, global = true)]
    eta0: Option<f64>,
    /// Explicit step budget instead of a₁·n₁.
    #[arg(long, global = true)]
    steps: Option<u64>,
    /// Sample order [E1: cyclic-by-class, E2: uniform-random].
    #[arg(long, global = true, value_enum)]
    order: Option<Order>,
    /// Sign-alignment iterations a₀ [5000].
    #[arg(long, global = true)]
    align_iterations: Option<usize>,
    /// Output values correlated against [model].
    #[arg(long, global = true, value_enum)]
    output_source: Option<Source>,
    /// Cluster counts to cut at, comma separated [E1: 4,8,16, E2: 3,6,12].
    #[arg(long, global = true, value_delimiter = ',')]
    resolutions: Option<Vec<usize>>,
    /// Edge threshold ξ for the pruned network view [E1: 0.6, E2: 0.001].
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// NNMF rank [E1: 16, E2: 12].
    #[arg(long, global = true)]
    nnmf_rank: Option<usize>,
    /// NNMF multiplicative-update rounds [1000].
    #[arg(long, global = true)]
    nnmf_iterations: Option<usize>,
    /// NNMF random restarts [full: 100, desk: 5].
    #[arg(long, global = true)]
    nnmf_restarts: Option<usize>,
    /// Skip the NNMF baseline in `pipeline`.
    #[arg(long, global = true)]
    no_nnmf: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as JSON.
    Config,
    /// Write the configured dataset (normalized) as CSV files.
    Data,
    /// Train a network; writes network.json.
    Train,
    /// Correlation features per hidden unit; writes features_raw.{json,csv}.
    Features {
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Sign alignment; writes features_aligned.{json,csv} and alignment_trace.csv.
    Align {
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Ward clustering; writes dendrogram.{json,nwk}.
    Cluster {
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Cut the dendrogram at each resolution; writes cNN/{report.json,assignment.csv,roles.csv}.
    Cut {
        #[arg(long)]
        dendrogram: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Render one SVG per cluster role for each cut report.
    Roles {
        /// Report files; defaults to cNN/report.json for every resolution.
        #[arg(long)]
        report: Vec<PathBuf>,
    },
    /// NNMF clustering baseline; writes nnmf/{result.json,assignment.csv,roles.csv}.
    Nnmf {
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Render dendrogram, feature heatmap and pruned-network SVGs from saved files.
    Render {
        #[arg(long)]
        dendrogram: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        network: Option<PathBuf>,
        /// Colour hidden units of --network by this cut report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run every stage and write a manifest.
    Pipeline,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set!(
            seed => cfg.seed,
            hidden => cfg.hidden,
            lambda => cfg.lambda,
            epsilon1 => cfg.epsilon1,
            a1 => cfg.a1,
            eta0 => cfg.eta0,
            align_iterations => cfg.align_iterations,
            resolutions => cfg.resolutions,
            threshold => cfg.prune_threshold,
        );
        if let Some(steps) = self.steps {
            cfg.total_steps = Some(steps);
        }
        if let Some(order) = self.order {
            cfg.order = match order {
                Order::UniformRandom => OrderPolicy::UniformRandom,
                Order::CyclicByClass => OrderPolicy::CyclicByClass,
            };
        }
        if let Some(source) = self.output_source {
            cfg.output_source = match source {
                Source::Model => OutputSource::Model,
                Source::Targets => OutputSource::Targets,
            };
        }
        if self.no_nnmf {
            cfg.nnmf = None;
        } else if self.nnmf_rank.is_some() || self.nnmf_iterations.is_some() || self.nnmf_restarts.is_some() {
            let base = cfg.nnmf.clone().unwrap_or(NnmfConfig {
                rank: cfg.resolutions.iter().copied().max().unwrap_or(1),
                iterations: 1000,
                restarts: 5,
            });
            cfg.nnmf = Some(NnmfConfig {
                rank: self.nnmf_rank.unwrap_or(base.rank),
                iterations: self.nnmf_iterations.unwrap_or(base.iterations),
                restarts: self.nnmf_restarts.unwrap_or(base.restarts),
            });
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => read_json(path)?,
        None => RunConfig::preset(&cli.preset).ok_or_else(|| {
            Error::param(format!("unknown preset {:?}; choose one of {}", cli.preset, PRESETS.join(", ")))
        })?,
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

struct Out {
    root: PathBuf,
}

impl Out {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write(rel, &text)
    }

    fn csv(&self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    fn or_default(&self, given: &Option<PathBuf>, rel: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.path(rel))
    }
}

fn load_network(path: &Path) -> Result<Network> {
    Network::from_document(read_json::<NetworkDocument>(path)?)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = Out { root: cli.out.clone() };
    match &cli.command {
        Command::Config => {
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
        Command::Data => {
            let (ds, _) = load_data(&cfg.data)?;
            let dir = out.path("dataset");
            ds.save_dir(&dir)?;
            println!("wrote {} samples to {}", ds.len(), dir.display());
        }
        Command::Train => {
            let (ds, _) = load_data(&cfg.data)?;
            let mut sizes = vec![ds.n_inputs()];
            sizes.extend(&cfg.hidden);
            sizes.push(ds.n_outputs());
            let train = cfg.train_config();
            let mut net = Network::init(&sizes, cfg.seed)?;
            let trace = net.train(&ds, &train)?;
            let final_error = net.training_error(&ds)?;
            println!("trained {sizes:?} on {} samples, E = {final_error:.6}", ds.len());
            let steps = train.total_steps(ds.len());
            out.json(
                "network.json",
                &net.to_document(Some(TrainingMeta {
                    config: train,
                    steps,
                    final_error,
                    error_trace: trace,
                })),
            )?;
        }
        Command::Features { network } => {
            let net = load_network(&out.or_default(network, "network.json"))?;
            let (ds, _) = load_data(&cfg.data)?;
            let fm = feature_vectors_with(&net, &ds, cfg.output_source)?;
            println!("{} units, {} zero-variance entries", fm.len(), fm.flagged_count());
            out.json("features_raw.json", &fm)?;
            out.csv("features_raw.csv", |b| fm.write_csv(b))?;
        }
        Command::Align { features } => {
            let fm: FeatureMatrix = read_json(&out.or_default(features, "features_raw.json"))?;
            let (aligned, trace) = align_signs(&fm, cfg.align_iterations, cfg.align_seed());
            println!(
                "cosine sum {:.4} -> {:.4} after {} flips",
                trace.initial,
                trace.final_sum(),
                trace.flip_count()
            );
            out.json("features_aligned.json", &aligned)?;
            out.csv("features_aligned.csv", |b| aligned.write_csv(b))?;
            out.csv("alignment_trace.csv", |b| trace.write_csv(b))?;
        }
        Command::Cluster { features } => {
            let fm: FeatureMatrix = read_json(&out.or_default(features, "features_aligned.json"))?;
            let d = ward_cluster(&fm)?;
            out.json("dendrogram.json", &d)?;
            out.write("dendrogram.nwk", d.to_newick().as_bytes())?;
        }
        Command::Cut { dendrogram, features } => {
            let d: Dendrogram = read_json(&out.or_default(dendrogram, "dendrogram.json"))?;
            let fm: FeatureMatrix = read_json(&out.or_default(features, "features_aligned.json"))?;
            for &c in &cfg.resolutions {
                let report = cut(&d, &fm, c)?;
                println!("c = {c}: sizes {:?}", report.sizes);
                let dir = format!("c{c:02}");
                out.json(&format!("{dir}/report.json"), &report)?;
                out.csv(&format!("{dir}/assignment.csv"), |b| report.write_assignment_csv(b))?;
                out.csv(&format!("{dir}/roles.csv"), |b| report.write_roles_csv(b))?;
            }
        }
        Command::Roles { report } => {
            let layout = role_layout(&cfg.data)?;
            let paths: Vec<PathBuf> = if report.is_empty() {
                cfg.resolutions
                    .iter()
                    .map(|c| out.path(&format!("c{c:02}/report.json")))
                    .collect()
            } else {
                report.clone()
            };
            for path in paths {
                let r: ClusterReport = read_json(&path)?;
                let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
                for (m, svg) in render_report_roles(&r, &layout)?.iter().enumerate() {
                    let target = dir.join(format!("role_{:02}.svg", m + 1));
                    fs::write(&target, svg).map_err(|e| Error::io(&target, e))?;
                    println!("wrote {}", target.display());
                }
            }
        }
        Command::Nnmf { features } => {
            let n = cfg
                .nnmf
                .clone()
                .ok_or_else(|| Error::param("NNMF is disabled in this configuration"))?;
            let fm: FeatureMatrix = read_json(&out.or_default(features, "features_aligned.json"))?;
            let result = nnmf_best_of(&nonneg_features(&fm), n.rank, n.iterations, n.restarts, cfg.nnmf_seed())?;
            println!("best residual {:.6} from restart {}", result.residual, result.restart_index);
            let report = ClusterReport::from_assignment(&fm, nnmf_assign(&result), n.rank)?;
            out.json("nnmf/result.json", &result)?;
            out.csv("nnmf/assignment.csv", |b| report.write_assignment_csv(b))?;
            out.csv("nnmf/roles.csv", |b| report.write_roles_csv(b))?;
        }
        Command::Render {
            dendrogram,
            features,
            network,
            report,
        } => {
            let mut rendered = 0;
            if let Some(path) = dendrogram {
                let d: Dendrogram = read_json(path)?;
                out.write("dendrogram.svg", render_dendrogram(&d, "Ward dendrogram", None).as_bytes())?;
                rendered += 1;
            }
            if let Some(path) = features {
                let fm: FeatureMatrix = read_json(path)?;
                out.write(
                    "features.svg",
                    render_feature_heatmap(fm.rows(), fm.n_inputs(), "Feature vectors").as_bytes(),
                )?;
                rendered += 1;
            }
            if let Some(path) = network {
                let net = load_network(path)?;
                let r: Option<ClusterReport> = report.as_deref().map(read_json).transpose()?;
                let heading = format!("Pruned network, |w| >= {}", cfg.prune_threshold);
                let svg = render_network(&net, cfg.prune_threshold, r.as_ref().map(|r| r.assignment.as_slice()), &heading);
                out.write("network.svg", svg.as_bytes())?;
                rendered += 1;
            }
            if rendered == 0 {
                return Err(Error::param("nothing to render; pass --dendrogram, --features or --network"));
            }
        }
        Command::Pipeline => {
            let manifest = run_pipeline(&cfg, &out.root)?;
            if let Some(s) = &manifest.summary {
                println!(
                    "{}: E = {:.5}, cosine sum {:.3} -> {:.3}, cuts {:?}, nested {}",
                    manifest.name, s.final_error, s.cosine_sum_initial, s.cosine_sum_final, s.resolutions, s.nested
                );
            }
            debug_assert_eq!(manifest.status, RunStatus::Complete);
            println!("{} files, manifest {}", manifest.files.len(), out.path("manifest.json").display());
        }
    }
    Ok(())
}

fn is_validation(e: &Error) -> bool {
    match e {
        Error::Stage { stage, source } => *stage == "validate" || is_validation(source),
        Error::InvalidArchitecture(_)
        | Error::InvalidParameter(_)
        | Error::ClusterCount { .. }
        | Error::DimensionMismatch { .. } => true,
        _ => false,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if is_validation(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
