use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gidseg::autodiff::{encode_tensors, load_checkpoint, save_checkpoint, save_tensors, Tensor};
use gidseg::hge::KernelBank;
use gidseg::io::{
    encode_labels, generate_scene, read_cloud, read_labels, write_atomic, write_cloud, CloudFormat, PointCloud,
    SceneSpec,
};
use gidseg::pipeline::{
    compute_metrics, extract_features, feature_tensors, infer, preprocess, run_experiment, sweep, sweep_csv,
    test_seed, RunConfig,
};

type Real = f32;

const MODEL_FILE: &str = "model.gids";
const CONFIG_FILE: &str = "config.json";

#[derive(Parser)]
#[command(name = "gidseg", version, about = "Weakly supervised point cloud segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration file plus the flags that override it.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON run configuration; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Zero the identity descriptor and drop the adversarial branch.
    #[arg(long)]
    no_pim: bool,
    /// Train without the discriminator.
    #[arg(long)]
    no_disc: bool,
    /// Reuse the coordinate graph in every EdgeConv layer.
    #[arg(long)]
    static_graph: bool,
    /// Dense neighbors per voxel point.
    #[arg(long)]
    k: Option<usize>,
    /// Graph neighbors per voxel point.
    #[arg(long)]
    m: Option<usize>,
    /// Number of radial kernels.
    #[arg(long)]
    j: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if self.no_pim {
            cfg.model.hge.pim_enabled = false;
            cfg.model.adversarial = false;
        }
        if self.no_disc {
            cfg.model.adversarial = false;
        }
        if self.static_graph {
            cfg.model.hge.gsm.dynamic_graph = false;
        }
        if let Some(m) = self.m {
            cfg.model.hge.gsm.m = m;
        }
        let bank = &mut cfg.model.hge.bank;
        if let Some(j) = self.j {
            let fresh = KernelBank::geometric(j, bank.k);
            bank.gammas = fresh.gammas;
        }
        if let Some(k) = self.k {
            bank.k = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic scene (cloud plus sibling .labels file).
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output cloud (.bin or .ply).
        #[arg(long)]
        out: PathBuf,
        /// Scene description JSON instead of a random four-class scene.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Voxelize a cloud and write the network-ready artifacts into a directory.
    Preprocess {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the configured data and write the model directory.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label every point of a cloud with a trained model.
    Infer {
        /// Directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output `.labels` file; timing goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted labels against ground truth.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate once per annotation fraction; writes a CSV.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,1.0")]
        fractions: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write encoder descriptors of a cloud in the checkpoint tensor format.
    ExportFeatures {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn cloud_format(path: &Path) -> Result<CloudFormat> {
    match CloudFormat::from_path(path) {
        Some(f) => Ok(f),
        None => bail!("{}: expected a .bin or .ply extension", path.display()),
    }
}

fn labels_path(cloud: &Path) -> PathBuf {
    cloud.with_extension("labels")
}

fn load_input(input: &Path, labels: Option<&Path>, num_classes: usize) -> Result<PointCloud<Real>> {
    let mut cloud = read_cloud(input, cloud_format(input)?).with_context(|| format!("reading {}", input.display()))?;
    if let Some(l) = labels {
        let values = read_labels(l).with_context(|| format!("reading {}", l.display()))?;
        cloud.attach_labels(values, num_classes)?;
    }
    Ok(cloud)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn load_model(dir: &Path) -> Result<(RunConfig, gidseg::autodiff::ParamStore<Real>)> {
    let cfg = RunConfig::load(dir.join(CONFIG_FILE)).with_context(|| format!("loading model config in {}", dir.display()))?;
    let params = load_checkpoint(dir.join(MODEL_FILE)).with_context(|| format!("loading weights in {}", dir.display()))?;
    Ok((cfg, params))
}

fn synth(seed: u64, out: &Path, scene: Option<&Path>) -> Result<()> {
    let spec = match scene {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SceneSpec::random_four_class(seed),
    };
    let cloud: PointCloud<Real> = generate_scene(&spec)?;
    write_cloud(out, &cloud, cloud_format(out)?)?;
    write_atomic(labels_path(out), &encode_labels(cloud.labels().expect("scenes are labeled")))?;
    log::info!("wrote {} points to {}", cloud.len(), out.display());
    Ok(())
}

fn preprocess_cmd(cfg: &RunConfig, input: &Path, labels: Option<&Path>, out: &Path) -> Result<()> {
    let cloud = load_input(input, labels, cfg.model.ccd.num_classes)?;
    let pre = preprocess(&cloud, &cfg.preprocess, &cfg.model.hge, test_seed(cfg, 0))?;
    let voxel = PointCloud::new(pre.voxel.points.clone())?;
    let dense = PointCloud::new(pre.dense.points.clone())?;
    write_cloud(out.join("voxel.bin"), &voxel, CloudFormat::KittiBin)?;
    write_cloud(out.join("dense.bin"), &dense, CloudFormat::KittiBin)?;
    if let (Some(l), Some(mask)) = (&pre.voxel_labels, &pre.mask) {
        write_atomic(out.join("voxel.labels"), &encode_labels(l))?;
        write_json(&out.join("sparse_mask.json"), &serde_json::json!({
            "fraction": mask.fraction,
            "seed": mask.seed,
            "indices": mask.indices,
        }))?;
    }
    let edges = &pre.neighbors.graph_edges;
    let m = edges.first().map_or(0, Vec::len);
    let graph = Tensor::from_fn(edges.len(), m, |r, c| edges[r][c] as Real);
    let knn = &pre.neighbors.knn_dense;
    let knn_index = Tensor::from_fn(knn.len(), pre.neighbors.k, |r, c| knn[r][c].index as Real);
    let selected = Tensor::from_fn(pre.selected.len(), 1, |r, _| pre.selected[r] as Real);
    save_tensors(
        out.join("inputs.gids"),
        [
            ("selected", &selected),
            ("features", &pre.inputs.features),
            ("graph_edges", &graph),
            ("dense_knn_index", &knn_index),
            ("dense_knn_sq_dist", &*pre.inputs.sq_dist),
        ],
    )?;
    log::info!("{} voxel points, {} dense points", pre.voxel.len(), pre.dense.len());
    Ok(())
}

fn train_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (result, params) = run_experiment::<Real>(cfg)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(out.join(CONFIG_FILE), cfg.to_json().as_bytes())?;
    save_checkpoint(out.join(MODEL_FILE), &params)?;
    write_json(&out.join("train_report.json"), &result)?;
    write_json(&out.join("metrics.json"), &result.metrics)?;
    write_json(&out.join("timing.json"), &result.timings)?;
    println!(
        "labeled accuracy {:.4}; held-out OA {:.4} mAcc {:.4} mIoU {:.4}",
        result.labeled_accuracy, result.metrics.oa, result.metrics.macc, result.metrics.miou
    );
    Ok(())
}

fn infer_cmd(model: &Path, input: &Path, out: &Path) -> Result<()> {
    let (cfg, params) = load_model(model)?;
    let cloud = load_input(input, None, cfg.model.ccd.num_classes)?;
    let pred = infer(&params, &cfg, &cloud, test_seed(&cfg, 0))?;
    write_atomic(out, &encode_labels(&pred.dense_labels))?;
    write_json(&out.with_extension("timing.json"), &pred.timing)?;
    println!(
        "labeled {} points; preprocess {:.1} ms, forward {:.1} ms, broadcast {:.1} ms",
        pred.dense_labels.len(),
        pred.timing.preprocess_ms,
        pred.timing.forward_ms,
        pred.timing.broadcast_ms
    );
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, pred: &Path, truth: &Path, out: &Path) -> Result<()> {
    let p = read_labels(pred).with_context(|| format!("reading {}", pred.display()))?;
    let t = read_labels(truth).with_context(|| format!("reading {}", truth.display()))?;
    let metrics = compute_metrics(&p, &t, cfg.model.ccd.num_classes)?;
    write_json(out, &metrics)?;
    println!("OA {:.4} mAcc {:.4} mIoU {:.4}", metrics.oa, metrics.macc, metrics.miou);
    Ok(())
}

fn sweep_cmd(cfg: &RunConfig, fractions: &[f64], out: &Path) -> Result<()> {
    if fractions.is_empty() {
        bail!("--fractions needs at least one value");
    }
    let rows = sweep::<Real>(cfg, fractions)?;
    let csv = sweep_csv(&rows);
    write_atomic(out, csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

fn export_cmd(model: &Path, input: &Path, labels: Option<&Path>, out: &Path) -> Result<()> {
    let (cfg, params) = load_model(model)?;
    let cloud = load_input(input, labels, cfg.model.ccd.num_classes)?;
    let pre = preprocess(&cloud, &cfg.preprocess, &cfg.model.hge, test_seed(&cfg, 0))?;
    let features = extract_features(&params, &cfg, &pre)?;
    let tensors = feature_tensors(&features, &pre);
    write_atomic(out, &encode_tensors(tensors.iter().map(|(n, t)| (n.as_str(), t))))?;
    println!("exported {} x {} descriptors", features.hgd.rows(), features.hgd.cols());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { seed, out, scene } => synth(seed, &out, scene.as_deref()),
        Command::Preprocess { cfg, input, labels, out } => preprocess_cmd(&cfg.resolve()?, &input, labels.as_deref(), &out),
        Command::Train { cfg, out } => train_cmd(&cfg.resolve()?, &out),
        Command::Infer { model, input, out } => infer_cmd(&model, &input, &out),
        Command::Eval { cfg, pred, truth, out } => eval_cmd(&cfg.resolve()?, &pred, &truth, &out),
        Command::Sweep { cfg, fractions, out } => sweep_cmd(&cfg.resolve()?, &fractions, &out),
        Command::ExportFeatures { model, input, labels, out } => export_cmd(&model, &input, labels.as_deref(), &out),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
