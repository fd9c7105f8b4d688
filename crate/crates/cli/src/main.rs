use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use srk_core::bsp::{extract_mesh, interpolate_latent, BspDecoder};
use srk_core::cluster::{attach_initial_boxes, multi_scale_cluster, AngleMean, ClusterConfig};
use srk_core::eval::{evaluate_dataset, SceneEval, DEFAULT_CONF_FLOOR};
use srk_core::icp::{icp_align, IcpConfig};
use srk_core::io;
use srk_core::labels::LabelSystem;
use srk_core::latent::{expected_code, SpanKind};
use srk_core::metrics::{chamfer, lightfield_distance, pcr, voxel_iou, LfdConfig, MetricKind, MetricParams};
use srk_core::pipeline::{reconstruct_scene, ReconConfig, ReconInputs, ReconMode};
use srk_core::synth::{fixture_decoder, fixture_pool, gen_scene, SceneSpec};

const EXIT_INPUT: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "srk", version, about = "Instance mesh reconstruction for partially observed point scenes")]
struct Cli {
    /// TOML file overriding the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Segmentation-to-reconstruction label table (tab separated).
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multi-scale clustering of a scene into instance proposals.
    Cluster(ClusterCmd),
    /// Decode, project or retrieve a mesh per proposal and place it.
    Reconstruct(ReconstructCmd),
    /// Nearest pool entries for latent codes.
    Retrieve(RetrieveCmd),
    /// One metric between two shapes.
    Metric(MetricCmd),
    /// Dataset mean AP under one metric and threshold.
    Evaluate(EvaluateCmd),
    /// Rigidly align a mesh to a point cloud.
    Icp(IcpCmd),
    /// Generate a synthetic scene with ground truth.
    Synth(SynthCmd),
    /// Decode meshes along a straight line between two codes.
    Interp(InterpCmd),
}

// ---- config file ---------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    cluster: ClusterFlags,
    reconstruct: ReconFlags,
    icp: IcpFlags,
    metrics: MetricFlags,
    evaluate: EvalFlags,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else { return Ok(Config::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ClusterFlags {
    /// Clustering radii in meters, comma separated.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long = "min-points", id = "cluster_min_points", value_name = "MIN_POINTS")]
    min_points: Option<usize>,
    #[arg(long)]
    dedup_iou: Option<f64>,
    /// Also cluster the unshifted coordinates.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dual_set: Option<bool>,
    /// `circular` or `arithmetic`.
    #[arg(long)]
    angle_mean: Option<String>,
    /// Shorthand for `--angle-mean arithmetic`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    arithmetic_angle_mean: Option<bool>,
}

impl ClusterFlags {
    fn or(self, base: &ClusterFlags) -> ClusterFlags {
        ClusterFlags {
            radii: self.radii.or(base.radii.clone()),
            min_points: self.min_points.or(base.min_points),
            dedup_iou: self.dedup_iou.or(base.dedup_iou),
            dual_set: self.dual_set.or(base.dual_set),
            angle_mean: self.angle_mean.or(base.angle_mean.clone()),
            arithmetic_angle_mean: self.arithmetic_angle_mean.or(base.arithmetic_angle_mean),
        }
    }

    fn build(&self) -> Result<ClusterConfig> {
        let d = ClusterConfig::default();
        Ok(ClusterConfig {
            radii: self.radii.clone().unwrap_or(d.radii),
            min_points: self.min_points.unwrap_or(d.min_points),
            dedup_iou: self.dedup_iou.unwrap_or(d.dedup_iou),
            dual_set: self.dual_set.unwrap_or(d.dual_set),
            angle_mean: match (parse_angle_mean(self.angle_mean.as_deref())?, self.arithmetic_angle_mean) {
                (AngleMean::Circular, Some(true)) if self.angle_mean.is_some() => {
                    bail!("--arithmetic-angle-mean contradicts --angle-mean circular")
                }
                (_, Some(true)) => AngleMean::Arithmetic,
                (m, _) => m,
            },
        })
    }
}

fn parse_angle_mean(s: Option<&str>) -> Result<AngleMean> {
    match s {
        None | Some("circular") => Ok(AngleMean::Circular),
        Some("arithmetic") => Ok(AngleMean::Arithmetic),
        Some(o) => bail!("unknown angle mean `{o}` (expected circular or arithmetic)"),
    }
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReconFlags {
    /// `generate`, `project` or `retrieve`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    conf_floor: Option<f64>,
    #[arg(long)]
    min_points: Option<usize>,
    /// Pool neighbours spanning the projection subspace.
    #[arg(long)]
    k: Option<usize>,
    /// `linear` or `affine`.
    #[arg(long)]
    span: Option<String>,
    /// Shorthand for `--span affine`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    affine_span: Option<bool>,
    /// Restrict pool lookups to the proposal's category.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    category_filter: Option<bool>,
    /// Sample codes instead of taking the mean.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    stochastic: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    /// Refine each placed mesh with ICP against its proposal points.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    icp: Option<bool>,
    /// Record per-proposal wall time in the report.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    timing: Option<bool>,
    /// `ply` or `obj`.
    #[arg(long)]
    mesh_format: Option<String>,
}

impl ReconFlags {
    fn or(self, base: &ReconFlags) -> ReconFlags {
        ReconFlags {
            mode: self.mode.or(base.mode.clone()),
            conf_floor: self.conf_floor.or(base.conf_floor),
            min_points: self.min_points.or(base.min_points),
            k: self.k.or(base.k),
            span: self.span.or(base.span.clone()),
            affine_span: self.affine_span.or(base.affine_span),
            category_filter: self.category_filter.or(base.category_filter),
            stochastic: self.stochastic.or(base.stochastic),
            seed: self.seed.or(base.seed),
            icp: self.icp.or(base.icp),
            timing: self.timing.or(base.timing),
            mesh_format: self.mesh_format.or(base.mesh_format.clone()),
        }
    }

    fn build(&self, icp: Option<IcpConfig>) -> Result<ReconConfig> {
        let d = ReconConfig::default();
        let span = match (self.span.as_deref(), self.affine_span) {
            (Some("linear"), Some(true)) => bail!("--affine-span contradicts --span linear"),
            (None | Some("affine"), Some(true)) | (Some("affine"), _) => SpanKind::Affine,
            (None | Some("linear"), _) => SpanKind::Linear,
            (Some(o), _) => bail!("unknown span `{o}` (expected linear or affine)"),
        };
        Ok(ReconConfig {
            mode: self.mode.as_deref().map(ReconMode::parse).transpose()?.unwrap_or(d.mode),
            conf_floor: self.conf_floor.unwrap_or(d.conf_floor),
            min_points: self.min_points.unwrap_or(d.min_points),
            stochastic: self.stochastic.unwrap_or(false),
            seed: self.seed.unwrap_or(0),
            k: self.k.unwrap_or(d.k),
            span,
            category_filter: self.category_filter.unwrap_or(true),
            icp: if self.icp.unwrap_or(false) { icp } else { None },
            timing: self.timing.unwrap_or(false),
            ..d
        })
    }

    fn mesh_ext(&self) -> Result<&str> {
        match self.mesh_format.as_deref() {
            None | Some("ply") => Ok("ply"),
            Some("obj") => Ok("obj"),
            Some(o) => bail!("unknown mesh format `{o}` (expected ply or obj)"),
        }
    }
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IcpFlags {
    #[arg(long = "icp-max-iterations", id = "icp_max_iterations")]
    max_iterations: Option<usize>,
    #[arg(long = "icp-eps", id = "icp_eps")]
    convergence_eps: Option<f64>,
    #[arg(long = "icp-samples", id = "icp_samples")]
    surface_samples: Option<usize>,
    /// Also fit a uniform scale.
    #[arg(long = "icp-scale", id = "icp_scale", num_args = 0..=1, default_missing_value = "true")]
    with_scale: Option<bool>,
    /// Correspondences farther than this are dropped (meters).
    #[arg(long = "icp-max-distance", id = "icp_max_distance")]
    max_correspondence: Option<f64>,
    #[arg(long = "icp-seed", id = "icp_seed")]
    seed: Option<u64>,
}

impl IcpFlags {
    fn or(self, base: &IcpFlags) -> IcpFlags {
        IcpFlags {
            max_iterations: self.max_iterations.or(base.max_iterations),
            convergence_eps: self.convergence_eps.or(base.convergence_eps),
            surface_samples: self.surface_samples.or(base.surface_samples),
            with_scale: self.with_scale.or(base.with_scale),
            max_correspondence: self.max_correspondence.or(base.max_correspondence),
            seed: self.seed.or(base.seed),
        }
    }

    fn build(&self) -> IcpConfig {
        let d = IcpConfig::default();
        IcpConfig {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            convergence_eps: self.convergence_eps.unwrap_or(d.convergence_eps),
            surface_samples: self.surface_samples.unwrap_or(d.surface_samples),
            with_scale: self.with_scale.unwrap_or(d.with_scale),
            max_correspondence: self.max_correspondence.unwrap_or(d.max_correspondence),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MetricFlags {
    /// PCR surface distance threshold (meters).
    #[arg(long)]
    omega: Option<f64>,
    /// IoU voxel edge (meters).
    #[arg(long)]
    voxel: Option<f64>,
    /// Surface samples per mesh for Chamfer distance.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long = "metric-seed", id = "metric_seed")]
    seed: Option<u64>,
    #[arg(long)]
    lfd_image_size: Option<usize>,
    #[arg(long)]
    lfd_order: Option<usize>,
}

impl MetricFlags {
    fn or(self, base: &MetricFlags) -> MetricFlags {
        MetricFlags {
            omega: self.omega.or(base.omega),
            voxel: self.voxel.or(base.voxel),
            samples: self.samples.or(base.samples),
            seed: self.seed.or(base.seed),
            lfd_image_size: self.lfd_image_size.or(base.lfd_image_size),
            lfd_order: self.lfd_order.or(base.lfd_order),
        }
    }

    fn build(&self) -> Result<MetricParams> {
        let d = MetricParams::default();
        let lfd = LfdConfig {
            image_size: self.lfd_image_size.unwrap_or(d.lfd.image_size),
            zernike_order: self.lfd_order.unwrap_or(d.lfd.zernike_order),
        };
        lfd.validate()?;
        Ok(MetricParams {
            omega: self.omega.unwrap_or(d.omega),
            voxel: self.voxel.unwrap_or(d.voxel),
            samples: self.samples.unwrap_or(d.samples),
            seed: self.seed.unwrap_or(d.seed),
            lfd,
        })
    }
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalFlags {
    metric: Option<String>,
    threshold: Option<f64>,
    conf_floor: Option<f64>,
}

// ---- subcommands -----------------------------------------------------------

#[derive(Args)]
struct ClusterCmd {
    #[arg(long)]
    scene: PathBuf,
    /// Proposal file to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: ClusterFlags,
}

#[derive(Args)]
struct ReconstructCmd {
    /// Scene file; repeat for several scenes.
    #[arg(long, required = true)]
    scene: Vec<PathBuf>,
    /// Proposal file per scene, in the same order.
    #[arg(long, required = true)]
    proposals: Vec<PathBuf>,
    #[arg(long)]
    decoder: Option<PathBuf>,
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    flags: ReconFlags,
    #[command(flatten)]
    icp: IcpFlags,
}

#[derive(Args)]
struct RetrieveCmd {
    #[arg(long)]
    pool: PathBuf,
    /// Query code, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "proposals")]
    code: Option<Vec<f64>>,
    /// Query with the expected code of every proposal.
    #[arg(long)]
    proposals: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Only consider entries of this category.
    #[arg(long)]
    category: Option<String>,
    /// With --proposals, filter by each proposal's category.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    category_filter: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricCmd {
    /// `iou`, `cd`, `lfd` or `pcr`.
    #[arg(long)]
    kind: String,
    /// Predicted mesh.
    #[arg(long, visible_alias = "a")]
    pred: PathBuf,
    /// Reference mesh, or for PCR the observed points.
    #[arg(long, visible_alias = "b")]
    gt: PathBuf,
    /// Also write a JSON record here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: MetricFlags,
}

#[derive(Args)]
struct EvaluateCmd {
    #[arg(long)]
    gt_dir: PathBuf,
    #[arg(long)]
    pred_dir: PathBuf,
    /// `iou`, `cd`, `lfd` or `pcr`.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    conf_floor: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: MetricFlags,
}

#[derive(Args)]
struct IcpCmd {
    #[arg(long)]
    mesh: PathBuf,
    /// Target points (PLY, or any mesh file for its vertices).
    #[arg(long)]
    points: PathBuf,
    /// Aligned mesh to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    flags: IcpFlags,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Scene name used for every written file.
    #[arg(long, default_value = "scene")]
    name: String,
}

#[derive(Args)]
struct InterpCmd {
    #[arg(long)]
    decoder: PathBuf,
    /// Pool to look up --from-id / --to-id.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    from_code: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    to_code: Option<Vec<f64>>,
    #[arg(long)]
    from_id: Option<u32>,
    #[arg(long)]
    to_id: Option<u32>,
    /// Decoder category name.
    #[arg(long)]
    category: String,
    /// Number of meshes, endpoints included.
    #[arg(long, default_value_t = 5)]
    steps: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "ply")]
    mesh_format: String,
}

// ---- helpers ----------------------------------------------------------------

struct Ctx {
    config: Config,
    labels: LabelSystem,
    label_id: String,
}

fn scene_name(path: &Path) -> Result<String> {
    let file = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| anyhow!("cannot name scene from {}", path.display()))?;
    Ok(file.split('.').next().unwrap_or(file).to_string())
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, s).with_context(|| format!("writing {}", p.display()))?
        }
        None => print!("{s}"),
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SRK_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow!("SRK_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("SRK_THREADS must be a positive integer, got `{v}`");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

// ---- commands ---------------------------------------------------------------

fn cmd_cluster(ctx: &Ctx, c: ClusterCmd) -> Result<u8> {
    let cfg = c.flags.or(&ctx.config.cluster).build()?;
    let (scene, _) = io::load_scene(&c.scene, Some(&ctx.labels))?;
    let mut props = multi_scale_cluster(&scene, &ctx.labels, &cfg)?;
    attach_initial_boxes(&scene, &mut props, cfg.angle_mean)?;
    io::save_proposals(&props, &c.out)?;
    eprintln!("{} proposals from {} points", props.len(), scene.len());
    Ok(0)
}

fn cmd_reconstruct(ctx: &Ctx, c: ReconstructCmd) -> Result<u8> {
    if c.scene.len() != c.proposals.len() {
        bail!("{} scenes but {} proposal files", c.scene.len(), c.proposals.len());
    }
    let flags = c.flags.or(&ctx.config.reconstruct);
    let icp = c.icp.or(&ctx.config.icp).build();
    let cfg = flags.build(Some(icp))?;
    let ext = flags.mesh_ext()?;
    let decoder = c.decoder.as_deref().map(BspDecoder::load).transpose()?;
    let pool = c.pool.as_deref().map(io::load_pool).transpose()?;
    let pool_meshes = match (&pool, &c.pool) {
        (Some(p), Some(path)) => Some(io::load_pool_meshes(p, path.parent().unwrap_or(Path::new(".")))?),
        _ => None,
    };
    let names: Vec<String> = c.scene.iter().map(|p| scene_name(p)).collect::<Result<_>>()?;
    let mut sorted = names.clone();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        bail!("scene names must be unique");
    }
    std::fs::create_dir_all(&c.out_dir)?;
    let failed: Vec<usize> = c
        .scene
        .par_iter()
        .zip(&c.proposals)
        .zip(&names)
        .map(|((sp, pp), name)| -> Result<usize> {
            let (scene, _) = io::load_scene(sp, Some(&ctx.labels))?;
            let props = io::load_proposals(pp, Some(scene.len()))?;
            let inp = ReconInputs {
                scene: &scene,
                proposals: &props,
                labels: &ctx.labels,
                decoder: decoder.as_ref(),
                pool: pool.as_ref(),
                pool_meshes: pool_meshes.as_ref(),
            };
            let out = reconstruct_scene(&inp, &cfg)?;
            let ids: Vec<usize> = out.meshes.iter().map(|m| m.proposal).collect();
            io::write_pred(&c.out_dir, name, &out.predictions(), Some(&ids), ext)?;
            write_json(&out.report, Some(&c.out_dir.join(format!("{name}.report.json"))))?;
            Ok(out.report.failed)
        })
        .collect::<Result<_>>()?;
    let total: usize = failed.iter().sum();
    if total > 0 {
        eprintln!("{total} proposals failed; see the reports");
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

#[derive(Serialize)]
struct Neighbour {
    id: u32,
    category: String,
    distance: f64,
}

#[derive(Serialize)]
struct Query {
    query: usize,
    neighbours: Vec<Neighbour>,
}

fn cmd_retrieve(ctx: &Ctx, c: RetrieveCmd) -> Result<u8> {
    let pool = io::load_pool(&c.pool)?;
    let fixed = c
        .category
        .as_deref()
        .map(|n| ctx.labels.recon_by_name(n).ok_or_else(|| anyhow!("unknown category `{n}`")))
        .transpose()?;
    let queries: Vec<(Vec<f64>, Option<_>)> = match (&c.code, &c.proposals) {
        (Some(code), None) => vec![(code.clone(), fixed)],
        (None, Some(path)) => {
            let by_cat = c.category_filter.unwrap_or(true);
            io::load_proposals(path, None)?
                .iter()
                .map(|p| (expected_code(&p.latent), fixed.or(by_cat.then_some(p.category))))
                .collect()
        }
        _ => bail!("give exactly one of --code or --proposals"),
    };
    let mut out = Vec::with_capacity(queries.len());
    for (i, (z, filter)) in queries.iter().enumerate() {
        let near = pool.nearest(z, c.k, *filter)?;
        out.push(Query {
            query: i,
            neighbours: near
                .iter()
                .map(|e| Neighbour {
                    id: e.id,
                    category: ctx.labels.recon_name(e.category).to_string(),
                    distance: e.code.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
                })
                .collect(),
        });
    }
    write_json(&out, c.out.as_deref())?;
    Ok(0)
}

#[derive(Serialize)]
struct MetricOut {
    metric: MetricKind,
    value: f64,
}

fn cmd_metric(ctx: &Ctx, c: MetricCmd) -> Result<u8> {
    let kind = MetricKind::parse(&c.kind)?;
    let params = c.flags.or(&ctx.config.metrics).build()?;
    let pred = io::load_mesh(&c.pred)?;
    let value = match kind {
        MetricKind::Pcr => pcr(&io::load_points(&c.gt)?, &pred, params.omega)?,
        MetricKind::Iou => voxel_iou(&pred, &io::load_mesh(&c.gt)?, params.voxel)?,
        MetricKind::Cd => chamfer(&pred, &io::load_mesh(&c.gt)?, params.samples, params.seed)?,
        MetricKind::Lfd => lightfield_distance(&pred, &io::load_mesh(&c.gt)?, &params.lfd)?,
    };
    if let Some(out) = &c.out {
        write_json(&MetricOut { metric: kind, value }, Some(out))?;
    }
    println!("{value}");
    Ok(0)
}

fn cmd_evaluate(ctx: &Ctx, c: EvaluateCmd) -> Result<u8> {
    let e = &ctx.config.evaluate;
    let metric = c
        .metric
        .or(e.metric.clone())
        .ok_or_else(|| anyhow!("--metric is required"))?;
    let kind = MetricKind::parse(&metric)?;
    let threshold = c
        .threshold
        .or(e.threshold)
        .ok_or_else(|| anyhow!("--threshold is required"))?;
    let floor = c.conf_floor.or(e.conf_floor).unwrap_or(DEFAULT_CONF_FLOOR);
    let params = c.flags.or(&ctx.config.metrics).build()?;
    let gts = io::scan(&c.gt_dir, io::GT_SUFFIX)?;
    let preds = io::scan(&c.pred_dir, io::PRED_SUFFIX)?;
    if let Some(extra) = preds.keys().find(|k| !gts.contains_key(*k)) {
        bail!("predictions for scene `{extra}` have no ground truth");
    }
    let scenes: Vec<SceneEval> = gts
        .par_iter()
        .map(|(name, gpath)| -> Result<SceneEval> {
            let (_, g) = io::read_gt(gpath)?;
            let p = match preds.get(name) {
                Some(pp) => io::read_pred(pp)?.1,
                None => Vec::new(),
            };
            Ok(SceneEval { preds: p, gts: g })
        })
        .collect::<Result<_>>()?;
    let report = evaluate_dataset(&scenes, &ctx.labels, kind, threshold, floor, &params)?;
    write_json(&report, c.out.as_deref())?;
    Ok(0)
}

#[derive(Serialize)]
struct IcpReport {
    rms: f64,
    history: Vec<f64>,
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    scale: f64,
}

fn cmd_icp(ctx: &Ctx, c: IcpCmd) -> Result<u8> {
    let cfg = c.flags.or(&ctx.config.icp).build();
    let mesh = io::load_mesh(&c.mesh)?;
    let target = io::load_points(&c.points)?;
    let r = icp_align(&mesh, &target, &cfg)?;
    io::save_mesh(&r.mesh, &c.out)?;
    if let Some(path) = &c.report {
        let t = &r.transform;
        let report = IcpReport {
            rms: r.rms,
            history: r.history.clone(),
            rotation: [0, 1, 2].map(|i| [0, 1, 2].map(|j| t.rotation[(i, j)])),
            translation: [t.translation.x, t.translation.y, t.translation.z],
            scale: t.scale,
        };
        write_json(&report, Some(path))?;
    }
    Ok(0)
}

fn cmd_synth(ctx: &Ctx, c: SynthCmd) -> Result<u8> {
    let text = std::fs::read_to_string(&c.spec).with_context(|| format!("reading {}", c.spec.display()))?;
    let spec: SceneSpec = toml::from_str(&text).with_context(|| format!("parsing {}", c.spec.display()))?;
    let synth = gen_scene(&spec, &ctx.labels)?;
    let out = &c.out_dir;
    std::fs::create_dir_all(out.join("pool"))?;
    io::save_scene(&synth.scene, &ctx.label_id, &out.join(format!("{}.scene.bin", c.name)))?;
    io::save_proposals(&synth.proposals, &out.join(format!("{}.proposals.json", c.name)))?;
    io::write_gt(&out.join("gt"), &c.name, &synth.gts)?;
    fixture_decoder().save(&out.join("decoder.bin"))?;
    let (pool, meshes) = fixture_pool(&ctx.labels)?;
    for e in pool.entries() {
        if let Some(rel) = &e.mesh {
            io::save_mesh(&meshes[&e.id], &out.join("pool").join(rel))?;
        }
    }
    io::save_pool(&pool, &out.join("pool").join("pool.bin"))?;
    eprintln!(
        "{} points, {} instances, {} proposals",
        synth.scene.len(),
        synth.gts.len(),
        synth.proposals.len()
    );
    Ok(0)
}

#[derive(Serialize)]
struct InterpStep {
    t: f64,
    mesh: String,
    triangles: usize,
}

fn cmd_interp(_ctx: &Ctx, c: InterpCmd) -> Result<u8> {
    if c.steps < 2 {
        bail!("--steps must be at least 2");
    }
    if c.mesh_format != "ply" && c.mesh_format != "obj" {
        bail!("unknown mesh format `{}` (expected ply or obj)", c.mesh_format);
    }
    let dec = BspDecoder::load(&c.decoder)?;
    let cat = dec
        .category_index(&c.category)
        .ok_or_else(|| anyhow!("decoder has no category `{}`", c.category))?;
    let pool = c.pool.as_deref().map(io::load_pool).transpose()?;
    let endpoint = |code: &Option<Vec<f64>>, id: Option<u32>, which: &str| -> Result<Vec<f64>> {
        match (code, id) {
            (Some(z), None) => Ok(z.clone()),
            (None, Some(id)) => {
                let pool = pool.as_ref().ok_or_else(|| anyhow!("--{which}-id needs --pool"))?;
                Ok(pool.get(id).ok_or_else(|| anyhow!("pool has no entry {id}"))?.code.clone())
            }
            _ => bail!("give exactly one of --{which}-code or --{which}-id"),
        }
    };
    let a = endpoint(&c.from_code, c.from_id, "from")?;
    let b = endpoint(&c.to_code, c.to_id, "to")?;
    std::fs::create_dir_all(&c.out_dir)?;
    let mut steps = Vec::with_capacity(c.steps);
    for i in 0..c.steps {
        let t = i as f64 / (c.steps - 1) as f64;
        let z = interpolate_latent(&a, &b, t)?;
        let mesh = extract_mesh(&dec.decode_planes(&z, cat)?);
        let name = format!("interp_{i}.{}", c.mesh_format);
        io::save_mesh(&mesh, &c.out_dir.join(&name))?;
        steps.push(InterpStep { t, mesh: name, triangles: mesh.triangles.len() });
    }
    write_json(&steps, Some(&c.out_dir.join("interp.json")))?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    configure_threads()?;
    let config = load_config(cli.config.as_deref())?;
    let (labels, label_id) = match &cli.labels {
        Some(p) => (LabelSystem::from_table_file(p)?, format!("table:{}", scene_name(p)?)),
        None => (LabelSystem::default(), LabelSystem::DEFAULT_ID.to_string()),
    };
    let ctx = Ctx { config, labels, label_id };
    match cli.command {
        Command::Cluster(c) => cmd_cluster(&ctx, c),
        Command::Reconstruct(c) => cmd_reconstruct(&ctx, c),
        Command::Retrieve(c) => cmd_retrieve(&ctx, c),
        Command::Metric(c) => cmd_metric(&ctx, c),
        Command::Evaluate(c) => cmd_evaluate(&ctx, c),
        Command::Icp(c) => cmd_icp(&ctx, c),
        Command::Synth(c) => cmd_synth(&ctx, c),
        Command::Interp(c) => cmd_interp(&ctx, c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
