//! Deterministic synthetic scenes with full ground truth.
//!
//! Instances are box-built furniture templates placed on a floor at z = 0.
//! Generated coordinates sit on a 2^-20 m grid and every magnitude stays
//! below 16 m, so they are exact in f32 and `p + o` equals the instance
//! center bit-for-bit, in memory and after a scene file round trip.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsp::{Activation, BspDecoder, DenseLayer};
use crate::canonical::{place_mesh, CanonicalFrame};
use crate::cluster::{multi_scale_cluster, point_iou, proposal_initial_box, AngleMean, ClusterConfig};
use crate::error::{Error, Result};
use crate::eval::GtRecord;
use crate::geom::wrap_angle;
use crate::labels::{LabelSystem, ReconLabel, RECON_CATEGORIES};
use crate::latent::{ModelPool, PoolEntry};
use crate::mesh::TriMesh;
use crate::metrics::{sample_surface, MeshBvh};
use crate::model::{BoxResidual, InstanceProposal, LatentShapeDistribution, OrientedBox, PointScene};
use crate::rng;

const GRID: f64 = 1048576.0;
const MAX_COORD: f64 = 16.0;
/// Convex slots in the fixture decoder; the largest template uses all.
pub const FIXTURE_SLOTS: usize = 6;

/// A furniture-like shape in the min-corner canonical cube, built from
/// interior-disjoint axis-aligned boxes given in 1/32 units.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub name: &'static str,
    pub boxes: Vec<([u8; 3], [u8; 3])>,
}

impl Template {
    fn unit_boxes(&self) -> impl Iterator<Item = (Point3<f64>, Point3<f64>)> + '_ {
        let f = |v: [u8; 3]| Point3::new(v[0] as f64, v[1] as f64, v[2] as f64) / 32.0;
        self.boxes.iter().map(move |&(lo, hi)| (f(lo), f(hi)))
    }

    /// Concatenated box meshes.
    pub fn mesh(&self) -> TriMesh {
        let mut m = TriMesh::default();
        for (lo, hi) in self.unit_boxes() {
            m.append(&TriMesh::cuboid(lo, hi));
        }
        m
    }
}

fn corner_legs(h: u8) -> Vec<([u8; 3], [u8; 3])> {
    vec![
        ([0, 0, 0], [3, 3, h]),
        ([29, 0, 0], [32, 3, h]),
        ([0, 29, 0], [3, 32, h]),
        ([29, 29, 0], [32, 32, h]),
    ]
}

fn open_box(t: u8) -> Vec<([u8; 3], [u8; 3])> {
    let u = 32 - t;
    vec![
        ([0, 0, 0], [32, 32, t]),
        ([0, 0, t], [t, 32, 32]),
        ([u, 0, t], [32, 32, 32]),
        ([t, 0, t], [u, t, 32]),
        ([t, u, t], [u, 32, 32]),
    ]
}

/// One template per reconstruction category, in category order.
pub fn templates() -> Vec<Template> {
    let mut table = corner_legs(27);
    table.push(([0, 0, 27], [32, 32, 32]));
    let mut chair = corner_legs(14);
    chair.push(([0, 0, 14], [32, 32, 18]));
    chair.push(([0, 28, 18], [32, 32, 32]));
    vec![
        Template { name: "table", boxes: table },
        Template { name: "chair", boxes: chair },
        Template {
            name: "bookshelf",
            boxes: vec![
                ([0, 0, 0], [2, 32, 32]),
                ([30, 0, 0], [32, 32, 32]),
                ([2, 0, 0], [30, 32, 2]),
                ([2, 0, 10], [30, 32, 12]),
                ([2, 0, 20], [30, 32, 22]),
                ([2, 0, 30], [30, 32, 32]),
            ],
        },
        Template {
            name: "sofa",
            boxes: vec![
                ([0, 0, 0], [32, 32, 13]),
                ([0, 24, 13], [32, 32, 32]),
                ([0, 0, 13], [3, 24, 21]),
                ([29, 0, 13], [32, 24, 21]),
            ],
        },
        Template { name: "trash bin", boxes: open_box(2) },
        Template {
            name: "cabinet",
            boxes: vec![
                ([0, 0, 0], [32, 32, 3]),
                ([0, 2, 3], [32, 32, 32]),
                ([2, 0, 5], [30, 2, 30]),
            ],
        },
        Template {
            name: "display",
            boxes: vec![
                ([6, 0, 0], [26, 32, 2]),
                ([14, 14, 2], [18, 18, 10]),
                ([0, 13, 10], [32, 19, 32]),
            ],
        },
        Template { name: "bathtub", boxes: open_box(4) },
    ]
}

fn template_index(name: &str) -> Result<usize> {
    RECON_CATEGORIES
        .iter()
        .position(|c| *c == name)
        .ok_or_else(|| Error::invalid(format!("no template named `{name}`")))
}

/// One-hot latent code of a template.
pub fn template_code(index: usize) -> Vec<f64> {
    let mut z = vec![0.0; RECON_CATEGORIES.len()];
    z[index] = 1.0;
    z
}

fn box_planes(lo: &Point3<f64>, hi: &Point3<f64>) -> [[f64; 4]; 6] {
    [
        [1.0, 0.0, 0.0, -hi.x],
        [-1.0, 0.0, 0.0, lo.x],
        [0.0, 1.0, 0.0, -hi.y],
        [0.0, -1.0, 0.0, lo.y],
        [0.0, 0.0, 1.0, -hi.z],
        [0.0, 0.0, -1.0, lo.z],
    ]
}

/// Single linear layer mapping each one-hot template code onto that
/// template's box planes; unused slots decode to an empty convex.
pub fn fixture_decoder() -> BspDecoder {
    let temps = templates();
    let dim = temps.len();
    let cats: Vec<String> = RECON_CATEGORIES.iter().map(|s| s.to_string()).collect();
    let inputs = dim + cats.len();
    let planes = FIXTURE_SLOTS * 6;
    let outputs = 4 * planes;
    let mut weights = vec![0.0f32; outputs * inputs];
    // inverted box: plane k keeps the same normal in every slot, so blended
    // codes blend offsets and never cancel a normal
    let empty = box_planes(&Point3::new(10.0, 10.0, 10.0), &Point3::new(-10.0, -10.0, -10.0));
    for (t, tpl) in temps.iter().enumerate() {
        let boxes: Vec<_> = tpl.unit_boxes().collect();
        for s in 0..FIXTURE_SLOTS {
            let ps = boxes.get(s).map(|(lo, hi)| box_planes(lo, hi)).unwrap_or(empty);
            for (k, pl) in ps.iter().enumerate() {
                for (m, v) in pl.iter().enumerate() {
                    weights[((s * 6 + k) * 4 + m) * inputs + t] = *v as f32;
                }
            }
        }
    }
    let membership = (0..planes)
        .flat_map(|p| (0..FIXTURE_SLOTS).map(move |c| p / 6 == c))
        .collect();
    let layer = DenseLayer {
        inputs,
        outputs,
        weights,
        bias: vec![0.0; outputs],
        activation: Activation::Identity,
    };
    BspDecoder::new(dim, cats, vec![layer], planes, FIXTURE_SLOTS, membership, CanonicalFrame::MinCorner)
        .expect("fixture decoder is well formed")
}

/// Pool holding every template under its template index, with the
/// canonical meshes.
pub fn fixture_pool(labels: &LabelSystem) -> Result<(ModelPool, BTreeMap<u32, TriMesh>)> {
    let mut entries = Vec::new();
    let mut meshes = BTreeMap::new();
    for (i, t) in templates().iter().enumerate() {
        let category = recon_label(labels, t.name)?;
        entries.push(PoolEntry {
            id: i as u32,
            category,
            code: template_code(i),
            mesh: Some(format!("template_{}.obj", t.name.replace(' ', "_"))),
        });
        meshes.insert(i as u32, t.mesh().with_category(Some(category)));
    }
    Ok((ModelPool::new(RECON_CATEGORIES.len(), entries)?, meshes))
}

fn recon_label(labels: &LabelSystem, name: &str) -> Result<ReconLabel> {
    labels
        .recon_by_name(name)
        .ok_or_else(|| Error::invalid(format!("label system has no category `{name}`")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Placement {
    pub center_min: [f64; 2],
    pub center_max: [f64; 2],
    /// Rotation range about z, radians.
    pub rotation: [f64; 2],
    pub scale_min: [f64; 3],
    pub scale_max: [f64; 3],
    /// Minimum horizontal gap between instance footprints.
    pub gap: f64,
}

impl Default for Placement {
    fn default() -> Self {
        Placement {
            center_min: [-3.0, -3.0],
            center_max: [3.0, 3.0],
            rotation: [-PI, PI],
            scale_min: [0.6, 0.6, 0.6],
            scale_max: [1.4, 1.4, 1.4],
            gap: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Camera {
    pub position: [f64; 3],
    pub near: f64,
    pub far: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            position: [0.0, -9.0, 5.0],
            near: 0.0,
            far: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalSource {
    /// One proposal per instance, holding its exact point set.
    Gt,
    /// Default multi-scale clustering, annotated against the ground truth.
    #[default]
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    /// Template names, one per instance.
    pub instances: Vec<String>,
    pub points_per_instance: usize,
    pub placement: Placement,
    pub camera: Camera,
    /// Drop self-occluded points.
    pub partial: bool,
    /// Isotropic point jitter, meters.
    pub noise_sigma: f64,
    /// Gaussian noise added to the proposal latent means.
    pub code_noise: f64,
    /// Latent sigma written into the proposals.
    pub code_sigma: f64,
    pub floor_points: usize,
    pub proposals: ProposalSource,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            instances: RECON_CATEGORIES[..7].iter().map(|s| s.to_string()).collect(),
            points_per_instance: 3000,
            placement: Placement::default(),
            camera: Camera::default(),
            partial: true,
            noise_sigma: 0.0,
            code_noise: 0.0,
            code_sigma: 0.0,
            floor_points: 0,
            proposals: ProposalSource::Cluster,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let p = &self.placement;
        let ordered = |lo: &[f64], hi: &[f64]| lo.iter().zip(hi).all(|(a, b)| a.is_finite() && b.is_finite() && a <= b);
        if self.instances.is_empty() {
            return Err(Error::invalid("scene spec lists no instances"));
        }
        if self.instances.len() >= u16::MAX as usize {
            return Err(Error::invalid("too many instances for u16 instance ids"));
        }
        for name in &self.instances {
            template_index(name)?;
        }
        if self.points_per_instance == 0 {
            return Err(Error::invalid("points_per_instance must be positive"));
        }
        if !ordered(&p.center_min, &p.center_max) || !ordered(&p.rotation[..1], &p.rotation[1..]) {
            return Err(Error::invalid("placement center or rotation range is empty or not finite"));
        }
        if !ordered(&p.scale_min, &p.scale_max) || p.scale_min.iter().any(|s| *s <= 0.0) {
            return Err(Error::invalid("placement scale range must be positive and ordered"));
        }
        if !(p.gap >= 0.0) {
            return Err(Error::invalid("placement gap must be non-negative"));
        }
        let reach = p.center_min.iter().chain(&p.center_max).fold(0.0f64, |m, c| m.max(c.abs()))
            + 0.5 * (p.scale_max[0].hypot(p.scale_max[1]))
            + 1.0;
        if reach >= MAX_COORD || p.scale_max[2] >= MAX_COORD || self.camera.position.iter().any(|c| !(c.abs() < MAX_COORD)) {
            return Err(Error::invalid(format!("scene must fit within +-{MAX_COORD} m")));
        }
        let c = &self.camera;
        if !(c.near >= 0.0 && c.near < c.far) {
            return Err(Error::invalid("camera needs 0 <= near < far"));
        }
        if !(self.noise_sigma >= 0.0 && self.code_noise >= 0.0 && self.code_sigma >= 0.0) {
            return Err(Error::invalid("noise levels must be non-negative"));
        }
        Ok(())
    }
}

fn quantize(x: f64) -> f64 {
    (x * GRID).round() / GRID
}

fn quantize_point(p: &Point3<f64>) -> Point3<f64> {
    p.map(quantize)
}

/// Nearest f32 angle inside `[-pi, pi)`.
fn f32_angle(a: f64) -> f64 {
    let mut r = wrap_angle(a) as f32;
    while r as f64 >= PI || (r as f64) < -PI {
        r = f32::from_bits(r.to_bits() - 1);
    }
    r as f64
}

/// Indices of the points visible from `camera`: the open segment from the
/// camera to the point crosses no triangle of `mesh`. Hits within 1e-6 m of
/// either end are ignored.
pub fn partialize(points: &[Point3<f64>], mesh: &TriMesh, camera: &Point3<f64>) -> Result<Vec<usize>> {
    let bvh = MeshBvh::build(mesh)?;
    if bvh.bounds().contains(camera) {
        return Err(Error::invalid("camera lies inside the mesh bounding box"));
    }
    Ok(points
        .par_iter()
        .enumerate()
        .filter(|(_, p)| {
            let len = (*p - camera).norm();
            len > 0.0 && !bvh.segment_hits(camera, p, 1e-6 / len)
        })
        .map(|(i, _)| i)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub scene: PointScene,
    pub gts: Vec<GtRecord>,
    pub proposals: Vec<InstanceProposal>,
    /// True boxes; instance id `i + 1` owns `boxes[i]`.
    pub boxes: Vec<OrientedBox>,
    pub templates: Vec<usize>,
    /// Scene point indices owned by each instance, ascending.
    pub instance_points: Vec<Vec<usize>>,
}

fn uniform(lo: f64, hi: f64, r: &mut rng::Rng) -> f64 {
    if lo == hi {
        lo
    } else {
        r.random_range(lo..hi)
    }
}

fn place_boxes(spec: &SceneSpec) -> Result<Vec<OrientedBox>> {
    let p = &spec.placement;
    let mut r = rng::substream(spec.seed, 0);
    let mut boxes: Vec<OrientedBox> = Vec::new();
    for i in 0..spec.instances.len() {
        let mut attempt = 0;
        loop {
            attempt += 1;
            if attempt > 10_000 {
                return Err(Error::invalid(format!(
                    "could not place instance {i} without overlap; widen the center range"
                )));
            }
            let scale = Vector3::from_fn(|k, _| quantize(uniform(p.scale_min[k], p.scale_max[k], &mut r)).max(1.0 / GRID));
            let cx = quantize(uniform(p.center_min[0], p.center_max[0], &mut r));
            let cy = quantize(uniform(p.center_min[1], p.center_max[1], &mut r));
            let rot = f32_angle(uniform(p.rotation[0], p.rotation[1], &mut r));
            let center = Point3::new(cx, cy, quantize(scale.z / 2.0));
            let radius = 0.5 * scale.x.hypot(scale.y);
            let clear = boxes.iter().all(|b| {
                let rb = 0.5 * b.scale.x.hypot(b.scale.y);
                (b.center.xy() - center.xy()).norm() >= radius + rb + p.gap
            });
            if clear {
                boxes.push(OrientedBox::new(center, rot, scale)?);
                break;
            }
        }
    }
    Ok(boxes)
}

struct InstanceDraw {
    mesh: TriMesh,
    points: Vec<Point3<f64>>,
}

fn draw_instance(spec: &SceneSpec, i: usize, tpl: &Template, b: &OrientedBox) -> Result<InstanceDraw> {
    let mesh = place_mesh(&tpl.mesh(), b, CanonicalFrame::MinCorner)?;
    let mut pts = sample_surface(&mesh, spec.points_per_instance, rng::substream(spec.seed, 1 + i as u64).random())?;
    let cam = Point3::from(spec.camera.position);
    if spec.partial {
        let keep = partialize(&pts, &mesh, &cam)?;
        pts = keep.into_iter().map(|k| pts[k]).collect();
    }
    let (near, far) = (spec.camera.near, spec.camera.far);
    pts.retain(|p| {
        let d = (p - cam).norm();
        d >= near && d <= far
    });
    if spec.noise_sigma > 0.0 {
        let mut r = rng::substream(spec.seed, 10_000 + i as u64);
        for p in &mut pts {
            for k in 0..3 {
                let e: f64 = r.sample(StandardNormal);
                p[k] += spec.noise_sigma * e;
            }
        }
    }
    let points: Vec<Point3<f64>> = pts.iter().map(quantize_point).collect();
    if points.iter().any(|p| p.coords.amax() >= MAX_COORD) {
        return Err(Error::invalid(format!("scene must fit within +-{MAX_COORD} m")));
    }
    Ok(InstanceDraw { mesh, points })
}

/// Generates the scene, its ground truth and proposals.
pub fn gen_scene(spec: &SceneSpec, labels: &LabelSystem) -> Result<SyntheticScene> {
    spec.validate()?;
    let temps = templates();
    let tidx: Vec<usize> = spec.instances.iter().map(|n| template_index(n)).collect::<Result<_>>()?;
    let boxes = place_boxes(spec)?;
    let draws: Vec<InstanceDraw> = tidx
        .par_iter()
        .zip(&boxes)
        .enumerate()
        .map(|(i, (&t, b))| draw_instance(spec, i, &temps[t], b))
        .collect::<Result<_>>()?;

    let (mut points, mut cats, mut offsets, mut angles, mut ids) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut instance_points = Vec::new();
    let mut gts = Vec::new();
    for (i, (d, b)) in draws.into_iter().zip(&boxes).enumerate() {
        let recon = recon_label(labels, temps[tidx[i]].name)?;
        let seg = labels
            .seg_for_recon(recon)
            .ok_or_else(|| Error::invalid(format!("no segmentation class maps to `{}`", labels.recon_name(recon))))?;
        let start = points.len();
        for p in &d.points {
            points.push(*p);
            cats.push(seg);
            offsets.push(b.center - p);
            angles.push(b.z_rotation);
            ids.push(i as u16 + 1);
        }
        instance_points.push((start..points.len()).collect::<Vec<_>>());
        gts.push(GtRecord {
            mesh: d.mesh.with_category(Some(recon)),
            instance_points: d.points,
            category: recon,
        });
    }
    if spec.floor_points > 0 {
        let floor = labels
            .seg_by_name("floor")
            .ok_or_else(|| Error::invalid("label system has no `floor` class"))?;
        let p = &spec.placement;
        let mut r = rng::substream(spec.seed, 1 << 40);
        for _ in 0..spec.floor_points {
            let x = quantize(r.random_range(p.center_min[0] - 1.0..p.center_max[0] + 1.0));
            let y = quantize(r.random_range(p.center_min[1] - 1.0..p.center_max[1] + 1.0));
            points.push(Point3::new(x, y, 0.0));
            cats.push(floor);
            offsets.push(Vector3::zeros());
            angles.push(0.0);
            ids.push(0);
        }
    }
    let scene = PointScene::new(points, cats, offsets, angles, Some(ids))?;
    let mut synth = SyntheticScene {
        scene,
        gts,
        proposals: Vec::new(),
        boxes,
        templates: tidx,
        instance_points,
    };
    let raw = match spec.proposals {
        ProposalSource::Gt => synth
            .instance_points
            .iter()
            .zip(&synth.gts)
            .map(|(idx, g)| InstanceProposal {
                point_indices: idx.clone(),
                confidence: 0.0,
                initial_box: None,
                residual: BoxResidual::zero(),
                latent: LatentShapeDistribution::default(),
                category: g.category,
            })
            .filter(|p| !p.point_indices.is_empty())
            .collect(),
        ProposalSource::Cluster => multi_scale_cluster(&synth.scene, labels, &ClusterConfig::default())?,
    };
    synth.proposals = annotate_proposals(&synth, raw, spec)?;
    Ok(synth)
}

/// Fills proposals with what a perfect second stage would predict for the
/// instance holding most of their points: point IoU as confidence, the
/// residual onto the true box and the template code (plus optional noise).
pub fn annotate_proposals(
    synth: &SyntheticScene,
    props: Vec<InstanceProposal>,
    spec: &SceneSpec,
) -> Result<Vec<InstanceProposal>> {
    let ids = synth
        .scene
        .gt_instance_ids()
        .ok_or_else(|| Error::invalid("scene carries no instance ids"))?;
    let mut out = Vec::with_capacity(props.len());
    for (j, mut p) in props.into_iter().enumerate() {
        p.point_indices.sort_unstable();
        let mut votes: BTreeMap<u16, usize> = BTreeMap::new();
        for &i in &p.point_indices {
            *votes.entry(ids[i]).or_default() += 1;
        }
        let Some((&inst, _)) = votes.iter().filter(|(id, _)| **id > 0).max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
            continue;
        };
        let k = inst as usize - 1;
        let initial = proposal_initial_box(&synth.scene, &p.point_indices, AngleMean::Circular)?;
        let mut mu = template_code(synth.templates[k]);
        if spec.code_noise > 0.0 {
            let mut r = rng::substream(spec.seed, 20_000 + j as u64);
            for m in &mut mu {
                let e: f64 = r.sample(StandardNormal);
                *m += spec.code_noise * e;
            }
        }
        let dim = mu.len();
        p.confidence = point_iou(&p.point_indices, &synth.instance_points[k]);
        p.residual = BoxResidual::between(&initial, &synth.boxes[k]);
        p.initial_box = Some(initial);
        p.latent = LatentShapeDistribution::new(mu, vec![spec.code_sigma; dim])?;
        p.category = synth.gts[k].category;
        out.push(p);
    }
    Ok(out)
}
