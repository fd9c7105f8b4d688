//! Acceptance suite: one PASS/FAIL line per criterion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{Matrix3, Point3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use srk_core::bsp::{extract_convex_meshes, occupancy, Activation, BspDecoder, DenseLayer, PlaneSet};
use srk_core::canonical::{canonicalize, place_mesh, CanonicalFrame};
use srk_core::cluster::cluster_scene;
use srk_core::eval::{
    average_precision, evaluate_dataset, match_predictions, GtRecord, MatchRecord, PredictionRecord, SceneEval,
};
use srk_core::geom::rot_axis_angle;
use srk_core::icp::{icp_align, IcpConfig};
use srk_core::labels::{LabelSystem, ReconLabel, SegLabel};
use srk_core::latent::{project_linear, ModelPool, PoolEntry, SpanKind};
use srk_core::mesh::TriMesh;
use srk_core::metrics::{
    chamfer, lightfield_descriptor, pcr, point_in_mesh, point_mesh_distance, sample_surface, voxel_iou, LfdConfig,
    MeshBvh, MetricKind, MetricParams,
};
use srk_core::metrics::lfd::icosahedral_group;
use srk_core::model::{OrientedBox, PointScene};
use srk_core::pipeline::{reconstruct_scene, ReconConfig, ReconInputs, ReconMode};
use srk_core::rng;
use srk_core::synth::{fixture_decoder, fixture_pool, gen_scene, templates, SceneSpec};

type Check = Result<String, String>;
type Trace = Vec<(usize, Option<usize>)>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---- 1 ------------------------------------------------------------------------

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }
}

fn brute_components(coords: &[Point3<f64>], cats: &[SegLabel], members: &[usize], r: f64, min: usize) -> Vec<Vec<usize>> {
    let mut d = Dsu((0..coords.len()).collect());
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            if cats[i] == cats[j] && (coords[i] - coords[j]).norm_squared() <= r * r {
                let (ri, rj) = (d.find(i), d.find(j));
                d.0[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in members {
        groups.entry(d.find(i)).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() >= min).collect();
    out.sort_by_key(|g| g[0]);
    out
}

fn random_scene(seed: u64) -> PointScene {
    let mut r = rng::seeded(seed);
    let n = r.random_range(1..=2000);
    let blobs: Vec<(Point3<f64>, f64)> = (0..r.random_range(1..8))
        .map(|_| (Point3::new(r.random(), r.random(), r.random()), r.random_range(0.01..0.15)))
        .collect();
    let palette = [0u16, 1, 2, 4, 6, 9];
    let (mut pts, mut cats, mut offs) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let (c, s) = blobs[r.random_range(0..blobs.len())];
        let p = c + Vector3::from_fn(|_, _| s * r.sample::<f64, _>(StandardNormal));
        pts.push(p);
        cats.push(SegLabel(palette[r.random_range(0..palette.len())]));
        let o = if r.random_bool(0.5) { c - p } else { Vector3::from_fn(|_, _| 0.02 * r.sample::<f64, _>(StandardNormal)) };
        offs.push(o);
    }
    PointScene::new(pts, cats, offs, vec![0.0; n], None).unwrap()
}

fn criterion_1() -> Check {
    let labels = LabelSystem::default();
    let mut spent = 0.0;
    let mut components = 0;
    for s in 0..200u64 {
        let scene = random_scene(1000 + s);
        let mut r = rng::seeded(s);
        let radius = [0.01, 0.03, 0.05][r.random_range(0..3)];
        let min = r.random_range(1..30);
        let dual = r.random_bool(0.5);
        let t = Instant::now();
        let got = cluster_scene(&scene, &labels, radius, min, dual).map_err(|e| e.to_string())?;
        spent += t.elapsed().as_secs_f64();
        let members: Vec<usize> = (0..scene.len())
            .filter(|&i| labels.map_label(scene.categories()[i]).unwrap().is_some())
            .collect();
        let mut expected = brute_components(&scene.shifted_points(), scene.categories(), &members, radius, min);
        if dual {
            expected.extend(brute_components(scene.points(), scene.categories(), &members, radius, min));
        }
        let sets: Vec<Vec<usize>> = got.iter().map(|p| p.point_indices.clone()).collect();
        ensure!(sets == expected, "scene {s}: {} components, oracle {}", sets.len(), expected.len());
        for p in &got {
            let want = labels.map_label(scene.categories()[p.point_indices[0]]).unwrap().unwrap();
            ensure!(p.category == want, "scene {s}: wrong proposal category");
        }
        components += sets.len();
    }
    ensure!(spent < 30.0, "clustering took {spent:.1} s");
    Ok(format!("200 scenes, {components} components identical, clustering {spent:.2} s"))
}

// ---- 2 ------------------------------------------------------------------------

fn criterion_2() -> Check {
    let mut r = rng::seeded(2);
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let mut mesh = TriMesh::icosphere(Point3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), 0.0), r.random_range(0.1..2.0), 2);
        for v in &mut mesh.vertices {
            *v += Vector3::from_fn(|_, _| r.random_range(-0.05..0.05));
        }
        let b = OrientedBox::new(
            Point3::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(0.0..3.0)),
            r.random_range(-PI..PI),
            Vector3::from_fn(|_, _| r.random_range(0.1..3.0)),
        )
        .unwrap();
        let frame = if i % 2 == 0 { CanonicalFrame::MinCorner } else { CanonicalFrame::Centered };
        let (canon, _) = canonicalize(&mesh.vertices, &b, frame).map_err(|e| e.to_string())?;
        let cm = TriMesh::new(canon, mesh.triangles.clone()).map_err(|e| e.to_string())?;
        let back = place_mesh(&cm, &b, frame).map_err(|e| e.to_string())?;
        for (a, c) in back.vertices.iter().zip(&mesh.vertices) {
            worst = worst.max((a - c).norm());
        }
    }
    ensure!(worst < 1e-6, "max vertex error {worst:e}");
    Ok(format!("100 pairs, max vertex error {worst:.2e} m"))
}

// ---- 3 ------------------------------------------------------------------------

fn tangent_planes(r: &mut rng::Rng, convexes: usize, per: usize) -> Vec<[f64; 4]> {
    let mut planes = Vec::new();
    for _ in 0..convexes {
        let q = Vector3::from_fn(|_, _| r.random_range(0.2..0.8));
        let rho = r.random_range(0.08..0.35);
        for _ in 0..per {
            let n = Vector3::from_fn(|_, _| r.sample::<f64, _>(StandardNormal)).normalize() * r.random_range(0.5..2.0);
            planes.push([n.x, n.y, n.z, -(n.dot(&q) + rho * n.norm())]);
        }
    }
    planes
}

fn block_membership(planes: usize, convexes: usize) -> Vec<bool> {
    let per = planes / convexes;
    (0..planes).flat_map(|p| (0..convexes).map(move |c| p / per == c)).collect()
}

fn random_plane_set(seed: u64) -> PlaneSet {
    let mut r = rng::seeded(seed);
    let convexes = r.random_range(1..=4);
    let per = r.random_range(4..=8);
    if seed.is_multiple_of(2) {
        let planes = tangent_planes(&mut r, convexes, per);
        let n = planes.len();
        return PlaneSet::new(planes, convexes, &block_membership(n, convexes), CanonicalFrame::MinCorner).unwrap();
    }
    let latent = 4;
    let cats = 2;
    let bias: Vec<f32> = tangent_planes(&mut r, convexes, per).iter().flatten().map(|v| *v as f32).collect();
    let outputs = bias.len();
    let weights = (0..outputs * (latent + cats)).map(|_| r.random_range(-0.05f32..0.05)).collect();
    let dec = BspDecoder::new(
        latent,
        vec!["a".into(), "b".into()],
        vec![DenseLayer { inputs: latent + cats, outputs, weights, bias, activation: Activation::Identity }],
        outputs / 4,
        convexes,
        block_membership(outputs / 4, convexes),
        CanonicalFrame::MinCorner,
    )
    .unwrap();
    let z: Vec<f64> = (0..latent).map(|_| r.sample(StandardNormal)).collect();
    dec.decode_planes(&z, r.random_range(0..cats)).unwrap()
}

fn criterion_3() -> Check {
    let mut worst = 1.0f64;
    for s in 0..50u64 {
        let ps = random_plane_set(300 + s);
        let meshes = extract_convex_meshes(&ps);
        let bvhs: Vec<MeshBvh> = meshes.iter().map(|m| MeshBvh::build(m).unwrap()).collect();
        let mut r = rng::seeded(900 + s);
        let pts: Vec<Point3<f64>> = (0..100_000).map(|_| Point3::new(r.random(), r.random(), r.random())).collect();
        let agree = pts
            .par_iter()
            .filter(|p| bvhs.iter().any(|b| point_in_mesh(b, p)) == occupancy(&ps, p))
            .count();
        let frac = agree as f64 / pts.len() as f64;
        worst = worst.min(frac);
        ensure!(frac >= 0.995, "set {s}: agreement {frac:.5}");
    }
    Ok(format!("50 sets, worst agreement {:.4}%", worst * 100.0))
}

// ---- 4 ------------------------------------------------------------------------

fn seg_dist2(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let t = if ab.norm_squared() == 0.0 { 0.0 } else { ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) };
    (p - (a + ab * t)).norm_squared()
}

/// Plane projection when it lands inside the triangle, else the nearest edge.
fn tri_dist2(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    let n = (b - a).cross(&(c - a));
    let edges = seg_dist2(p, a, b).min(seg_dist2(p, b, c)).min(seg_dist2(p, c, a));
    if n.norm_squared() == 0.0 {
        return edges;
    }
    let h = n.dot(&(p - a));
    let q = p - n * (h / n.norm_squared());
    let inside = n.dot(&(b - a).cross(&(q - a))) >= 0.0
        && n.dot(&(c - b).cross(&(q - b))) >= 0.0
        && n.dot(&(a - c).cross(&(q - c))) >= 0.0;
    if inside {
        h * h / n.norm_squared()
    } else {
        edges
    }
}

fn criterion_4() -> Check {
    let mut r = rng::seeded(4);
    let mut mesh = TriMesh::icosphere(Point3::new(0.2, -0.1, 0.3), 0.8, 3);
    for v in &mut mesh.vertices {
        *v += Vector3::from_fn(|_, _| r.random_range(-0.04..0.04));
    }
    mesh.append(&TriMesh::cuboid(Point3::new(0.5, 0.5, -0.5), Point3::new(1.5, 0.9, 0.2)));
    let bvh = MeshBvh::build(&mesh).unwrap();
    let queries: Vec<Point3<f64>> = (0..10_000)
        .map(|_| Point3::new(r.random_range(-1.5..2.0), r.random_range(-1.5..1.5), r.random_range(-1.5..1.5)))
        .collect();
    let worst = queries
        .par_iter()
        .map(|q| {
            let brute = (0..mesh.triangles.len())
                .map(|t| {
                    let [a, b, c] = mesh.triangle(t);
                    tri_dist2(q, &a, &b, &c)
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            (point_mesh_distance(q, &bvh) - brute).abs()
        })
        .reduce(|| 0.0, f64::max);
    ensure!(worst <= 1e-12, "distance differs from exhaustive scan by {worst:e}");

    let a = TriMesh::unit_cube();
    let b = TriMesh::cuboid(Point3::new(0.5, 0.0, 0.0), Point3::new(1.5, 1.0, 1.0));
    let iou = voxel_iou(&a, &b, 0.01).map_err(|e| e.to_string())?;
    ensure!((iou - 1.0 / 3.0).abs() <= 0.02, "half-overlap IoU {iou}");

    let lo = TriMesh::square(0.0, 10.0, 0.0);
    let hi = TriMesh::square(0.0, 10.0, 0.2);
    let cd = chamfer(&lo, &hi, 10_000, 0).map_err(|e| e.to_string())?;
    ensure!((0.38..=0.42).contains(&cd), "parallel-square chamfer {cd}");

    let sq = TriMesh::square(0.0, 1.0, 0.0);
    let pts: Vec<Point3<f64>> = (0..100)
        .map(|i| Point3::new(0.005 + 0.01 * i as f64, 0.5, if i % 2 == 0 { 0.01 } else { 0.5 }))
        .collect();
    let cov = pcr(&pts, &sq, 0.047).map_err(|e| e.to_string())?;
    ensure!(cov == 0.5, "half-on/half-off PCR {cov}");
    Ok(format!("max distance error {worst:.1e}, IoU {iou:.4}, CD {cd:.4}, PCR {cov}"))
}

// ---- 5 ------------------------------------------------------------------------

fn criterion_5() -> Check {
    let cfg = LfdConfig::default();
    let d = |a: &TriMesh, b: &TriMesh| -> Result<f64, String> {
        let da = lightfield_descriptor(a, &cfg).map_err(|e| e.to_string())?;
        let db = lightfield_descriptor(b, &cfg).map_err(|e| e.to_string())?;
        Ok(da.distance(&db))
    };
    let cube = TriMesh::unit_cube();
    let sphere = TriMesh::icosphere(Point3::new(0.5, 0.5, 0.5), 0.5, 3);
    let scale = d(&cube, &sphere)?;
    ensure!(scale > 0.0, "cube and sphere indistinguishable");
    let temps = templates();
    let shapes: Vec<TriMesh> = vec![temps[1].mesh(), temps[3].mesh(), temps[6].mesh()];
    let mut worst = 0.0f64;
    for s in &shapes {
        let base = lightfield_descriptor(s, &cfg).map_err(|e| e.to_string())?;
        ensure!(base.distance(&base) == 0.0, "d(A, A) = {}", base.distance(&base));
        let dev = icosahedral_group()
            .par_iter()
            .map(|(rot, _)| {
                let moved = s.transformed(rot, &Vector3::new(0.3, -0.2, 1.0), 1.0);
                base.distance(&lightfield_descriptor(&moved, &cfg).unwrap())
            })
            .reduce(|| 0.0, f64::max);
        worst = worst.max(dev);
    }
    ensure!(worst <= 0.01 * scale, "rotation changes distance by {worst} (scale {scale})");
    let mut asym = 0.0f64;
    let all: Vec<TriMesh> = temps.iter().map(|t| t.mesh()).chain([cube, sphere]).collect();
    let desc: Vec<_> = all.iter().map(|m| lightfield_descriptor(m, &cfg).unwrap()).collect();
    for a in &desc {
        for b in &desc {
            asym = asym.max((a.distance(b) - b.distance(a)).abs());
        }
    }
    ensure!(asym <= 1e-12, "asymmetry {asym:e}");
    Ok(format!("cube-sphere {scale:.4}, worst rotation change {worst:.2e}, asymmetry {asym:.1e}"))
}

// ---- 6 ------------------------------------------------------------------------

fn criterion_6() -> Check {
    let mut r = rng::seeded(6);
    let dim = 16;
    let entries: Vec<PoolEntry> = (0..1000u32)
        .map(|id| PoolEntry {
            id: 5000 - id * 3,
            category: ReconLabel(r.random_range(0..8)),
            code: (0..dim).map(|_| r.sample(StandardNormal)).collect(),
            mesh: None,
        })
        .collect();
    let pool = ModelPool::new(dim, entries.clone()).map_err(|e| e.to_string())?;
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut worst_dot = 0.0f64;
    let mut worst_idem = 0.0f64;
    for q in 0..100 {
        let z: Vec<f64> = (0..dim).map(|_| r.sample::<f64, _>(StandardNormal) * 1.5).collect();
        let filter = (q % 2 == 1).then_some(ReconLabel(q as u16 % 8));
        let best = entries
            .iter()
            .filter(|e| filter.is_none_or(|c| e.category == c))
            .min_by(|a, b| dist(&a.code, &z).partial_cmp(&dist(&b.code, &z)).unwrap().then(a.id.cmp(&b.id)))
            .unwrap();
        let (id, _) = pool.retrieve(&z, filter).map_err(|e| e.to_string())?;
        ensure!(id == best.id, "query {q}: retrieved {id}, exhaustive {}", best.id);

        let k = [1, 3, 5, 8][q % 4];
        let near = pool.nearest(&z, k, None).map_err(|e| e.to_string())?;
        let p = pool.project(&z, k, None, SpanKind::Linear).map_err(|e| e.to_string())?;
        let res: Vec<f64> = z.iter().zip(&p).map(|(a, b)| a - b).collect();
        let rn = res.iter().map(|v| v * v).sum::<f64>().sqrt();
        for e in &near {
            let dot: f64 = res.iter().zip(&e.code).map(|(a, b)| a * b).sum();
            let en = e.code.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rel = dot.abs() / (rn * en);
            worst_dot = worst_dot.max(rel);
            ensure!(dot.abs() < 1e-8 * rn * en, "query {q}: residual dot {dot:e}");
        }
        let basis: Vec<&[f64]> = near.iter().map(|e| e.code.as_slice()).collect();
        let pp = project_linear(&basis, &p);
        let pn = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gap = dist(&pp, &p).sqrt() / pn;
        worst_idem = worst_idem.max(gap);
        ensure!(gap < 1e-9, "query {q}: projection not idempotent ({gap:e})");
    }
    Ok(format!("100 queries exact, worst residual dot {worst_dot:.1e}, idempotence gap {worst_idem:.1e}"))
}

// ---- 7 ------------------------------------------------------------------------

fn criterion_7() -> Check {
    let b = OrientedBox::new(Point3::new(0.3, -0.2, 0.5), 0.4, Vector3::new(0.8, 0.6, 1.0)).unwrap();
    let mesh = place_mesh(&templates()[1].mesh(), &b, CanonicalFrame::MinCorner).unwrap();
    let cfg = IcpConfig {
        max_iterations: 200,
        convergence_eps: 1e-14,
        max_correspondence: 0.5,
        ..Default::default()
    };
    let samples = sample_surface(&mesh, cfg.surface_samples, cfg.seed).unwrap();
    let mut r = rng::seeded(7);
    let (mut worst_rot, mut worst_t) = (0.0f64, 0.0f64);
    for trial in 0..30 {
        let axis = Vector3::from_fn(|_, _| r.sample::<f64, _>(StandardNormal)).normalize();
        let angle = r.random_range(0.0..20f64.to_radians());
        let dir = Vector3::from_fn(|_, _| r.sample::<f64, _>(StandardNormal)).normalize();
        let t = dir * r.random_range(0.0..0.1);
        let rot = rot_axis_angle(&axis, angle);
        // rotate about the shape's own center so the offset stays within 0.1 m
        let c = b.center.coords;
        let trans = c + t - rot * c;
        let target: Vec<Point3<f64>> = samples.iter().map(|p| rot * p + trans).collect();
        let res = icp_align(&mesh, &target, &cfg).map_err(|e| format!("trial {trial}: {e}"))?;
        let err: Matrix3<f64> = res.transform.rotation * rot.transpose();
        let skew = Vector3::new(err[(2, 1)] - err[(1, 2)], err[(0, 2)] - err[(2, 0)], err[(1, 0)] - err[(0, 1)]);
        let rot_err = (0.5 * skew.norm()).atan2(0.5 * (err.trace() - 1.0));
        let t_err = (res.transform.translation - trans).norm();
        worst_rot = worst_rot.max(rot_err);
        worst_t = worst_t.max(t_err);
        ensure!(
            res.history.windows(2).all(|w| w[1] <= w[0]),
            "trial {trial}: RMS increased"
        );
        ensure!(rot_err <= 1e-3 && t_err <= 1e-3, "trial {trial}: error {rot_err:e} rad, {t_err:e} m ({:.1} deg)", angle.to_degrees());
    }
    Ok(format!("30 trials, worst {worst_rot:.1e} rad / {worst_t:.1e} m"))
}

// ---- 8 ------------------------------------------------------------------------

fn cube_at(x: f64, cat: u16) -> TriMesh {
    TriMesh::cuboid(Point3::new(x, 0.0, 0.0), Point3::new(x + 1.0, 1.0, 1.0)).with_category(Some(ReconLabel(cat)))
}

fn pred(x: f64, conf: f64, cat: u16) -> PredictionRecord {
    PredictionRecord { mesh: cube_at(x, cat), confidence: conf, category: ReconLabel(cat) }
}

fn gt(x: f64, cat: u16) -> GtRecord {
    let mesh = cube_at(x, cat);
    let instance_points = sample_surface(&mesh, 500, 1).unwrap();
    GtRecord { mesh, instance_points, category: ReconLabel(cat) }
}

fn trace(m: &[MatchRecord]) -> Trace {
    m.iter().map(|r| (r.pred, r.gt)).collect()
}

fn criterion_8() -> Check {
    let ap = average_precision(&[true, false, true], 2);
    ensure!((ap - 0.833_333_333_3).abs() <= 1e-9, "AP {ap}");
    let params = MetricParams { voxel: 0.05, ..Default::default() };
    let run = |preds: &[PredictionRecord], gts: &[GtRecord], kind: MetricKind, thr: f64| {
        trace(&match_predictions(preds, gts, kind, thr, &params).unwrap())
    };
    // IoU of unit cubes shifted by s along x is (1 - s) / (1 + s).
    let cases: Vec<(&str, Trace, Trace)> = vec![
        (
            "later duplicate finds its GT taken",
            run(&[pred(0.25, 0.9, 0), pred(0.0, 0.8, 0), pred(2.5, 0.7, 0)], &[gt(0.0, 0), gt(2.0, 0)], MetricKind::Iou, 0.5),
            vec![(0, Some(0)), (1, None), (2, None)],
        ),
        (
            "categories never cross",
            run(&[pred(0.0, 0.9, 1), pred(0.0, 0.5, 0)], &[gt(0.0, 0)], MetricKind::Iou, 0.25),
            vec![(0, None), (1, Some(0))],
        ),
        (
            "equal confidence resolves by index",
            run(&[pred(0.5, 0.6, 0), pred(0.0, 0.6, 0)], &[gt(0.0, 0)], MetricKind::Iou, 0.25),
            vec![(0, Some(0)), (1, None)],
        ),
        (
            "claims the best-scoring GT and a failed claim frees it",
            run(
                &[pred(0.75, 0.9, 0), pred(0.7, 0.8, 0), pred(0.0, 0.3, 0)],
                &[gt(0.0, 0), gt(1.0, 0)],
                MetricKind::Iou,
                0.25,
            ),
            vec![(0, Some(1)), (1, None), (2, Some(0))],
        ),
        (
            "chamfer passes below the threshold",
            run(&[pred(0.05, 0.4, 2), pred(3.0, 0.95, 2)], &[gt(0.0, 2), gt(3.5, 2)], MetricKind::Cd, 0.2),
            vec![(1, None), (0, Some(0))],
        ),
    ];
    for (name, got, want) in &cases {
        ensure!(got == want, "{name}: trace {got:?}, expected {want:?}");
    }
    Ok(format!("AP {ap:.10}, {} greedy traces match", cases.len()))
}

// ---- 9 ------------------------------------------------------------------------

fn map_of(labels: &LabelSystem, preds: Vec<PredictionRecord>, gts: &[GtRecord], kind: MetricKind, thr: f64) -> f64 {
    let scenes = vec![SceneEval { preds, gts: gts.to_vec() }];
    evaluate_dataset(&scenes, labels, kind, thr, 0.09, &MetricParams::default()).unwrap().map.unwrap()
}

fn criterion_9() -> Check {
    let labels = LabelSystem::default();
    let dec = fixture_decoder();
    let (pool, meshes) = fixture_pool(&labels).map_err(|e| e.to_string())?;
    let run = |spec: &SceneSpec, mode: ReconMode| {
        let s = gen_scene(spec, &labels).unwrap();
        let inp = ReconInputs {
            scene: &s.scene,
            proposals: &s.proposals,
            labels: &labels,
            decoder: Some(&dec),
            pool: Some(&pool),
            pool_meshes: Some(&meshes),
        };
        let out = reconstruct_scene(&inp, &ReconConfig { mode, ..Default::default() }).unwrap();
        (s, out)
    };
    let spec = SceneSpec { seed: 9, ..Default::default() };
    let (s, retr) = run(&spec, ReconMode::Retrieve);
    ensure!(s.gts.len() == 7, "{} GT instances", s.gts.len());
    let retr_pcr = map_of(&labels, retr.predictions(), &s.gts, MetricKind::Pcr, 0.5);
    let retr_iou = map_of(&labels, retr.predictions(), &s.gts, MetricKind::Iou, 0.25);
    ensure!(retr_pcr == 1.0, "retrieve PCR@0.5 mAP {retr_pcr}");
    ensure!(retr_iou == 1.0, "retrieve IoU@0.25 mAP {retr_iou}");
    let (_, gen) = run(&spec, ReconMode::Generate);
    let gen_pcr = map_of(&labels, gen.predictions(), &s.gts, MetricKind::Pcr, 0.5);
    ensure!(gen_pcr >= 0.9, "generate PCR@0.5 mAP {gen_pcr}");

    let mut lfd = Vec::new();
    for noise in [0.0, 0.1] {
        let spec = SceneSpec { seed: 9, code_noise: noise, ..Default::default() };
        let (s, retr) = run(&spec, ReconMode::Retrieve);
        let (_, gen) = run(&spec, ReconMode::Generate);
        let a = map_of(&labels, retr.predictions(), &s.gts, MetricKind::Lfd, 0.5);
        let b = map_of(&labels, gen.predictions(), &s.gts, MetricKind::Lfd, 0.5);
        ensure!(a >= b, "code noise {noise}: retrieve LFD mAP {a} < generate {b}");
        lfd.push(format!("{a:.3} >= {b:.3}"));
    }
    Ok(format!(
        "{} proposals; retrieve PCR {retr_pcr}, IoU {retr_iou}; generate PCR {gen_pcr:.3}; LFD@0.5 retrieve vs generate {}",
        s.proposals.len(),
        lfd.join(", ")
    ))
}

// ---- 10 -----------------------------------------------------------------------

fn srk(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_srk"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "srk {} exited with {:?}: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    std::fs::write(dir.join(format!("stdout_{}.txt", args.join("_").replace(['/', ' ', ','], "-"))), &out.stdout)
        .map_err(|e| e.to_string())
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn run_all(dir: &Path) -> Result<(), String> {
    std::fs::write(dir.join("spec.toml"), "seed = 10\npoints_per_instance = 1500\ncode_sigma = 0.05\nfloor_points = 300\n")
        .map_err(|e| e.to_string())?;
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth", "--spec", "spec.toml", "--out-dir", "s"],
        vec!["cluster", "--scene", "s/scene.scene.bin", "--out", "clustered.json"],
        vec![
            "reconstruct", "--scene", "s/scene.scene.bin", "--proposals", "s/scene.proposals.json", "--decoder",
            "s/decoder.bin", "--mode", "generate", "--stochastic", "--seed", "3", "--icp", "--out-dir", "gen",
        ],
        vec![
            "reconstruct", "--scene", "s/scene.scene.bin", "--proposals", "s/scene.proposals.json", "--pool",
            "s/pool/pool.bin", "--mode", "retrieve", "--mesh-format", "obj", "--out-dir", "retr",
        ],
        vec![
            "reconstruct", "--scene", "s/scene.scene.bin", "--proposals", "s/scene.proposals.json", "--decoder",
            "s/decoder.bin", "--pool", "s/pool/pool.bin", "--mode", "project", "--k", "2", "--category-filter", "false", "--out-dir", "proj",
        ],
        vec!["retrieve", "--pool", "s/pool/pool.bin", "--proposals", "s/scene.proposals.json", "--k", "3", "--category-filter", "false", "--out", "nn.json"],
        vec!["metric", "--kind", "cd", "--pred", "s/gt/scene_gt_0.ply", "--gt", "s/gt/scene_gt_1.ply", "--out", "cd.json"],
        vec!["metric", "--kind", "lfd", "--pred", "s/gt/scene_gt_0.ply", "--gt", "s/gt/scene_gt_1.ply", "--out", "lfd.json"],
        vec!["evaluate", "--gt-dir", "s/gt", "--pred-dir", "gen", "--metric", "pcr", "--threshold", "0.5", "--out", "eval.json"],
        vec!["icp", "--mesh", "s/gt/scene_gt_1.ply", "--points", "s/gt/scene_gt_1_points.ply", "--out", "icp.ply", "--report", "icp.json"],
        vec![
            "interp", "--decoder", "s/decoder.bin", "--pool", "s/pool/pool.bin", "--from-id", "0", "--to-id", "3", "--category",
            "sofa", "--steps", "4", "--out-dir", "interp",
        ],
    ];
    for s in &steps {
        srk(dir, s)?;
    }
    Ok(())
}

fn criterion_10() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_all(a.path())?;
    run_all(b.path())?;
    let (fa, fb) = (files(a.path()), files(b.path()));
    ensure!(fa.keys().eq(fb.keys()), "runs wrote different file sets");
    for (k, v) in &fa {
        ensure!(fb[k] == *v, "{} differs between runs", k.display());
    }
    Ok(format!("8 subcommands, {} files byte-identical across two runs", fa.len()))
}

fn main() {
    #[allow(clippy::type_complexity)]
    let criteria: [(&str, fn() -> Check); 10] = [
        ("clustering oracle", criterion_1),
        ("canonical round trip", criterion_2),
        ("BSP extraction fidelity", criterion_3),
        ("metric oracles", criterion_4),
        ("light-field distance", criterion_5),
        ("latent ops", criterion_6),
        ("ICP recovery", criterion_7),
        ("AP correctness", criterion_8),
        ("end-to-end synthetic pipeline", criterion_9),
        ("determinism", criterion_10),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    let total = Instant::now();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS [{}] {name}: {detail} ({secs:.1} s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!("acceptance: {failed} failed, {:.1} s total", total.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
