//! Multi-view silhouette distance: Zernike magnitudes of 20 orthographic
//! silhouettes, compared under the 60 rotations of the icosahedral group.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LfdConfig {
    pub image_size: usize,
    pub zernike_order: usize,
}

impl Default for LfdConfig {
    fn default() -> Self {
        LfdConfig { image_size: 128, zernike_order: 8 }
    }
}

impl LfdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 32 {
            return Err(Error::invalid(format!("image_size must be >= 32, got {}", self.image_size)));
        }
        if self.zernike_order > 20 {
            return Err(Error::invalid("zernike_order must be <= 20"));
        }
        Ok(())
    }
}

pub const VIEW_COUNT: usize = 20;

/// Unit dodecahedron vertices.
pub fn view_directions() -> &'static [Vector3<f64>; VIEW_COUNT] {
    static DIRS: OnceLock<[Vector3<f64>; VIEW_COUNT]> = OnceLock::new();
    DIRS.get_or_init(|| {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let ip = 1.0 / phi;
        let mut v = Vec::with_capacity(VIEW_COUNT);
        for &x in &[-1.0, 1.0] {
            for &y in &[-1.0, 1.0] {
                for &z in &[-1.0, 1.0] {
                    v.push(Vector3::new(x, y, z));
                }
            }
        }
        for &a in &[-1.0, 1.0] {
            for &b in &[-1.0, 1.0] {
                v.push(Vector3::new(0.0, a * ip, b * phi));
                v.push(Vector3::new(a * ip, b * phi, 0.0));
                v.push(Vector3::new(a * phi, 0.0, b * ip));
            }
        }
        let v: Vec<Vector3<f64>> = v.into_iter().map(|d| d.normalize()).collect();
        v.try_into().unwrap()
    })
}

fn frame(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix3<f64> {
    let e1 = *a;
    let e2 = (b - a * a.dot(b)).normalize();
    Matrix3::from_columns(&[e1, e2, e1.cross(&e2)])
}

fn find_view(d: &Vector3<f64>) -> Option<usize> {
    view_directions().iter().position(|v| (v - d).norm() < 1e-9)
}

/// Rotations of the icosahedral group paired with the view permutation each induces
/// (`perm[i]` is the view that direction `i` is carried to). Identity comes first.
pub fn icosahedral_group() -> &'static [(Matrix3<f64>, [usize; VIEW_COUNT])] {
    static GROUP: OnceLock<Vec<(Matrix3<f64>, [usize; VIEW_COUNT])>> = OnceLock::new();
    GROUP.get_or_init(|| {
        let dirs = view_directions();
        let v0 = dirs[0];
        let (v1, c) = dirs[1..]
            .iter()
            .map(|d| (*d, v0.dot(d)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        let base = frame(&v0, &v1).transpose();
        let mut out = Vec::with_capacity(60);
        for w0 in dirs {
            for w1 in dirs {
                if (w0.dot(w1) - c).abs() > 1e-9 {
                    continue;
                }
                let r = frame(w0, w1) * base;
                let mut perm = [0usize; VIEW_COUNT];
                let ok = dirs.iter().enumerate().all(|(i, d)| match find_view(&(r * d)) {
                    Some(j) => {
                        perm[i] = j;
                        true
                    }
                    None => false,
                });
                if ok {
                    out.push((r, perm));
                }
            }
        }
        out.sort_by_key(|(_, p)| *p != std::array::from_fn::<usize, VIEW_COUNT, _>(|i| i));
        out
    })
}

/// Per-view Zernike magnitude vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    pub views: Vec<Vec<f64>>,
}

/// Hexagonal sample lattice of spacing `2 / size` centred on the origin,
/// restricted to the unit disk. Rows are indexed by `b`, columns by `a`, with
/// sample position `((a + b/2) h, b h sqrt(3)/2)`.
struct Lattice {
    h: f64,
    /// Per row `b + rows`: (first a, sample count, offset into samples).
    rows: Vec<(i64, usize, usize)>,
    half_rows: i64,
    samples: Vec<(f64, f64)>,
}

impl Lattice {
    fn new(size: usize) -> Self {
        let h = 2.0 / size as f64;
        let dy = h * 3f64.sqrt() / 2.0;
        let half_rows = (1.0 / dy).floor() as i64;
        let mut rows = Vec::new();
        let mut samples = Vec::new();
        for b in -half_rows..=half_rows {
            let y = b as f64 * dy;
            let shift = b as f64 / 2.0;
            let lo = (-1.0 / h - shift).floor() as i64;
            let hi = (1.0 / h - shift).ceil() as i64;
            let start = samples.len();
            let mut first = None;
            for a in lo..=hi {
                let x = (a as f64 + shift) * h;
                if x * x + y * y <= 1.0 {
                    first.get_or_insert(a);
                    samples.push((x, y));
                }
            }
            rows.push((first.unwrap_or(0), samples.len() - start, start));
        }
        Lattice { h, rows, half_rows, samples }
    }
}

struct ZernikeBasis {
    lattice: Lattice,
    /// Per sample: basis values (re, im) per moment, pre-multiplied by the cell area.
    values: Vec<Vec<(f64, f64)>>,
    moments: usize,
}

fn radial(n: usize, m: usize, rho: f64) -> f64 {
    let mut sum = 0.0;
    for s in 0..=(n - m) / 2 {
        let num = fact(n - s);
        let den = fact(s) * fact((n + m) / 2 - s) * fact((n - m) / 2 - s);
        let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * num / den * rho.powi((n - 2 * s) as i32);
    }
    sum
}

fn fact(k: usize) -> f64 {
    (1..=k).fold(1.0, |a, b| a * b as f64)
}

fn moment_indices(order: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for n in 0..=order {
        for m in (n % 2..=n).step_by(2) {
            v.push((n, m));
        }
    }
    v
}

impl ZernikeBasis {
    fn new(size: usize, order: usize) -> Self {
        let idx = moment_indices(order);
        let lattice = Lattice::new(size);
        let area = lattice.h * lattice.h * 3f64.sqrt() / 2.0;
        let values = lattice
            .samples
            .iter()
            .map(|&(x, y)| {
                let rho = (x * x + y * y).sqrt();
                let theta = y.atan2(x);
                idx.iter()
                    .map(|&(n, m)| {
                        let w = (n as f64 + 1.0) / PI * radial(n, m, rho) * area;
                        let a = m as f64 * theta;
                        (w * a.cos(), -w * a.sin())
                    })
                    .collect()
            })
            .collect();
        ZernikeBasis { lattice, values, moments: idx.len() }
    }

    fn magnitudes(&self, img: &[bool]) -> Vec<f64> {
        let mut acc = vec![(0.0, 0.0); self.moments];
        for (vals, _) in self.values.iter().zip(img).filter(|(_, &on)| on) {
            for (a, v) in acc.iter_mut().zip(vals) {
                a.0 += v.0;
                a.1 += v.1;
            }
        }
        acc.into_iter().map(|(re, im)| (re * re + im * im).sqrt()).collect()
    }
}

fn basis(cfg: &LfdConfig) -> &'static ZernikeBasis {
    use std::collections::HashMap;
    use std::sync::Mutex;
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), &'static ZernikeBasis>>> = OnceLock::new();
    let key = (cfg.image_size, cfg.zernike_order);
    let mut cache = CACHE.get_or_init(Default::default).lock().unwrap();
    cache
        .entry(key)
        .or_insert_with(|| Box::leak(Box::new(ZernikeBasis::new(key.0, key.1))))
}

/// In-plane frames: view 0 gets a fixed frame, view `j` the image of it under
/// the first group rotation taking view 0 to `j`. Any group rotation then maps
/// frames onto frames up to a third of a turn, which the lattice absorbs.
pub fn view_frames() -> &'static [(Vector3<f64>, Vector3<f64>); VIEW_COUNT] {
    static FRAMES: OnceLock<[(Vector3<f64>, Vector3<f64>); VIEW_COUNT]> = OnceLock::new();
    FRAMES.get_or_init(|| {
        let d0 = view_directions()[0];
        let u0 = d0.cross(&Vector3::z()).normalize();
        let v0 = d0.cross(&u0);
        std::array::from_fn(|j| {
            let (r, _) = icosahedral_group().iter().find(|(_, perm)| perm[0] == j).unwrap();
            (r * u0, r * v0)
        })
    })
}

/// Edge test with a tie rule: a sample exactly on an edge belongs to one side
/// only, so edges through samples do not bias the silhouette area.
fn covers(p: (f64, f64), q: (f64, f64), t: (f64, f64), orient: f64) -> bool {
    let e = if p <= q {
        (q.0 - p.0) * (t.1 - p.1) - (q.1 - p.1) * (t.0 - p.0)
    } else {
        -((p.0 - q.0) * (t.1 - q.1) - (p.1 - q.1) * (t.0 - q.0))
    };
    if e != 0.0 {
        return e * orient > 0.0;
    }
    let (dx, dy) = (q.0 - p.0, q.1 - p.1);
    let owned = dy < 0.0 || (dy == 0.0 && dx > 0.0);
    owned == (orient > 0.0)
}

/// Binary orthographic silhouette over the lattice samples; a sample is set
/// iff it is covered by a projected triangle.
fn silhouette(verts: &[Point3<f64>], mesh: &TriMesh, view: usize, lat: &Lattice) -> Vec<bool> {
    let (u, v) = view_frames()[view];
    let proj: Vec<(f64, f64)> = verts.iter().map(|p| (p.coords.dot(&u), p.coords.dot(&v))).collect();
    let dy = lat.h * 3f64.sqrt() / 2.0;
    let mut img = vec![false; lat.samples.len()];
    for t in &mesh.triangles {
        let [a, b, c] = [proj[t[0] as usize], proj[t[1] as usize], proj[t[2] as usize]];
        let area = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if area == 0.0 {
            continue;
        }
        let sg = area.signum();
        let (ylo, yhi) = (a.1.min(b.1).min(c.1), a.1.max(b.1).max(c.1));
        let (xlo, xhi) = (a.0.min(b.0).min(c.0), a.0.max(b.0).max(c.0));
        let b0 = ((ylo / dy).ceil() as i64).max(-lat.half_rows);
        let b1 = ((yhi / dy).floor() as i64).min(lat.half_rows);
        for row in b0..=b1 {
            let (first, count, offset) = lat.rows[(row + lat.half_rows) as usize];
            if count == 0 {
                continue;
            }
            let shift = row as f64 / 2.0;
            let a0 = ((xlo / lat.h - shift).ceil() as i64).max(first);
            let a1 = ((xhi / lat.h - shift).floor() as i64).min(first + count as i64 - 1);
            for col in a0..=a1 {
                let k = offset + (col - first) as usize;
                if img[k] {
                    continue;
                }
                let s = lat.samples[k];
                if covers(a, b, s, sg) && covers(b, c, s, sg) && covers(c, a, s, sg) {
                    img[k] = true;
                }
            }
        }
    }
    img
}

/// Descriptor of a mesh normalized about its surface centroid to unit radius.
pub fn lightfield_descriptor(mesh: &TriMesh, cfg: &LfdConfig) -> Result<LightField> {
    cfg.validate()?;
    let c = mesh
        .surface_centroid()
        .ok_or_else(|| Error::invalid("mesh has zero surface area"))?;
    let radius = mesh.vertices.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid("mesh has zero extent"));
    }
    let verts: Vec<Point3<f64>> = mesh.vertices.iter().map(|p| Point3::from((p - c) / radius)).collect();
    let zb = basis(cfg);
    let views = view_directions()
        .par_iter()
        .enumerate()
        .map(|(j, _)| zb.magnitudes(&silhouette(&verts, mesh, j, &zb.lattice)))
        .collect();
    Ok(LightField { views })
}

impl LightField {
    /// Minimum over group rotations of the mean per-view L1 distance.
    pub fn distance(&self, other: &LightField) -> f64 {
        let n = self.views.len();
        let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        icosahedral_group()
            .iter()
            .map(|(_, perm)| {
                let mut terms: Vec<f64> = (0..n).map(|i| l1(&self.views[i], &other.views[perm[i]])).collect();
                // summing in sorted order makes the value independent of argument order
                terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
                terms.iter().sum::<f64>() / n as f64
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn lightfield_distance(a: &TriMesh, b: &TriMesh, cfg: &LfdConfig) -> Result<f64> {
    let (da, db) = rayon::join(|| lightfield_descriptor(a, cfg), || lightfield_descriptor(b, cfg));
    Ok(da?.distance(&db?))
}
