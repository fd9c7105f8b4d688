//! Convex polytopes built by clipping a seed box with half-spaces.
//!
//! Faces are convex polygons wound counter-clockwise around their outward
//! normal. Each cut clips every face (Sutherland-Hodgman) and closes the
//! hole with a cap polygon lying in the cutting plane. Vertices within
//! [`CLIP_EPS`] of a plane count as on it.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::mesh::TriMesh;

pub const CLIP_EPS: f64 = 1e-9;

/// Half-space `n . x + d <= 0`, stored as `[nx, ny, nz, d]`.
pub type Plane = [f64; 4];

fn signed(plane: &Plane, p: &Point3<f64>) -> f64 {
    plane[0] * p.x + plane[1] * p.y + plane[2] * p.z + plane[3]
}

#[derive(Debug, Clone)]
struct Face {
    normal: Vector3<f64>,
    verts: Vec<Point3<f64>>,
}

#[derive(Debug, Clone)]
pub struct ConvexPolytope {
    faces: Vec<Face>,
}

fn lex_less(a: &Point3<f64>, b: &Point3<f64>) -> bool {
    (a.x, a.y, a.z) < (b.x, b.y, b.z)
}

/// Edge/plane crossing computed from a canonical endpoint order so both faces
/// sharing the edge get a bit-identical point.
fn crossing(a: &Point3<f64>, sa: f64, b: &Point3<f64>, sb: f64) -> Point3<f64> {
    let (p, sp, q, sq) = if lex_less(a, b) { (a, sa, b, sb) } else { (b, sb, a, sa) };
    let t = sp / (sp - sq);
    p + (q - p) * t
}

fn snap(s: f64) -> f64 {
    if s.abs() <= CLIP_EPS {
        0.0
    } else {
        s
    }
}

impl ConvexPolytope {
    pub fn cuboid(min: Point3<f64>, max: Point3<f64>) -> Self {
        let c = |i: usize| {
            Point3::new(
                if i & 1 != 0 { max.x } else { min.x },
                if i & 2 != 0 { max.y } else { min.y },
                if i & 4 != 0 { max.z } else { min.z },
            )
        };
        let quad = |n: Vector3<f64>, idx: [usize; 4]| Face {
            normal: n,
            verts: idx.iter().map(|&i| c(i)).collect(),
        };
        ConvexPolytope {
            faces: vec![
                quad(-Vector3::z(), [0, 2, 3, 1]),
                quad(Vector3::z(), [4, 5, 7, 6]),
                quad(-Vector3::y(), [0, 1, 5, 4]),
                quad(Vector3::y(), [2, 6, 7, 3]),
                quad(-Vector3::x(), [0, 4, 6, 2]),
                quad(Vector3::x(), [1, 3, 7, 5]),
            ],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    fn vertices(&self) -> impl Iterator<Item = &Point3<f64>> {
        self.faces.iter().flat_map(|f| f.verts.iter())
    }

    /// Intersects with the half-space `plane`. Planes with a zero normal keep
    /// or empty the polytope depending on the sign of `d`.
    pub fn clip(&mut self, plane: &Plane) {
        if self.faces.is_empty() {
            return;
        }
        let normal = Vector3::new(plane[0], plane[1], plane[2]);
        if normal.norm_squared() == 0.0 {
            if plane[3] > 0.0 {
                self.faces.clear();
            }
            return;
        }
        let any_out = self.vertices().any(|v| snap(signed(plane, v)) > 0.0);
        if !any_out {
            return;
        }
        let any_in = self.vertices().any(|v| snap(signed(plane, v)) < 0.0);
        if !any_in {
            self.faces.clear();
            return;
        }

        let mut cap: Vec<Point3<f64>> = Vec::new();
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        for face in &self.faces {
            let s: Vec<f64> = face.verts.iter().map(|v| snap(signed(plane, v))).collect();
            let n = face.verts.len();
            let mut out = Vec::with_capacity(n + 1);
            for i in 0..n {
                let j = (i + 1) % n;
                let (vi, vj) = (&face.verts[i], &face.verts[j]);
                if s[i] <= 0.0 {
                    out.push(*vi);
                    if s[i] == 0.0 {
                        cap.push(*vi);
                    }
                }
                if (s[i] < 0.0 && s[j] > 0.0) || (s[i] > 0.0 && s[j] < 0.0) {
                    let x = crossing(vi, s[i], vj, s[j]);
                    out.push(x);
                    cap.push(x);
                }
            }
            out.dedup_by(|a, b| (*a - *b).norm_squared() == 0.0);
            while out.len() > 1 && out.first() == out.last() {
                out.pop();
            }
            if out.len() >= 3 {
                faces.push(Face {
                    normal: face.normal,
                    verts: out,
                });
            }
        }

        if let Some(poly) = order_cap(cap, &normal) {
            faces.push(Face {
                normal: normal.normalize(),
                verts: poly,
            });
        }
        self.faces = faces;
    }

    /// Fan-triangulates every face; vertices are shared when bit-identical.
    pub fn to_mesh(&self) -> TriMesh {
        let mut index: HashMap<[u64; 3], u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for face in &self.faces {
            let ids: Vec<u32> = face
                .verts
                .iter()
                .map(|v| {
                    let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
                    *index.entry(key).or_insert_with(|| {
                        vertices.push(*v);
                        (vertices.len() - 1) as u32
                    })
                })
                .collect();
            for k in 1..ids.len().saturating_sub(1) {
                let t = [ids[0], ids[k], ids[k + 1]];
                if t[0] != t[1] && t[1] != t[2] && t[0] != t[2] {
                    triangles.push(t);
                }
            }
        }
        TriMesh {
            vertices,
            triangles,
            category: None,
        }
    }
}

/// Orders cap points counter-clockwise around `normal`, dropping duplicates.
fn order_cap(mut pts: Vec<Point3<f64>>, normal: &Vector3<f64>) -> Option<Vec<Point3<f64>>> {
    pts.sort_by(|a, b| (a.x, a.y, a.z).partial_cmp(&(b.x, b.y, b.z)).unwrap());
    pts.dedup_by(|a, b| (*a - *b).norm_squared() <= 1e-24);
    if pts.len() < 3 {
        return None;
    }
    let n = normal.normalize();
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    let centroid = pts.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / pts.len() as f64;
    let mut keyed: Vec<(f64, Point3<f64>)> = pts
        .into_iter()
        .map(|p| {
            let d = p.coords - centroid;
            (d.dot(&v).atan2(d.dot(&u)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Some(keyed.into_iter().map(|(_, p)| p).collect())
}
