//! Indexed triangle meshes and a few primitive constructors.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::geom::Aabb;
use crate::labels::ReconLabel;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub category: Option<ReconLabel>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let m = TriMesh {
            vertices,
            triangles,
            category: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_category(mut self, category: Option<ReconLabel>) -> Self {
        self.category = category;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if n > u32::MAX as usize {
            return Err(Error::invalid("too many vertices"));
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v as usize >= n) {
                return Err(Error::invalid(format!(
                    "triangle {i} references a vertex beyond {n}"
                )));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::invalid(format!("triangle {i} repeats a vertex index")));
            }
        }
        if let Some(i) = self
            .vertices
            .iter()
            .position(|v| !v.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::invalid(format!("vertex {i} is not finite")));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Signed enclosed volume via the divergence theorem. Positive for closed
    /// meshes with outward-facing (counter-clockwise) triangles.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                a.coords.dot(&b.coords.cross(&c.coords))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Area-weighted centroid of the surface.
    pub fn surface_centroid(&self) -> Option<Point3<f64>> {
        let mut acc = Vector3::zeros();
        let mut total = 0.0;
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.triangle(i);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            acc += (a.coords + b.coords + c.coords) * (area / 3.0);
            total += area;
        }
        (total > 0.0).then(|| Point3::from(acc / total))
    }

    /// Appends `other`, re-indexing its triangles.
    pub fn append(&mut self, other: &TriMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }

    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
            category: self.category,
        }
    }

    /// Applies `x -> scale * rotation * x + translation`.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>, scale: f64) -> TriMesh {
        self.map_vertices(|v| Point3::from(rotation * v.coords * scale + translation))
    }

    /// Axis-aligned cuboid, outward-facing triangles.
    pub fn cuboid(min: Point3<f64>, max: Point3<f64>) -> TriMesh {
        let vertices = (0..8)
            .map(|i| {
                Point3::new(
                    if i & 1 != 0 { max.x } else { min.x },
                    if i & 2 != 0 { max.y } else { min.y },
                    if i & 4 != 0 { max.z } else { min.z },
                )
            })
            .collect();
        let triangles = vec![
            // -z
            [0, 2, 3],
            [0, 3, 1],
            // +z
            [4, 5, 7],
            [4, 7, 6],
            // -y
            [0, 1, 5],
            [0, 5, 4],
            // +y
            [2, 6, 7],
            [2, 7, 3],
            // -x
            [0, 4, 6],
            [0, 6, 2],
            // +x
            [1, 3, 7],
            [1, 7, 5],
        ];
        TriMesh {
            vertices,
            triangles,
            category: None,
        }
    }

    pub fn unit_cube() -> TriMesh {
        Self::cuboid(Point3::origin(), Point3::new(1.0, 1.0, 1.0))
    }

    /// Square in the `z = height` plane spanning `[min, max]` on x and y,
    /// normal pointing up.
    pub fn square(min: f64, max: f64, height: f64) -> TriMesh {
        let vertices = vec![
            Point3::new(min, min, height),
            Point3::new(max, min, height),
            Point3::new(max, max, height),
            Point3::new(min, max, height),
        ];
        TriMesh {
            vertices,
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            category: None,
        }
    }

    /// Subdivided icosahedron projected onto a sphere.
    pub fn icosphere(center: Point3<f64>, radius: f64, subdivisions: u32) -> TriMesh {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vector3<f64>> = [
            (-1.0, phi, 0.0),
            (1.0, phi, 0.0),
            (-1.0, -phi, 0.0),
            (1.0, -phi, 0.0),
            (0.0, -1.0, phi),
            (0.0, 1.0, phi),
            (0.0, -1.0, -phi),
            (0.0, 1.0, -phi),
            (phi, 0.0, -1.0),
            (phi, 0.0, 1.0),
            (-phi, 0.0, -1.0),
            (-phi, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut cache = std::collections::HashMap::new();
            let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| -> u32 {
                let key = (a.min(b), a.max(b));
                *cache.entry(key).or_insert_with(|| {
                    verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                    (verts.len() - 1) as u32
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        TriMesh {
            vertices: verts
                .into_iter()
                .map(|v| center + v * radius)
                .collect(),
            triangles: faces,
            category: None,
        }
    }

    /// Closed regular prism along z with `sides` sides, circumscribed
    /// radius `radius` around `(cx, cy)`, spanning `[z0, z1]`.
    pub fn prism(cx: f64, cy: f64, radius: f64, z0: f64, z1: f64, sides: usize) -> TriMesh {
        let mut vertices = Vec::with_capacity(2 * sides + 2);
        for &z in &[z0, z1] {
            for k in 0..sides {
                let a = std::f64::consts::TAU * k as f64 / sides as f64;
                vertices.push(Point3::new(cx + radius * a.cos(), cy + radius * a.sin(), z));
            }
        }
        let bottom_c = vertices.len() as u32;
        vertices.push(Point3::new(cx, cy, z0));
        let top_c = vertices.len() as u32;
        vertices.push(Point3::new(cx, cy, z1));
        let n = sides as u32;
        let mut triangles = Vec::with_capacity(4 * sides);
        for k in 0..n {
            let k1 = (k + 1) % n;
            triangles.push([bottom_c, k1, k]);
            triangles.push([top_c, n + k, n + k1]);
            triangles.push([k, k1, n + k1]);
            triangles.push([k, n + k1, n + k]);
        }
        TriMesh {
            vertices,
            triangles,
            category: None,
        }
    }
}
