//! Axis-aligned bounding volume hierarchy over mesh triangles.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geom::Aabb;
use crate::mesh::TriMesh;

pub const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, count: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
pub struct MeshBvh<'a> {
    mesh: &'a TriMesh,
    nodes: Vec<Node>,
    /// Triangle ids in leaf order.
    order: Vec<usize>,
}

fn tri_bounds(mesh: &TriMesh, t: usize) -> Aabb {
    Aabb::from_points(&mesh.triangle(t))
}

impl<'a> MeshBvh<'a> {
    pub fn build(mesh: &'a TriMesh) -> Result<Self> {
        if mesh.triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        let boxes: Vec<Aabb> = (0..mesh.triangles.len()).map(|t| tri_bounds(mesh, t)).collect();
        let centroids: Vec<Point3<f64>> = boxes.iter().map(|b| b.center()).collect();
        let mut order: Vec<usize> = (0..mesh.triangles.len()).collect();
        let mut nodes = Vec::with_capacity(2 * order.len() / LEAF_SIZE + 1);
        build_node(&mut nodes, &mut order, 0, &boxes, &centroids);
        Ok(MeshBvh { mesh, nodes, order })
    }

    pub fn mesh(&self) -> &TriMesh {
        self.mesh
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Visits every triangle in nodes accepted by `descend`.
    pub fn visit(&self, descend: &mut impl FnMut(&Aabb) -> bool, visit_tri: &mut impl FnMut(usize)) {
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !descend(&node.bounds) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &t in &self.order[start..start + count] {
                        visit_tri(t);
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
    }

    /// Closest surface point to `p`: `(squared distance, triangle, point)`.
    pub fn closest_point(&self, p: &Point3<f64>) -> (f64, usize, Point3<f64>) {
        let mut best = (f64::INFINITY, usize::MAX, *p);
        let mut stack = vec![(0usize, self.nodes[0].bounds.distance_squared(p))];
        while let Some((n, d2)) = stack.pop() {
            if d2 > best.0 {
                continue;
            }
            match self.nodes[n].kind {
                NodeKind::Leaf { start, count } => {
                    for &t in &self.order[start..start + count] {
                        let [a, b, c] = self.mesh.triangle(t);
                        let q = closest_point_on_triangle(p, &a, &b, &c);
                        let dist = (p - q).norm_squared();
                        if dist < best.0 || (dist == best.0 && t < best.1) {
                            best = (dist, t, q);
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.nodes[left].bounds.distance_squared(p);
                    let dr = self.nodes[right].bounds.distance_squared(p);
                    // nearer child popped first
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
            }
        }
        best
    }

    /// Does the segment `a -> b` cross any triangle strictly between its ends?
    /// `t_margin` is the excluded parameter range at each end.
    pub fn segment_hits(&self, a: &Point3<f64>, b: &Point3<f64>, t_margin: f64) -> bool {
        let dir = b - a;
        let hit = std::cell::Cell::new(false);
        self.visit(
            &mut |bb| !hit.get() && segment_box_overlap(a, &dir, bb),
            &mut |t| {
                if hit.get() {
                    return;
                }
                let [p, q, r] = self.mesh.triangle(t);
                if let Some(s) = ray_triangle(a, &dir, &p, &q, &r) {
                    if s > t_margin && s < 1.0 - t_margin {
                        hit.set(true);
                    }
                }
            },
        );
        hit.get()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Structural check used by tests: every triangle in exactly one leaf,
    /// parents enclose children.
    pub fn check_invariants(&self) -> bool {
        let mut seen = vec![0u32; self.mesh.triangles.len()];
        let mut ok = true;
        for node in &self.nodes {
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    ok &= count <= LEAF_SIZE && count > 0;
                    for &t in &self.order[start..start + count] {
                        seen[t] += 1;
                        ok &= node.bounds.contains_box(&tri_bounds(self.mesh, t));
                    }
                }
                NodeKind::Inner { left, right } => {
                    ok &= node.bounds.contains_box(&self.nodes[left].bounds);
                    ok &= node.bounds.contains_box(&self.nodes[right].bounds);
                }
            }
        }
        ok && seen.iter().all(|&c| c == 1)
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    offset: usize,
    boxes: &[Aabb],
    centroids: &[Point3<f64>],
) -> usize {
    let bounds = order.iter().fold(Aabb::empty(), |acc, &t| acc.union(&boxes[t]));
    let id = nodes.len();
    nodes.push(Node {
        bounds,
        kind: NodeKind::Leaf {
            start: offset,
            count: order.len(),
        },
    });
    if order.len() <= LEAF_SIZE {
        return id;
    }
    let cb = Aabb::from_points(order.iter().map(|&t| &centroids[t]));
    let ext = cb.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a][axis]
            .partial_cmp(&centroids[b][axis])
            .unwrap()
            .then(a.cmp(&b))
    });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(nodes, lo, offset, boxes, centroids);
    let right = build_node(nodes, hi, offset + mid, boxes, centroids);
    nodes[id].kind = NodeKind::Inner { left, right };
    id
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Moller-Trumbore; returns the ray parameter of the hit.
pub fn ray_triangle(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = inv * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = inv * dir.dot(&q);
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(inv * e2.dot(&q))
}

fn segment_box_overlap(a: &Point3<f64>, dir: &Vector3<f64>, bb: &Aabb) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        if dir[i] == 0.0 {
            if a[i] < bb.min[i] || a[i] > bb.max[i] {
                return false;
            }
            continue;
        }
        let inv = 1.0 / dir[i];
        let (mut lo, mut hi) = ((bb.min[i] - a[i]) * inv, (bb.max[i] - a[i]) * inv);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return false;
        }
    }
    true
}
