//! Ray-parity inside test along +x.
//!
//! Projected edge ties are resolved by a fixed symbolic perturbation of the
//! query point, so a ray through a shared edge or vertex of a closed surface
//! is counted exactly once.

use nalgebra::Point3;

use super::bvh::MeshBvh;

#[inline]
fn edge_fn(p: (f64, f64), q: (f64, f64), t: (f64, f64)) -> f64 {
    (q.0 - p.0) * (t.1 - p.1) - (q.1 - p.1) * (t.0 - p.0)
}

/// Edge function evaluated with canonical endpoint order so that the two
/// triangles sharing an edge see exactly negated values.
#[inline]
fn edge_canonical(p: (f64, f64), q: (f64, f64), t: (f64, f64)) -> f64 {
    if p <= q { edge_fn(p, q, t) } else { -edge_fn(q, p, t) }
}

/// Sign of the edge function after perturbing the point by (ε, ε²) in (y, z).
#[inline]
fn edge_sign(e: f64, p: (f64, f64), q: (f64, f64)) -> bool {
    if e != 0.0 {
        return e > 0.0;
    }
    let (dy, dz) = (q.0 - p.0, q.1 - p.1);
    dz < 0.0 || (dz == 0.0 && dy > 0.0)
}

/// x coordinate where the +x line through (y, z) crosses the triangle, if it does.
pub fn triangle_crossing(tri: &[Point3<f64>; 3], y: f64, z: f64) -> Option<f64> {
    let v: [(f64, f64); 3] = [(tri[0].y, tri[0].z), (tri[1].y, tri[1].z), (tri[2].y, tri[2].z)];
    let t = (y, z);
    let e_ab = edge_canonical(v[0], v[1], t);
    let e_bc = edge_canonical(v[1], v[2], t);
    let e_ca = edge_canonical(v[2], v[0], t);
    let orient = edge_canonical(v[0], v[1], v[2]);
    if orient == 0.0 {
        return None;
    }
    let want = orient > 0.0;
    if edge_sign(e_ab, v[0], v[1]) != want
        || edge_sign(e_bc, v[1], v[2]) != want
        || edge_sign(e_ca, v[2], v[0]) != want
    {
        return None;
    }
    let sum = e_ab + e_bc + e_ca;
    if sum == 0.0 {
        // on a vertex exactly; any convex combination works
        return Some((tri[0].x + tri[1].x + tri[2].x) / 3.0);
    }
    Some((e_bc * tri[0].x + e_ca * tri[1].x + e_ab * tri[2].x) / sum)
}

/// All crossings of the +x line through (y, z), unsorted.
pub fn column_crossings(bvh: &MeshBvh, y: f64, z: f64, out: &mut Vec<f64>) {
    out.clear();
    let mesh = bvh.mesh();
    bvh.visit(
        &mut |b| b.min.y <= y && y <= b.max.y && b.min.z <= z && z <= b.max.z,
        &mut |t| {
            if let Some(x) = triangle_crossing(&mesh.triangle(t), y, z) {
                out.push(x);
            }
        },
    );
}

/// Odd number of surface crossings on the +x ray from `p`.
pub fn point_in_mesh(bvh: &MeshBvh, p: &Point3<f64>) -> bool {
    let mesh = bvh.mesh();
    let mut count = 0usize;
    bvh.visit(
        &mut |b| b.max.x > p.x && b.min.y <= p.y && p.y <= b.max.y && b.min.z <= p.z && p.z <= b.max.z,
        &mut |t| {
            if let Some(x) = triangle_crossing(&mesh.triangle(t), p.y, p.z) {
                if x > p.x {
                    count += 1;
                }
            }
        },
    );
    count % 2 == 1
}
