use nalgebra::Point3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::rng;

/// Area-weighted uniform surface samples.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<Vec<Point3<f64>>> {
    let mut cdf = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cdf.push(total);
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::invalid("mesh has zero surface area"));
    }
    let mut r = rng::seeded(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u = r.random::<f64>() * total;
        let t = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let [a, b, c] = mesh.triangle(t);
        let s = r.random::<f64>().sqrt();
        let w = r.random::<f64>();
        out.push(Point3::from(a.coords * (1.0 - s) + b.coords * (s * (1.0 - w)) + c.coords * (s * w)));
    }
    Ok(out)
}
