//! Voxel occupancy on a shared grid and the resulting IoU.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::bvh::MeshBvh;
use super::inside::column_crossings;
use crate::error::{Error, Result};
use crate::geom::Aabb;
use crate::mesh::TriMesh;

/// Refuse grids beyond this many cells.
pub const MAX_VOXELS: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    pub origin: Point3<f64>,
    pub voxel: f64,
    pub dims: [usize; 3],
}

impl VoxelGrid {
    pub fn covering(bounds: &Aabb, voxel: f64) -> Result<Self> {
        if !(voxel > 0.0) || !voxel.is_finite() {
            return Err(Error::invalid(format!("voxel size must be positive, got {voxel}")));
        }
        let ext = bounds.extent();
        let mut dims = [1usize; 3];
        for i in 0..3 {
            dims[i] = ((ext[i] / voxel).ceil() as usize).max(1);
        }
        let total = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        match total {
            Some(t) if t <= MAX_VOXELS => Ok(VoxelGrid { origin: bounds.min, voxel, dims }),
            _ => Err(Error::invalid(format!("voxel grid {dims:?} too large"))),
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        let h = self.voxel;
        Point3::new(
            self.origin.x + (i as f64 + 0.5) * h,
            self.origin.y + (j as f64 + 0.5) * h,
            self.origin.z + (k as f64 + 0.5) * h,
        )
    }

    fn cell_range(&self, lo: f64, hi: f64, axis: usize) -> (usize, usize) {
        let o = self.origin[axis];
        let a = ((lo - o) / self.voxel).floor().max(0.0) as usize;
        let b = (((hi - o) / self.voxel).floor().max(0.0) as usize).min(self.dims[axis] - 1);
        (a.min(self.dims[axis] - 1), b)
    }
}

/// Occupied iff the voxel center is inside (parity) or the surface touches the voxel interior.
pub fn voxelize(mesh: &TriMesh, grid: &VoxelGrid) -> Vec<bool> {
    let mut occ = vec![false; grid.len()];
    if mesh.triangles.is_empty() {
        return occ;
    }
    let bvh = MeshBvh::build(mesh).expect("non-empty mesh");
    let [nx, ny, nz] = grid.dims;
    // interior by column parity
    occ.par_chunks_mut(nx).enumerate().for_each_init(Vec::new, |xs, (col, row)| {
        let (j, k) = (col % ny, col / ny);
        let c = grid.center(0, j, k);
        column_crossings(&bvh, c.y, c.z, xs);
        if xs.is_empty() {
            return;
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut above = 0usize; // crossings with x <= center
        for (i, cell) in row.iter_mut().enumerate() {
            let x = grid.origin.x + (i as f64 + 0.5) * grid.voxel;
            while above < xs.len() && xs[above] <= x {
                above += 1;
            }
            *cell = (xs.len() - above) % 2 == 1;
        }
    });
    let _ = nz;
    // surface
    let half = Vector3::repeat(0.5 * grid.voxel * (1.0 - 1e-9));
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangle(t);
        let b = Aabb::from_points(&tri);
        let (i0, i1) = grid.cell_range(b.min.x, b.max.x, 0);
        let (j0, j1) = grid.cell_range(b.min.y, b.max.y, 1);
        let (k0, k1) = grid.cell_range(b.min.z, b.max.z, 2);
        for k in k0..=k1 {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let id = grid.index(i, j, k);
                    if !occ[id] && triangle_box_overlap(&tri, &grid.center(i, j, k), &half) {
                        occ[id] = true;
                    }
                }
            }
        }
    }
    occ
}

/// Separating-axis test of a triangle against an axis-aligned box.
pub fn triangle_box_overlap(tri: &[Point3<f64>; 3], center: &Point3<f64>, half: &Vector3<f64>) -> bool {
    let v = [tri[0] - center, tri[1] - center, tri[2] - center];
    for a in 0..3 {
        let lo = v[0][a].min(v[1][a]).min(v[2][a]);
        let hi = v[0][a].max(v[1][a]).max(v[2][a]);
        if lo > half[a] || hi < -half[a] {
            return false;
        }
    }
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let separated = |axis: Vector3<f64>| {
        if axis.norm_squared() == 0.0 {
            return false;
        }
        let p = [axis.dot(&v[0]), axis.dot(&v[1]), axis.dot(&v[2])];
        let r = half.x * axis.x.abs() + half.y * axis.y.abs() + half.z * axis.z.abs();
        p[0].min(p[1]).min(p[2]) > r || p[0].max(p[1]).max(p[2]) < -r
    };
    if separated(e[0].cross(&e[1])) {
        return false;
    }
    for ei in &e {
        for a in 0..3 {
            let mut unit = Vector3::zeros();
            unit[a] = 1.0;
            if separated(ei.cross(&unit)) {
                return false;
            }
        }
    }
    true
}

/// IoU of the two occupancy grids; 0 when the union is empty.
pub fn voxel_iou(a: &TriMesh, b: &TriMesh, voxel: f64) -> Result<f64> {
    let bounds = a.bounds().union(&b.bounds());
    if bounds.is_empty() {
        VoxelGrid::covering(&Aabb { min: Point3::origin(), max: Point3::origin() }, voxel)?;
        return Ok(0.0);
    }
    let grid = VoxelGrid::covering(&bounds, voxel)?;
    let (oa, ob) = rayon::join(|| voxelize(a, &grid), || voxelize(b, &grid));
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in oa.iter().zip(&ob) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}
