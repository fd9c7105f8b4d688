//! Mesh and point-set similarity measures. All distances are in world units.

pub mod bvh;
pub mod inside;
pub mod kdtree;
pub mod lfd;
pub mod sampling;
pub mod voxel;

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bvh::MeshBvh;
pub use inside::point_in_mesh;
pub use kdtree::KdTree;
pub use lfd::{lightfield_descriptor, lightfield_distance, LfdConfig, LightField};
pub use sampling::sample_surface;
pub use voxel::{voxel_iou, voxelize, VoxelGrid};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

pub const DEFAULT_OMEGA: f64 = 0.047;
pub const DEFAULT_VOXEL: f64 = 0.047;
pub const DEFAULT_SAMPLES: usize = 10_000;

/// Exact Euclidean distance from `p` to the mesh surface.
pub fn point_mesh_distance(p: &Point3<f64>, bvh: &MeshBvh) -> f64 {
    bvh.closest_point(p).0.sqrt()
}

/// Fraction of `points` strictly closer than `omega` to the mesh.
pub fn pcr(points: &[Point3<f64>], mesh: &TriMesh, omega: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("pcr needs at least one point"));
    }
    let bvh = MeshBvh::build(mesh)?;
    let hits = points
        .par_iter()
        .filter(|p| point_mesh_distance(p, &bvh) < omega)
        .count();
    Ok(hits as f64 / points.len() as f64)
}

fn mean_nn(from: &[Point3<f64>], tree: &KdTree) -> f64 {
    let d: Vec<f64> = from.par_iter().map(|p| tree.nearest(p).unwrap().1.sqrt()).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Symmetric mean nearest-neighbour distance between `n` surface samples of each mesh.
pub fn chamfer(a: &TriMesh, b: &TriMesh, n: usize, seed: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("chamfer needs at least one sample"));
    }
    let sa = sample_surface(a, n, seed)?;
    let sb = sample_surface(b, n, seed)?;
    let (ta, tb) = (KdTree::build(&sa), KdTree::build(&sb));
    Ok(mean_nn(&sa, &tb) + mean_nn(&sb, &ta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Iou,
    Cd,
    Lfd,
    Pcr,
}

impl MetricKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iou" => Ok(MetricKind::Iou),
            "cd" | "chamfer" => Ok(MetricKind::Cd),
            "lfd" => Ok(MetricKind::Lfd),
            "pcr" => Ok(MetricKind::Pcr),
            other => Err(Error::invalid(format!("unknown metric kind '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Iou => "iou",
            MetricKind::Cd => "cd",
            MetricKind::Lfd => "lfd",
            MetricKind::Pcr => "pcr",
        }
    }

    /// Larger score is better for IoU and PCR, smaller for CD and LFD.
    pub fn higher_is_better(self) -> bool {
        matches!(self, MetricKind::Iou | MetricKind::Pcr)
    }

    pub fn passes(self, score: f64, threshold: f64) -> bool {
        if self.higher_is_better() { score >= threshold } else { score <= threshold }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    pub omega: f64,
    pub voxel: f64,
    pub samples: usize,
    pub seed: u64,
    pub lfd: LfdConfig,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams { omega: DEFAULT_OMEGA, voxel: DEFAULT_VOXEL, samples: DEFAULT_SAMPLES, seed: 0, lfd: LfdConfig::default() }
    }
}
