//! Offset-shifted radius clustering of scene points into instance proposals.
//!
//! Two points are linked when they share a segmentation class and their
//! (shifted) coordinates lie within `radius` of each other (inclusive).
//! Proposals are the connected components of that graph. Stuff points are
//! never clustered.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{arithmetic_angle_mean, circular_mean, rot_z};
use crate::labels::{LabelSystem, ReconLabel, SegLabel};
use crate::model::{
    BoxResidual, InstanceProposal, LatentShapeDistribution, OrientedBox, PointScene, MIN_SCALE,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub radii: Vec<f64>,
    pub min_points: usize,
    pub dedup_iou: f64,
    pub dual_set: bool,
    pub angle_mean: AngleMean,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            radii: vec![0.01, 0.03, 0.05],
            min_points: 100,
            dedup_iou: 0.9,
            dual_set: true,
            angle_mean: AngleMean::Circular,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::invalid("clustering needs at least one radius"));
        }
        if let Some(r) = self.radii.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::invalid(format!("clustering radius {r} must be positive")));
        }
        if self.min_points == 0 {
            return Err(Error::invalid("min_points must be at least 1"));
        }
        if !(self.dedup_iou > 0.0 && self.dedup_iou <= 1.0) {
            return Err(Error::invalid(format!(
                "dedup IoU threshold {} outside (0, 1]",
                self.dedup_iou
            )));
        }
        Ok(())
    }
}

/// How the per-point rotation predictions are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AngleMean {
    /// `atan2(sum sin, sum cos)`.
    #[default]
    Circular,
    /// Plain mean of the raw values.
    Arithmetic,
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

fn cell_of(p: &Point3<f64>, inv_cell: f64) -> (i64, i64, i64) {
    (
        (p.x * inv_cell).floor() as i64,
        (p.y * inv_cell).floor() as i64,
        (p.z * inv_cell).floor() as i64,
    )
}

/// Connected components of the radius graph over `coords`, restricted to
/// points listed in `members` and to edges between equal labels. Each
/// component is sorted ascending; components are ordered by first index.
pub fn radius_components(
    coords: &[Point3<f64>],
    labels: &[SegLabel],
    members: &[usize],
    radius: f64,
) -> Vec<Vec<usize>> {
    let inv_cell = 1.0 / radius;
    let r2 = radius * radius;
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for &i in members {
        grid.entry(cell_of(&coords[i], inv_cell)).or_default().push(i);
    }
    let mut dsu = DisjointSet::new(coords.len());
    for &i in members {
        let (cx, cy, cz) = cell_of(&coords[i], inv_cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &j in bucket {
                        if j <= i || labels[j] != labels[i] {
                            continue;
                        }
                        if (coords[i] - coords[j]).norm_squared() <= r2 {
                            dsu.union(i, j);
                        }
                    }
                }
            }
        }
    }
    let mut by_root: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut sorted_members = members.to_vec();
    sorted_members.sort_unstable();
    for &i in &sorted_members {
        by_root.entry(dsu.find(i)).or_default().push(i);
    }
    let mut comps: Vec<Vec<usize>> = by_root.into_values().collect();
    comps.sort_unstable_by_key(|c| c[0]);
    comps
}

/// Points eligible for clustering: categories that map to a reconstruction class.
fn object_points(scene: &PointScene, labels: &LabelSystem) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, &c) in scene.categories().iter().enumerate() {
        if labels.map_label(c)?.is_some() {
            out.push(i);
        }
    }
    Ok(out)
}

fn majority_category(scene: &PointScene, labels: &LabelSystem, indices: &[usize]) -> Result<ReconLabel> {
    let mut counts: HashMap<SegLabel, usize> = HashMap::new();
    for &i in indices {
        *counts.entry(scene.categories()[i]).or_default() += 1;
    }
    let (seg, _) = counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .ok_or_else(|| Error::invalid("empty proposal"))?;
    labels
        .map_label(seg)?
        .ok_or_else(|| Error::invalid("proposal made of stuff points"))
}

fn bare_proposal(indices: Vec<usize>, category: ReconLabel) -> InstanceProposal {
    InstanceProposal {
        point_indices: indices,
        confidence: 0.0,
        initial_box: None,
        residual: BoxResidual::zero(),
        latent: LatentShapeDistribution::default(),
        category,
    }
}

/// Single-radius clustering. Returns proposals with point sets and categories
/// filled; boxes, confidences and latents are left for later stages.
/// With `dual_set`, components over the original coordinates follow the
/// components over the shifted coordinates.
pub fn cluster_scene(
    scene: &PointScene,
    labels: &LabelSystem,
    radius: f64,
    min_points: usize,
    dual_set: bool,
) -> Result<Vec<InstanceProposal>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("clustering radius {radius} must be positive")));
    }
    if scene.is_empty() {
        return Ok(Vec::new());
    }
    let members = object_points(scene, labels)?;
    let shifted = scene.shifted_points();
    let mut sets = vec![shifted.as_slice()];
    if dual_set {
        sets.push(scene.points());
    }
    let mut out = Vec::new();
    for coords in sets {
        for comp in radius_components(coords, scene.categories(), &members, radius) {
            if comp.len() < min_points {
                continue;
            }
            let cat = majority_category(scene, labels, &comp)?;
            out.push(bare_proposal(comp, cat));
        }
    }
    Ok(out)
}

/// Point-set intersection over union of two ascending index lists.
pub fn point_iou(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Keeps the largest proposals first and drops any proposal whose point IoU
/// with an already kept one reaches `iou_threshold`. Count ties go to the
/// proposal with the smaller first point index, then to input order.
pub fn dedup_proposals(mut props: Vec<InstanceProposal>, iou_threshold: f64) -> Result<Vec<InstanceProposal>> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "dedup IoU threshold {iou_threshold} outside (0, 1]"
        )));
    }
    for p in &mut props {
        p.point_indices.sort_unstable();
    }
    props.sort_by(|a, b| {
        b.point_indices
            .len()
            .cmp(&a.point_indices.len())
            .then(a.point_indices.first().cmp(&b.point_indices.first()))
    });
    let mut kept: Vec<InstanceProposal> = Vec::new();
    for p in props {
        if kept
            .iter()
            .all(|k| point_iou(&k.point_indices, &p.point_indices) < iou_threshold)
        {
            kept.push(p);
        }
    }
    Ok(kept)
}

/// Clusters at every radius and merges the results with [`dedup_proposals`].
pub fn multi_scale_cluster(
    scene: &PointScene,
    labels: &LabelSystem,
    cfg: &ClusterConfig,
) -> Result<Vec<InstanceProposal>> {
    cfg.validate()?;
    let per_radius: Vec<Vec<InstanceProposal>> = cfg
        .radii
        .par_iter()
        .map(|&r| cluster_scene(scene, labels, r, cfg.min_points, cfg.dual_set))
        .collect::<Result<_>>()?;
    let all: Vec<InstanceProposal> = per_radius.into_iter().flatten().collect();
    dedup_proposals(all, cfg.dedup_iou)
}

/// Initial 7-DoF box of a proposal: mean predicted center, mean rotation and
/// the extents of the recentered, de-rotated points.
pub fn proposal_initial_box(
    scene: &PointScene,
    indices: &[usize],
    angle_mean: AngleMean,
) -> Result<OrientedBox> {
    if indices.is_empty() {
        return Err(Error::invalid("cannot box an empty proposal"));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= scene.len()) {
        return Err(Error::invalid(format!("proposal index {i} out of range")));
    }
    let n = indices.len() as f64;
    let center = indices
        .iter()
        .fold(Vector3::zeros(), |acc, &i| acc + scene.points()[i].coords + scene.offsets()[i])
        / n;
    let angles: Vec<f64> = indices.iter().map(|&i| scene.angles()[i]).collect();
    let rotation = match angle_mean {
        AngleMean::Circular => circular_mean(&angles),
        AngleMean::Arithmetic => arithmetic_angle_mean(&angles),
    };
    let derotate = rot_z(-rotation);
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &i in indices {
        let local = derotate * (scene.points()[i].coords - center);
        lo = lo.inf(&local);
        hi = hi.sup(&local);
    }
    let scale = (hi - lo).map(|s| s.max(MIN_SCALE));
    OrientedBox::new(Point3::from(center), rotation, scale)
}

/// Fills `initial_box` for every proposal and, where unset, a size-based
/// confidence `|P| / max |P|`.
pub fn attach_initial_boxes(
    scene: &PointScene,
    props: &mut [InstanceProposal],
    angle_mean: AngleMean,
) -> Result<()> {
    let largest = props.iter().map(|p| p.point_indices.len()).max().unwrap_or(1).max(1);
    for p in props.iter_mut() {
        p.initial_box = Some(proposal_initial_box(scene, &p.point_indices, angle_mean)?);
        if p.confidence == 0.0 {
            p.confidence = p.point_indices.len() as f64 / largest as f64;
        }
    }
    Ok(())
}
