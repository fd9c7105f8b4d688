//! Shared domain types and the 7-DoF box algebra.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{rot_z, wrap_angle};
use crate::labels::{ReconLabel, SegLabel};

/// Smallest box extent allowed (meters).
pub const MIN_SCALE: f64 = 1e-4;

/// Observed scene points with per-point predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct PointScene {
    points: Vec<Point3<f64>>,
    category: Vec<SegLabel>,
    offset: Vec<Vector3<f64>>,
    angle: Vec<f64>,
    gt_instance_id: Option<Vec<u16>>,
}

impl PointScene {
    pub fn new(
        points: Vec<Point3<f64>>,
        category: Vec<SegLabel>,
        offset: Vec<Vector3<f64>>,
        angle: Vec<f64>,
        gt_instance_id: Option<Vec<u16>>,
    ) -> Result<Self> {
        let n = points.len();
        if category.len() != n || offset.len() != n || angle.len() != n {
            return Err(Error::invalid(format!(
                "scene arrays differ in length: points {n}, categories {}, offsets {}, angles {}",
                category.len(),
                offset.len(),
                angle.len()
            )));
        }
        if let Some(ids) = &gt_instance_id {
            if ids.len() != n {
                return Err(Error::invalid(format!(
                    "scene has {n} points but {} instance ids",
                    ids.len()
                )));
            }
        }
        if let Some(i) = points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(i) = offset.iter().position(|o| !o.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("offset {i} is not finite")));
        }
        if let Some(i) = angle.iter().position(|a| !(-PI..PI).contains(a)) {
            return Err(Error::invalid(format!(
                "angle {i} = {} lies outside [-pi, pi)",
                angle[i]
            )));
        }
        Ok(PointScene {
            points,
            category,
            offset,
            angle,
            gt_instance_id,
        })
    }

    pub fn empty() -> Self {
        PointScene {
            points: Vec::new(),
            category: Vec::new(),
            offset: Vec::new(),
            angle: Vec::new(),
            gt_instance_id: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn categories(&self) -> &[SegLabel] {
        &self.category
    }

    pub fn offsets(&self) -> &[Vector3<f64>] {
        &self.offset
    }

    pub fn angles(&self) -> &[f64] {
        &self.angle
    }

    pub fn gt_instance_ids(&self) -> Option<&[u16]> {
        self.gt_instance_id.as_deref()
    }

    /// `p_i + o_i` for every point.
    pub fn shifted_points(&self) -> Vec<Point3<f64>> {
        self.points
            .iter()
            .zip(&self.offset)
            .map(|(p, o)| p + o)
            .collect()
    }

    pub fn gather_points(&self, indices: &[usize]) -> Vec<Point3<f64>> {
        indices.iter().map(|&i| self.points[i]).collect()
    }
}

/// 7-DoF oriented box: center, rotation about +z and per-axis extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Point3<f64>,
    pub z_rotation: f64,
    pub scale: Vector3<f64>,
}

impl OrientedBox {
    pub fn new(center: Point3<f64>, z_rotation: f64, scale: Vector3<f64>) -> Result<Self> {
        let b = OrientedBox {
            center,
            z_rotation,
            scale,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("box center is not finite"));
        }
        if !(-PI..PI).contains(&self.z_rotation) {
            return Err(Error::invalid(format!(
                "box rotation {} outside [-pi, pi)",
                self.z_rotation
            )));
        }
        if !self.scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::invalid(format!(
                "box scale must be positive, got {:?}",
                self.scale.as_slice()
            )));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.scale.x * self.scale.y * self.scale.z
    }
}

/// Residual added to an initial box.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxResidual {
    pub d_center: Vector3<f64>,
    pub d_rotation: f64,
    pub d_scale: Vector3<f64>,
}

impl BoxResidual {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.d_center.iter().all(|c| c.is_finite())
            && self.d_rotation.is_finite()
            && self.d_scale.iter().all(|c| c.is_finite())
    }

    /// Residual taking `from` onto `to` under [`compose_box`].
    pub fn between(from: &OrientedBox, to: &OrientedBox) -> Self {
        BoxResidual {
            d_center: to.center - from.center,
            d_rotation: wrap_angle(to.z_rotation - from.z_rotation),
            d_scale: to.scale - from.scale,
        }
    }
}

/// Diagonal Gaussian over latent shape codes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatentShapeDistribution {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl LatentShapeDistribution {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let d = LatentShapeDistribution { mu, sigma };
        d.validate()?;
        Ok(d)
    }

    pub fn point_mass(mu: Vec<f64>) -> Self {
        let sigma = vec![0.0; mu.len()];
        LatentShapeDistribution { mu, sigma }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.sigma.len() {
            return Err(Error::invalid(format!(
                "latent mean has dimension {} but sigma has {}",
                self.mu.len(),
                self.sigma.len()
            )));
        }
        if !self.mu.iter().all(|m| m.is_finite()) {
            return Err(Error::invalid("latent mean is not finite"));
        }
        if !self.sigma.iter().all(|s| s.is_finite() && *s >= 0.0) {
            return Err(Error::invalid("latent sigma must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// A clustered point subset together with the per-proposal predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceProposal {
    pub point_indices: Vec<usize>,
    pub confidence: f64,
    pub initial_box: Option<OrientedBox>,
    #[serde(default)]
    pub residual: BoxResidual,
    #[serde(default)]
    pub latent: LatentShapeDistribution,
    pub category: ReconLabel,
}

impl InstanceProposal {
    pub fn validate(&self, scene_len: usize) -> Result<()> {
        if self.point_indices.is_empty() {
            return Err(Error::invalid("proposal has no points"));
        }
        let mut sorted = self.point_indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("proposal point indices contain duplicates"));
        }
        if let Some(&last) = sorted.last() {
            if last >= scene_len {
                return Err(Error::invalid(format!(
                    "proposal index {last} out of range for a scene of {scene_len} points"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::invalid(format!(
                "proposal confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        if let Some(b) = &self.initial_box {
            b.validate()?;
        }
        if !self.residual.is_finite() {
            return Err(Error::invalid("proposal residual is not finite"));
        }
        self.latent.validate()
    }

    pub fn refined_box(&self) -> Result<OrientedBox> {
        let initial = self
            .initial_box
            .ok_or_else(|| Error::invalid("proposal has no initial box"))?;
        compose_box(&initial, &self.residual)
    }
}

/// `initial + residual`, with the rotation wrapped into `[-pi, pi)` and
/// each extent clamped at [`MIN_SCALE`].
pub fn compose_box(initial: &OrientedBox, residual: &BoxResidual) -> Result<OrientedBox> {
    if !residual.is_finite() {
        return Err(Error::invalid("box residual is not finite"));
    }
    initial.validate()?;
    Ok(OrientedBox {
        center: initial.center + residual.d_center,
        z_rotation: wrap_angle(initial.z_rotation + residual.d_rotation),
        scale: (initial.scale + residual.d_scale).map(|s| s.max(MIN_SCALE)),
    })
}

/// The 8 corners of a box. Corner `i` uses the local sign pattern
/// `x = bit 0, y = bit 1, z = bit 2` (bit set means `+s/2`), so the order is
/// z-major, then y, then x.
pub fn box_corners(b: &OrientedBox) -> [Point3<f64>; 8] {
    let r = rot_z(b.z_rotation);
    let half = b.scale * 0.5;
    std::array::from_fn(|i| {
        let local = Vector3::new(
            if i & 1 != 0 { half.x } else { -half.x },
            if i & 2 != 0 { half.y } else { -half.y },
            if i & 4 != 0 { half.z } else { -half.z },
        );
        b.center + r * local
    })
}
