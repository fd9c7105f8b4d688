//! Point-to-point ICP of a mesh against observed points, optionally with scale.

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::metrics::{sample_surface, KdTree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the RMS error improves by less than this.
    pub convergence_eps: f64,
    pub surface_samples: usize,
    pub with_scale: bool,
    pub max_correspondence: f64,
    pub seed: u64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iterations: 50,
            convergence_eps: 1e-5,
            surface_samples: 4096,
            with_scale: false,
            max_correspondence: 0.2,
            seed: 0,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.convergence_eps > 0.0) {
            return Err(Error::invalid("convergence_eps must be positive"));
        }
        if self.surface_samples < 3 {
            return Err(Error::invalid("surface_samples must be at least 3"));
        }
        if !(self.max_correspondence > 0.0) {
            return Err(Error::invalid("max_correspondence must be positive"));
        }
        Ok(())
    }
}

/// `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform { rotation: Matrix3::identity(), translation: Vector3::zeros(), scale: 1.0 }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords * self.scale + self.translation)
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation * self.scale + self.translation,
            scale: self.scale * first.scale,
        }
    }

    /// Angle of the rotation part, in radians.
    pub fn rotation_angle(&self) -> f64 {
        (((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)).acos()
    }

    /// Angle between this rotation and another.
    pub fn rotation_distance(&self, other: &RigidTransform) -> f64 {
        let rel = RigidTransform { rotation: self.rotation.transpose() * other.rotation, ..Self::identity() };
        rel.rotation_angle()
    }
}

/// Closed-form least-squares fit of `dst ≈ s R src + t` (Umeyama).
pub fn fit_transform(src: &[Point3<f64>], dst: &[Point3<f64>], with_scale: bool) -> Result<RigidTransform> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::AlignmentFailed(format!("{} correspondences, need at least 3", src.len().min(dst.len()))));
    }
    let n = src.len() as f64;
    let ms = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let md = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (a, b) = (s.coords - ms, d.coords - md);
        cov += b * a.transpose();
        var_s += a.norm_squared();
    }
    cov /= n;
    var_s /= n;
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sign = Matrix3::identity();
    if (u.determinant() * vt.determinant()) < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let rotation = u * sign * vt;
    let scale = if with_scale {
        if var_s <= 0.0 {
            return Err(Error::AlignmentFailed("source points are coincident".into()));
        }
        (svd.singular_values[0] + svd.singular_values[1] + sign[(2, 2)] * svd.singular_values[2]) / var_s
    } else {
        1.0
    };
    Ok(RigidTransform { rotation, translation: md - rotation * ms * scale, scale })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub mesh: TriMesh,
    /// Final truncated RMS error.
    pub rms: f64,
    /// RMS error before the first step and after each step.
    pub history: Vec<f64>,
}

/// Truncated RMS error and the surviving `(sample, target)` pairs.
fn correspond(samples: &[Point3<f64>], target: &[Point3<f64>], tau: f64) -> (f64, Vec<(usize, usize)>) {
    let tree = KdTree::build(samples);
    let mut sum = 0.0;
    let mut pairs = Vec::new();
    let tau2 = tau * tau;
    for (j, q) in target.iter().enumerate() {
        let (i, d2) = tree.nearest(q).unwrap();
        if d2 <= tau2 {
            pairs.push((i, j));
            sum += d2;
        } else {
            sum += tau2;
        }
    }
    ((sum / target.len() as f64).sqrt(), pairs)
}

pub fn icp_align(mesh: &TriMesh, target: &[Point3<f64>], cfg: &IcpConfig) -> Result<IcpResult> {
    cfg.validate()?;
    if target.len() < 3 {
        return Err(Error::invalid(format!("ICP needs at least 3 target points, got {}", target.len())));
    }
    if mesh.triangles.is_empty() {
        return Err(Error::invalid("ICP needs a non-empty mesh"));
    }
    let base = sample_surface(mesh, cfg.surface_samples, cfg.seed)?;
    let mut samples = base.clone();
    let mut total = RigidTransform::identity();
    let (mut rms, mut pairs) = correspond(&samples, target, cfg.max_correspondence);
    let mut history = vec![rms];
    for it in 0..cfg.max_iterations {
        if pairs.len() < 3 {
            if it == 0 {
                return Err(Error::AlignmentFailed(format!(
                    "{} correspondences within {} m",
                    pairs.len(),
                    cfg.max_correspondence
                )));
            }
            break;
        }
        let src: Vec<Point3<f64>> = pairs.iter().map(|&(i, _)| samples[i]).collect();
        let dst: Vec<Point3<f64>> = pairs.iter().map(|&(_, j)| target[j]).collect();
        let step = fit_transform(&src, &dst, cfg.with_scale)?;
        let candidate = step.after(&total);
        let moved: Vec<Point3<f64>> = base.iter().map(|p| candidate.apply(p)).collect();
        let (new_rms, new_pairs) = correspond(&moved, target, cfg.max_correspondence);
        if new_rms > rms {
            // only rounding can get here; keep the better pose
            break;
        }
        total = candidate;
        samples = moved;
        history.push(new_rms);
        let done = rms - new_rms < cfg.convergence_eps;
        rms = new_rms;
        pairs = new_pairs;
        if done {
            break;
        }
    }
    let _ = samples;
    Ok(IcpResult {
        mesh: mesh.transformed(&total.rotation, &total.translation, total.scale),
        transform: total,
        rms,
        history,
    })
}
