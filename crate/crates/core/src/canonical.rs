//! Per-instance canonical frame: translate by the box center, undo the box
//! rotation, divide by the box extents.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::rot_z;
use crate::mesh::TriMesh;
use crate::model::OrientedBox;

/// Where the canonical frame puts its origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalFrame {
    /// Box min corner at the origin, box interior maps to `[0, 1]^3`.
    #[default]
    MinCorner,
    /// Box center at the origin, box interior maps to `[-0.5, 0.5]^3`.
    Centered,
}

impl CanonicalFrame {
    fn origin_shift(self) -> f64 {
        match self {
            CanonicalFrame::MinCorner => 0.5,
            CanonicalFrame::Centered => 0.0,
        }
    }

    /// The cube the box interior maps onto.
    pub fn unit_cube(self) -> (Point3<f64>, Point3<f64>) {
        let s = self.origin_shift();
        (Point3::from(Vector3::repeat(s - 0.5)), Point3::from(Vector3::repeat(s + 0.5)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalTransform {
    pub translation: Vector3<f64>,
    pub z_rotation: f64,
    pub inv_scale: Vector3<f64>,
    pub frame: CanonicalFrame,
}

impl CanonicalTransform {
    pub fn from_box(b: &OrientedBox, frame: CanonicalFrame) -> Result<Self> {
        if !b.scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::invalid("box scale must be positive"));
        }
        Ok(CanonicalTransform {
            translation: -b.center.coords,
            z_rotation: -b.z_rotation,
            inv_scale: b.scale.map(|s| 1.0 / s),
            frame,
        })
    }

    /// World to canonical.
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        let local = rot_z(self.z_rotation) * (p.coords + self.translation);
        Point3::from(local.component_mul(&self.inv_scale).add_scalar(self.frame.origin_shift()))
    }

    /// Canonical to world.
    pub fn invert(&self, q: &Point3<f64>) -> Point3<f64> {
        let local = q.coords.add_scalar(-self.frame.origin_shift()).component_div(&self.inv_scale);
        Point3::from(rot_z(-self.z_rotation) * local - self.translation)
    }

    /// Homogeneous matrix of [`CanonicalTransform::invert`].
    pub fn inverse_matrix(&self) -> Matrix4<f64> {
        let rs: Matrix3<f64> = rot_z(-self.z_rotation) * Matrix3::from_diagonal(&self.inv_scale.map(|s| 1.0 / s));
        let shift = Vector3::repeat(-self.frame.origin_shift());
        let t = rs * shift - self.translation;
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rs);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        m
    }
}

/// Maps world points into the canonical frame of `b`.
pub fn canonicalize(
    points: &[Point3<f64>],
    b: &OrientedBox,
    frame: CanonicalFrame,
) -> Result<(Vec<Point3<f64>>, CanonicalTransform)> {
    let t = CanonicalTransform::from_box(b, frame)?;
    Ok((points.iter().map(|p| t.apply(p)).collect(), t))
}

/// Moves a canonical-frame mesh into world coordinates using `b`.
pub fn place_mesh(mesh: &TriMesh, b: &OrientedBox, frame: CanonicalFrame) -> Result<TriMesh> {
    let t = CanonicalTransform::from_box(b, frame)?;
    Ok(mesh.map_vertices(|v| t.invert(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::wrap_angle;
    use crate::rng;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn cube_points(center: Point3<f64>, r: f64) -> Vec<Point3<f64>> {
        TriMesh::cuboid(Point3::from(Vector3::repeat(-0.5)), Point3::from(Vector3::repeat(0.5)))
            .vertices
            .iter()
            .map(|v| center + rot_z(r) * v.coords)
            .collect()
    }

    #[test]
    fn unit_cube_spans_unit_range() {
        let c = Point3::new(5.0, 5.0, 5.0);
        let b = OrientedBox::new(c, 0.0, Vector3::repeat(1.0)).unwrap();
        let (out, _) = canonicalize(&cube_points(c, 0.0), &b, CanonicalFrame::MinCorner).unwrap();
        for p in &out {
            assert!(p.coords.iter().all(|v| (v - 0.0).abs() < 1e-12 || (v - 1.0).abs() < 1e-12));
        }
        let (centered, _) = canonicalize(&cube_points(c, 0.0), &b, CanonicalFrame::Centered).unwrap();
        assert!(centered.iter().all(|p| p.coords.iter().all(|v| (v.abs() - 0.5).abs() < 1e-12)));
    }

    #[test]
    fn rotated_cube_matches_unrotated() {
        let c = Point3::new(5.0, 5.0, 5.0);
        let b0 = OrientedBox::new(c, 0.0, Vector3::repeat(1.0)).unwrap();
        let b1 = OrientedBox::new(c, FRAC_PI_3, Vector3::repeat(1.0)).unwrap();
        let (a, _) = canonicalize(&cube_points(c, 0.0), &b0, CanonicalFrame::MinCorner).unwrap();
        let (b, _) = canonicalize(&cube_points(c, FRAC_PI_3), &b1, CanonicalFrame::MinCorner).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn empty_input() {
        let b = OrientedBox::new(Point3::origin(), 0.0, Vector3::repeat(1.0)).unwrap();
        let (out, t) = canonicalize(&[], &b, CanonicalFrame::MinCorner).unwrap();
        assert!(out.is_empty());
        assert_eq!(t.inv_scale, Vector3::repeat(1.0));
    }

    #[test]
    fn place_unit_cube() {
        let b = OrientedBox::new(Point3::new(2.0, 0.0, 0.0), 0.0, Vector3::repeat(1.0)).unwrap();
        let placed = place_mesh(&TriMesh::unit_cube(), &b, CanonicalFrame::MinCorner).unwrap();
        let bounds = placed.bounds();
        assert!((bounds.center() - Point3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((bounds.extent() - Vector3::repeat(1.0)).norm() < 1e-12);
        assert_eq!(placed.triangles, TriMesh::unit_cube().triangles);
    }

    #[test]
    fn place_rejects_bad_scale() {
        let b = OrientedBox {
            center: Point3::origin(),
            z_rotation: 0.0,
            scale: Vector3::new(1.0, 0.0, 1.0),
        };
        assert!(matches!(place_mesh(&TriMesh::unit_cube(), &b, CanonicalFrame::MinCorner), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn place_matches_matrix_oracle() {
        let b = OrientedBox::new(Point3::new(1.0, -2.0, 0.5), FRAC_PI_2, Vector3::new(2.0, 1.0, 1.0)).unwrap();
        let mesh = TriMesh::unit_cube();
        let placed = place_mesh(&mesh, &b, CanonicalFrame::MinCorner).unwrap();
        // explicit 4x4: T(c) * Rz(pi/2) * S(s) * T(-0.5)
        let rz = Matrix4::new(0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let s = Matrix4::new_nonuniform_scaling(&Vector3::new(2.0, 1.0, 1.0));
        let m = Matrix4::new_translation(&Vector3::new(1.0, -2.0, 0.5)) * rz * s * Matrix4::new_translation(&Vector3::repeat(-0.5));
        let t = CanonicalTransform::from_box(&b, CanonicalFrame::MinCorner).unwrap();
        assert!((t.inverse_matrix() - m).abs().max() < 1e-12);
        for (v, w) in mesh.vertices.iter().zip(&placed.vertices) {
            let e = m.transform_point(v);
            assert!((e - w).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_random() {
        let mut r = rng::seeded(5);
        for _ in 0..100 {
            let b = OrientedBox::new(
                Point3::new(r.random_range(-10.0..10.0), r.random_range(-10.0..10.0), r.random_range(0.0..3.0)),
                wrap_angle(r.random_range(-7.0..7.0)),
                Vector3::new(r.random_range(0.05..3.0), r.random_range(0.05..3.0), r.random_range(0.05..3.0)),
            )
            .unwrap();
            let world = TriMesh::icosphere(b.center, 0.7, 1);
            let frame = if r.random::<bool>() { CanonicalFrame::MinCorner } else { CanonicalFrame::Centered };
            let (canon, _) = canonicalize(&world.vertices, &b, frame).unwrap();
            let cm = TriMesh { vertices: canon, ..world.clone() };
            let back = place_mesh(&cm, &b, frame).unwrap();
            let err = world.vertices.iter().zip(&back.vertices).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-6, "err {err}");
        }
    }

    #[test]
    fn rotation_equivariance() {
        let mut r = rng::seeded(6);
        let pts: Vec<Point3<f64>> = (0..50).map(|_| Point3::new(r.random(), r.random(), r.random())).collect();
        let b = OrientedBox::new(Point3::new(0.5, 0.5, 0.5), 0.4, Vector3::new(1.0, 2.0, 0.5)).unwrap();
        let (base, _) = canonicalize(&pts, &b, CanonicalFrame::MinCorner).unwrap();
        for k in 0..10 {
            let delta = -3.0 + 0.6 * k as f64;
            let rot = rot_z(delta);
            let moved: Vec<Point3<f64>> = pts.iter().map(|p| Point3::from(rot * p.coords)).collect();
            let mb = OrientedBox::new(Point3::from(rot * b.center.coords), wrap_angle(b.z_rotation + delta), b.scale).unwrap();
            let (out, _) = canonicalize(&moved, &mb, CanonicalFrame::MinCorner).unwrap();
            let dev = base.iter().zip(&out).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(dev < 1e-6);
        }
    }
}
