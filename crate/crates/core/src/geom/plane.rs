//! Plane parameters `p = n·d` and the geometry built on them.
//!
//! A plane `{Q : nᵀQ = d}` is stored as the single vector `p = n·d`. The
//! encoding fixes the orientation: `d = ‖p‖ > 0` and `n = p/‖p‖` points from
//! the origin of the frame toward the plane.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::camera::{CameraIntrinsics, RigidTransform};
use crate::error::{invalid, Error, Result};

/// Rays with `|nᵀK⁻¹q|` below this are treated as parallel to the plane.
pub const RAY_EPS: f64 = 1e-8;

/// Vectors shorter than this do not define a plane.
pub const PLANE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneParams(pub [f64; 3]);

impl PlaneParams {
    pub fn new(p: Vector3<f64>) -> Result<Self> {
        let plane = Self([p.x, p.y, p.z]);
        if !p.iter().all(|v| v.is_finite()) || p.norm() <= PLANE_EPS {
            return Err(invalid(format!("plane vector {p:?} does not define a plane")));
        }
        Ok(plane)
    }

    /// `p = n·d` from a (not necessarily unit) normal and a positive offset.
    pub fn compose(normal: &Vector3<f64>, offset: f64) -> Result<Self> {
        if !(offset > 0.0) {
            return Err(invalid(format!("plane offset must be positive, got {offset}")));
        }
        let n = normal.try_normalize(1e-12).ok_or_else(|| invalid("zero normal"))?;
        Self::new(n * offset)
    }

    /// Builds the plane from a signed `(n, d)` pair; `(−n, −d)` describes the same plane.
    pub fn from_signed(normal: &Vector3<f64>, offset: f64) -> Result<Self> {
        if offset.abs() <= PLANE_EPS {
            return Err(Error::PlaneThroughOrigin(offset));
        }
        let n = normal.try_normalize(1e-12).ok_or_else(|| invalid("zero normal"))?;
        Self::new(n * offset)
    }

    #[inline]
    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    /// `(n, d)` with `‖n‖ = 1` and `d > 0`.
    pub fn decompose(&self) -> (Vector3<f64>, f64) {
        let p = self.vector();
        let d = p.norm();
        (p / d, d)
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.decompose().0
    }

    pub fn offset(&self) -> f64 {
        self.vector().norm()
    }

    /// Signed distance `nᵀQ − d` of a point from the plane.
    pub fn residual(&self, q: &Vector3<f64>) -> f64 {
        let (n, d) = self.decompose();
        n.dot(q) - d
    }
}

/// Depth at which the ray through pixel `(u, v)` meets `plane`: `d / (nᵀK⁻¹q)`.
pub fn plane_induced_depth(k: &CameraIntrinsics, plane: &PlaneParams, u: f64, v: f64) -> Result<f64> {
    let (n, d) = plane.decompose();
    let denom = n.dot(&k.ray(u, v));
    if denom.abs() < RAY_EPS {
        return Err(Error::DegenerateRay(denom));
    }
    Ok(d / denom)
}

/// Signed plane transform for points mapped by `Q_s = R Q_n + t`:
/// `n_s = R n_n`, `d_s = d_n + n_sᵀ t`.
pub fn transform_plane_signed(t: &RigidTransform, plane: &PlaneParams) -> (Vector3<f64>, f64) {
    let (n, d) = plane.decompose();
    let n_s = t.rotation * n;
    (n_s, d + n_s.dot(&t.translation))
}

/// Expresses `plane` in the target frame of `t`.
///
/// Fails when the transformed offset is not positive, i.e. the target camera
/// center is on or behind the plane as seen from the source camera.
pub fn transform_plane(t: &RigidTransform, plane: &PlaneParams) -> Result<PlaneParams> {
    let (n_s, d_s) = transform_plane_signed(t, plane);
    if !(d_s > PLANE_EPS) {
        return Err(Error::PlaneThroughOrigin(d_s));
    }
    PlaneParams::new(n_s * d_s)
}

/// Like [`transform_plane`] but re-orients the result when the target camera is
/// on the other side of the plane. Only a plane through the target origin fails.
pub fn transform_plane_reoriented(t: &RigidTransform, plane: &PlaneParams) -> Result<PlaneParams> {
    let (n_s, d_s) = transform_plane_signed(t, plane);
    PlaneParams::from_signed(&n_s, d_s)
}

/// Plane through three points, oriented so the offset is positive.
pub fn plane_through_points(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Result<PlaneParams> {
    let n = (b - a).cross(&(c - a)).try_normalize(1e-12).ok_or_else(|| invalid("collinear points"))?;
    PlaneParams::from_signed(&n, n.dot(a))
}

/// Three non-collinear points of `plane`: its foot point and two unit steps along it.
pub fn points_on_plane(plane: &PlaneParams) -> [Vector3<f64>; 3] {
    let (n, d) = plane.decompose();
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    let foot = n * d;
    [foot, foot + e1, foot + e2]
}
