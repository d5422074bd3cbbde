//! Pinhole intrinsics and rigid transforms.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Pinhole camera intrinsics. Pixel `(u, v)` is the center of that pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Camera with square pixels and the principal point at the image center.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(focal, focal, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(invalid(format!("focal lengths must be positive: fx={} fy={}", self.fx, self.fy)));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(invalid(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `K⁻¹ (u, v, 1)ᵀ`: the viewing ray with unit z.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Perspective projection; `None` when the point is not in front of the camera.
    #[inline]
    pub fn project(&self, q: &Vector3<f64>) -> Option<(f64, f64)> {
        if q.z <= 0.0 {
            return None;
        }
        Some((self.fx * q.x / q.z + self.cx, self.fy * q.y / q.z + self.cy))
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }

    /// Intrinsics of the grid that keeps every `stride`-th pixel starting at (0, 0).
    ///
    /// Feature pixel `(i, j)` sees exactly the ray of full-resolution pixel
    /// `(stride·i, stride·j)`.
    pub fn decimated(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(invalid("stride must be at least 1"));
        }
        let s = stride as f64;
        Self::new(
            self.fx / s,
            self.fy / s,
            self.cx / s,
            self.cy / s,
            self.width.div_ceil(stride),
            self.height.div_ceil(stride),
        )
    }
}

/// Back-projects pixel `(u, v)` at depth `depth`: `Q = D · K⁻¹ (u, v, 1)ᵀ`.
pub fn backproject(k: &CameraIntrinsics, u: f64, v: f64, depth: f64) -> Result<Vector3<f64>> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(invalid(format!("depth must be positive, got {depth}")));
    }
    Ok(k.ray(u, v) * depth)
}

/// Rigid transform `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub const ORTHONORMAL_TOL: f64 = 1e-9;

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = Self { rotation, translation };
        t.validate()?;
        Ok(t)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if !(ortho <= Self::ORTHONORMAL_TOL) || !((det - 1.0).abs() <= Self::ORTHONORMAL_TOL) {
            return Err(invalid(format!("not a rotation: |RᵀR − I| = {ortho:e}, det = {det}")));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(invalid("translation is not finite"));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.apply(&p.coords))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn rot_x(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self { rotation: Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c), translation: Vector3::zeros() }
    }

    pub fn rot_y(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self { rotation: Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c), translation: Vector3::zeros() }
    }

    pub fn rot_z(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self { rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0), translation: Vector3::zeros() }
    }

    pub fn with_translation(mut self, t: Vector3<f64>) -> Self {
        self.translation = t;
        self
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major 4×4 as 16 numbers.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_matrix4();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    /// Parses a row-major 4×4; the bottom row must be (0, 0, 0, 1) within 1e-12.
    pub fn from_row_major(values: &[f64]) -> Result<Self> {
        if values.len() != 16 {
            return Err(invalid(format!("expected 16 pose values, got {}", values.len())));
        }
        let bottom = [values[12], values[13], values[14], values[15] - 1.0];
        if bottom.iter().any(|v| !(v.abs() <= 1e-12)) {
            return Err(invalid("4x4 bottom row must be (0, 0, 0, 1)"));
        }
        let rotation = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8], values[9], values[10],
        );
        Self::new(rotation, Vector3::new(values[3], values[7], values[11]))
    }

    /// Rotation taking camera axes (x right, y down, z forward) to a camera looking
    /// along `forward` with world `up`; returned as the world→camera transform for
    /// a camera centered at `center`.
    pub fn look_at(center: &Vector3<f64>, forward: &Vector3<f64>, up: &Vector3<f64>) -> Result<Self> {
        let z = forward.try_normalize(1e-12).ok_or_else(|| invalid("zero forward vector"))?;
        let x = z.cross(up).try_normalize(1e-12).ok_or_else(|| invalid("forward parallel to up"))?;
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(Self { rotation, translation: -(rotation * center) })
    }

    /// Camera center in the source frame of a world→camera transform.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    #[test]
    fn backproject_principal_point_is_optical_axis() {
        let q = backproject(&k100(), 50.0, 50.0, 2.0).unwrap();
        assert_eq!(q, Vector3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn backproject_offset_pixel() {
        let q = backproject(&k100(), 150.0, 50.0, 2.0).unwrap();
        assert_eq!(q, Vector3::new(2.0, 0.0, 2.0));
    }

    #[test]
    fn backproject_matches_explicit_inverse() {
        let k = CameraIntrinsics::new(200.0, 100.0, 60.0, 40.0, 120, 80).unwrap();
        // K⁻¹ written out by hand for an upper-triangular K.
        let kinv = Matrix3::new(1.0 / 200.0, 0.0, -60.0 / 200.0, 0.0, 1.0 / 100.0, -40.0 / 100.0, 0.0, 0.0, 1.0);
        let expected = kinv * Vector3::new(80.0, 90.0, 1.0) * 3.0;
        let q = backproject(&k, 80.0, 90.0, 3.0).unwrap();
        assert_close!(q.x, expected.x, 1e-12);
        assert_close!(q.y, expected.y, 1e-12);
        assert_eq!(q.z, 3.0);
        assert_close!(q.x, 0.3, 1e-12);
        assert_close!(q.y, 1.5, 1e-12);
    }

    #[test]
    fn backproject_rejects_non_positive_depth() {
        assert!(backproject(&k100(), 1.0, 1.0, 0.0).is_err());
        assert!(backproject(&k100(), 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 5.0, 5.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 5.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 5.0, 10, 10).is_err());
    }

    #[test]
    fn rotation_validation() {
        let bad = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(bad, Vector3::zeros()).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn compose_inverse_is_identity() {
        let t = RigidTransform::rot_x(30.0).compose(&RigidTransform::rot_z(-50.0)).with_translation(Vector3::new(0.3, -1.0, 2.0));
        let id = t.compose(&t.inverse());
        assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
    }

    #[test]
    fn row_major_round_trip() {
        let t = RigidTransform::rot_y(12.0).with_translation(Vector3::new(1.0, 2.0, 3.0));
        let back = RigidTransform::from_row_major(&t.to_row_major()).unwrap();
        assert_eq!(back, t);
        let mut bad = t.to_row_major();
        bad[15] = 2.0;
        assert!(RigidTransform::from_row_major(&bad).is_err());
    }

    #[test]
    fn decimated_intrinsics_see_the_same_rays() {
        let k = CameraIntrinsics::centered(50.0, 64, 48).unwrap();
        let kd = k.decimated(4).unwrap();
        assert_eq!((kd.width, kd.height), (16, 12));
        let a = k.ray(12.0, 20.0);
        let b = kd.ray(3.0, 5.0);
        assert!((a - b).norm() < 1e-15);
    }
}
