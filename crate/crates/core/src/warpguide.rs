//! Multi-view plane feature guidance.
//!
//! Neighbour features are warped onto the source feature grid using source
//! ground-truth depth, decoded into planes in neighbour camera coordinates,
//! carried to the source camera with Eq. 9, and scored with `L_P` against the
//! source ground truth where the outprojection mask allows.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::geom::{
    bilinear_sample, compute_warp_grid, decimate, decimate_mask, decimate_scalar, image_gradient,
    outprojection_mask, CameraIntrinsics, Mask, RigidTransform, ScalarMap, VectorMap, WarpGrid, DEFAULT_TAU_OCC,
    PLANE_EPS,
};
use crate::losses::{total_plane_loss, LossReport, LossWeights, PlaneTarget};
use crate::planehead::PlaneHead;
use crate::synth::{cast_ray, PlanarScene, RenderedView, StereoSample};

/// Feature maps are this many times coarser than the images.
pub const DEFAULT_FEATURE_STRIDE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpGuidanceConfig {
    pub tau_occ: f64,
    pub include_self_loss: bool,
    /// Weight of the guidance loss relative to the source-view loss.
    pub guidance_weight: f64,
    pub stride: usize,
    pub weights: LossWeights,
}

impl Default for WarpGuidanceConfig {
    fn default() -> Self {
        Self {
            tau_occ: DEFAULT_TAU_OCC,
            include_self_loss: true,
            guidance_weight: 1.0,
            stride: DEFAULT_FEATURE_STRIDE,
            weights: LossWeights::default(),
        }
    }
}

impl WarpGuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_occ > 0.0) {
            return Err(invalid(format!("tau_occ must be positive, got {}", self.tau_occ)));
        }
        if self.stride == 0 {
            return Err(invalid("feature stride must be at least 1"));
        }
        self.weights.validate()
    }
}

/// Anything that maps a feature map to per-pixel planes.
pub trait PlaneDecoder {
    fn decode(&self, features: &VectorMap) -> Result<VectorMap>;
}

impl PlaneDecoder for PlaneHead {
    fn decode(&self, features: &VectorMap) -> Result<VectorMap> {
        self.forward(features)
    }
}

/// Ground truth of one view on the feature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTarget {
    pub camera: CameraIntrinsics,
    pub planes: VectorMap,
    pub depth: ScalarMap,
    /// Pixels carrying a plane label.
    pub labeled: Mask,
    /// Image gradient (Eq. 6) sampled on the feature grid.
    pub gradient: ScalarMap,
}

impl FeatureTarget {
    /// Feature pixel `(i, j)` takes the ground truth of image pixel `(s·i, s·j)`.
    pub fn from_view(view: &RenderedView, stride: usize) -> Result<Self> {
        Ok(Self {
            camera: view.camera.decimated(stride)?,
            planes: decimate(&view.plane_map, stride),
            depth: decimate_scalar(&view.depth, stride),
            labeled: decimate_mask(&view.labeled(), stride),
            gradient: decimate_scalar(&image_gradient(&view.rgb)?, stride),
        })
    }

    pub fn as_plane_target<'a>(&'a self, valid: &'a Mask) -> PlaneTarget<'a> {
        PlaneTarget {
            planes: &self.planes,
            depth: &self.depth,
            camera: &self.camera,
            valid: Some(valid),
            gradient: Some(&self.gradient),
        }
    }

    /// `L_P` of planes predicted directly on this view.
    pub fn self_loss(&self, pred: &VectorMap, weights: &LossWeights) -> Result<(LossReport, VectorMap)> {
        total_plane_loss(pred, &self.as_plane_target(&self.labeled), weights)
    }
}

/// Eq. 9 in the point-consistent form, written as `p_s = R f(p)` with
/// `f(p) = p + p (pᵀt')/|p|²` and `t' = Rᵀt`. Returns `p_s` and `∂p_s/∂p`,
/// or `None` when `p` is degenerate or the plane does not face the target camera.
pub fn transform_plane_with_jacobian(t: &RigidTransform, p: &Vector3<f64>) -> Option<(Vector3<f64>, Matrix3<f64>)> {
    let pp = p.norm_squared();
    if pp.sqrt() <= PLANE_EPS {
        return None;
    }
    let tp = t.rotation.transpose() * t.translation;
    let a = p.dot(&tp);
    // d_s = |p| + pᵀt'/|p|
    if !(pp.sqrt() + a / pp.sqrt() > PLANE_EPS) {
        return None;
    }
    let f = p * (1.0 + a / pp);
    let df = Matrix3::identity() * (1.0 + a / pp) + p * tp.transpose() / pp - p * p.transpose() * (2.0 * a / (pp * pp));
    Some((t.rotation * f, t.rotation * df))
}

/// Geometry of one warp direction, fixed for a given pair: where each source
/// feature pixel samples the neighbour map and which pixels may contribute.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidancePath {
    pub grid: WarpGrid,
    pub outproj: Mask,
    /// Neighbour → source.
    pub t_ns: RigidTransform,
    pub target: FeatureTarget,
    /// `(height, width)` of the neighbour feature grid.
    pub neighbour_dims: (usize, usize),
}

impl GuidancePath {
    pub fn new(sample: &StereoSample, cfg: &WarpGuidanceConfig) -> Result<Self> {
        cfg.validate()?;
        let target = FeatureTarget::from_view(&sample.source, cfg.stride)?;
        let k_n = sample.neighbour.camera.decimated(cfg.stride)?;
        let depth_n = decimate_scalar(&sample.neighbour.depth, cfg.stride);
        let grid = compute_warp_grid(&target.camera, &k_n, &target.depth, &sample.t_sn)?;
        let outproj = outprojection_mask(&grid, &depth_n, cfg.tau_occ)?;
        Ok(Self { grid, outproj, t_ns: sample.t_ns, target, neighbour_dims: (k_n.height, k_n.width) })
    }

    /// The neighbour feature map resampled onto the source grid.
    pub fn warp(&self, f_n: &VectorMap) -> Result<VectorMap> {
        if (f_n.height, f_n.width) != self.neighbour_dims {
            return Err(shape(format!(
                "neighbour features {}x{} vs feature grid {}x{}",
                f_n.height, f_n.width, self.neighbour_dims.0, self.neighbour_dims.1
            )));
        }
        Ok(bilinear_sample(f_n, &self.grid)?.0)
    }

    /// Scores planes decoded in neighbour coordinates on the source grid.
    ///
    /// Returns the report, `∂L/∂decoded` and the mask that actually contributed.
    pub fn loss_on_decoded(&self, decoded_n: &VectorMap, weights: &LossWeights) -> Result<(LossReport, VectorMap, Mask)> {
        if decoded_n.channels != 3 || decoded_n.pixel_count() != self.grid.coords.len() {
            return Err(shape("decoded planes must be a 3-channel map on the source grid"));
        }
        let base = self.outproj.and(&self.target.labeled);
        let transformed: Vec<Option<(Vector3<f64>, Matrix3<f64>)>> = (0..decoded_n.pixel_count())
            .into_par_iter()
            .map(|i| if base.data[i] { transform_plane_with_jacobian(&self.t_ns, &decoded_n.vec3(i)) } else { None })
            .collect();
        let mut planes_s = VectorMap::zeros(decoded_n.height, decoded_n.width, 3);
        let mut mask = Mask::full(decoded_n.height, decoded_n.width, false);
        for (i, t) in transformed.iter().enumerate() {
            if let Some((p, _)) = t {
                planes_s.set_vec3(i, p);
                mask.data[i] = true;
            }
        }
        if mask.count() == 0 {
            return Err(Error::EmptyLoss("guidance"));
        }
        let (mut report, d_s) = total_plane_loss(&planes_s, &self.target.as_plane_target(&mask), weights)?;
        report.excluded_pixel_count += base.count() - mask.count();
        let mut d_n = VectorMap::zeros(decoded_n.height, decoded_n.width, 3);
        for (i, t) in transformed.iter().enumerate() {
            if let Some((_, jac)) = t {
                d_n.set_vec3(i, &(jac.transpose() * d_s.vec3(i)));
            }
        }
        Ok((report, d_n, mask))
    }

    /// Guidance `L_P` for any decoder (no gradients).
    pub fn loss_with(&self, f_n: &VectorMap, decoder: &dyn PlaneDecoder, weights: &LossWeights) -> Result<LossReport> {
        let decoded = decoder.decode(&self.warp(f_n)?)?;
        Ok(self.loss_on_decoded(&decoded, weights)?.0)
    }

    /// Guidance `L_P` and its gradient w.r.t. the head parameters.
    pub fn loss_and_grad(&self, f_n: &VectorMap, head: &PlaneHead, weights: &LossWeights) -> Result<(LossReport, Vec<f64>)> {
        let warped = self.warp(f_n)?;
        let decoded = head.forward(&warped)?;
        let (report, d_decoded, _) = self.loss_on_decoded(&decoded, weights)?;
        Ok((report, head.backward(&warped, &d_decoded)?.params))
    }
}

/// Warps `f_n` onto the source feature grid and returns it with the outprojection mask.
pub fn warp_features(sample: &StereoSample, f_n: &VectorMap, cfg: &WarpGuidanceConfig) -> Result<(VectorMap, Mask)> {
    let path = GuidancePath::new(sample, cfg)?;
    Ok((path.warp(f_n)?, path.outproj))
}

/// Result of [`guidance_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceOutput {
    /// Combined report: guidance (weighted) plus the source-view loss when enabled.
    pub report: LossReport,
    pub guidance: LossReport,
    pub source: Option<LossReport>,
    pub grad_params: Vec<f64>,
}

/// Source-view loss (optional) plus the neighbour-guided loss, with head gradients.
pub fn guidance_loss(
    sample: &StereoSample,
    f_s: &VectorMap,
    f_n: &VectorMap,
    head: &PlaneHead,
    cfg: &WarpGuidanceConfig,
) -> Result<GuidanceOutput> {
    let path = GuidancePath::new(sample, cfg)?;
    guidance_loss_on(&path, f_s, f_n, head, cfg)
}

/// [`guidance_loss`] with precomputed geometry.
pub fn guidance_loss_on(
    path: &GuidancePath,
    f_s: &VectorMap,
    f_n: &VectorMap,
    head: &PlaneHead,
    cfg: &WarpGuidanceConfig,
) -> Result<GuidanceOutput> {
    let (guidance, mut grad) = path.loss_and_grad(f_n, head, &cfg.weights)?;
    grad.iter_mut().for_each(|g| *g *= cfg.guidance_weight);
    let mut report = scale_report(&guidance, cfg.guidance_weight);
    let mut source = None;
    if cfg.include_self_loss {
        let (self_report, d_self) = path.target.self_loss(&head.forward(f_s)?, &cfg.weights)?;
        let g_self = head.backward(f_s, &d_self)?.params;
        grad.iter_mut().zip(&g_self).for_each(|(a, b)| *a += b);
        report = report.add(&self_report);
        source = Some(self_report);
    }
    Ok(GuidanceOutput { report, guidance, source, grad_params: grad })
}

fn scale_report(r: &LossReport, w: f64) -> LossReport {
    LossReport {
        l_plane: r.l_plane * w,
        l_surface: r.l_surface * w,
        l_geom: r.l_geom * w,
        l_depth: r.l_depth * w,
        l_p: r.l_p * w,
        l_m: r.l_m * w,
        l_c: r.l_c * w,
        l_total: r.l_total * w,
        ..*r
    }
}

/// Feature map whose channels are the feature-grid pixel coordinates `(u, v)`.
///
/// Bilinear sampling reproduces coordinates exactly, so decoding it tells a
/// decoder precisely where in the view a warped sample came from.
pub fn coordinate_features(height: usize, width: usize) -> VectorMap {
    let mut f = VectorMap::zeros(height, width, 2);
    for i in 0..height * width {
        f.pixel_mut(i).copy_from_slice(&[(i % width) as f64, (i / width) as f64]);
    }
    f
}

/// Decoder that reads coordinate features and ray-casts the scene to return the
/// exact ground-truth plane, in camera coordinates, at that location.
pub struct OracleDecoder<'a> {
    pub scene: &'a PlanarScene,
    pub view: &'a RenderedView,
    pub stride: usize,
}

impl PlaneDecoder for OracleDecoder<'_> {
    fn decode(&self, features: &VectorMap) -> Result<VectorMap> {
        if features.channels != 2 {
            return Err(invalid("oracle decoder reads 2-channel coordinate features"));
        }
        let center = self.view.pose.center();
        let r_wc = self.view.pose.rotation.transpose();
        let s = self.stride as f64;
        let mut out = VectorMap::zeros(features.height, features.width, 3);
        out.data.par_chunks_mut(3).enumerate().for_each(|(i, px)| {
            let f = features.pixel(i);
            let dir = r_wc * self.view.camera.ray(f[0] * s, f[1] * s);
            if let Some(hit) = cast_ray(self.scene, &center, &dir) {
                let world = &self.scene.rects[hit.rect].plane;
                if let Ok(p) = crate::geom::transform_plane_reoriented(&self.view.pose, world) {
                    px.copy_from_slice(&p.0);
                }
            }
        });
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{finite_diff_check, FD_STEP};
    use crate::synth::{generate_scene, make_pair};

    fn pair(baseline: f64, yaw: f64, seed: u64) -> (PlanarScene, StereoSample) {
        let scene = generate_scene(seed, 3);
        let k = CameraIntrinsics::centered(60.0, 64, 48).unwrap();
        let s = make_pair(&scene, &k, &scene.random_pose(seed).unwrap(), &Vector3::new(baseline, 0.0, 0.0), yaw).unwrap();
        (scene, s)
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let t = RigidTransform::rot_y(7.0).compose(&RigidTransform::rot_x(-4.0)).with_translation(Vector3::new(0.2, -0.1, 0.05));
        let p = Vector3::new(0.3, -1.2, 2.1);
        let (ps, jac) = transform_plane_with_jacobian(&t, &p).unwrap();
        let oracle = crate::geom::transform_plane(&t, &crate::geom::PlaneParams(p.into())).unwrap();
        assert!((ps - oracle.vector()).norm() < 1e-12);
        for k in 0..3 {
            let f = |x: &[f64]| transform_plane_with_jacobian(&t, &Vector3::new(x[0], x[1], x[2])).unwrap().0[k];
            let row: Vec<f64> = (0..3).map(|c| jac[(k, c)]).collect();
            assert!(finite_diff_check(f, p.as_slice(), &row, FD_STEP).max_rel_error < 1e-7);
        }
    }

    #[test]
    fn identity_pair_warp_is_exact() {
        let (_, s) = pair(0.0, 0.0, 1);
        let f = coordinate_features(12, 16);
        let (w, mask) = warp_features(&s, &f, &WarpGuidanceConfig::default()).unwrap();
        assert_eq!(w, f);
        assert_eq!(mask.count(), 12 * 16);
    }

    #[test]
    fn oracle_decoder_gives_near_zero_loss() {
        let cfg = WarpGuidanceConfig::default();
        for (b, yaw) in [(0.0, 0.0), (0.2, 5.0)] {
            let (scene, s) = pair(b, yaw, 2);
            let path = GuidancePath::new(&s, &cfg).unwrap();
            let oracle = OracleDecoder { scene: &scene, view: &s.neighbour, stride: cfg.stride };
            let f_n = coordinate_features(path.target.camera.height, path.target.camera.width);
            let r = path.loss_with(&f_n, &oracle, &cfg.weights).unwrap();
            assert!(r.l_p < 1e-6, "baseline {b}: {r:?}");
        }
    }

    #[test]
    fn excluded_pixels_do_not_matter() {
        let cfg = WarpGuidanceConfig::default();
        let (_, s) = pair(0.2, 5.0, 3);
        let path = GuidancePath::new(&s, &cfg).unwrap();
        assert!(path.outproj.count() < path.outproj.data.len());
        let head = PlaneHead::random(2, 8, 1);
        let warped = path.warp(&coordinate_features(12, 16)).unwrap();
        let mut trashed = warped.clone();
        for (i, &keep) in path.outproj.data.iter().enumerate() {
            if !keep {
                trashed.pixel_mut(i).copy_from_slice(&[1e3, -7.0]);
            }
        }
        let a = path.loss_on_decoded(&head.forward(&warped).unwrap(), &cfg.weights).unwrap().0;
        let b = path.loss_on_decoded(&head.forward(&trashed).unwrap(), &cfg.weights).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn head_gradient_through_guidance() {
        let cfg = WarpGuidanceConfig::default();
        let (_, s) = pair(0.2, 5.0, 4);
        let path = GuidancePath::new(&s, &cfg).unwrap();
        let f_n = coordinate_features(12, 16);
        let f_n = VectorMap { data: f_n.data.iter().map(|v| v / 8.0 - 1.0).collect(), ..f_n };
        let head = PlaneHead::random(2, 6, 5);
        let (_, grad) = path.loss_and_grad(&f_n, &head, &cfg.weights).unwrap();
        let objective = |p: &[f64]| {
            let h = PlaneHead { params: p.to_vec(), ..head.clone() };
            path.loss_with(&f_n, &h, &cfg.weights).unwrap().l_p
        };
        let out = finite_diff_check(objective, &head.params, &grad, FD_STEP);
        assert!(out.max_rel_error < 1e-4, "{out:?}");
    }
}
