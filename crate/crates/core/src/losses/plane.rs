//! Per-pixel plane losses (Eqs. 1–7) with gradients w.r.t. the predicted plane map.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{LossReport, LossWeights};
use crate::error::{shape, Error, Result};
use crate::geom::{check_dims, CameraIntrinsics, Mask, ScalarMap, VectorMap, PLANE_EPS, RAY_EPS};

/// Norm used by `l_plane`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PlaneNorm {
    /// Sum of absolute component differences.
    #[default]
    L1,
    Euclidean,
}

/// Edge weighting of `l_depth` and `l_geom` by the image gradient `G` (Eq. 6).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GradientWeighting {
    #[default]
    Off,
    /// Multiply each pixel term by `G`.
    Literal,
    /// Multiply each pixel term by `1 + G`.
    OnePlus,
}

impl GradientWeighting {
    #[inline]
    fn factor(self, g: Option<&ScalarMap>, i: usize) -> f64 {
        match (self, g) {
            (Self::Literal, Some(g)) => g.data[i],
            (Self::OnePlus, Some(g)) => 1.0 + g.data[i],
            _ => 1.0,
        }
    }
}

/// Value and gradient of one loss term.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    /// `∂L/∂pred`, zero on excluded pixels.
    pub grad: VectorMap,
    /// Pixels that contributed (the `N` of the mean).
    pub count: usize,
    /// Pixels inside the validity mask that had to be skipped.
    pub excluded: usize,
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_valid(pred: &VectorMap, valid: Option<&Mask>) -> Result<()> {
    if pred.channels != 3 {
        return Err(shape(format!("plane map needs 3 channels, got {}", pred.channels)));
    }
    if let Some(m) = valid {
        check_dims(pred, m, "validity mask")?;
    }
    Ok(())
}

/// Evaluates `per_pixel` on every valid pixel and averages in pixel order.
///
/// `per_pixel` returns `None` to exclude a pixel, otherwise the term and its
/// gradient before division by `N`.
fn reduce<F>(pred: &VectorMap, valid: Option<&Mask>, what: &'static str, per_pixel: F) -> Result<LossTerm>
where
    F: Fn(usize, Vector3<f64>) -> Option<(f64, Vector3<f64>)> + Sync,
{
    let n_px = pred.pixel_count();
    let terms: Vec<Option<Option<(f64, Vector3<f64>)>>> = (0..n_px)
        .into_par_iter()
        .map(|i| valid.is_none_or(|m| m.data[i]).then(|| per_pixel(i, pred.vec3(i))))
        .collect();
    let count = terms.iter().filter(|t| matches!(t, Some(Some(_)))).count();
    let excluded = terms.iter().filter(|t| matches!(t, Some(None))).count();
    if count == 0 {
        return Err(Error::EmptyLoss(what));
    }
    let inv = 1.0 / count as f64;
    let mut value = 0.0;
    let mut grad = VectorMap::zeros(pred.height, pred.width, 3);
    for (i, t) in terms.into_iter().enumerate() {
        if let Some(Some((v, g))) = t {
            value += v;
            grad.set_vec3(i, &(g * inv));
        }
    }
    Ok(LossTerm { value: value * inv, grad, count, excluded })
}

/// Eq. 1: mean plane-vector discrepancy.
pub fn l_plane(pred: &VectorMap, gt: &VectorMap, valid: Option<&Mask>, norm: PlaneNorm) -> Result<LossTerm> {
    check_valid(pred, valid)?;
    check_dims(pred, gt, "l_plane ground truth")?;
    reduce(pred, valid, "l_plane", |i, p| {
        let diff = p - gt.vec3(i);
        Some(match norm {
            PlaneNorm::L1 => (diff.abs().sum(), diff.map(sign)),
            PlaneNorm::Euclidean => {
                let len = diff.norm();
                (len, if len > 0.0 { diff / len } else { Vector3::zeros() })
            }
        })
    })
}

/// Eq. 2: mean `1 − cos(pred, gt)`. Near-zero vectors are excluded.
pub fn l_surface(pred: &VectorMap, gt: &VectorMap, valid: Option<&Mask>) -> Result<LossTerm> {
    check_valid(pred, valid)?;
    check_dims(pred, gt, "l_surface ground truth")?;
    reduce(pred, valid, "l_surface", |i, p| {
        let g = gt.vec3(i);
        let (np, ng) = (p.norm(), g.norm());
        if np <= PLANE_EPS || ng <= PLANE_EPS {
            return None;
        }
        let cos = p.dot(&g) / (np * ng);
        let dcos = g / (np * ng) - p * (cos / (np * np));
        Some((1.0 - cos, -dcos))
    })
}

/// Plane-induced depth `|p|²/(pᵀr)` (Eq. 3 with `n = p/|p|`, `d = |p|`) and its
/// gradient, or `None` for a degenerate ray or plane.
#[inline]
pub(crate) fn induced_depth_grad(p: &Vector3<f64>, r: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
    let pp = p.norm_squared();
    let norm = pp.sqrt();
    if norm <= PLANE_EPS {
        return None;
    }
    let pr = p.dot(r);
    if (pr / norm).abs() < RAY_EPS {
        return None;
    }
    let depth = pp / pr;
    Some((depth, p * (2.0 / pr) - r * (pp / (pr * pr))))
}

fn depth_inputs(pred: &VectorMap, gt_depth: &ScalarMap, k: &CameraIntrinsics, g: Option<&ScalarMap>) -> Result<()> {
    check_dims(pred, gt_depth, "ground-truth depth")?;
    if pred.height != k.height || pred.width != k.width {
        return Err(shape(format!(
            "plane map {}x{} vs intrinsics {}x{}",
            pred.height, pred.width, k.height, k.width
        )));
    }
    if let Some(g) = g {
        check_dims(pred, g, "gradient weights")?;
    }
    Ok(())
}

/// Eq. 4 (optionally weighted per Eq. 6): mean `|D − D*|`.
pub fn l_depth(
    pred: &VectorMap,
    gt_depth: &ScalarMap,
    k: &CameraIntrinsics,
    valid: Option<&Mask>,
    weighting: GradientWeighting,
    g: Option<&ScalarMap>,
) -> Result<LossTerm> {
    check_valid(pred, valid)?;
    depth_inputs(pred, gt_depth, k, g)?;
    let w = pred.width;
    reduce(pred, valid, "l_depth", |i, p| {
        let d = gt_depth.data[i];
        if !(d > 0.0) {
            return None;
        }
        let r = k.ray((i % w) as f64, (i / w) as f64);
        let (d_star, dd) = induced_depth_grad(&p, &r)?;
        let f = weighting.factor(g, i);
        Some((f * (d - d_star).abs(), dd * (f * sign(d_star - d))))
    })
}

/// Eq. 5 (optionally weighted per Eq. 6): mean `|n*ᵀQ − d*|` with `Q = D K⁻¹q`.
pub fn l_geom(
    pred: &VectorMap,
    gt_depth: &ScalarMap,
    k: &CameraIntrinsics,
    valid: Option<&Mask>,
    weighting: GradientWeighting,
    g: Option<&ScalarMap>,
) -> Result<LossTerm> {
    check_valid(pred, valid)?;
    depth_inputs(pred, gt_depth, k, g)?;
    let w = pred.width;
    reduce(pred, valid, "l_geom", |i, p| {
        let d = gt_depth.data[i];
        let norm = p.norm();
        if !(d > 0.0) || norm <= PLANE_EPS {
            return None;
        }
        let q = k.ray((i % w) as f64, (i / w) as f64) * d;
        let pq = p.dot(&q);
        let resid = pq / norm - norm;
        let dres = q / norm - p * (pq / (norm * norm * norm)) - p / norm;
        let f = weighting.factor(g, i);
        Some((f * resid.abs(), dres * (f * sign(resid))))
    })
}

/// Ground truth for the plane losses of one view.
#[derive(Debug, Clone, Copy)]
pub struct PlaneTarget<'a> {
    pub planes: &'a VectorMap,
    pub depth: &'a ScalarMap,
    pub camera: &'a CameraIntrinsics,
    pub valid: Option<&'a Mask>,
    /// Image gradient for Eq. 6 weighting.
    pub gradient: Option<&'a ScalarMap>,
}

/// Eq. 7: `L_P` as the sum of the enabled terms, with the summed gradient.
pub fn total_plane_loss(pred: &VectorMap, target: &PlaneTarget, weights: &LossWeights) -> Result<(LossReport, VectorMap)> {
    let mut report = LossReport::default();
    let mut grad = VectorMap::zeros(pred.height, pred.width, 3);
    let mut add = |term: LossTerm, slot: &mut f64, report_count: &mut usize, excluded: &mut usize| {
        *slot = term.value;
        *report_count = (*report_count).max(term.count);
        *excluded = (*excluded).max(term.excluded);
        grad.data.iter_mut().zip(&term.grad.data).for_each(|(a, b)| *a += b);
    };
    let (mut count, mut excluded) = (0, 0);
    let gw = weights.gradient_weighting;
    if weights.use_plane {
        let t = l_plane(pred, target.planes, target.valid, weights.plane_norm)?;
        add(t, &mut report.l_plane, &mut count, &mut excluded);
    }
    if weights.use_surface {
        let t = l_surface(pred, target.planes, target.valid)?;
        add(t, &mut report.l_surface, &mut count, &mut excluded);
    }
    if weights.use_geom {
        let t = l_geom(pred, target.depth, target.camera, target.valid, gw, target.gradient)?;
        add(t, &mut report.l_geom, &mut count, &mut excluded);
    }
    if weights.use_depth {
        let t = l_depth(pred, target.depth, target.camera, target.valid, gw, target.gradient)?;
        add(t, &mut report.l_depth, &mut count, &mut excluded);
    }
    report.l_p = report.l_plane + report.l_surface + report.l_geom + report.l_depth;
    report.l_total = report.l_p;
    report.valid_pixel_count = count;
    report.excluded_pixel_count = excluded;
    Ok((report, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(p: [f64; 3]) -> VectorMap {
        VectorMap::new(1, 1, 3, p.to_vec()).unwrap()
    }

    fn k1() -> CameraIntrinsics {
        // 1×1 image with the principal point on the pixel: the ray is the optical axis.
        CameraIntrinsics { fx: 100.0, fy: 100.0, cx: 0.0, cy: 0.0, width: 1, height: 1 }
    }

    #[test]
    fn l_plane_worked_example() {
        let t = l_plane(&one([0., 0., 2.]), &one([0., 1., 1.]), None, PlaneNorm::L1).unwrap();
        assert_eq!(t.value, 2.0);
        assert_eq!(t.grad.data, vec![0.0, -1.0, 1.0]);
        let e = l_plane(&one([0., 0., 2.]), &one([0., 1., 1.]), None, PlaneNorm::Euclidean).unwrap();
        assert!((e.value - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn l_plane_empty_mask_is_an_error() {
        let m = Mask::full(1, 1, false);
        assert!(matches!(l_plane(&one([1., 0., 0.]), &one([1., 0., 0.]), Some(&m), PlaneNorm::L1), Err(Error::EmptyLoss(_))));
    }

    #[test]
    fn l_surface_parallel_and_orthogonal() {
        assert!(l_surface(&one([0., 0., 5.]), &one([0., 0., 1.]), None).unwrap().value.abs() < 1e-15);
        assert!((l_surface(&one([1., 0., 0.]), &one([0., 0., 1.]), None).unwrap().value - 1.0).abs() < 1e-15);
        let t = l_surface(&one([0., 0., 0.]), &one([0., 0., 1.]), None);
        assert!(t.is_err());
    }

    #[test]
    fn depth_and_geom_worked_examples() {
        let depth = ScalarMap::filled(1, 1, 2.0);
        let t = l_depth(&one([0., 0., 3.]), &depth, &k1(), None, GradientWeighting::Off, None).unwrap();
        assert_eq!(t.value, 1.0);
        let g0 = ScalarMap::filled(1, 1, 0.0);
        let t = l_depth(&one([0., 0., 3.]), &depth, &k1(), None, GradientWeighting::Literal, Some(&g0)).unwrap();
        assert_eq!(t.value, 0.0);
        let depth3 = ScalarMap::filled(1, 1, 3.0);
        let t = l_geom(&one([0., 0., 2.]), &depth3, &k1(), None, GradientWeighting::Off, None).unwrap();
        assert_eq!(t.value, 1.0);
    }

    #[test]
    fn degenerate_ray_pixels_are_excluded() {
        let depth = ScalarMap::filled(1, 1, 2.0);
        let t = l_depth(&one([1., 0., 0.]), &depth, &k1(), None, GradientWeighting::Off, None);
        assert!(matches!(t, Err(Error::EmptyLoss("l_depth"))));
    }
}
