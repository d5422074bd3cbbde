//! Desk-scale training of a [`PlaneHead`] on rendered pairs, with and without
//! multi-view guidance.
//!
//! Features stand in for a learned backbone: per feature pixel they are
//! `[r_x, r_y, R, G, B, 1/D, p_x, p_y, p_z]` with `(r_x, r_y)` the viewing ray
//! and `p` a noise-free proxy of the plane, all taken from the complete render.
//! Labels may be incomplete (dropped instances); features never are.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{decimate, decimate_mask, decimate_scalar, Mask, PlaneParams, VectorMap};
use crate::losses::{induced_depth_grad, l_surface, GradientWeighting, LossReport, LossWeights};
use crate::metrics::depth_metrics;
use crate::planehead::{Adam, PlaneHead};
use crate::synth::{remove_instances, RenderedView, StereoSample};
use crate::warpguide::{FeatureTarget, GuidancePath, WarpGuidanceConfig};

pub const TOY_CHANNELS: usize = 9;

/// Toy feature map of a view on the feature grid.
pub fn toy_features(view: &RenderedView, stride: usize) -> Result<VectorMap> {
    let rgb = decimate(&view.rgb, stride);
    let depth = decimate_scalar(&view.depth, stride);
    let planes = decimate(&view.plane_map, stride);
    let (h, w) = (rgb.height, rgb.width);
    let mut out = VectorMap::zeros(h, w, TOY_CHANNELS);
    for i in 0..h * w {
        let (u, v) = (((i % w) * stride) as f64, ((i / w) * stride) as f64);
        let ray = view.camera.ray(u, v);
        let px = out.pixel_mut(i);
        px[0] = ray.x;
        px[1] = ray.y;
        px[2..5].copy_from_slice(rgb.pixel(i));
        px[5] = 1.0 / depth.data[i];
        px[6..9].copy_from_slice(planes.pixel(i));
    }
    if out.data.iter().any(|v| !v.is_finite()) {
        return Err(invalid("toy features need a complete render"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub steps: usize,
    pub lr: f64,
    /// Cosine-anneal the learning rate from `lr` to 0 over `steps`.
    pub cosine_decay: bool,
    /// Global gradient-norm ceiling applied before each Adam step; 0 disables.
    pub grad_clip: f64,
    /// Per-pixel ceiling on `|∂L/∂p|` in units of `1/N`; 0 disables.
    pub pixel_grad_cap: f64,
    pub hidden: usize,
    pub guidance: bool,
    pub gradient_weighting: bool,
    pub seed: u64,
    pub stride: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self { steps: 2000, lr: 3e-3, cosine_decay: true, grad_clip: 10.0, pixel_grad_cap: 10.0, hidden: 16, guidance: true, gradient_weighting: false, seed: 0, stride: 4 }
    }
}

impl ToyConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            gradient_weighting: if self.gradient_weighting { GradientWeighting::OnePlus } else { GradientWeighting::Off },
            ..LossWeights::default()
        }
    }

    fn guidance_config(&self) -> WarpGuidanceConfig {
        WarpGuidanceConfig { stride: self.stride, weights: self.loss_weights(), ..WarpGuidanceConfig::default() }
    }
}

/// One training pair with everything that stays fixed during training.
#[derive(Debug, Clone)]
pub struct ToyPair {
    pub f_s: VectorMap,
    pub f_n: VectorMap,
    /// Source labels after dropping.
    pub source: FeatureTarget,
    /// Guidance into the (label-incomplete) source view.
    pub into_source: GuidancePath,
    /// Guidance into the neighbour view: decodes source features.
    pub into_neighbour: GuidancePath,
    /// Source feature pixels whose labels were dropped.
    pub dropped: Mask,
    /// Complete source plane labels on the feature grid.
    pub full_planes: VectorMap,
}

impl ToyPair {
    /// `sample` holds complete renders; `dropped` instances are removed from the source labels.
    pub fn new(sample: &StereoSample, dropped: &[u16], cfg: &ToyConfig) -> Result<Self> {
        let s = cfg.stride;
        let gcfg = cfg.guidance_config();
        let incomplete = StereoSample { source: remove_instances(&sample.source, dropped), ..sample.clone() };
        let reversed = StereoSample {
            source: sample.neighbour.clone(),
            neighbour: incomplete.source.clone(),
            t_ns: sample.t_sn,
            t_sn: sample.t_ns,
        };
        let dropped_full = Mask {
            height: sample.source.instances.height,
            width: sample.source.instances.width,
            data: sample.source.instances.data.iter().map(|id| dropped.contains(id)).collect(),
        };
        Ok(Self {
            f_s: toy_features(&sample.source, s)?,
            f_n: toy_features(&sample.neighbour, s)?,
            source: FeatureTarget::from_view(&incomplete.source, s)?,
            into_source: GuidancePath::new(&incomplete, &gcfg)?,
            into_neighbour: GuidancePath::new(&reversed, &gcfg)?,
            dropped: decimate_mask(&dropped_full, s),
            full_planes: decimate(&sample.source.plane_map, s),
        })
    }
}

/// Caps each pixel's `∂L/∂p` at `cap / n` for a loss averaged over `n` pixels.
fn cap_pixel_grads(d: &mut VectorMap, n: usize, cap: f64) {
    if cap <= 0.0 || n == 0 {
        return;
    }
    let limit = cap / n as f64;
    for px in d.data.chunks_mut(3) {
        let norm = px.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > limit {
            px.iter_mut().for_each(|g| *g *= limit / norm);
        }
    }
}

/// Loss and head gradient of one pair.
fn pair_objective(pair: &ToyPair, head: &PlaneHead, cfg: &ToyConfig) -> Result<(LossReport, Vec<f64>)> {
    let weights = cfg.loss_weights();
    let mut grad = vec![0.0; head.params.len()];
    let mut report = LossReport::default();
    let mut accumulate = |r: LossReport, features: &VectorMap, mut d: VectorMap| -> Result<()> {
        cap_pixel_grads(&mut d, r.valid_pixel_count, cfg.pixel_grad_cap);
        report = report.add(&r);
        grad.iter_mut().zip(head.backward(features, &d)?.params).for_each(|(a, b)| *a += b);
        Ok(())
    };
    match pair.source.self_loss(&head.forward(&pair.f_s)?, &weights) {
        Ok((r, d)) => accumulate(r, &pair.f_s, d)?,
        Err(Error::EmptyLoss(_)) => {}
        Err(e) => return Err(e),
    }
    if cfg.guidance {
        for (path, features) in [(&pair.into_source, &pair.f_n), (&pair.into_neighbour, &pair.f_s)] {
            let warped = path.warp(features)?;
            match path.loss_on_decoded(&head.forward(&warped)?, &weights) {
                Ok((r, d, _)) => accumulate(r, &warped, d)?,
                Err(Error::EmptyLoss(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok((report, grad))
}

/// Mean loss and gradient over all pairs (pairs reduced in order).
pub fn batch_objective(pairs: &[ToyPair], head: &PlaneHead, cfg: &ToyConfig) -> Result<(LossReport, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(invalid("no training pairs"));
    }
    let mut total = LossReport::default();
    let mut grad = vec![0.0; head.params.len()];
    for pair in pairs {
        let (r, g) = pair_objective(pair, head, cfg)?;
        total = total.add(&r);
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let inv = 1.0 / pairs.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    let mean = LossReport {
        l_plane: total.l_plane * inv,
        l_surface: total.l_surface * inv,
        l_geom: total.l_geom * inv,
        l_depth: total.l_depth * inv,
        l_p: total.l_p * inv,
        l_m: 0.0,
        l_c: 0.0,
        l_total: total.l_total * inv,
        ..total
    };
    Ok((mean, grad))
}

/// Full-batch Adam. `log` sees the loss before each update and after the last
/// (`steps + 1` calls).
pub fn train_toy(pairs: &[ToyPair], cfg: &ToyConfig, mut log: impl FnMut(usize, &LossReport)) -> Result<PlaneHead> {
    let mut head = PlaneHead::random(TOY_CHANNELS, cfg.hidden, cfg.seed);
    let mut adam = Adam::new(cfg.lr, head.params.len());
    for step in 0..=cfg.steps {
        let (report, mut grad) = batch_objective(pairs, &head, cfg)?;
        log(step, &report);
        if step < cfg.steps {
            // Induced-depth terms spike near grazing rays; an unclipped spike
            // inflates Adam's second moment and stalls training for thousands of steps.
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
                grad.iter_mut().for_each(|g| *g *= cfg.grad_clip / norm);
            }
            if cfg.cosine_decay {
                adam.lr = 0.5 * cfg.lr * (1.0 + (std::f64::consts::PI * step as f64 / cfg.steps as f64).cos());
            }
            adam.step(&mut head.params, &grad)?;
        }
    }
    Ok(head)
}

/// Mean element-wise L1 plane error on the dropped source pixels.
pub fn dropped_region_l1(pairs: &[ToyPair], head: &PlaneHead) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for pair in pairs {
        let pred = head.forward(&pair.f_s)?;
        for (i, _) in pair.dropped.data.iter().enumerate().filter(|(_, &d)| d) {
            sum += (pred.vec3(i) - pair.full_planes.vec3(i)).abs().sum();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMetric("dropped_region_l1"));
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldoutReport {
    pub abs_rel: f64,
    pub l_surface: f64,
    pub pixels: usize,
}

/// Plane-induced-depth AbsRel and `L_surface` of the head on complete views.
///
/// Pixels whose predicted plane gives no positive depth count with a relative
/// error of 1.
pub fn evaluate_heldout(head: &PlaneHead, views: &[RenderedView], stride: usize) -> Result<HeldoutReport> {
    let (mut abs_rel, mut surf, mut n, mut n_surf) = (0.0, 0.0, 0usize, 0usize);
    for view in views {
        let target = FeatureTarget::from_view(view, stride)?;
        let pred = head.forward(&toy_features(view, stride)?)?;
        let w = target.camera.width;
        let mut pred_depth = target.depth.clone();
        for i in 0..pred.pixel_count() {
            let ray = target.camera.ray((i % w) as f64, (i / w) as f64);
            let d = induced_depth_grad(&pred.vec3(i), &ray).map(|(d, _)| d);
            pred_depth.data[i] = d.filter(|d| *d > 0.0).unwrap_or(f64::NAN);
        }
        for (i, d) in pred_depth.data.iter_mut().enumerate() {
            if !d.is_finite() {
                // Counted as a 100% error below.
                *d = 2.0 * target.depth.data[i];
            }
        }
        let m = depth_metrics(&pred_depth, &target.depth, Some(&target.labeled))?;
        let count = target.labeled.count();
        abs_rel += m.abs_rel * count as f64;
        n += count;
        let s = l_surface(&pred, &target.planes, Some(&target.labeled))?;
        surf += s.value * s.count as f64;
        n_surf += s.count;
    }
    if n == 0 || n_surf == 0 {
        return Err(Error::EmptyMetric("evaluate_heldout"));
    }
    Ok(HeldoutReport { abs_rel: abs_rel / n as f64, l_surface: surf / n_surf as f64, pixels: n })
}

/// Plane of a toy prediction at one pixel, for callers that want `PlaneParams`.
pub fn plane_at(pred: &VectorMap, i: usize) -> Result<PlaneParams> {
    PlaneParams::new(pred.vec3(i))
}
