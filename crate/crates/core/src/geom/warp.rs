//! Cross-view warp grids, bilinear resampling and outprojection masking.

use rayon::prelude::*;

use super::camera::{CameraIntrinsics, RigidTransform};
use super::maps::{Mask, ScalarMap, VectorMap};
use crate::error::{shape, Result};

/// Default depth-consistency threshold for occlusion tests (meters).
pub const DEFAULT_TAU_OCC: f64 = 0.05;

/// For every target-grid pixel, where to sample in the other view.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpGrid {
    pub height: usize,
    pub width: usize,
    /// `(u, v)` sample location in the sampled image.
    pub coords: Vec<[f64; 2]>,
    pub valid: Vec<bool>,
    /// z of the back-projected point expressed in the sampled camera frame.
    pub depth: Vec<f64>,
}

impl WarpGrid {
    /// Identity grid: every pixel samples itself.
    pub fn identity(height: usize, width: usize) -> Self {
        let coords = (0..height * width).map(|i| [(i % width) as f64, (i / width) as f64]).collect();
        Self { height, width, coords, valid: vec![true; height * width], depth: vec![f64::NAN; height * width] }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn valid_mask(&self) -> Mask {
        Mask { height: self.height, width: self.width, data: self.valid.clone() }
    }
}

/// Computes where each source pixel lands in the neighbour image.
///
/// `t_sn` maps source-camera points to neighbour-camera points.
pub fn compute_warp_grid(
    k_s: &CameraIntrinsics,
    k_n: &CameraIntrinsics,
    depth_s: &ScalarMap,
    t_sn: &RigidTransform,
) -> Result<WarpGrid> {
    if depth_s.height != k_s.height || depth_s.width != k_s.width {
        return Err(shape(format!(
            "source depth {}x{} vs intrinsics {}x{}",
            depth_s.height, depth_s.width, k_s.height, k_s.width
        )));
    }
    let (h, w) = (depth_s.height, depth_s.width);
    let identity = t_sn.is_identity() && k_s == k_n;
    let per_pixel: Vec<([f64; 2], bool, f64)> = (0..h * w)
        .into_par_iter()
        .map(|i| {
            let (u, v) = ((i % w) as f64, (i / w) as f64);
            let d = depth_s.data[i];
            if !(d > 0.0) {
                return ([u, v], false, f64::NAN);
            }
            if identity {
                // Exact: no projection round-off.
                return ([u, v], true, d);
            }
            let q_n = t_sn.apply(&(k_s.ray(u, v) * d));
            match k_n.project(&q_n) {
                Some((un, vn)) => ([un, vn], k_n.contains(un, vn), q_n.z),
                None => ([f64::NAN, f64::NAN], false, q_n.z),
            }
        })
        .collect();
    let mut grid = WarpGrid {
        height: h,
        width: w,
        coords: Vec::with_capacity(h * w),
        valid: Vec::with_capacity(h * w),
        depth: Vec::with_capacity(h * w),
    };
    for (c, ok, z) in per_pixel {
        grid.coords.push(c);
        grid.valid.push(ok);
        grid.depth.push(z);
    }
    Ok(grid)
}

/// Bilinear taps for an in-bounds location: `(index, weight)` for up to 4 texels.
///
/// At integer coordinates only the exact texel is returned.
#[inline]
pub fn bilinear_taps(width: usize, height: usize, u: f64, v: f64) -> [(usize, f64); 4] {
    let x0 = (u.floor() as usize).min(width - 1);
    let y0 = (v.floor() as usize).min(height - 1);
    let ax = u - x0 as f64;
    let ay = v - y0 as f64;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    [
        (y0 * width + x0, (1.0 - ax) * (1.0 - ay)),
        (y0 * width + x1, ax * (1.0 - ay)),
        (y1 * width + x0, (1.0 - ax) * ay),
        (y1 * width + x1, ax * ay),
    ]
}

#[inline]
fn blend_into(src: &VectorMap, u: f64, v: f64, out: &mut [f64]) {
    let c = src.channels;
    if u.fract() == 0.0 && v.fract() == 0.0 {
        out.copy_from_slice(src.at(u as usize, v as usize));
        return;
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    for (idx, wgt) in bilinear_taps(src.width, src.height, u, v) {
        if wgt == 0.0 {
            continue;
        }
        let texel = &src.data[idx * c..(idx + 1) * c];
        for (o, t) in out.iter_mut().zip(texel) {
            *o += wgt * t;
        }
    }
}

/// Resamples `src` at the grid locations.
///
/// Returns the warped map and a per-pixel sample weight (1 where the grid is
/// valid, 0 elsewhere). Invalid pixels are zero.
pub fn bilinear_sample(src: &VectorMap, grid: &WarpGrid) -> Result<(VectorMap, ScalarMap)> {
    let c = src.channels;
    let mut out = VectorMap::zeros(grid.height, grid.width, c);
    out.data.par_chunks_mut(c).enumerate().for_each(|(i, px)| {
        if grid.valid[i] {
            let [u, v] = grid.coords[i];
            blend_into(src, u, v, px);
        }
    });
    let weights = ScalarMap {
        height: grid.height,
        width: grid.width,
        data: grid.valid.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    };
    Ok((out, weights))
}

/// Bilinear value of a scalar map at an in-bounds location.
pub fn sample_scalar(map: &ScalarMap, u: f64, v: f64) -> f64 {
    if u.fract() == 0.0 && v.fract() == 0.0 {
        return map.get(u as usize, v as usize);
    }
    bilinear_taps(map.width, map.height, u, v)
        .iter()
        .filter(|(_, w)| *w != 0.0)
        .map(|&(i, w)| w * map.data[i])
        .sum()
}

/// Pixels whose warp is in bounds and whose neighbour-frame depth agrees with
/// the neighbour depth map within `tau_occ`.
pub fn outprojection_mask(grid: &WarpGrid, depth_n: &ScalarMap, tau_occ: f64) -> Result<Mask> {
    let data = (0..grid.height * grid.width)
        .into_par_iter()
        .map(|i| {
            if !grid.valid[i] {
                return false;
            }
            let [u, v] = grid.coords[i];
            let seen = sample_scalar(depth_n, u, v);
            (grid.depth[i] - seen).abs() <= tau_occ
        })
        .collect();
    Ok(Mask { height: grid.height, width: grid.width, data })
}

/// Point-samples every `stride`-th pixel starting at (0, 0).
pub fn decimate(map: &VectorMap, stride: usize) -> VectorMap {
    if stride == 1 {
        return map.clone();
    }
    let h = map.height.div_ceil(stride);
    let w = map.width.div_ceil(stride);
    let mut data = Vec::with_capacity(h * w * map.channels);
    for v in 0..h {
        for u in 0..w {
            data.extend_from_slice(map.at(u * stride, v * stride));
        }
    }
    VectorMap { height: h, width: w, channels: map.channels, data }
}

pub fn decimate_scalar(map: &ScalarMap, stride: usize) -> ScalarMap {
    let v = decimate(&VectorMap::from(map.clone()), stride);
    ScalarMap { height: v.height, width: v.width, data: v.data }
}

pub fn decimate_mask(mask: &Mask, stride: usize) -> Mask {
    let h = mask.height.div_ceil(stride);
    let w = mask.width.div_ceil(stride);
    let data = (0..h * w).map(|i| mask.data[(i / w) * stride * mask.width + (i % w) * stride]).collect();
    Mask { height: h, width: w, data }
}
