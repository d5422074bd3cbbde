//! Image-gradient weights used for edge emphasis.

use super::maps::{ScalarMap, VectorMap};
use crate::error::{invalid, Result};

/// Luminance weights (ITU-R BT.601).
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Sobel gradient magnitude of the luminance image, scaled to `[0, 1]` by its
/// maximum. Borders replicate the edge pixel. A constant image gives zeros.
pub fn image_gradient(rgb: &VectorMap) -> Result<ScalarMap> {
    if rgb.channels != 3 {
        return Err(invalid(format!("image_gradient expects 3 channels, got {}", rgb.channels)));
    }
    let (h, w) = (rgb.height, rgb.width);
    let luma: Vec<f64> =
        (0..h * w).map(|i| rgb.pixel(i).iter().zip(LUMA).map(|(c, k)| c * k).sum()).collect();
    let at = |u: isize, v: isize| {
        let u = u.clamp(0, w as isize - 1) as usize;
        let v = v.clamp(0, h as isize - 1) as usize;
        luma[v * w + u]
    };
    let mut mag = ScalarMap::filled(h, w, 0.0);
    for v in 0..h as isize {
        for u in 0..w as isize {
            let gx = (at(u + 1, v - 1) + 2.0 * at(u + 1, v) + at(u + 1, v + 1))
                - (at(u - 1, v - 1) + 2.0 * at(u - 1, v) + at(u - 1, v + 1));
            let gy = (at(u - 1, v + 1) + 2.0 * at(u, v + 1) + at(u + 1, v + 1))
                - (at(u - 1, v - 1) + 2.0 * at(u, v - 1) + at(u + 1, v - 1));
            mag.set(u as usize, v as usize, gx.hypot(gy));
        }
    }
    let max = mag.max();
    if max > 0.0 {
        mag.data.iter_mut().for_each(|g| *g /= max);
    } else {
        mag.data.iter_mut().for_each(|g| *g = 0.0);
    }
    Ok(mag)
}
