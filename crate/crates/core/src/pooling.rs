//! Instance plane soft-pooling (Eq. 10) and final output assembly.

use crate::error::{invalid, Error, Result};
use crate::geom::{check_dims, InstanceMap, Mask, PlaneParams, ScalarMap, VectorMap};

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_SCORE_MIN: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct InstancePrediction {
    pub soft_mask: ScalarMap,
    pub score: f64,
    pub class_id: u32,
    pub pooled_plane: Option<PlaneParams>,
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid(format!("mask threshold must be in (0, 1), got {theta}")));
    }
    Ok(())
}

/// Region `M = {m* > θ}`.
pub fn binarize(soft_mask: &ScalarMap, theta: f64) -> Result<Mask> {
    check_theta(theta)?;
    Ok(Mask {
        height: soft_mask.height,
        width: soft_mask.width,
        data: soft_mask.data.iter().map(|&m| m > theta).collect(),
    })
}

/// Eq. 10: `Σ m*·p / Σ m*` over the binary region `M`.
pub fn soft_pool(plane_map: &VectorMap, soft_mask: &ScalarMap, theta: f64) -> Result<PlaneParams> {
    check_dims(plane_map, soft_mask, "soft mask")?;
    let region = binarize(soft_mask, theta)?;
    // Running weighted mean: exact for constant inputs and never leaves the hull.
    let mut mean = [0.0; 3];
    let mut weight = 0.0;
    for (i, _) in region.data.iter().enumerate().filter(|(_, &b)| b) {
        let m = soft_mask.data[i];
        if m <= 0.0 {
            continue;
        }
        weight += m;
        let r = m / weight;
        for (a, p) in mean.iter_mut().zip(plane_map.pixel(i)) {
            *a += r * (p - *a);
        }
    }
    if !(weight > 0.0) {
        return Err(Error::EmptyInstance);
    }
    PlaneParams::new(nalgebra::Vector3::from(mean))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledOutput {
    pub planes: VectorMap,
    /// Pixel owner as `index + 1` into the instance list; 0 keeps the per-pixel plane.
    pub instances: InstanceMap,
    /// Pooled plane per input instance; `None` if discarded.
    pub pooled: Vec<Option<PlaneParams>>,
}

/// Paints instances with `score ≥ score_min` in descending score order; a pixel
/// keeps the first instance that claims it. Uncovered pixels keep `per_pixel`.
pub fn assemble_output(
    instances: &[InstancePrediction],
    per_pixel: &VectorMap,
    theta: f64,
    score_min: f64,
) -> Result<AssembledOutput> {
    check_theta(theta)?;
    if instances.len() >= u16::MAX as usize {
        return Err(invalid("too many instances"));
    }
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by(|&a, &b| instances[b].score.total_cmp(&instances[a].score));
    let mut planes = per_pixel.clone();
    let mut owner = InstanceMap::zeros(per_pixel.height, per_pixel.width);
    let mut pooled = vec![None; instances.len()];
    for idx in order {
        let inst = &instances[idx];
        if inst.score < score_min {
            continue;
        }
        let plane = match soft_pool(per_pixel, &inst.soft_mask, theta) {
            Ok(p) => p,
            Err(Error::EmptyInstance) => continue,
            Err(e) => return Err(e),
        };
        pooled[idx] = Some(plane);
        for (i, &m) in inst.soft_mask.data.iter().enumerate() {
            if m > theta && owner.data[i] == 0 {
                owner.data[i] = idx as u16 + 1;
                planes.pixel_mut(i).copy_from_slice(&plane.0);
            }
        }
    }
    Ok(AssembledOutput { planes, instances: owner, pooled })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_px(a: [f64; 3], b: [f64; 3]) -> VectorMap {
        VectorMap::new(1, 2, 3, [a, b].concat()).unwrap()
    }

    #[test]
    fn binarize_cases() {
        assert_eq!(binarize(&ScalarMap::filled(2, 2, 1.0), 0.5).unwrap().count(), 4);
        assert_eq!(binarize(&ScalarMap::filled(2, 2, 0.0), 0.5).unwrap().count(), 0);
        let half = ScalarMap::from_fn(2, 4, |u, _| if u < 2 { 0.6 } else { 0.0 });
        let m = binarize(&half, 0.5).unwrap();
        assert_eq!(m.data, vec![true, true, false, false, true, true, false, false]);
        assert!(binarize(&half, 1.0).is_err());
    }

    #[test]
    fn eq10_worked_examples() {
        let planes = two_px([0., 0., 1.], [0., 0., 3.]);
        let p = soft_pool(&planes, &ScalarMap::new(1, 2, vec![0.9, 0.6]).unwrap(), 0.5).unwrap();
        assert!((p.vector() - nalgebra::Vector3::new(0., 0., 1.8)).norm() < 1e-15);
        let p = soft_pool(&planes, &ScalarMap::new(1, 2, vec![0.6, 0.6]).unwrap(), 0.5).unwrap();
        assert_eq!(p.0, [0., 0., 2.]);
        let c = two_px([0.1, 0.2, 0.3], [0.1, 0.2, 0.3]);
        assert_eq!(soft_pool(&c, &ScalarMap::new(1, 2, vec![0.7, 0.9]).unwrap(), 0.5).unwrap().0, [0.1, 0.2, 0.3]);
        assert!(matches!(soft_pool(&c, &ScalarMap::filled(1, 2, 0.2), 0.5), Err(Error::EmptyInstance)));
    }

    #[test]
    fn assembly_rules() {
        let per_pixel = two_px([0., 0., 1.], [0., 0., 3.]);
        let out = assemble_output(&[], &per_pixel, 0.5, 0.3).unwrap();
        assert_eq!(out.planes, per_pixel);
        assert!(out.instances.data.iter().all(|&i| i == 0));

        let inst = |m: [f64; 2], score| InstancePrediction {
            soft_mask: ScalarMap::new(1, 2, m.to_vec()).unwrap(),
            score,
            class_id: 0,
            pooled_plane: None,
        };
        // Listed in ascending score on purpose: ownership follows score, not position.
        let list = [inst([0.0, 1.0], 0.8), inst([1.0, 1.0], 0.9)];
        let out = assemble_output(&list, &per_pixel, 0.5, 0.3).unwrap();
        assert_eq!(out.instances.data, vec![2, 2]);
        assert_eq!(out.planes.data, vec![0., 0., 2., 0., 0., 2.]);
        assert_eq!(assemble_output(&list, &per_pixel, 0.5, 0.3).unwrap(), out);
        let low = [inst([1.0, 1.0], 0.1)];
        assert_eq!(assemble_output(&low, &per_pixel, 0.5, 0.3).unwrap().planes, per_pixel);
    }
}
