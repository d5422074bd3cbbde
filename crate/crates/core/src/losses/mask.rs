//! Mask (Dice) and category (positive-only focal) losses.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::geom::{check_dims, ScalarMap};

pub const DICE_EPS: f64 = 1e-8;

/// `1 − 2Σmm*/(Σm² + Σm*² + ε)` and its gradient w.r.t. `pred`.
pub fn dice_loss(pred: &ScalarMap, gt: &ScalarMap) -> Result<(f64, ScalarMap)> {
    check_dims(pred, gt, "dice masks")?;
    let inter: f64 = pred.data.iter().zip(&gt.data).map(|(a, b)| a * b).sum();
    let denom: f64 = pred.data.iter().map(|a| a * a).sum::<f64>() + gt.data.iter().map(|b| b * b).sum::<f64>() + DICE_EPS;
    let value = 1.0 - 2.0 * inter / denom;
    let grad = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(m, t)| -2.0 * t / denom + 4.0 * inter * m / (denom * denom))
        .collect();
    Ok((value, ScalarMap { height: pred.height, width: pred.width, data: grad }))
}

/// SOLO-style category grid: sigmoid scores per cell and class, and the target
/// class per cell (−1 for cells without an instance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryGrid {
    pub size: usize,
    pub n_classes: usize,
    /// `size × size × n_classes`, row-major with the class fastest.
    pub scores: Vec<f64>,
    pub targets: Vec<i32>,
}

impl CategoryGrid {
    pub fn new(size: usize, n_classes: usize, scores: Vec<f64>, targets: Vec<i32>) -> Result<Self> {
        if scores.len() != size * size * n_classes || targets.len() != size * size {
            return Err(shape(format!(
                "category grid {size}x{size}x{n_classes}: {} scores, {} targets",
                scores.len(),
                targets.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(invalid("category scores must be finite"));
        }
        if targets.iter().any(|&t| t < -1 || t >= n_classes as i32) {
            return Err(invalid("category target out of range"));
        }
        Ok(Self { size, n_classes, scores, targets })
    }
}

/// Focal loss over all classes of the positive cells only, averaged over the
/// positive-cell count. Returns the gradient w.r.t. the (post-sigmoid) scores.
pub fn focal_loss_positive(grid: &CategoryGrid, alpha: f64, gamma: f64) -> Result<(f64, Vec<f64>)> {
    let positives = grid.targets.iter().filter(|&&t| t >= 0).count();
    if positives == 0 {
        return Err(Error::EmptyLoss("focal_loss_positive"));
    }
    let inv = 1.0 / positives as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; grid.scores.len()];
    for (cell, &target) in grid.targets.iter().enumerate() {
        if target < 0 {
            continue;
        }
        for c in 0..grid.n_classes {
            let idx = cell * grid.n_classes + c;
            let s = grid.scores[idx];
            let (pt, dpt) = if c as i32 == target { (s, 1.0) } else { (1.0 - s, -1.0) };
            let pt = pt.clamp(1e-12, 1.0);
            let q = 1.0 - pt;
            let log_pt = pt.ln();
            value += -alpha * q.powf(gamma) * log_pt;
            // d/dpt of −α q^γ log pt = α γ q^(γ−1) log pt − α q^γ / pt
            let pow_term = if gamma == 0.0 || q == 0.0 { 0.0 } else { gamma * q.powf(gamma - 1.0) * log_pt };
            grad[idx] = alpha * (pow_term - q.powf(gamma) / pt) * dpt * inv;
        }
    }
    Ok((value * inv, grad))
}
