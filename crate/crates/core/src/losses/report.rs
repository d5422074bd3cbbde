use serde::{Deserialize, Serialize};

use super::plane::{GradientWeighting, PlaneNorm};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// `w_M` of Eq. 8.
    pub w_mask: f64,
    pub use_plane: bool,
    pub use_surface: bool,
    pub use_geom: bool,
    pub use_depth: bool,
    pub gradient_weighting: GradientWeighting,
    pub plane_norm: PlaneNorm,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_mask: 3.0,
            use_plane: true,
            use_surface: true,
            use_geom: true,
            use_depth: true,
            gradient_weighting: GradientWeighting::Off,
            plane_norm: PlaneNorm::L1,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_mask > 0.0) {
            return Err(invalid(format!("w_M must be positive, got {}", self.w_mask)));
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha < 1.0) {
            return Err(invalid(format!("focal alpha must be in (0, 1), got {}", self.focal_alpha)));
        }
        if !(self.focal_gamma >= 0.0) {
            return Err(invalid(format!("focal gamma must be non-negative, got {}", self.focal_gamma)));
        }
        Ok(())
    }

    /// Only `L_plane` enabled.
    pub fn plane_only() -> Self {
        Self { use_surface: false, use_geom: false, use_depth: false, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_plane: f64,
    pub l_surface: f64,
    pub l_geom: f64,
    pub l_depth: f64,
    pub l_p: f64,
    pub l_m: f64,
    pub l_c: f64,
    pub l_total: f64,
    pub valid_pixel_count: usize,
    pub excluded_pixel_count: usize,
}

impl LossReport {
    /// Term-wise sum; used to add a guidance loss to the source-view loss.
    pub fn add(&self, other: &LossReport) -> LossReport {
        LossReport {
            l_plane: self.l_plane + other.l_plane,
            l_surface: self.l_surface + other.l_surface,
            l_geom: self.l_geom + other.l_geom,
            l_depth: self.l_depth + other.l_depth,
            l_p: self.l_p + other.l_p,
            l_m: self.l_m + other.l_m,
            l_c: self.l_c + other.l_c,
            l_total: self.l_total + other.l_total,
            valid_pixel_count: self.valid_pixel_count + other.valid_pixel_count,
            excluded_pixel_count: self.excluded_pixel_count + other.excluded_pixel_count,
        }
    }
}

/// Eq. 8: `L_total = w_M·L_M + L_C + L_P`.
pub fn combined_loss(l_m: f64, l_c: f64, plane: &LossReport, weights: &LossWeights) -> LossReport {
    LossReport { l_m, l_c, l_total: weights.w_mask * l_m + l_c + plane.l_p, ..*plane }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eq8_examples() {
        let w = LossWeights::default();
        let zero = LossReport::default();
        assert_eq!(combined_loss(1.0, 0.0, &zero, &w).l_total, 3.0);
        assert_eq!(combined_loss(0.0, 0.0, &zero, &w).l_total, 0.0);
        let w2 = LossWeights { w_mask: 6.0, ..w };
        assert_eq!(combined_loss(0.7, 0.0, &zero, &w2).l_total, 2.0 * combined_loss(0.7, 0.0, &zero, &w).l_total);
    }

    #[test]
    fn weight_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights { w_mask: 0.0, ..Default::default() }.validate().is_err());
        assert!(LossWeights { focal_alpha: 1.0, ..Default::default() }.validate().is_err());
    }
}
