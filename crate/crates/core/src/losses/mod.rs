//! Training losses with analytic gradients.
//!
//! Plane losses take the predicted per-pixel plane map `p*` and return the
//! gradient `∂L/∂p*`; mask and category losses differentiate w.r.t. the soft
//! mask and the post-sigmoid scores.

mod fd;
mod mask;
mod plane;
mod report;

pub use fd::{finite_diff_check, rel_error, FdOutcome, FD_FLOOR, FD_STEP};
pub use mask::{dice_loss, focal_loss_positive, CategoryGrid, DICE_EPS};
pub use plane::{
    l_depth, l_geom, l_plane, l_surface, total_plane_loss, GradientWeighting, LossTerm, PlaneNorm, PlaneTarget,
};
pub(crate) use plane::induced_depth_grad;
pub use report::{combined_loss, LossReport, LossWeights};

use crate::geom::{ScalarMap, VectorMap};

/// Gradients of a combined loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub d_plane: VectorMap,
    pub d_mask: ScalarMap,
    pub d_scores: Vec<f64>,
}

impl GradBuffer {
    pub fn zeros(height: usize, width: usize, n_scores: usize) -> Self {
        Self {
            d_plane: VectorMap::zeros(height, width, 3),
            d_mask: ScalarMap::filled(height, width, 0.0),
            d_scores: vec![0.0; n_scores],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_plane.data.iter().chain(&self.d_mask.data).chain(&self.d_scores).all(|v| v.is_finite())
    }
}
