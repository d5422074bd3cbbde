//! Geometry, losses, multi-view feature warping and evaluation for
//! piece-wise planar reconstruction.
//!
//! Planes are encoded as `p = n·d` per pixel. The [`synth`] module renders
//! closed-room planar scenes with exact ground truth, which the rest of the
//! crate is tested against.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {
        assert!((($a) - ($b)).abs() <= $tol, "{} vs {} (tol {})", $a, $b, $tol)
    };
}

pub mod error;
pub mod geom;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod planehead;
pub mod pooling;
pub mod synth;
pub mod train;
pub mod warpguide;

pub use error::{Error, Result};
