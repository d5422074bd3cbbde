//! Camera and plane geometry on dense pixel maps.

mod camera;
mod gradient;
mod maps;
mod plane;
mod warp;

pub use camera::{backproject, CameraIntrinsics, RigidTransform};
pub use gradient::image_gradient;
pub use maps::{Dims, InstanceMap, Mask, ScalarMap, VectorMap};
pub(crate) use maps::check_dims;
pub use plane::{
    plane_induced_depth, plane_through_points, points_on_plane, transform_plane, transform_plane_reoriented, transform_plane_signed, PlaneParams, PLANE_EPS,
    RAY_EPS,
};
pub use warp::{
    bilinear_sample, bilinear_taps, compute_warp_grid, decimate, decimate_mask, decimate_scalar, outprojection_mask,
    sample_scalar, WarpGrid, DEFAULT_TAU_OCC,
};
