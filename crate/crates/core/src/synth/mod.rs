//! Synthetic closed-room planar scenes rendered with exact ground truth.

mod render;
mod scene;

pub use render::{
    cast_ray, drop_instances, dropped_instances, make_pair, remove_instances, render_view, Hit, RenderedView,
    StereoSample,
};
pub use scene::{
    generate_scene, PlanarScene, PlaneRect, BOX_CLASSES, CLASS_BOX_FIRST, CLASS_CEILING, CLASS_FLOOR, CLASS_WALL,
    N_CLASSES, ROOM_INSTANCES,
};
