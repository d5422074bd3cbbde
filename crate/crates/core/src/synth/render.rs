//! Ray-cast rendering of planar scenes with exact ground truth.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::scene::{PlanarScene, ROOM_INSTANCES};
use crate::error::{invalid, Result};
use crate::geom::{
    transform_plane_reoriented, CameraIntrinsics, InstanceMap, Mask, PlaneParams, RigidTransform, ScalarMap,
    VectorMap,
};

/// Nearest ray hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter; with a unit-z camera ray this is the camera-frame depth.
    pub t: f64,
    /// Index into `scene.rects`.
    pub rect: usize,
}

/// Nearest rectangle hit by `origin + t·dir`, `t > 0`, in world coordinates.
pub fn cast_ray(scene: &PlanarScene, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, rect) in scene.rects.iter().enumerate() {
        let (n, d) = rect.plane.decompose();
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            continue;
        }
        let t = (d - n.dot(origin)) / denom;
        if !(t > 1e-9) || best.is_some_and(|b| b.t <= t) {
            continue;
        }
        if rect.contains(&(origin + dir * t)) {
            best = Some(Hit { t, rect: i });
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub camera: CameraIntrinsics,
    /// World→camera.
    pub pose: RigidTransform,
    pub rgb: VectorMap,
    pub depth: ScalarMap,
    pub instances: InstanceMap,
    /// Per-pixel `p` in camera coordinates; zero where there is no instance.
    pub plane_map: VectorMap,
    /// Instance id → class id for every instance present in `instances`.
    pub classes: BTreeMap<u16, u32>,
}

impl RenderedView {
    pub fn labeled(&self) -> Mask {
        Mask {
            height: self.instances.height,
            width: self.instances.width,
            data: self.instances.data.iter().map(|&i| i > 0).collect(),
        }
    }

    /// Camera-frame plane of every instance present in the view.
    pub fn instance_planes(&self) -> BTreeMap<u16, PlaneParams> {
        let mut out = BTreeMap::new();
        for (i, &id) in self.instances.data.iter().enumerate() {
            if id > 0 {
                out.entry(id).or_insert_with(|| PlaneParams(self.plane_map.vec3(i).into()));
            }
        }
        out
    }
}

/// Source/neighbour pair. `t_ns` maps neighbour-camera points to source-camera points.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoSample {
    pub source: RenderedView,
    pub neighbour: RenderedView,
    pub t_ns: RigidTransform,
    pub t_sn: RigidTransform,
}

/// Renders `scene` through `camera` at the world→camera `pose`.
///
/// Panics if a ray escapes the room, which cannot happen for a camera inside it.
pub fn render_view(scene: &PlanarScene, camera: &CameraIntrinsics, pose: &RigidTransform) -> Result<RenderedView> {
    camera.validate()?;
    pose.validate()?;
    let center = pose.center();
    if !scene.is_free(&center) {
        return Err(invalid("camera center must be inside the room and outside every box"));
    }
    let cam_planes: Vec<Option<PlaneParams>> =
        scene.rects.iter().map(|r| transform_plane_reoriented(pose, &r.plane).ok()).collect();
    let r_wc = pose.rotation.transpose();
    let (h, w) = (camera.height, camera.width);

    let pixels: Vec<(u16, f64, [f64; 3], [f64; 3])> = (0..h * w)
        .into_par_iter()
        .map(|i| {
            let ray = camera.ray((i % w) as f64, (i / w) as f64);
            let dir = r_wc * ray;
            let hit = cast_ray(scene, &center, &dir).expect("closed room: every ray hits a wall");
            let rect = &scene.rects[hit.rect];
            // A plane through the camera center is seen edge-on and cannot be hit.
            let plane = cam_planes[hit.rect].expect("visible plane misses the camera center");
            let shade = 0.5 + 0.5 * rect.plane.normal().dot(&dir.normalize()).abs();
            let rgb = rect.albedo.map(|a| a * shade);
            (rect.instance_id, hit.t, rgb, plane.0)
        })
        .collect();

    let mut rgb = Vec::with_capacity(h * w * 3);
    let mut depth = Vec::with_capacity(h * w);
    let mut ids = Vec::with_capacity(h * w);
    let mut planes = Vec::with_capacity(h * w * 3);
    let mut classes = BTreeMap::new();
    for (id, t, c, p) in pixels {
        ids.push(id);
        depth.push(t);
        rgb.extend_from_slice(&c);
        planes.extend_from_slice(&p);
        classes.entry(id).or_insert_with(|| scene.class_of(id).expect("rendered id exists"));
    }
    Ok(RenderedView {
        camera: *camera,
        pose: *pose,
        rgb: VectorMap { height: h, width: w, channels: 3, data: rgb },
        depth: ScalarMap { height: h, width: w, data: depth },
        instances: InstanceMap { height: h, width: w, data: ids },
        plane_map: VectorMap { height: h, width: w, channels: 3, data: planes },
        classes,
    })
}

/// Renders a source view and a neighbour offset by `baseline` (source camera
/// frame, meters) and rotated by `yaw_deg` about the source camera y axis.
pub fn make_pair(
    scene: &PlanarScene,
    camera: &CameraIntrinsics,
    pose_s: &RigidTransform,
    baseline: &Vector3<f64>,
    yaw_deg: f64,
) -> Result<StereoSample> {
    let t_ns = RigidTransform::rot_y(yaw_deg).with_translation(*baseline);
    let t_sn = t_ns.inverse();
    let pose_n = t_sn.compose(pose_s);
    Ok(StereoSample {
        source: render_view(scene, camera, pose_s)?,
        neighbour: render_view(scene, camera, &pose_n)?,
        t_ns,
        t_sn,
    })
}

/// Non-room instances of `view` that a `drop_prob` draw with `seed` removes.
///
/// One uniform draw per non-room instance, in ascending id order.
pub fn dropped_instances(view: &RenderedView, drop_prob: f64, seed: u64) -> Result<Vec<u16>> {
    if !(0.0..=1.0).contains(&drop_prob) {
        return Err(invalid(format!("drop probability {drop_prob} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(view
        .instances
        .ids()
        .into_iter()
        .filter(|&id| id > ROOM_INSTANCES)
        .filter(|_| rng.random::<f64>() < drop_prob)
        .collect())
}

/// Removes the given instances from the labels and plane map; depth and rgb are kept.
pub fn remove_instances(view: &RenderedView, ids: &[u16]) -> RenderedView {
    let mut out = view.clone();
    for (i, id) in out.instances.data.iter_mut().enumerate() {
        if ids.contains(id) {
            *id = 0;
            out.plane_map.pixel_mut(i).fill(0.0);
        }
    }
    out.classes.retain(|id, _| !ids.contains(id));
    out
}

/// Drops each non-room instance independently with probability `drop_prob`.
pub fn drop_instances(view: &RenderedView, drop_prob: f64, seed: u64) -> Result<RenderedView> {
    Ok(remove_instances(view, &dropped_instances(view, drop_prob, seed)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{backproject, plane_induced_depth};
    use crate::synth::generate_scene;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::centered(60.0, 64, 48).unwrap()
    }

    #[test]
    fn axis_camera_sees_far_wall_at_its_distance() {
        let scene = generate_scene(3, 0);
        let k = CameraIntrinsics::new(50.0, 50.0, 32.0, 24.0, 65, 49).unwrap();
        // Camera at the room center looking along +y.
        let pose = RigidTransform::look_at(&Vector3::zeros(), &Vector3::y(), &Vector3::z()).unwrap();
        let view = render_view(&scene, &k, &pose).unwrap();
        let center = 24 * 65 + 32;
        assert!((view.depth.data[center] - scene.room[1] / 2.0).abs() < 1e-12);
        let wall = scene.rects.iter().find(|r| r.corners.iter().all(|c| c[1] == scene.room[1] / 2.0)).unwrap();
        assert_eq!(view.instances.data[center], wall.instance_id);
    }

    #[test]
    fn plane_map_reproduces_depth_everywhere() {
        for seed in 0..4 {
            let scene = generate_scene(seed, 3);
            let view = render_view(&scene, &cam(), &scene.random_pose(seed).unwrap()).unwrap();
            assert!(view.labeled().count() == view.instances.data.len());
            for i in 0..view.depth.len() {
                let (u, v) = ((i % 64) as f64, (i / 64) as f64);
                let p = PlaneParams(view.plane_map.vec3(i).into());
                let d = plane_induced_depth(&cam(), &p, u, v).unwrap();
                assert!((d - view.depth.data[i]).abs() <= 1e-6 * view.depth.data[i]);
                let q = backproject(&cam(), u, v, view.depth.data[i]).unwrap();
                assert!(p.residual(&q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn each_instance_has_one_plane() {
        let scene = generate_scene(5, 3);
        let view = render_view(&scene, &cam(), &scene.random_pose(1).unwrap()).unwrap();
        let planes = view.instance_planes();
        for (i, id) in view.instances.data.iter().enumerate() {
            assert!((view.plane_map.vec3(i) - planes[id].vector()).norm() < 1e-9);
        }
    }

    #[test]
    fn render_is_deterministic() {
        let scene = generate_scene(2, 2);
        let pose = scene.random_pose(0).unwrap();
        assert_eq!(render_view(&scene, &cam(), &pose).unwrap(), render_view(&scene, &cam(), &pose).unwrap());
    }

    #[test]
    fn zero_baseline_pair_is_identical() {
        let scene = generate_scene(2, 2);
        let pair = make_pair(&scene, &cam(), &scene.random_pose(0).unwrap(), &Vector3::zeros(), 0.0).unwrap();
        assert!(pair.t_sn.is_identity());
        assert_eq!(pair.source, pair.neighbour);
    }

    #[test]
    fn pair_transforms_are_inverse() {
        let scene = generate_scene(2, 2);
        let pair =
            make_pair(&scene, &cam(), &scene.random_pose(0).unwrap(), &Vector3::new(0.2, 0.0, 0.0), 5.0).unwrap();
        let id = pair.t_ns.compose(&pair.t_sn);
        assert!((id.rotation - nalgebra::Matrix3::identity()).abs().max() < 1e-9);
        assert!(id.translation.norm() < 1e-9);
        // The neighbour pose agrees with the relative transform.
        let rel = pair.neighbour.pose.compose(&pair.source.pose.inverse());
        assert!((rel.rotation - pair.t_sn.rotation).abs().max() < 1e-12);
        assert!((rel.translation - pair.t_sn.translation).norm() < 1e-12);
    }

    #[test]
    fn drop_extremes() {
        let scene = generate_scene(9, 4);
        let view = render_view(&scene, &cam(), &scene.random_pose(2).unwrap()).unwrap();
        assert_eq!(drop_instances(&view, 0.0, 1).unwrap(), view);
        let all = drop_instances(&view, 1.0, 1).unwrap();
        assert!(all.instances.ids().iter().all(|&id| id <= ROOM_INSTANCES));
        assert_eq!(all.depth, view.depth);
        assert_eq!(all.rgb, view.rgb);
        for (i, &id) in all.instances.data.iter().enumerate() {
            if id == 0 {
                assert_eq!(all.plane_map.pixel(i), &[0.0, 0.0, 0.0]);
            }
        }
        assert!(drop_instances(&view, 1.5, 1).is_err());
    }
}
