use nalgebra::{Rotation3, Vector3};
use planekit::geom::{
    backproject, bilinear_sample, compute_warp_grid, outprojection_mask, plane_induced_depth, transform_plane,
    transform_plane_reoriented, CameraIntrinsics, PlaneParams, RigidTransform, ScalarMap, VectorMap, WarpGrid,
};
use planekit::synth::{generate_scene, make_pair, render_view};
use planekit::warpguide::transform_plane_with_jacobian;
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = Vector3<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate direction", |(x, y, z)| x * x + y * y + z * z > 0.05)
        .prop_map(|(x, y, z)| Vector3::new(x, y, z).normalize())
}

fn plane() -> impl Strategy<Value = PlaneParams> {
    (unit(), 0.3..6.0f64).prop_map(|(n, d)| PlaneParams::compose(&n, d).unwrap())
}

fn transform() -> impl Strategy<Value = RigidTransform> {
    (unit(), -3.1..3.1f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(axis, angle, x, y, z)| {
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner();
        RigidTransform::new(r, Vector3::new(x, y, z)).unwrap()
    })
}

/// Plane through three transformed points, independent of the library's fit.
fn refit(t: &RigidTransform, plane: &PlaneParams) -> Vector3<f64> {
    let (n, d) = plane.decompose();
    let a = n.cross(&Vector3::new(0.48, 0.6, -0.64)).normalize();
    let b = n.cross(&a);
    let pts = [n * d, n * d + a * 1.3, n * d - b * 0.7].map(|q| t.apply(&q));
    let normal = (pts[1] - pts[0]).cross(&(pts[2] - pts[0])).normalize();
    // p = n·d is the same vector for either orientation of n.
    normal * normal.dot(&pts[0])
}

proptest! {
    #[test]
    fn induced_depth_backprojects_onto_the_plane(p in plane(), u in 0.0..64.0f64, v in 0.0..48.0f64) {
        let k = CameraIntrinsics::centered(50.0, 64, 48).unwrap();
        let (n, d) = p.decompose();
        if let Ok(depth) = plane_induced_depth(&k, &p, u, v) {
            prop_assume!(depth > 0.0);
            let q = backproject(&k, u, v, depth).unwrap();
            prop_assert!((n.dot(&q) - d).abs() < 1e-9 * d.max(depth));
        }
    }

    #[test]
    fn eq9_matches_point_refit(p in plane(), t in transform()) {
        prop_assume!(transform_plane_reoriented(&t, &p).is_ok());
        let got = transform_plane_reoriented(&t, &p).unwrap().vector();
        let want = refit(&t, &p);
        prop_assert!((got - want).norm() < 1e-9, "{got} vs {want}");
        if let Some((q, _)) = transform_plane_with_jacobian(&t, &p.vector()) {
            prop_assert!((q - want).norm() < 1e-9);
        }
    }

    #[test]
    fn transform_composes_and_inverts(p in plane(), t1 in transform(), t2 in transform()) {
        let Ok(p1) = transform_plane(&t1, &p) else { return Ok(()) };
        let Ok(p2) = transform_plane(&t2, &p1) else { return Ok(()) };
        let direct = transform_plane(&t2.compose(&t1), &p).unwrap();
        prop_assert!((p2.vector() - direct.vector()).norm() < 1e-9);
        let back = transform_plane(&t1.inverse(), &p1).unwrap();
        prop_assert!((back.vector() - p.vector()).norm() < 1e-9);
    }

    #[test]
    fn bilinear_sampling_is_linear(
        a in proptest::collection::vec(-1.0..1.0f64, 48),
        b in proptest::collection::vec(-1.0..1.0f64, 48),
        coords in proptest::collection::vec((-1.0..5.0f64, -1.0..4.0f64), 12),
        alpha in -2.0..2.0f64,
        beta in -2.0..2.0f64,
    ) {
        let (ma, mb) = (VectorMap::new(4, 4, 3, a.clone()).unwrap(), VectorMap::new(4, 4, 3, b.clone()).unwrap());
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
        let mm = VectorMap::new(4, 4, 3, mix).unwrap();
        let mut grid = WarpGrid::identity(3, 4);
        for (i, (u, v)) in coords.iter().enumerate() {
            grid.coords[i] = [*u, *v];
        }
        let (sa, _) = bilinear_sample(&ma, &grid).unwrap();
        let (sb, _) = bilinear_sample(&mb, &grid).unwrap();
        let (sm, _) = bilinear_sample(&mm, &grid).unwrap();
        for i in 0..sm.data.len() {
            prop_assert!((sm.data[i] - (alpha * sa.data[i] + beta * sb.data[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn outprojection_is_monotone_in_tau(seed in 0u64..40, t1 in 0.001..0.2f64, t2 in 0.001..0.2f64) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let scene = generate_scene(seed, 2);
        let k = CameraIntrinsics::centered(20.0, 24, 18).unwrap();
        let pair = make_pair(&scene, &k, &scene.random_pose(seed).unwrap(), &Vector3::new(0.3, 0.05, 0.0), 8.0).unwrap();
        let grid = compute_warp_grid(&k, &k, &pair.source.depth, &pair.t_sn).unwrap();
        let small = outprojection_mask(&grid, &pair.neighbour.depth, lo).unwrap();
        let large = outprojection_mask(&grid, &pair.neighbour.depth, hi).unwrap();
        prop_assert!(small.is_subset_of(&large));
    }
}

#[test]
fn rendered_depth_is_plane_induced_on_every_labeled_pixel() {
    for seed in 0..5u64 {
        let scene = generate_scene(seed, 3);
        let k = CameraIntrinsics::centered(80.0, 96, 72).unwrap();
        let view = render_view(&scene, &k, &scene.random_pose(seed).unwrap()).unwrap();
        let labeled = view.labeled();
        assert!(labeled.count() > 0);
        for i in (0..labeled.data.len()).filter(|&i| labeled.data[i]) {
            let p = PlaneParams(view.plane_map.vec3(i).into());
            let d = plane_induced_depth(&k, &p, (i % 96) as f64, (i / 96) as f64).unwrap();
            assert!((d - view.depth.data[i]).abs() <= 1e-6 * view.depth.data[i], "seed {seed} pixel {i}");
        }
    }
}

#[test]
fn identity_warp_reproduces_any_map_exactly() {
    let depth = ScalarMap::from_fn(9, 11, |u, v| 1.0 + 0.1 * (u + 2 * v) as f64);
    let k = CameraIntrinsics::centered(12.0, 11, 9).unwrap();
    let grid = compute_warp_grid(&k, &k, &depth, &RigidTransform::identity()).unwrap();
    assert_eq!(grid, WarpGrid { depth: depth.data.clone(), ..WarpGrid::identity(9, 11) });
    let map = VectorMap::new(9, 11, 2, (0..198).map(|i| (i as f64).sin()).collect()).unwrap();
    assert_eq!(bilinear_sample(&map, &grid).unwrap().0, map);
    assert_eq!(outprojection_mask(&grid, &depth, 0.05).unwrap().count(), 99);
}
