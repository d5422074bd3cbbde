use planekit::geom::{image_gradient, CameraIntrinsics, Mask, ScalarMap, VectorMap};
use planekit::losses::{
    l_depth, l_geom, l_plane, l_surface, total_plane_loss, GradientWeighting, LossWeights, PlaneNorm, PlaneTarget,
};
use planekit::synth::{generate_scene, render_view, RenderedView};
use proptest::prelude::*;

fn view(seed: u64) -> RenderedView {
    let scene = generate_scene(seed, 3);
    let k = CameraIntrinsics::centered(40.0, 48, 36).unwrap();
    render_view(&scene, &k, &scene.random_pose(seed).unwrap()).unwrap()
}

fn perturbed(gt: &VectorMap, noise: &[f64]) -> VectorMap {
    let data = gt.data.iter().enumerate().map(|(i, v)| v + noise[i % noise.len()]).collect();
    VectorMap::new(gt.height, gt.width, 3, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn terms_are_nonnegative_and_vanish_at_ground_truth(
        seed in 0u64..20,
        noise in proptest::collection::vec(-0.3..0.3f64, 31),
    ) {
        let v = view(seed);
        let valid = v.labeled();
        let pred = perturbed(&v.plane_map, &noise);
        let off = GradientWeighting::Off;
        for (name, at_pred, at_gt) in [
            ("plane", l_plane(&pred, &v.plane_map, Some(&valid), PlaneNorm::L1).unwrap().value,
                l_plane(&v.plane_map, &v.plane_map, Some(&valid), PlaneNorm::L1).unwrap().value),
            ("surface", l_surface(&pred, &v.plane_map, Some(&valid)).unwrap().value,
                l_surface(&v.plane_map, &v.plane_map, Some(&valid)).unwrap().value),
            ("depth", l_depth(&pred, &v.depth, &v.camera, Some(&valid), off, None).unwrap().value,
                l_depth(&v.plane_map, &v.depth, &v.camera, Some(&valid), off, None).unwrap().value),
            ("geom", l_geom(&pred, &v.depth, &v.camera, Some(&valid), off, None).unwrap().value,
                l_geom(&v.plane_map, &v.depth, &v.camera, Some(&valid), off, None).unwrap().value),
        ] {
            prop_assert!(at_pred >= 0.0, "{name} negative: {at_pred}");
            prop_assert!(at_gt.abs() < 1e-9, "{name} at ground truth: {at_gt}");
        }
    }

    #[test]
    fn surface_loss_ignores_positive_scale(seed in 0u64..20, scale in 0.05..20.0f64) {
        let v = view(seed);
        let valid = v.labeled();
        let pred = perturbed(&v.plane_map, &[0.1, -0.2, 0.05, 0.3]);
        let scaled = VectorMap::new(pred.height, pred.width, 3, pred.data.iter().map(|x| x * scale).collect()).unwrap();
        let a = l_surface(&pred, &v.plane_map, Some(&valid)).unwrap().value;
        let b = l_surface(&scaled, &v.plane_map, Some(&valid)).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn total_is_the_sum_of_enabled_terms(seed in 0u64..20, noise in proptest::collection::vec(-0.2..0.2f64, 17)) {
        let v = view(seed);
        let valid = v.labeled();
        let pred = perturbed(&v.plane_map, &noise);
        let target = PlaneTarget { planes: &v.plane_map, depth: &v.depth, camera: &v.camera, valid: Some(&valid), gradient: None };
        let (r, grad) = total_plane_loss(&pred, &target, &LossWeights::default()).unwrap();
        prop_assert!((r.l_p - (r.l_plane + r.l_surface + r.l_geom + r.l_depth)).abs() < 1e-12);

        let off = GradientWeighting::Off;
        let terms = [
            l_plane(&pred, &v.plane_map, Some(&valid), PlaneNorm::L1).unwrap(),
            l_surface(&pred, &v.plane_map, Some(&valid)).unwrap(),
            l_geom(&pred, &v.depth, &v.camera, Some(&valid), off, None).unwrap(),
            l_depth(&pred, &v.depth, &v.camera, Some(&valid), off, None).unwrap(),
        ];
        for i in 0..grad.data.len() {
            let sum: f64 = terms.iter().map(|t| t.grad.data[i]).sum();
            prop_assert!((grad.data[i] - sum).abs() < 1e-12);
        }

        let (only, _) = total_plane_loss(&pred, &target, &LossWeights::plane_only()).unwrap();
        prop_assert_eq!(only.l_p, terms[0].value);
        prop_assert_eq!(only.l_surface + only.l_geom + only.l_depth, 0.0);
    }
}

#[test]
fn unit_gradient_weight_matches_unweighted() {
    let v = view(3);
    let valid = v.labeled();
    let pred = perturbed(&v.plane_map, &[0.05, -0.1, 0.2]);
    let ones = ScalarMap::filled(v.depth.height, v.depth.width, 1.0);
    let zeros = ScalarMap::filled(v.depth.height, v.depth.width, 0.0);
    for f in [l_depth, l_geom] {
        let plain = f(&pred, &v.depth, &v.camera, Some(&valid), GradientWeighting::Off, None).unwrap();
        let literal = f(&pred, &v.depth, &v.camera, Some(&valid), GradientWeighting::Literal, Some(&ones)).unwrap();
        let one_plus = f(&pred, &v.depth, &v.camera, Some(&valid), GradientWeighting::OnePlus, Some(&zeros)).unwrap();
        assert_eq!(plain, literal);
        assert_eq!(plain, one_plus);
    }
}

#[test]
fn perfect_prediction_has_negligible_total_with_edge_weights() {
    for seed in 0..5 {
        let v = view(seed);
        let g = image_gradient(&v.rgb).unwrap();
        let valid = v.labeled();
        let target = PlaneTarget { planes: &v.plane_map, depth: &v.depth, camera: &v.camera, valid: Some(&valid), gradient: Some(&g) };
        let weights = LossWeights { gradient_weighting: GradientWeighting::OnePlus, ..LossWeights::default() };
        let (r, _) = total_plane_loss(&v.plane_map, &target, &weights).unwrap();
        assert!(r.l_p < 1e-5, "seed {seed}: {}", r.l_p);
        assert_eq!(r.valid_pixel_count, valid.count());
    }
}

#[test]
fn empty_validity_mask_is_an_error() {
    let v = view(0);
    let none = Mask { height: v.depth.height, width: v.depth.width, data: vec![false; v.depth.data.len()] };
    assert!(l_plane(&v.plane_map, &v.plane_map, Some(&none), PlaneNorm::L1).is_err());
}
