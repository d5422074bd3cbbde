use nalgebra::Vector3;
use planekit::geom::{bilinear_sample, compute_warp_grid, outprojection_mask, CameraIntrinsics, DEFAULT_TAU_OCC};
use planekit::losses::LossWeights;
use planekit::synth::{dropped_instances, generate_scene, make_pair, StereoSample};
use planekit::train::{dropped_region_l1, train_toy, ToyConfig, ToyPair};
use planekit::warpguide::{coordinate_features, GuidancePath, OracleDecoder, WarpGuidanceConfig};
use planekit::Error;

fn sample(seed: u64, width: usize, height: usize, focal: f64) -> (planekit::synth::PlanarScene, StereoSample) {
    let scene = generate_scene(seed, 2);
    let k = CameraIntrinsics::centered(focal, width, height).unwrap();
    let s = make_pair(&scene, &k, &scene.random_pose(seed).unwrap(), &Vector3::new(0.15, 0.02, 0.05), 5.0).unwrap();
    (scene, s)
}

fn pairs(n: u64, drop_prob: f64, cfg: &ToyConfig) -> Vec<ToyPair> {
    (0..n)
        .map(|seed| {
            let (_, s) = sample(seed, 48, 36, 40.0);
            let dropped = dropped_instances(&s.source, drop_prob, seed).unwrap();
            ToyPair::new(&s, &dropped, cfg).unwrap()
        })
        .collect()
}

#[test]
fn neighbour_rgb_warps_onto_source() {
    for seed in 0..10 {
        let (_, s) = sample(seed, 128, 96, 100.0);
        let grid = compute_warp_grid(&s.source.camera, &s.neighbour.camera, &s.source.depth, &s.t_sn).unwrap();
        let mask = outprojection_mask(&grid, &s.neighbour.depth, DEFAULT_TAU_OCC).unwrap();
        let (warped, _) = bilinear_sample(&s.neighbour.rgb, &grid).unwrap();
        let (mut sum, n) = (0.0, mask.count());
        assert!(n > 0, "seed {seed}: no overlap");
        for (i, _) in mask.data.iter().enumerate().filter(|(_, &m)| m) {
            sum += warped.pixel(i).iter().zip(s.source.rgb.pixel(i)).map(|(a, b)| (a - b).abs()).sum::<f64>() / 3.0;
        }
        assert!(sum / (n as f64) < 0.02, "seed {seed}: MAE {}", sum / n as f64);
    }
}

#[test]
fn oracle_decoder_has_near_zero_guidance_loss() {
    for seed in 0..5 {
        let (scene, s) = sample(seed, 128, 96, 100.0);
        let cfg = WarpGuidanceConfig::default();
        let path = GuidancePath::new(&s, &cfg).unwrap();
        let oracle = OracleDecoder { scene: &scene, view: &s.neighbour, stride: cfg.stride };
        let f = coordinate_features(path.neighbour_dims.0, path.neighbour_dims.1);
        let r = path.loss_with(&f, &oracle, &LossWeights::default()).unwrap();
        assert!(r.l_p < 1e-4, "seed {seed}: {}", r.l_p);
    }
}

#[test]
fn zero_steps_logs_the_initial_loss_only() {
    let cfg = ToyConfig { steps: 0, ..ToyConfig::default() };
    let mut log = Vec::new();
    train_toy(&pairs(2, 0.0, &cfg), &cfg, |step, r| log.push((step, *r))).unwrap();
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].0, 0);
    assert!(log[0].1.l_total.is_finite() && log[0].1.l_total > 0.0);
}

#[test]
fn training_is_deterministic_and_reduces_the_loss() {
    let cfg = ToyConfig { steps: 150, ..ToyConfig::default() };
    let data = pairs(3, 0.5, &cfg);
    let run = || {
        let mut log = Vec::new();
        let head = train_toy(&data, &cfg, |_, r| log.push(r.l_total)).unwrap();
        (head.params, log)
    };
    let (a, log) = run();
    let (b, _) = run();
    assert_eq!(a, b);
    assert_eq!(log.len(), 151);
    assert!(log[150] < 0.5 * log[0], "{} -> {}", log[0], log[150]);
}

#[test]
fn dropped_l1_needs_dropped_pixels() {
    let cfg = ToyConfig { steps: 0, ..ToyConfig::default() };
    let data = pairs(2, 0.0, &cfg);
    let head = train_toy(&data, &cfg, |_, _| {}).unwrap();
    assert!(matches!(dropped_region_l1(&data, &head), Err(Error::EmptyMetric(_))));
}
