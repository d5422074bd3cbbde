//! Randomized finite-difference verification of every analytic gradient.
//!
//! Each check draws a small random problem per trial, compares the analytic
//! gradient against central differences and resamples when the draw lands on
//! a kink of an absolute-value term.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geom::{CameraIntrinsics, RigidTransform, ScalarMap, VectorMap};
use crate::losses::{
    dice_loss, finite_diff_check, focal_loss_positive, l_depth, l_geom, l_plane, l_surface, CategoryGrid,
    GradientWeighting, LossTerm, LossWeights, PlaneNorm, FD_STEP,
};
use crate::planehead::PlaneHead;
use crate::synth::{generate_scene, make_pair};
use crate::warpguide::{GuidancePath, WarpGuidanceConfig};

pub const GRADCHECK_TOL: f64 = 1e-4;
const MAX_RESAMPLES: usize = 50;

/// Every check run by [`run_suite`], in order.
pub const CHECKS: [&str; 14] = [
    "l_plane_l1",
    "l_plane_euclidean",
    "l_surface",
    "l_depth",
    "l_depth_g",
    "l_depth_1pg",
    "l_geom",
    "l_geom_g",
    "l_geom_1pg",
    "dice",
    "focal_positive",
    "head_params",
    "head_features",
    "guidance",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub trials: usize,
    /// Draws rejected for sitting on a kink.
    pub resampled: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOL
    }
}

type Objective = Box<dyn Fn(&[f64]) -> f64>;

struct Case {
    x: Vec<f64>,
    f: Objective,
    grad: Vec<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

const H: usize = 3;
const W: usize = 4;

fn map3(data: &[f64]) -> VectorMap {
    VectorMap::new(H, W, 3, data.to_vec()).expect("fixed shape")
}

fn value_of(r: Result<LossTerm>) -> f64 {
    r.map(|t| t.value).unwrap_or(f64::NAN)
}

fn term_case(x: Vec<f64>, f: impl Fn(&VectorMap) -> Result<LossTerm> + 'static) -> Result<Case> {
    let grad = f(&map3(&x))?.grad.data;
    Ok(Case { x, f: Box::new(move |y| value_of(f(&map3(y)))), grad })
}

/// Random planes facing the camera with positive induced depth on the whole grid.
fn facing_planes(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(H * W * 3);
    for _ in 0..H * W {
        let n = Vector3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), 1.0).normalize();
        out.extend((n * rng.random_range(0.5..3.0)).iter());
    }
    out
}

fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(4.0, 4.0, 2.0, 1.5, W, H).expect("valid camera")
}

fn depth_case(rng: &mut ChaCha8Rng, geom: bool, weighting: GradientWeighting) -> Result<Case> {
    let x = facing_planes(rng);
    let depth = ScalarMap::new(H, W, uniform(rng, H * W, 0.8, 4.0))?;
    let g = ScalarMap::new(H, W, uniform(rng, H * W, 0.1, 1.0))?;
    let k = camera();
    term_case(x, move |p| {
        let g = Some(&g);
        if geom {
            l_geom(p, &depth, &k, None, weighting, g)
        } else {
            l_depth(p, &depth, &k, None, weighting, g)
        }
    })
}

fn head_case(rng: &mut ChaCha8Rng, wrt_features: bool) -> Result<Case> {
    let (c, hidden) = (4, 5);
    let head = PlaneHead::random(c, hidden, rng.random());
    let features = VectorMap::new(4, 4, c, uniform(rng, 16 * c, -1.5, 1.5))?;
    let upstream = VectorMap::new(4, 4, 3, uniform(rng, 48, -1.0, 1.0))?;
    let grads = head.backward(&features, &upstream)?;
    let objective = move |head: &PlaneHead, features: &VectorMap| {
        head.forward(features)
            .map(|out| out.data.iter().zip(&upstream.data).map(|(a, b)| a * b).sum())
            .unwrap_or(f64::NAN)
    };
    if wrt_features {
        let x = features.data.clone();
        Ok(Case {
            f: Box::new(move |y| objective(&head, &VectorMap::new(4, 4, c, y.to_vec()).expect("shape"))),
            x,
            grad: grads.features.data,
        })
    } else {
        Ok(Case {
            x: head.params.clone(),
            f: Box::new(move |y| objective(&PlaneHead::from_params(c, hidden, y.to_vec()).expect("shape"), &features)),
            grad: grads.params,
        })
    }
}

fn guidance_case(rng: &mut ChaCha8Rng) -> Result<Case> {
    let (c, hidden) = (4, 4);
    let scene = generate_scene(rng.random(), 2);
    let k = CameraIntrinsics::centered(24.0, 32, 24)?;
    let baseline = Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.05..0.05), rng.random_range(-0.1..0.1));
    let sample = make_pair(&scene, &k, &scene.random_pose(rng.random())?, &baseline, rng.random_range(-8.0..8.0))?;
    let weights = LossWeights { gradient_weighting: GradientWeighting::OnePlus, ..LossWeights::default() };
    let path = GuidancePath::new(&sample, &WarpGuidanceConfig { weights, ..WarpGuidanceConfig::default() })?;
    let f_n = VectorMap::new(6, 8, c, uniform(rng, 48 * c, -1.0, 1.0))?;
    let mut head = PlaneHead::random(c, hidden, rng.random());
    // Bias towards planes facing the camera so most pixels have a valid induced depth.
    let b2 = head.split_mut().3;
    b2.copy_from_slice(&[rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(1.0..3.0)]);
    let (_, grad) = path.loss_and_grad(&f_n, &head, &weights)?;
    let f = move |y: &[f64]| {
        let head = PlaneHead::from_params(c, hidden, y.to_vec()).expect("shape");
        path.loss_with(&f_n, &head, &weights).map(|r| r.l_total).unwrap_or(f64::NAN)
    };
    Ok(Case { x: head.params.clone(), f: Box::new(f), grad })
}

fn draw(name: &str, rng: &mut ChaCha8Rng) -> Result<Case> {
    use GradientWeighting::{Literal, Off, OnePlus};
    match name {
        "l_plane_l1" | "l_plane_euclidean" => {
            let norm = if name == "l_plane_l1" { PlaneNorm::L1 } else { PlaneNorm::Euclidean };
            let gt = map3(&uniform(rng, H * W * 3, -2.0, 2.0));
            term_case(uniform(rng, H * W * 3, -2.0, 2.0), move |p| l_plane(p, &gt, None, norm))
        }
        "l_surface" => {
            let gt = map3(&uniform(rng, H * W * 3, -2.0, 2.0));
            term_case(uniform(rng, H * W * 3, -2.0, 2.0), move |p| l_surface(p, &gt, None))
        }
        "l_depth" => depth_case(rng, false, Off),
        "l_depth_g" => depth_case(rng, false, Literal),
        "l_depth_1pg" => depth_case(rng, false, OnePlus),
        "l_geom" => depth_case(rng, true, Off),
        "l_geom_g" => depth_case(rng, true, Literal),
        "l_geom_1pg" => depth_case(rng, true, OnePlus),
        "dice" => {
            let gt = ScalarMap::new(H, W, (0..H * W).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect())?;
            let x = uniform(rng, H * W, 0.0, 1.0);
            let grad = dice_loss(&ScalarMap::new(H, W, x.clone())?, &gt)?.1.data;
            let f = move |y: &[f64]| dice_loss(&ScalarMap::new(H, W, y.to_vec()).expect("shape"), &gt).map(|r| r.0);
            Ok(Case { x, f: Box::new(move |y| f(y).unwrap_or(f64::NAN)), grad })
        }
        "focal_positive" => {
            let (size, classes) = (3, 4);
            let mut targets: Vec<i32> = (0..size * size).map(|_| rng.random_range(-1..classes as i32)).collect();
            targets[rng.random_range(0..size * size)] = rng.random_range(0..classes as i32);
            let x = uniform(rng, size * size * classes, 0.05, 0.95);
            let w = LossWeights::default();
            let eval = move |y: &[f64]| {
                CategoryGrid::new(size, classes, y.to_vec(), targets.clone())
                    .and_then(|g| focal_loss_positive(&g, w.focal_alpha, w.focal_gamma))
            };
            let grad = eval(&x)?.1;
            Ok(Case { x, f: Box::new(move |y| eval(y).map(|r| r.0).unwrap_or(f64::NAN)), grad })
        }
        "head_params" => head_case(rng, false),
        "head_features" => head_case(rng, true),
        "guidance" => guidance_case(rng),
        other => Err(invalid(format!("unknown gradient check {other:?}"))),
    }
}

fn trial_rng(seed: u64, check: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((check as u64) << 32) | trial as u64);
    rng
}

/// Runs `trials` draws of one check. `corrupt` perturbs the analytic gradient
/// (used to prove the harness catches broken gradients).
pub fn run_check(name: &str, seed: u64, trials: usize, corrupt: bool) -> Result<CheckResult> {
    let index = CHECKS.iter().position(|&c| c == name).ok_or_else(|| invalid(format!("unknown gradient check {name:?}")))?;
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let mut result = CheckResult { name: CHECKS[index], max_rel_error: 0.0, trials, resampled: 0 };
    for trial in 0..trials {
        let mut rng = trial_rng(seed, index, trial);
        let mut attempts = 0;
        let outcome = loop {
            let mut case = match draw(name, &mut rng) {
                Ok(c) => c,
                // A random scene or head can leave the guidance mask empty; draw again.
                Err(Error::EmptyLoss(_)) if attempts < MAX_RESAMPLES => {
                    attempts += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if corrupt {
                case.grad[0] += 1.0 + case.grad[0].abs();
            }
            let out = finite_diff_check(&case.f, &case.x, &case.grad, FD_STEP);
            if out.kink.is_some() && attempts < MAX_RESAMPLES {
                attempts += 1;
                continue;
            }
            break out;
        };
        result.resampled += attempts;
        if !(outcome.max_rel_error <= result.max_rel_error) {
            result.max_rel_error = outcome.max_rel_error;
        }
    }
    Ok(result)
}

/// All checks in [`CHECKS`] order; `corrupt` names a check whose gradient is perturbed.
pub fn run_suite(seed: u64, trials: usize, corrupt: Option<&str>) -> Result<Vec<CheckResult>> {
    if let Some(c) = corrupt {
        if !CHECKS.contains(&c) {
            return Err(invalid(format!("unknown gradient check {c:?}")));
        }
    }
    CHECKS.iter().map(|&name| run_check(name, seed, trials, corrupt == Some(name))).collect()
}

/// Random rigid transform: rotation up to 1 rad about a random axis, translation in the unit cube.
pub fn random_transform(rng: &mut impl Rng) -> RigidTransform {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let angle = rng.random_range(-1.0..1.0);
    let rotation = nalgebra::Rotation3::from_scaled_axis(axis.normalize() * angle).into_inner();
    let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    RigidTransform::new(rotation, t).expect("rotation is orthonormal")
}
