use std::path::PathBuf;

use anyhow::Context;
use planekit::geom::{
    bilinear_sample, compute_warp_grid, outprojection_mask, plane_through_points, points_on_plane,
    transform_plane_reoriented, RigidTransform, DEFAULT_TAU_OCC,
};
use planekit::io::load_pair;
use planekit::losses::LossWeights;
use planekit::planehead::PlaneHead;
use planekit::synth::{RenderedView, StereoSample};
use planekit::train::{toy_features, TOY_CHANNELS};
use planekit::warpguide::{
    coordinate_features, transform_plane_with_jacobian, GuidancePath, OracleDecoder, WarpGuidanceConfig,
    DEFAULT_FEATURE_STRIDE,
};
use planekit::Error;

use crate::{CmdResult, Failure};

pub const IDENTITY_TOL: f64 = 1e-9;
pub const PHOTO_TOL: f64 = 0.02;
pub const ORACLE_TOL: f64 = 1e-4;
pub const EQ9_TOL: f64 = 1e-9;

#[derive(clap::Args)]
pub struct Args {
    /// Source manifest of a pair.
    #[arg(long)]
    pair: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU_OCC)]
    tau_occ: f64,
    #[arg(long, default_value_t = DEFAULT_FEATURE_STRIDE)]
    stride: usize,
}

/// Warping a view onto itself must reproduce it, and guidance through an
/// identity pose must equal the single-view loss.
fn identity_error(view: &RenderedView, stride: usize, tau: f64) -> planekit::Result<f64> {
    let k = view.camera;
    let grid = compute_warp_grid(&k, &k, &view.depth, &RigidTransform::identity())?;
    let mask = outprojection_mask(&grid, &view.depth, tau)?;
    if mask.count() != mask.data.len() {
        return Ok(f64::INFINITY);
    }
    let (warped, _) = bilinear_sample(&view.rgb, &grid)?;
    let mut err = warped.data.iter().zip(&view.rgb.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let sample = StereoSample {
        source: view.clone(),
        neighbour: view.clone(),
        t_ns: RigidTransform::identity(),
        t_sn: RigidTransform::identity(),
    };
    let cfg = WarpGuidanceConfig { stride, tau_occ: tau, ..WarpGuidanceConfig::default() };
    let path = GuidancePath::new(&sample, &cfg)?;
    let head = PlaneHead::random(TOY_CHANNELS, 16, 0);
    let f = toy_features(view, stride)?;
    let weights = LossWeights::default();
    let (guided, _) = path.loss_and_grad(&f, &head, &weights)?;
    let (single, _) = path.target.self_loss(&head.forward(&f)?, &weights)?;
    err = err.max((guided.l_p - single.l_p).abs());
    Ok(err)
}

/// Photometric MAE of the neighbour RGB warped into the source, with coverage.
fn photometric(sample: &StereoSample, tau: f64) -> planekit::Result<(f64, f64)> {
    let (s, n) = (&sample.source, &sample.neighbour);
    let grid = compute_warp_grid(&s.camera, &n.camera, &s.depth, &sample.t_sn)?;
    let mask = outprojection_mask(&grid, &n.depth, tau)?;
    let coverage = mask.count() as f64 / mask.data.len() as f64;
    if mask.count() == 0 {
        return Ok((f64::NAN, 0.0));
    }
    let (warped, _) = bilinear_sample(&n.rgb, &grid)?;
    let mut sum = 0.0;
    for (i, _) in mask.data.iter().enumerate().filter(|(_, &m)| m) {
        sum += warped.pixel(i).iter().zip(s.rgb.pixel(i)).map(|(a, b)| (a - b).abs()).sum::<f64>() / 3.0;
    }
    Ok((sum / mask.count() as f64, coverage))
}

/// Largest deviation of Eq. 9 from a plane refit through transformed points,
/// over every plane visible in the neighbour view.
fn eq9_deviation(sample: &StereoSample) -> planekit::Result<f64> {
    let mut worst = 0.0f64;
    for plane in sample.neighbour.instance_planes().values() {
        let pts = points_on_plane(plane).map(|q| sample.t_ns.apply(&q));
        let oracle = plane_through_points(&pts[0], &pts[1], &pts[2])?.vector();
        worst = worst.max((transform_plane_reoriented(&sample.t_ns, plane)?.vector() - oracle).norm());
        if let Some((p, _)) = transform_plane_with_jacobian(&sample.t_ns, &plane.vector()) {
            worst = worst.max((p - oracle).norm());
        }
    }
    Ok(worst)
}

pub fn run(a: Args) -> CmdResult {
    let loaded = load_pair(&a.pair).with_context(|| format!("loading pair {}", a.pair.display()))?;
    let scene = loaded
        .source
        .scene
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("{}: manifest has no embedded scene", a.pair.display()))?;
    let sample = &loaded.sample;
    let cfg = WarpGuidanceConfig { stride: a.stride, tau_occ: a.tau_occ, ..WarpGuidanceConfig::default() };
    cfg.validate()?;

    let identity = identity_error(&sample.source, a.stride, a.tau_occ)?;
    let (mae, coverage) = photometric(sample, a.tau_occ)?;
    let path = GuidancePath::new(sample, &cfg)?;
    let oracle = OracleDecoder { scene, view: &sample.neighbour, stride: a.stride };
    let f_n = coordinate_features(path.neighbour_dims.0, path.neighbour_dims.1);
    let oracle_lp = match path.loss_with(&f_n, &oracle, &LossWeights::default()) {
        Ok(r) => Some(r.l_p),
        Err(Error::EmptyLoss(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let eq9 = eq9_deviation(sample)?;

    let mut failed = Vec::new();
    let mut line = |name: &'static str, value: Option<f64>, tol: f64| match value {
        Some(v) => {
            let ok = v < tol;
            println!("{name}={v:.6e} tol={tol:e} {}", if ok { "ok" } else { "FAIL" });
            if !ok {
                failed.push(name);
            }
        }
        None => println!("{name}=n/a"),
    };
    line("identity_error", Some(identity), IDENTITY_TOL);
    println!("coverage={coverage:.4}");
    let overlap = coverage > 0.0 && oracle_lp.is_some();
    if !overlap {
        println!("warning: no overlap between the views; photometric and oracle checks skipped");
    }
    line("photometric_mae", overlap.then_some(mae), PHOTO_TOL);
    line("oracle_lp", if overlap { oracle_lp } else { None }, ORACLE_TOL);
    line("eq9_max_deviation", Some(eq9), EQ9_TOL);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("warp-check out of tolerance: {}", failed.join(", "))))
    }
}
