use std::path::PathBuf;

use anyhow::Context;
use nalgebra::Vector3;
use planekit::geom::CameraIntrinsics;
use planekit::io::{write_pair, write_view, ViewExtras, ViewRole};
use planekit::synth::{dropped_instances, generate_scene, make_pair, render_view};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure_dir, parse_vec3, CmdResult};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    scenes: usize,
    /// Boxes per scene.
    #[arg(long, default_value_t = 3)]
    boxes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Render source/neighbour pairs instead of single views.
    #[arg(long)]
    pairs: bool,
    /// Neighbour offset in the source camera frame (meters).
    #[arg(long, value_parser = parse_vec3, default_value = "0.2,0,0", allow_hyphen_values = true)]
    baseline: [f64; 3],
    /// Neighbour rotation about the source camera y axis (degrees).
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    yaw: f64,
    /// Probability of marking each non-room source instance as dropped.
    #[arg(long, default_value_t = 0.0)]
    drop_prob: f64,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 48)]
    height: usize,
    /// Focal length in pixels.
    #[arg(long, default_value_t = 50.0)]
    focal: f64,
}

pub fn run(a: Args) -> CmdResult {
    if !(0.0..=1.0).contains(&a.drop_prob) {
        return Err(anyhow::anyhow!("--drop-prob must be in [0, 1]").into());
    }
    let camera = CameraIntrinsics::centered(a.focal, a.width, a.height)?;
    ensure_dir(&a.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    for i in 0..a.scenes {
        let (scene_seed, pose_seed, drop_seed): (u64, u64, u64) = (rng.random(), rng.random(), rng.random());
        let scene = generate_scene(scene_seed, a.boxes);
        let pose = scene.random_pose(pose_seed)?;
        let write = || -> planekit::Result<()> {
            if a.pairs {
                let sample = make_pair(&scene, &camera, &pose, &Vector3::from(a.baseline), a.yaw)?;
                let dropped = dropped_instances(&sample.source, a.drop_prob, drop_seed)?;
                write_pair(&a.out, &format!("pair_{i:04}"), &sample, dropped, Some(&scene))?;
            } else {
                let view = render_view(&scene, &camera, &pose)?;
                let dropped = dropped_instances(&view, a.drop_prob, drop_seed)?;
                let extras = ViewExtras { pair: None, dropped_instances: dropped, scene: Some(&scene) };
                write_view(&a.out, &format!("scene_{i:04}"), &view, ViewRole::Single, extras)?;
            }
            Ok(())
        };
        write().with_context(|| format!("writing sample {i} to {}", a.out.display()))?;
    }
    let what = if a.pairs { "pairs" } else { "scenes" };
    println!("wrote {} {what} to {}", a.scenes, a.out.display());
    Ok(())
}
