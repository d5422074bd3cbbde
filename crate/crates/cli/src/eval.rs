use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use planekit::geom::{plane_induced_depth, PlaneParams, ScalarMap, VectorMap};
use planekit::io::{list_manifests, load_view, read_map, write_metrics_csv, write_recall_svg, MetricsRow, ViewManifest};
use planekit::metrics::{
    default_recall_thresholds, depth_metrics, detection_metrics, pixel_depth_errors, PixelDepthErrors, PredInstance,
    DEFAULT_IOU_MIN,
};
use planekit::pooling::{assemble_output, InstancePrediction, DEFAULT_SCORE_MIN, DEFAULT_THETA};
use planekit::synth::RenderedView;
use rayon::prelude::*;

use crate::CmdResult;

/// Predicted depth is clamped to this range before scoring.
const DEPTH_RANGE: (f64, f64) = (1e-3, 100.0);

#[derive(clap::Args)]
pub struct Args {
    /// Prediction directory; repeat to compare models.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    #[arg(long, default_value_t = DEFAULT_SCORE_MIN)]
    score_min: f64,
    #[arg(long, default_value_t = DEFAULT_IOU_MIN)]
    iou_min: f64,
}

fn stems(dir: &Path) -> anyhow::Result<BTreeSet<String>> {
    let paths = list_manifests(dir).with_context(|| format!("reading {}", dir.display()))?;
    Ok(paths.iter().filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned())).collect())
}

/// Per-pixel planes and instance predictions from a prediction manifest. Without
/// explicit predictions, each labelled instance becomes a hard mask with score 1.
fn load_prediction(path: &Path) -> planekit::Result<(VectorMap, Vec<InstancePrediction>)> {
    let m = ViewManifest::read(path)?;
    let planes = read_map(path, &m.files.planes)?.to_vector_map()?;
    let (h, w) = (planes.height, planes.width);
    let instances = match &m.predictions {
        Some(p) => {
            let masks = read_map(path, &p.masks)?.to_vector_map()?;
            if masks.channels != p.instances.len() || (masks.height, masks.width) != (h, w) {
                return Err(planekit::Error::Format(format!("{}: mask map does not match instance list", path.display())));
            }
            p.instances
                .iter()
                .enumerate()
                .map(|(c, inst)| InstancePrediction {
                    soft_mask: masks.channel(c),
                    score: inst.score,
                    class_id: inst.class_id,
                    pooled_plane: None,
                })
                .collect()
        }
        None => {
            let labels = read_map(path, &m.files.instances)?.to_instance_map()?;
            labels
                .ids()
                .into_iter()
                .filter(|&id| id > 0)
                .map(|id| InstancePrediction {
                    soft_mask: labels.mask_of(id).to_scalar(),
                    score: 1.0,
                    class_id: m.classes.get(&id).copied().unwrap_or(0),
                    pooled_plane: None,
                })
                .collect()
        }
    };
    Ok((planes, instances))
}

struct ImageResult {
    row: MetricsRow,
    errors: PixelDepthErrors,
}

fn evaluate_image(a: &Args, model: &str, stem: &str, pred_path: &Path, gt: &RenderedView) -> planekit::Result<ImageResult> {
    let (per_pixel, instances) = load_prediction(pred_path)?;
    if (per_pixel.height, per_pixel.width) != (gt.camera.height, gt.camera.width) {
        return Err(planekit::Error::Format(format!("{}: size differs from ground truth", pred_path.display())));
    }
    let out = assemble_output(&instances, &per_pixel, a.theta, a.score_min)?;
    let preds: Vec<PredInstance> = instances
        .iter()
        .enumerate()
        .filter(|(i, _)| out.pooled[*i].is_some())
        .map(|(i, inst)| PredInstance { id: i as u16 + 1, score: inst.score, class_id: inst.class_id })
        .collect();

    let w = gt.camera.width;
    let depth = ScalarMap {
        height: gt.camera.height,
        width: w,
        data: (0..out.planes.pixel_count())
            .map(|i| {
                let plane = PlaneParams(out.planes.vec3(i).into());
                plane_induced_depth(&gt.camera, &plane, (i % w) as f64, (i / w) as f64)
                    .ok()
                    .filter(|d| d.is_finite() && *d > 0.0)
                    .map_or(DEPTH_RANGE.1, |d| d.clamp(DEPTH_RANGE.0, DEPTH_RANGE.1))
            })
            .collect(),
    };
    let valid = planekit::geom::Mask {
        height: gt.depth.height,
        width: w,
        data: gt.depth.data.iter().map(|&d| d > 0.0).collect(),
    };
    let dm = depth_metrics(&depth, &gt.depth, Some(&valid))?;
    let det = detection_metrics(&out.instances, &preds, &gt.instances, &gt.classes, a.iou_min)?;
    let errors = pixel_depth_errors(&out.planes, &out.instances, &preds, &gt.plane_map, &gt.instances, &gt.camera, a.iou_min)?;
    Ok(ImageResult { row: MetricsRow::new(model, stem, &dm, det.ap, det.map), errors })
}

fn model_name(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn run(a: Args) -> CmdResult {
    if !(a.theta > 0.0 && a.theta < 1.0) || !(a.iou_min > 0.0 && a.iou_min <= 1.0) {
        return Err(anyhow::anyhow!("--theta must be in (0, 1) and --iou-min in (0, 1]").into());
    }
    let gt_stems = stems(&a.gt)?;
    if gt_stems.is_empty() {
        return Err(anyhow::anyhow!("no ground-truth manifests in {}", a.gt.display()).into());
    }
    let mut problems = Vec::new();
    for dir in &a.pred {
        let pred_stems = stems(dir)?;
        let missing: Vec<&String> = gt_stems.difference(&pred_stems).collect();
        let extra: Vec<&String> = pred_stems.difference(&gt_stems).collect();
        if !missing.is_empty() {
            problems.push(format!("{}: missing {missing:?}", dir.display()));
        }
        if !extra.is_empty() {
            problems.push(format!("{}: unexpected {extra:?}", dir.display()));
        }
    }
    if !problems.is_empty() {
        return Err(anyhow::anyhow!("image sets differ:\n  {}", problems.join("\n  ")).into());
    }

    let stems: Vec<&String> = gt_stems.iter().collect();
    let gts = stems
        .par_iter()
        .map(|s| load_view(&a.gt.join(format!("{s}.json"))).map(|(_, v)| v))
        .collect::<planekit::Result<Vec<_>>>()?;

    let thresholds = default_recall_thresholds();
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for dir in &a.pred {
        let model = model_name(dir);
        let results = stems
            .par_iter()
            .zip(&gts)
            .map(|(s, gt)| {
                let path = dir.join(format!("{s}.json"));
                evaluate_image(&a, &model, s, &path, gt)
                    .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let model_rows: Vec<MetricsRow> = results.iter().map(|r| r.row.clone()).collect();
        let mean = MetricsRow::mean(&model, &model_rows)?;
        println!(
            "{model}: abs_rel={:.6} rmse={:.6} delta1={:.4} ap={:.4} map={:.4}",
            mean.abs_rel, mean.rmse, mean.delta1, mean.ap, mean.map
        );
        rows.extend(model_rows);
        rows.push(mean);
        let parts: Vec<PixelDepthErrors> = results.into_iter().map(|r| r.errors).collect();
        curves.push((model, PixelDepthErrors::merge(&parts).recall_curve(&thresholds)?));
    }
    if let Some(path) = &a.csv {
        write_metrics_csv(path, &rows).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.svg {
        write_recall_svg(path, &curves).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
