use std::path::PathBuf;

use anyhow::Context;
use planekit::io::{list_manifests, list_pair_sources, load_pair, load_view, write_atomic, write_loss_csv, Fmap};
use planekit::losses::LossReport;
use planekit::train::{dropped_region_l1, evaluate_heldout, train_toy, HeldoutReport, ToyConfig, ToyPair};
use planekit::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::{CmdResult, Switch};

#[derive(clap::Args)]
pub struct Args {
    /// Directory of pairs written by `synth-gen --pairs`.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 3e-3)]
    lr: f64,
    /// Cosine learning-rate decay to zero over the run.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    lr_decay: Switch,
    /// Global gradient-norm ceiling; 0 disables clipping.
    #[arg(long, default_value_t = 10.0)]
    grad_clip: f64,
    /// Per-pixel ceiling on the plane-loss gradient, in units of 1/N; 0 disables.
    #[arg(long, default_value_t = 10.0)]
    pixel_grad_cap: f64,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    guidance: Switch,
    /// Eq. 6 edge weighting in its (1 + G) form.
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    grad_weight: Switch,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-step loss log (CSV).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 4)]
    stride: usize,
    /// Views to evaluate the trained head on.
    #[arg(long)]
    heldout: Option<PathBuf>,
    /// Write the trained head as an FMAP.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Write a JSON summary.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Serialize)]
struct Summary {
    pairs: usize,
    config: ToyConfig,
    final_loss: LossReport,
    heldout: Option<HeldoutReport>,
    dropped_l1: Option<f64>,
}

pub fn run(a: Args) -> CmdResult {
    if !(a.lr > 0.0) || a.hidden == 0 || a.stride == 0 || !(a.grad_clip >= 0.0) || !(a.pixel_grad_cap >= 0.0) {
        return Err(anyhow::anyhow!("--lr, --hidden and --stride must be positive and --grad-clip, --pixel-grad-cap non-negative").into());
    }
    let cfg = ToyConfig {
        steps: a.steps,
        lr: a.lr,
        cosine_decay: a.lr_decay.on(),
        grad_clip: a.grad_clip,
        pixel_grad_cap: a.pixel_grad_cap,
        hidden: a.hidden,
        guidance: a.guidance.on(),
        gradient_weighting: a.grad_weight.on(),
        seed: a.seed,
        stride: a.stride,
    };
    let sources = list_pair_sources(&a.pairs).with_context(|| format!("reading {}", a.pairs.display()))?;
    if sources.is_empty() {
        return Err(anyhow::anyhow!("no pairs found in {}", a.pairs.display()).into());
    }
    let pairs = sources
        .par_iter()
        .map(|path| {
            let loaded = load_pair(path)?;
            ToyPair::new(&loaded.sample, &loaded.source.dropped_instances, &cfg)
        })
        .collect::<planekit::Result<Vec<_>>>()?;

    let mut log = Vec::with_capacity(a.steps + 1);
    let head = train_toy(&pairs, &cfg, |step, r| log.push((step, *r)))?;
    let final_loss = log.last().expect("at least the initial loss is logged").1;
    if let Some(path) = &a.report {
        write_loss_csv(path, &log).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.checkpoint {
        Fmap::from_vector_map(&head.to_map()).write(path).with_context(|| format!("writing {}", path.display()))?;
    }

    let heldout = match &a.heldout {
        Some(dir) => {
            let views = list_manifests(dir)?
                .iter()
                .map(|p| load_view(p).map(|(_, v)| v))
                .collect::<planekit::Result<Vec<_>>>()?;
            if views.is_empty() {
                return Err(anyhow::anyhow!("no views found in {}", dir.display()).into());
            }
            Some(evaluate_heldout(&head, &views, a.stride)?)
        }
        None => None,
    };
    let dropped_l1 = match dropped_region_l1(&pairs, &head) {
        Ok(v) => Some(v),
        Err(Error::EmptyMetric(_)) => None,
        Err(e) => return Err(e.into()),
    };

    println!("pairs={} steps={} guidance={}", pairs.len(), a.steps, cfg.guidance);
    println!("initial_l_total={:.6e}", log[0].1.l_total);
    println!("final_l_total={:.6e}", final_loss.l_total);
    if let Some(h) = &heldout {
        println!("heldout_abs_rel={:.6e} heldout_l_surface={:.6e}", h.abs_rel, h.l_surface);
    }
    if let Some(d) = dropped_l1 {
        println!("dropped_l1={d:.6e}");
    }
    if let Some(path) = &a.summary {
        let summary = Summary { pairs: pairs.len(), config: cfg, final_loss, heldout, dropped_l1 };
        let mut text = serde_json::to_string_pretty(&summary).context("serializing summary")?;
        text.push('\n');
        write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
