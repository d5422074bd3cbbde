use planekit::gradcheck::{run_suite, GRADCHECK_TOL};

use crate::{CmdResult, Failure};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random draws per check.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Corrupt the analytic gradient of the named check.
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

pub fn run(a: Args) -> CmdResult {
    if a.trials == 0 {
        return Err(anyhow::anyhow!("--trials must be at least 1").into());
    }
    let results = run_suite(a.seed, a.trials, a.inject_fault.as_deref())?;
    let mut failed = Vec::new();
    for r in &results {
        let status = if r.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<18} max_rel_error={:.3e} trials={} resampled={} {status}",
            r.name, r.max_rel_error, r.trials, r.resampled
        );
        if !r.passed() {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        println!("all gradients within {GRADCHECK_TOL:e}");
        Ok(())
    } else {
        Err(Failure::Check(format!("gradient mismatch in {}", failed.join(", "))))
    }
}
