//! Central finite-difference gradient verification.

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const FD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOutcome {
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst: usize,
    /// First coordinate where one-sided differences disagree, i.e. `x` sits
    /// on (or next to) a kink and should be resampled.
    pub kink: Option<usize>,
}

/// `|a − n| / max(|a|, |n|, FD_FLOOR)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Compares `analytic` against central differences of `f` at `x`.
pub fn finite_diff_check<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], analytic: &[f64], h: f64) -> FdOutcome {
    assert_eq!(x.len(), analytic.len(), "gradient length");
    let f0 = f(x);
    let mut xs = x.to_vec();
    let mut out = FdOutcome { max_rel_error: 0.0, worst: 0, kink: None };
    for i in 0..x.len() {
        xs[i] = x[i] + h;
        let fp = f(&xs);
        xs[i] = x[i] - h;
        let fm = f(&xs);
        xs[i] = x[i];
        let numeric = (fp - fm) / (2.0 * h);
        let (fwd, bwd) = ((fp - f0) / h, (f0 - fm) / h);
        if out.kink.is_none() && (fwd - bwd).abs() > 1e-2 * fwd.abs().max(bwd.abs()).max(FD_FLOOR) {
            out.kink = Some(i);
        }
        let e = rel_error(analytic[i], numeric);
        if e > out.max_rel_error || !e.is_finite() {
            out.max_rel_error = if e.is_finite() { e } else { f64::INFINITY };
            out.worst = i;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_function_passes() {
        let f = |x: &[f64]| x[0].sin() * x[1] + x[1].powi(3);
        let x = [0.3f64, -0.7];
        let g = [x[0].cos() * x[1], x[0].sin() + 3.0 * x[1] * x[1]];
        let out = finite_diff_check(f, &x, &g, FD_STEP);
        assert!(out.max_rel_error < 1e-8);
        assert!(out.kink.is_none());
    }

    #[test]
    fn kink_is_detected_and_wrong_gradient_flagged() {
        let f = |x: &[f64]| x[0].abs();
        assert_eq!(finite_diff_check(f, &[0.0], &[0.0], FD_STEP).kink, Some(0));
        let out = finite_diff_check(|x: &[f64]| x[0] * x[0], &[1.0], &[2.5], FD_STEP);
        assert!(out.max_rel_error > 0.1);
    }
}
