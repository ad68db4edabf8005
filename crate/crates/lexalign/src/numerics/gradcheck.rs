//! Finite-difference gradient verification.
//!
//! Checks an analytic gradient against central differences. The scalar
//! function is evaluated `2·len` times, so keep inputs small.

/// Result of one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error over all coordinates.
    pub max_relative_error: f64,
    /// Coordinate where the largest error occurred.
    pub worst_index: usize,
    /// Analytic and numerical derivative at that coordinate.
    pub worst_pair: (f64, f64),
}

/// Default step for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares `analytic` to a central-difference estimate of the gradient of
/// `f` at `point`. The relative error at coordinate `i` is
/// `|a_i - n_i| / max(1e-8, |a_i| + |n_i|)`.
pub fn finite_difference_check<F>(
    mut f: F,
    point: &[f64],
    analytic: &[f64],
    step: f64,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(point.len(), analytic.len(), "gradient length must match point length");
    assert!(step > 0.0, "step must be positive");
    let mut x = point.to_vec();
    let mut report = GradCheckReport { max_relative_error: 0.0, worst_index: 0, worst_pair: (0.0, 0.0) };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let fp = f(&x);
        x[i] = orig - step;
        let fm = f(&x);
        x[i] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if rel >= report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_index = i;
            report.worst_pair = (a, numeric);
        }
    }
    report
}
