//! Central-difference gradient checking at 64-bit precision.

/// Finite-difference settings.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub epsilon: f64,
    /// Denominator floor of the relative error, so that entries whose
    /// gradient is near zero are judged by absolute error instead.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Coordinates the objective declined to evaluate (e.g. a perturbation
    /// crossed a ReLU or max-pool switch).
    pub skipped: usize,
}

impl GradReport {
    pub fn merge(mut self, other: &GradReport) -> Self {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst_index = other.worst_index;
        }
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.checked += other.checked;
        self.skipped += other.skipped;
        self
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` with central differences of `f` around `params`.
pub fn check_gradient(
    params: &[f64],
    analytic: &[f64],
    cfg: GradCheck,
    mut f: impl FnMut(&[f64]) -> f64,
) -> GradReport {
    check_gradient_with(params, analytic, cfg, |p| Some(f(p)))
}

/// Like [`check_gradient`], but `f` may return `None` to exclude a probe.
pub fn check_gradient_with(
    params: &[f64],
    analytic: &[f64],
    cfg: GradCheck,
    mut f: impl FnMut(&[f64]) -> Option<f64>,
) -> GradReport {
    assert_eq!(params.len(), analytic.len(), "parameter and gradient lengths differ");
    let mut report = GradReport::default();
    let mut probe = params.to_vec();
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + cfg.epsilon;
        let plus = f(&probe);
        probe[i] = orig - cfg.epsilon;
        let minus = f(&probe);
        probe[i] = orig;
        let (Some(plus), Some(minus)) = (plus, minus) else {
            report.skipped += 1;
            continue;
        };
        let numeric = (plus - minus) / (2.0 * cfg.epsilon);
        let abs = (analytic[i] - numeric).abs();
        let rel = relative_error(analytic[i], numeric, cfg.floor);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst_index = Some(i);
        }
        report.checked += 1;
    }
    report
}
