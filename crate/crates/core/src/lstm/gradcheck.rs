use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for [`relative_error`]. Gradients smaller than this are
/// compared absolutely: central differences of an O(1) loss through the full
/// model carry a few 1e-11 of rounding noise, which a 1e-5 relative bound
/// cannot resolve below this magnitude.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter index with the largest error.
    pub worst_index: Option<usize>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares `analytic` against central differences of `loss` on up to
/// `samples` randomly chosen coordinates of `params` (all of them when there
/// are fewer).
pub fn grad_check<F>(mut loss: F, params: &[f64], analytic: &[f64], samples: usize, seed: u64, tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient and parameter lengths differ");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = sample(&mut rng, params.len(), samples.min(params.len())).into_vec();
    indices.sort_unstable();

    let mut probe = params.to_vec();
    let mut report = GradCheckReport {
        checked: indices.len(),
        max_rel_error: 0.0,
        worst_index: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        tolerance,
    };
    for &k in &indices {
        let orig = probe[k];
        probe[k] = orig + FD_STEP;
        let up = loss(&probe);
        probe[k] = orig - FD_STEP;
        let down = loss(&probe);
        probe[k] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = relative_error(analytic[k], numeric);
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = err;
            report.worst_index = Some(k);
            report.worst_analytic = analytic[k];
            report.worst_numeric = numeric;
        }
    }
    report
}
