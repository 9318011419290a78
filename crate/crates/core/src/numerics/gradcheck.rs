use rand::seq::index::sample;

use super::tensor::Scalar;
use super::{sc, seeded_rng, Parameterized};
use crate::Result;

/// Denominator floor for the relative error, so entries whose true gradient
/// is ~0 are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter name, flat index, analytic and numeric value at the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
    /// Largest relative error within each parameter, in model order.
    pub per_parameter: Vec<(String, f64)>,
}

impl GradCheckReport {
    /// Largest relative error over parameters whose name starts with `prefix`.
    pub fn max_rel_error_for(&self, prefix: &str) -> Option<f64> {
        self.per_parameter
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|&(_, e)| e)
            .reduce(f64::max)
    }
}

/// Compares analytic gradients against central differences.
///
/// `loss(model, with_grad)` must return the scalar loss and, when `with_grad`
/// is set, accumulate gradients into the (already zeroed) parameters.
/// With `sample = Some((n, seed))` only `n` random entries per parameter are
/// perturbed.
pub fn finite_difference_check<T, M, F>(
    model: &mut M,
    mut loss: F,
    epsilon: f64,
    sample_per_param: Option<(usize, u64)>,
) -> Result<GradCheckReport>
where
    T: Scalar,
    M: Parameterized<T>,
    F: FnMut(&mut M, bool) -> Result<T>,
{
    model.zero_grad();
    loss(model, true)?;
    let analytic: Vec<Vec<f64>> = model
        .parameters()
        .iter()
        .map(|p| p.grad.data().iter().map(|g| g.to_f64().unwrap()).collect())
        .collect();
    let names: Vec<String> = model.parameters().iter().map(|p| p.name.clone()).collect();
    let mut rng = sample_per_param.map(|(_, seed)| seeded_rng(seed));

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
        per_parameter: Vec::with_capacity(analytic.len()),
    };
    let eps: T = sc(epsilon);
    for (pi, grads) in analytic.iter().enumerate() {
        let indices: Vec<usize> = match (sample_per_param, rng.as_mut()) {
            (Some((n, _)), Some(rng)) if n < grads.len() => sample(rng, grads.len(), n).into_vec(),
            _ => (0..grads.len()).collect(),
        };
        let mut param_max = 0.0f64;
        for j in indices {
            let original = model.parameters()[pi].value.data()[j];
            model.parameters_mut()[pi].value.data_mut()[j] = original + eps;
            let plus = loss(model, false)?.to_f64().unwrap();
            model.parameters_mut()[pi].value.data_mut()[j] = original - eps;
            let minus = loss(model, false)?.to_f64().unwrap();
            model.parameters_mut()[pi].value.data_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grads[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            report.checked += 1;
            param_max = param_max.max(rel);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((names[pi].clone(), j, a, numeric));
            }
        }
        report.per_parameter.push((names[pi].clone(), param_max));
    }
    Ok(report)
}
