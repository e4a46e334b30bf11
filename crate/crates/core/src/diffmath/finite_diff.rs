use crate::error::{Error, Result};

/// Central-difference gradient of a scalar function over a flat parameter
/// vector. Independent of the tape; used as the oracle for `backward`.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::domain(format!("eps must be positive, got {eps}")));
    }
    let mut grad = vec![0.0; params.len()];
    let mut work = params.to_vec();
    for i in 0..params.len() {
        work[i] = params[i] + eps;
        let plus = f(&work)?;
        work[i] = params[i] - eps;
        let minus = f(&work)?;
        work[i] = params[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite function value while differencing coordinate {i}"
            )));
        }
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// Relative error convention used by all gradient checks.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / f64::max(1e-8, a.abs() + b.abs())
}
