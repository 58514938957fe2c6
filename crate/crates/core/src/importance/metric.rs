use super::ImportanceVector;
use crate::error::{Error, Result};

/// Rescale to `[0, 1]`. A constant vector has no defined normalization.
pub fn min_max_normalize(values: &[f64]) -> Result<Vec<f64>> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || !(max > min) {
        return Err(Error::Degenerate(format!("cannot min-max normalize {values:?}")));
    }
    Ok(values.iter().map(|v| (v - min) / (max - min)).collect())
}

/// Sum of absolute differences after normalizing both vectors to `[0, 1]`.
/// Lies in `[0, d]`.
pub fn normalized_error(estimate: &ImportanceVector, reference: &ImportanceVector) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::schema(format!(
            "estimate has {} features, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let a = min_max_normalize(estimate.values())?;
    let b = min_max_normalize(reference.values())?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum())
}
