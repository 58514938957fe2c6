//! Feature-importance estimators.
//!
//! The basic quantity is the per-event increment
//!
//! ```text
//! λ(x, x̃, y) = ‖h(x with feature j taken from x̃) − y‖ − ‖h(x) − y‖
//! ```
//!
//! which the incremental estimator smooths over time and the batch
//! estimators average over permutations of a fixed dataset.

mod batch;
mod ensemble;
mod metric;
mod smoothing;

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::datastream::{FeatureValue, Instance};
use crate::error::{Error, Result};
use crate::learners::Model;

pub use batch::{
    batch_pfi, batch_pfi_subset, batch_pfi_vector, expected_pfi, expected_pfi_subset,
    expected_pfi_vector, interval_pfi, permutation_estimate, random_permutation, IntervalPoint, IntervalTracker,
};
pub use ensemble::{IpfiConfig, IpfiEnsemble};
pub use metric::{min_max_normalize, normalized_error};
pub use smoothing::{Initialization, SmoothedImportance};

/// Norm on the target space.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[non_exhaustive]
pub enum Loss {
    /// `|score − y|`
    #[default]
    Absolute,
}

impl Loss {
    #[inline]
    pub fn eval(&self, score: f64, target: f64) -> f64 {
        match self {
            Loss::Absolute => (score - target).abs(),
        }
    }
}

/// Per-feature importance values in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector(Vec<f64>);

impl ImportanceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("importance value {v} is not finite")));
        }
        Ok(ImportanceVector(values))
    }

    pub fn zeros(d: usize) -> Self {
        ImportanceVector(vec![0.0; d])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest value; ties resolve to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (j, v) in self.0.iter().enumerate() {
            if best.is_none_or(|b| *v > self.0[b]) {
                best = Some(j);
            }
        }
        best
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Index<usize> for ImportanceVector {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

/// λ for an arbitrary feature subset: the loss change when the features in
/// `subset` are taken from `replacement`. Exactly two model evaluations.
pub fn lambda_increment_subset(
    model: &dyn Model,
    instance: &Instance,
    replacement: &[FeatureValue],
    subset: &[usize],
    loss: Loss,
) -> Result<f64> {
    let d = instance.features.len();
    if replacement.len() != d {
        return Err(Error::schema(format!(
            "replacement has {} features, instance has {d}",
            replacement.len()
        )));
    }
    if let Some(j) = subset.iter().find(|&&j| j >= d) {
        return Err(Error::schema(format!("feature index {j} out of range for {d} features")));
    }
    let original = loss.eval(model.predict(&instance.features)?, instance.target);
    let mut spliced = instance.features.clone();
    for &j in subset {
        spliced[j] = replacement[j];
    }
    let switched = loss.eval(model.predict(&spliced)?, instance.target);
    Ok(switched - original)
}

/// λ for the singleton subset `{feature}`.
pub fn lambda_increment(
    model: &dyn Model,
    instance: &Instance,
    replacement: &[FeatureValue],
    feature: usize,
    loss: Loss,
) -> Result<f64> {
    lambda_increment_subset(model, instance, replacement, &[feature], loss)
}
