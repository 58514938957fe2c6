use serde::{Deserialize, Serialize};

use super::ImportanceVector;
use crate::error::{Error, Result};

/// How the first increment enters the smoothed value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Initialization {
    /// The first increment is taken as the value. The estimator is then a
    /// convex combination of increments and has no cold-start bias.
    #[default]
    FirstIncrement,
    /// Smooth from zero: the first value is `α λ`. Increment weights are
    /// `α (1−α)^(t−s)` and sum to `1 − (1−α)^(t−t0+1)`.
    Zero,
}

/// Exponentially smoothed importance per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedImportance {
    alpha: f64,
    init: Initialization,
    values: Vec<Option<f64>>,
}

impl SmoothedImportance {
    pub fn new(features: usize, alpha: f64, init: Initialization) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(SmoothedImportance {
            alpha,
            init,
            values: vec![None; features],
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn update(&mut self, j: usize, lambda: f64) {
        let a = self.alpha;
        self.values[j] = Some(match (self.values[j], self.init) {
            (Some(v), _) => (1.0 - a) * v + a * lambda,
            (None, Initialization::FirstIncrement) => lambda,
            (None, Initialization::Zero) => a * lambda,
        });
    }

    /// Current value of feature `j`, `None` before its first increment.
    pub fn value(&self, j: usize) -> Option<f64> {
        self.values[j]
    }

    /// All values, once every feature has been initialized.
    pub fn vector(&self) -> Option<ImportanceVector> {
        let values: Option<Vec<f64>> = self.values.iter().copied().collect();
        values.and_then(|v| ImportanceVector::new(v).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_increment_then_smoothing() {
        let mut s = SmoothedImportance::new(1, 0.5, Initialization::FirstIncrement).unwrap();
        assert_eq!(s.value(0), None);
        assert!(s.vector().is_none());
        s.update(0, 0.0);
        s.update(0, 1.0);
        assert_eq!(s.value(0), Some(0.5));
    }

    #[test]
    fn constant_increments_are_a_fixed_point() {
        let mut s = SmoothedImportance::new(2, 0.1, Initialization::FirstIncrement).unwrap();
        for _ in 0..100 {
            s.update(0, 0.37);
            s.update(1, -2.0);
            assert_eq!(s.value(0), Some(0.37));
            assert_eq!(s.value(1), Some(-2.0));
        }
    }

    #[test]
    fn alpha_must_be_open_unit() {
        for a in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(SmoothedImportance::new(1, a, Initialization::Zero).is_err());
        }
    }

    fn weighted_sum(lambdas: &[f64], alpha: f64, init: Initialization) -> (f64, f64) {
        let t = lambdas.len() - 1;
        let mut total = 0.0;
        let mut weights = 0.0;
        for (s, l) in lambdas.iter().enumerate() {
            let mut w = alpha * (1.0 - alpha).powi((t - s) as i32);
            if s == 0 && init == Initialization::FirstIncrement {
                w = (1.0 - alpha).powi(t as i32);
            }
            total += w * l;
            weights += w;
        }
        (total, weights)
    }

    proptest! {
        #[test]
        fn smoothing_telescopes(lambdas in prop::collection::vec(-1.0f64..1.0, 1..300), alpha in 0.001f64..0.999, zero in any::<bool>()) {
            let init = if zero { Initialization::Zero } else { Initialization::FirstIncrement };
            let mut s = SmoothedImportance::new(1, alpha, init).unwrap();
            for &l in &lambdas {
                s.update(0, l);
            }
            let (direct, weights) = weighted_sum(&lambdas, alpha, init);
            prop_assert!((s.value(0).unwrap() - direct).abs() < 1e-12);
            let expected_weights = match init {
                Initialization::FirstIncrement => 1.0,
                Initialization::Zero => 1.0 - (1.0 - alpha).powi(lambdas.len() as i32),
            };
            prop_assert!((weights - expected_weights).abs() < 1e-12);
        }
    }
}
