//! Incremental models behind a single predict/learn interface.
//!
//! Classification models predict the probability of class 1, so scores and
//! targets live in the same space and the loss is `|score - y|`.

mod logistic;
mod naive_bayes;
mod stats;

use std::fmt;
use std::sync::Arc;

use crate::datastream::{FeatureValue, Schema};
use crate::error::Result;

pub use logistic::OnlineLogisticRegression;
pub use naive_bayes::OnlineNaiveBayes;
pub use stats::WeightedMoments;

/// An incrementally trained model `h_t`.
///
/// `predict` must not change observable state; `learn_one` only affects
/// later predictions.
pub trait Model: Send + Sync {
    /// Score in target space: class-1 probability or a regression value.
    fn predict(&self, features: &[FeatureValue]) -> Result<f64>;

    /// Update with exactly one observation.
    fn learn_one(&mut self, features: &[FeatureValue], target: f64) -> Result<()>;

    /// Immutable copy of the current state.
    fn snapshot(&self) -> Snapshot;
}

/// A frozen model. Cheap to clone and safe to share across threads;
/// `learn_one` is a no-op.
#[derive(Clone)]
pub struct Snapshot(Arc<dyn Model>);

impl Snapshot {
    pub fn new<M: Model + 'static>(model: M) -> Self {
        Snapshot(Arc::new(model))
    }
}

impl fmt::Debug for Snapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Snapshot")
    }
}

impl Model for Snapshot {
    fn predict(&self, features: &[FeatureValue]) -> Result<f64> {
        self.0.predict(features)
    }

    fn learn_one(&mut self, _features: &[FeatureValue], _target: f64) -> Result<()> {
        Ok(())
    }

    fn snapshot(&self) -> Snapshot {
        self.clone()
    }
}

type Rule = dyn Fn(&[FeatureValue]) -> Result<f64> + Send + Sync;

/// A fixed function `h: X -> Y`, e.g. the labeling rule of a generator.
#[derive(Clone)]
pub struct FrozenOracle {
    name: String,
    rule: Arc<Rule>,
}

impl FrozenOracle {
    pub fn new(
        name: impl Into<String>,
        rule: impl Fn(&[FeatureValue]) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        FrozenOracle {
            name: name.into(),
            rule: Arc::new(rule),
        }
    }

    pub fn agrawal(concept: u32) -> Result<Self> {
        crate::datastream::agrawal_classify(concept, &default_agrawal_point())?;
        Ok(Self::new(format!("agrawal-{concept}"), move |x| {
            crate::datastream::agrawal_classify(concept, x)
        }))
    }

    pub fn stagger(concept: u32) -> Result<Self> {
        let probe = [FeatureValue::Categorical(0); 3];
        crate::datastream::stagger_classify(concept, &probe)?;
        Ok(Self::new(format!("stagger-{concept}"), move |x| {
            crate::datastream::stagger_classify(concept, x)
        }))
    }

    /// A model that ignores its input.
    pub fn constant(value: f64) -> Self {
        Self::new(format!("constant-{value}"), move |_| Ok(value))
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

fn default_agrawal_point() -> Vec<FeatureValue> {
    let mut x = vec![FeatureValue::Numeric(0.0); 9];
    for j in [3, 4, 5] {
        x[j] = FeatureValue::Categorical(0);
    }
    x
}

impl fmt::Debug for FrozenOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrozenOracle").field("name", &self.name).finish()
    }
}

impl Model for FrozenOracle {
    fn predict(&self, features: &[FeatureValue]) -> Result<f64> {
        (self.rule)(features)
    }

    fn learn_one(&mut self, _features: &[FeatureValue], _target: f64) -> Result<()> {
        Ok(())
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::new(self.clone())
    }
}

/// Check the feature vector against a schema, shared by the learners.
pub(crate) fn check_features(schema: &Schema, features: &[FeatureValue]) -> Result<()> {
    schema.validate(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agrawal_point(age: f64, salary: f64) -> Vec<FeatureValue> {
        let mut x = default_agrawal_point();
        x[0] = FeatureValue::Numeric(salary);
        x[2] = FeatureValue::Numeric(age);
        x
    }

    #[test]
    fn oracle_follows_concept_one() {
        let h = FrozenOracle::agrawal(1).unwrap();
        assert_eq!(h.predict(&agrawal_point(30.0, 60.0)).unwrap(), 1.0);
        assert_eq!(h.predict(&agrawal_point(30.0, 150.0)).unwrap(), 0.0);
        assert!(FrozenOracle::agrawal(9).is_err());
    }

    #[test]
    fn oracle_ignores_learning_and_snapshots_match() {
        let mut h = FrozenOracle::agrawal(1).unwrap();
        let x = agrawal_point(30.0, 60.0);
        let snap = h.snapshot();
        for _ in 0..10 {
            h.learn_one(&x, 0.0).unwrap();
        }
        assert_eq!(h.predict(&x).unwrap(), 1.0);
        assert_eq!(snap.predict(&x).unwrap(), h.predict(&x).unwrap());
    }

    #[test]
    fn snapshot_learn_is_noop() {
        let mut s = FrozenOracle::constant(0.25).snapshot();
        s.learn_one(&[], 1.0).unwrap();
        assert_eq!(s.predict(&[]).unwrap(), 0.25);
    }
}
