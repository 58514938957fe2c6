use crate::datastream::{FeatureKind, FeatureValue, Schema, TargetKind};
use crate::error::{Error, Result};

use super::stats::WeightedMoments;
use super::{check_features, Model, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Link {
    Logistic,
    Identity,
}

/// Linear model trained by plain SGD, one observation at a time.
///
/// Binary targets use the logistic link and log-loss; regression targets use
/// the identity link and squared loss. Categoricals are one-hot encoded;
/// numerics are optionally standardized with running moments.
#[derive(Debug, Clone)]
pub struct OnlineLogisticRegression {
    schema: Schema,
    link: Link,
    offsets: Vec<usize>,
    weights: Vec<f64>,
    bias: f64,
    learning_rate: f64,
    l2: f64,
    scalers: Option<Vec<WeightedMoments>>,
}

impl OnlineLogisticRegression {
    pub fn new(schema: &Schema, learning_rate: f64) -> Result<Self> {
        let link = match schema.target() {
            TargetKind::Classification { classes: 2 } => Link::Logistic,
            TargetKind::Regression => Link::Identity,
            other => return Err(Error::config(format!("unsupported target {other:?}"))),
        };
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        let mut offsets = Vec::with_capacity(schema.arity());
        let mut width = 0;
        for kind in schema.kinds() {
            offsets.push(width);
            width += match kind {
                FeatureKind::Numeric { .. } => 1,
                FeatureKind::Categorical { cardinality } => *cardinality as usize,
            };
        }
        Ok(OnlineLogisticRegression {
            schema: schema.clone(),
            link,
            offsets,
            weights: vec![0.0; width],
            bias: 0.0,
            learning_rate,
            l2: 0.0,
            scalers: Some(vec![WeightedMoments::new(); schema.arity()]),
        })
    }

    pub fn with_l2(mut self, l2: f64) -> Result<Self> {
        if !(l2 >= 0.0) {
            return Err(Error::config("L2 strength must be non-negative"));
        }
        self.l2 = l2;
        Ok(self)
    }

    /// Feed raw numerics instead of standardizing them.
    pub fn without_standardization(mut self) -> Self {
        self.scalers = None;
        self
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    fn encode(&self, features: &[FeatureValue]) -> Vec<(usize, f64)> {
        features
            .iter()
            .enumerate()
            .map(|(j, value)| match *value {
                FeatureValue::Numeric(x) => {
                    let x = match &self.scalers {
                        Some(s) => {
                            let sd = s[j].variance().sqrt();
                            let sd = if sd > 1e-12 { sd } else { 1.0 };
                            (x - s[j].mean()) / sd
                        }
                        None => x,
                    };
                    (self.offsets[j], x)
                }
                FeatureValue::Categorical(c) => (self.offsets[j] + c as usize, 1.0),
            })
            .collect()
    }

    fn score(&self, encoded: &[(usize, f64)], weights: &[f64], bias: f64) -> f64 {
        let z = bias + encoded.iter().map(|&(i, x)| weights[i] * x).sum::<f64>();
        match self.link {
            Link::Logistic => 1.0 / (1.0 + (-z).exp()),
            Link::Identity => z,
        }
    }

    fn objective(&self, encoded: &[(usize, f64)], target: f64, weights: &[f64], bias: f64) -> f64 {
        let p = self.score(encoded, weights, bias);
        let data = match self.link {
            Link::Logistic => {
                let p = p.clamp(1e-15, 1.0 - 1e-15);
                -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
            }
            Link::Identity => 0.5 * (p - target).powi(2),
        };
        data + 0.5 * self.l2 * weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Per-sample objective (log-loss or squared loss, plus the L2 term) at
    /// the current weights.
    pub fn loss(&self, features: &[FeatureValue], target: f64) -> Result<f64> {
        check_features(&self.schema, features)?;
        Ok(self.objective(&self.encode(features), target, &self.weights, self.bias))
    }

    /// Gradient of [`loss`](Self::loss) with respect to `(weights, bias)`.
    pub fn gradient(&self, features: &[FeatureValue], target: f64) -> Result<(Vec<f64>, f64)> {
        check_features(&self.schema, features)?;
        let encoded = self.encode(features);
        let residual = self.score(&encoded, &self.weights, self.bias) - target;
        let mut grad: Vec<f64> = self.weights.iter().map(|w| self.l2 * w).collect();
        for (i, x) in encoded {
            grad[i] += residual * x;
        }
        Ok((grad, residual))
    }

    fn check_target(&self, target: f64) -> Result<()> {
        match self.link {
            Link::Logistic if target != 0.0 && target != 1.0 => Err(Error::schema(format!(
                "logistic regression target must be 0 or 1, got {target}"
            ))),
            _ if !target.is_finite() => Err(Error::schema("target is not finite")),
            _ => Ok(()),
        }
    }
}

impl Model for OnlineLogisticRegression {
    fn predict(&self, features: &[FeatureValue]) -> Result<f64> {
        check_features(&self.schema, features)?;
        Ok(self.score(&self.encode(features), &self.weights, self.bias))
    }

    fn learn_one(&mut self, features: &[FeatureValue], target: f64) -> Result<()> {
        check_features(&self.schema, features)?;
        self.check_target(target)?;
        if let Some(scalers) = &mut self.scalers {
            for (s, value) in scalers.iter_mut().zip(features) {
                if let FeatureValue::Numeric(x) = value {
                    s.push(*x, 1.0);
                }
            }
        }
        let (grad, grad_bias) = self.gradient(features, target)?;
        for (w, g) in self.weights.iter_mut().zip(grad) {
            *w -= self.learning_rate * g;
        }
        self.bias -= self.learning_rate * grad_bias;
        Ok(())
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastream::{agrawal_schema, AgrawalStream};

    #[test]
    fn zero_weights_predict_half() {
        let lr = OnlineLogisticRegression::new(&agrawal_schema(), 0.1).unwrap();
        let x = AgrawalStream::new(1, 0).unwrap().next().unwrap();
        assert_eq!(lr.predict(&x.features).unwrap(), 0.5);
    }

    #[test]
    fn positive_step_raises_probability() {
        use rand::{Rng, SeedableRng};
        let schema = Schema::new(
            vec![
                ("a".into(), FeatureKind::Numeric { range: None }),
                ("b".into(), FeatureKind::Numeric { range: None }),
                ("c".into(), FeatureKind::Categorical { cardinality: 3 }),
            ],
            TargetKind::Classification { classes: 2 },
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            vec![
                FeatureValue::Numeric(rng.gen_range(-1.0..1.0)),
                FeatureValue::Numeric(rng.gen_range(-1.0..1.0)),
                FeatureValue::Categorical(rng.gen_range(0..3)),
            ]
        };
        let mut lr = OnlineLogisticRegression::new(&schema, 0.1).unwrap().without_standardization();
        for _ in 0..200 {
            let x = draw(&mut rng);
            let y = if x[0].as_f64().unwrap() > 0.0 { 1.0 } else { 0.0 };
            lr.learn_one(&x, y).unwrap();
        }
        for _ in 0..50 {
            let x = draw(&mut rng);
            let before = lr.predict(&x).unwrap();
            let mut stepped = lr.clone();
            stepped.learning_rate = 1e-3;
            stepped.learn_one(&x, 1.0).unwrap();
            assert!(stepped.predict(&x).unwrap() > before);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let schema = agrawal_schema();
        let mut lr = OnlineLogisticRegression::new(&schema, 0.05).unwrap().with_l2(0.01).unwrap();
        let mut stream = AgrawalStream::new(1, 7).unwrap();
        for inst in stream.by_ref().take(200) {
            lr.learn_one(&inst.features, inst.target).unwrap();
        }
        for probe in stream.take(5) {
            let (grad, grad_bias) = lr.gradient(&probe.features, probe.target).unwrap();
            let encoded = lr.encode(&probe.features);
            let h = 1e-6;
            for i in 0..lr.weights.len() {
                let mut plus = lr.weights.clone();
                let mut minus = lr.weights.clone();
                plus[i] += h;
                minus[i] -= h;
                let fd = (lr.objective(&encoded, probe.target, &plus, lr.bias)
                    - lr.objective(&encoded, probe.target, &minus, lr.bias))
                    / (2.0 * h);
                let scale = grad[i].abs().max(fd.abs()).max(1e-3);
                assert!((fd - grad[i]).abs() / scale < 1e-5, "weight {i}: {fd} vs {}", grad[i]);
            }
            let fd_b = (lr.objective(&encoded, probe.target, &lr.weights, lr.bias + h)
                - lr.objective(&encoded, probe.target, &lr.weights, lr.bias - h))
                / (2.0 * h);
            assert!((fd_b - grad_bias).abs() / grad_bias.abs().max(1e-3) < 1e-5);
        }
    }

    #[test]
    fn regression_link_starts_at_zero_and_learns() {
        let schema = Schema::new(
            vec![("x".into(), FeatureKind::Numeric { range: None })],
            TargetKind::Regression,
        )
        .unwrap();
        let mut m = OnlineLogisticRegression::new(&schema, 0.05).unwrap().without_standardization();
        let x = [FeatureValue::Numeric(1.0)];
        assert_eq!(m.predict(&x).unwrap(), 0.0);
        for _ in 0..500 {
            m.learn_one(&x, 3.0).unwrap();
        }
        assert!((m.predict(&x).unwrap() - 3.0).abs() < 1e-3);
    }

    #[test]
    fn weights_stay_finite() {
        let mut lr = OnlineLogisticRegression::new(&agrawal_schema(), 0.1).unwrap();
        for inst in AgrawalStream::new(2, 3).unwrap().take(5000) {
            lr.learn_one(&inst.features, inst.target).unwrap();
        }
        assert!(lr.weights().iter().all(|w| w.is_finite()));
        assert!(lr.learn_one(&[FeatureValue::Numeric(1.0)], 1.0).is_err());
    }
}
