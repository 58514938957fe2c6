use crate::datastream::{FeatureKind, FeatureValue, Schema, TargetKind};
use crate::error::{Error, Result};

use super::stats::WeightedMoments;
use super::{check_features, Model, Snapshot};

const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
enum FeatureStats {
    Numeric([WeightedMoments; 2]),
    Categorical([Vec<f64>; 2]),
}

/// Binary naive Bayes with Gaussian numerics and Laplace-smoothed
/// categoricals.
///
/// An optional forgetting factor in `(0, 1]` scales every sufficient
/// statistic before each update, so the model tracks drifting streams.
#[derive(Debug, Clone)]
pub struct OnlineNaiveBayes {
    schema: Schema,
    laplace: f64,
    forgetting: Option<f64>,
    class_weight: [f64; 2],
    stats: Vec<FeatureStats>,
}

impl OnlineNaiveBayes {
    pub fn new(schema: &Schema) -> Result<Self> {
        match schema.target() {
            TargetKind::Classification { classes: 2 } => {}
            other => {
                return Err(Error::config(format!(
                    "naive Bayes needs a binary target, schema has {other:?}"
                )))
            }
        }
        let stats = schema
            .kinds()
            .iter()
            .map(|kind| match kind {
                FeatureKind::Numeric { .. } => FeatureStats::Numeric([WeightedMoments::new(); 2]),
                FeatureKind::Categorical { cardinality } => {
                    let counts = vec![0.0; *cardinality as usize];
                    FeatureStats::Categorical([counts.clone(), counts])
                }
            })
            .collect();
        Ok(OnlineNaiveBayes {
            schema: schema.clone(),
            laplace: 1.0,
            forgetting: None,
            class_weight: [0.0; 2],
            stats,
        })
    }

    pub fn with_laplace(mut self, laplace: f64) -> Result<Self> {
        if !(laplace > 0.0) {
            return Err(Error::config("Laplace constant must be positive"));
        }
        self.laplace = laplace;
        Ok(self)
    }

    pub fn with_forgetting(mut self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::config("forgetting factor must be in (0, 1]"));
        }
        self.forgetting = (factor < 1.0).then_some(factor);
        Ok(self)
    }

    pub fn class_weights(&self) -> [f64; 2] {
        self.class_weight
    }

    /// Mean and variance of numeric feature `j` within class `c`.
    pub fn gaussian(&self, j: usize, c: usize) -> Option<(f64, f64)> {
        match &self.stats[j] {
            FeatureStats::Numeric(m) => Some((m[c].mean(), m[c].variance())),
            FeatureStats::Categorical(_) => None,
        }
    }

    /// Class probabilities `[P(0 | x), P(1 | x)]`.
    pub fn predict_proba(&self, features: &[FeatureValue]) -> Result<[f64; 2]> {
        check_features(&self.schema, features)?;
        let total = self.class_weight[0] + self.class_weight[1];
        if total <= 0.0 {
            return Ok([0.5, 0.5]);
        }
        let mut log_post = [0.0; 2];
        for (c, lp) in log_post.iter_mut().enumerate() {
            *lp = ((self.class_weight[c] + self.laplace) / (total + 2.0 * self.laplace)).ln();
        }
        for (value, stats) in features.iter().zip(&self.stats) {
            match (value, stats) {
                (FeatureValue::Numeric(x), FeatureStats::Numeric(m)) => {
                    // a Gaussian needs two observations in each class
                    if m[0].weight() <= 1.0 || m[1].weight() <= 1.0 {
                        continue;
                    }
                    for (c, lp) in log_post.iter_mut().enumerate() {
                        let var = m[c].variance().max(VARIANCE_FLOOR);
                        let d = x - m[c].mean();
                        *lp += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - d * d / (2.0 * var);
                    }
                }
                (FeatureValue::Categorical(v), FeatureStats::Categorical(counts)) => {
                    let card = counts[0].len() as f64;
                    for (c, lp) in log_post.iter_mut().enumerate() {
                        let n = counts[c][*v as usize];
                        *lp += ((n + self.laplace) / (self.class_weight[c] + self.laplace * card)).ln();
                    }
                }
                _ => unreachable!("features validated against schema"),
            }
        }
        let p1 = 1.0 / (1.0 + (log_post[0] - log_post[1]).exp());
        Ok([1.0 - p1, p1])
    }
}

impl Model for OnlineNaiveBayes {
    fn predict(&self, features: &[FeatureValue]) -> Result<f64> {
        Ok(self.predict_proba(features)?[1])
    }

    fn learn_one(&mut self, features: &[FeatureValue], target: f64) -> Result<()> {
        check_features(&self.schema, features)?;
        let c = match target {
            t if t == 0.0 => 0,
            t if t == 1.0 => 1,
            t => return Err(Error::schema(format!("naive Bayes target must be 0 or 1, got {t}"))),
        };
        if let Some(f) = self.forgetting {
            self.class_weight.iter_mut().for_each(|w| *w *= f);
            for stats in &mut self.stats {
                match stats {
                    FeatureStats::Numeric(m) => m.iter_mut().for_each(|m| m.decay(f)),
                    FeatureStats::Categorical(counts) => counts
                        .iter_mut()
                        .flat_map(|v| v.iter_mut())
                        .for_each(|n| *n *= f),
                }
            }
        }
        self.class_weight[c] += 1.0;
        for (value, stats) in features.iter().zip(&mut self.stats) {
            match (value, stats) {
                (FeatureValue::Numeric(x), FeatureStats::Numeric(m)) => m[c].push(*x, 1.0),
                (FeatureValue::Categorical(v), FeatureStats::Categorical(counts)) => {
                    counts[c][*v as usize] += 1.0
                }
                _ => unreachable!("features validated against schema"),
            }
        }
        Ok(())
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::new(self.clone())
    }
}
