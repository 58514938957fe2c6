//! The agrawal loan-approval generator.
//!
//! Nine features (six numeric, three nominal) with the original generator's
//! distributions. Money amounts are in thousands, so `salary = 60.0` means
//! 60K. Concepts 1, 2 and 3 are the salary/age rule, the education/age rule
//! and the salary/education/age rule of the original function battery. Class
//! A is encoded as label 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agrawal_features::*;
use super::{FeatureKind, FeatureValue, Instance, InstanceStream, Schema, TargetKind};
use crate::error::{Error, Result};

pub fn agrawal_schema() -> Schema {
    let num = |lo: f64, hi: f64| FeatureKind::Numeric {
        range: Some((lo, hi)),
    };
    let cat = |cardinality| FeatureKind::Categorical { cardinality };
    Schema::new(
        vec![
            ("salary".into(), num(20.0, 150.0)),
            ("commission".into(), num(0.0, 75.0)),
            ("age".into(), num(20.0, 80.0)),
            ("elevel".into(), cat(5)),
            ("car".into(), cat(20)),
            ("zipcode".into(), cat(9)),
            ("hvalue".into(), num(50.0, 1350.0)),
            ("hyears".into(), num(1.0, 30.0)),
            ("loan".into(), num(0.0, 500.0)),
        ],
        TargetKind::Classification { classes: 2 },
    )
    .expect("static schema is valid")
    .with_labels(ELEVEL, (0..5).map(|e| e.to_string()).collect())
    .with_labels(CAR, (1..=20).map(|c| format!("car{c}")).collect())
    .with_labels(ZIPCODE, (0..9).map(|z| format!("zip{z}")).collect())
}

fn check_concept(concept: u32) -> Result<()> {
    match concept {
        1..=3 => Ok(()),
        other => Err(Error::config(format!(
            "agrawal concept must be 1, 2 or 3, got {other}"
        ))),
    }
}

fn numeric(features: &[FeatureValue], j: usize) -> Result<f64> {
    features
        .get(j)
        .and_then(FeatureValue::as_f64)
        .ok_or_else(|| Error::schema(format!("agrawal feature {j} must be numeric")))
}

fn category(features: &[FeatureValue], j: usize) -> Result<u32> {
    features
        .get(j)
        .and_then(FeatureValue::as_category)
        .ok_or_else(|| Error::schema(format!("agrawal feature {j} must be categorical")))
}

/// Label a feature vector under `concept`: 1.0 for class A, 0.0 for class B.
pub fn agrawal_classify(concept: u32, features: &[FeatureValue]) -> Result<f64> {
    check_concept(concept)?;
    let age = numeric(features, AGE)?;
    let salary = numeric(features, SALARY)?;
    let in_band = |lo: f64, hi: f64| (lo..=hi).contains(&salary);
    let class_a = match concept {
        1 => {
            if age < 40.0 {
                in_band(50.0, 100.0)
            } else if age < 60.0 {
                in_band(75.0, 125.0)
            } else {
                in_band(25.0, 75.0)
            }
        }
        2 => {
            let elevel = category(features, ELEVEL)?;
            if age < 40.0 {
                elevel <= 1
            } else if age < 60.0 {
                (1..=3).contains(&elevel)
            } else {
                (2..=4).contains(&elevel)
            }
        }
        _ => {
            let elevel = category(features, ELEVEL)?;
            if age < 40.0 {
                if elevel <= 1 {
                    in_band(25.0, 75.0)
                } else {
                    in_band(50.0, 100.0)
                }
            } else if age < 60.0 {
                if (1..=3).contains(&elevel) {
                    in_band(50.0, 100.0)
                } else {
                    in_band(75.0, 125.0)
                }
            } else if (2..=4).contains(&elevel) {
                in_band(50.0, 100.0)
            } else {
                in_band(25.0, 75.0)
            }
        }
    };
    Ok(if class_a { 1.0 } else { 0.0 })
}

fn agrawal_features<R: Rng + ?Sized>(rng: &mut R) -> Vec<FeatureValue> {
    let salary = 20.0 + 130.0 * rng.gen::<f64>();
    let commission = if salary >= 75.0 {
        0.0
    } else {
        10.0 + 65.0 * rng.gen::<f64>()
    };
    let age = 20.0 + 60.0 * rng.gen::<f64>();
    let elevel = rng.gen_range(0..5u32);
    let car = rng.gen_range(0..20u32);
    let zipcode = rng.gen_range(0..9u32);
    let hvalue = f64::from(9 - zipcode) * 100.0 * (0.5 + rng.gen::<f64>());
    let hyears = f64::from(rng.gen_range(1..=30u32));
    let loan = 500.0 * rng.gen::<f64>();
    vec![
        FeatureValue::Numeric(salary),
        FeatureValue::Numeric(commission),
        FeatureValue::Numeric(age),
        FeatureValue::Categorical(elevel),
        FeatureValue::Categorical(car),
        FeatureValue::Categorical(zipcode),
        FeatureValue::Numeric(hvalue),
        FeatureValue::Numeric(hyears),
        FeatureValue::Numeric(loan),
    ]
}

/// Draw one agrawal instance labeled by `concept`.
pub fn agrawal_next<R: Rng + ?Sized>(rng: &mut R, concept: u32, timestamp: u64) -> Result<Instance> {
    check_concept(concept)?;
    let features = agrawal_features(rng);
    let target = agrawal_classify(concept, &features)?;
    Ok(Instance::new(features, target, timestamp))
}

/// Infinite seeded agrawal stream.
#[derive(Debug, Clone)]
pub struct AgrawalStream {
    schema: Schema,
    concept: u32,
    rng: ChaCha8Rng,
    t: u64,
}

impl AgrawalStream {
    pub fn new(concept: u32, seed: u64) -> Result<Self> {
        check_concept(concept)?;
        Ok(AgrawalStream {
            schema: agrawal_schema(),
            concept,
            rng: ChaCha8Rng::seed_from_u64(seed),
            t: 0,
        })
    }

    pub fn concept(&self) -> u32 {
        self.concept
    }
}

impl Iterator for AgrawalStream {
    type Item = Instance;

    fn next(&mut self) -> Option<Instance> {
        let features = agrawal_features(&mut self.rng);
        let target = agrawal_classify(self.concept, &features).expect("concept checked at construction");
        let instance = Instance::new(features, target, self.t);
        self.t += 1;
        Some(instance)
    }
}

impl InstanceStream for AgrawalStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_instance(&mut self) -> Option<Result<Instance>> {
        self.next().map(Ok)
    }

    fn relabel(&self, features: &[FeatureValue], concept: u32) -> Option<Result<f64>> {
        Some(agrawal_classify(concept, features))
    }
}
