//! The STAGGER concepts: three uniform categorical features (shape, size,
//! color) and three boolean rules.
//!
//! * concept 1: `color = red ∧ size = small`
//! * concept 2: `color = green ∨ shape = circle`
//! * concept 3: `size = medium ∨ size = large`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FeatureKind, FeatureValue, Instance, InstanceStream, Schema, TargetKind};
use crate::error::{Error, Result};

pub const SHAPE: usize = 0;
pub const SIZE: usize = 1;
pub const COLOR: usize = 2;

pub const SHAPES: [&str; 3] = ["circle", "square", "triangle"];
pub const SIZES: [&str; 3] = ["small", "medium", "large"];
pub const COLORS: [&str; 3] = ["red", "green", "blue"];

pub fn stagger_schema() -> Schema {
    let cat = FeatureKind::Categorical { cardinality: 3 };
    let labels = |xs: [&str; 3]| xs.iter().map(|s| s.to_string()).collect();
    Schema::new(
        vec![
            ("shape".into(), cat.clone()),
            ("size".into(), cat.clone()),
            ("color".into(), cat),
        ],
        TargetKind::Classification { classes: 2 },
    )
    .expect("static schema is valid")
    .with_labels(SHAPE, labels(SHAPES))
    .with_labels(SIZE, labels(SIZES))
    .with_labels(COLOR, labels(COLORS))
}

fn check_concept(concept: u32) -> Result<()> {
    match concept {
        1..=3 => Ok(()),
        other => Err(Error::config(format!(
            "stagger concept must be 1, 2 or 3, got {other}"
        ))),
    }
}

pub fn stagger_classify(concept: u32, features: &[FeatureValue]) -> Result<f64> {
    check_concept(concept)?;
    let get = |j: usize| {
        features
            .get(j)
            .and_then(FeatureValue::as_category)
            .ok_or_else(|| Error::schema(format!("stagger feature {j} must be categorical")))
    };
    let (shape, size, color) = (get(SHAPE)?, get(SIZE)?, get(COLOR)?);
    let positive = match concept {
        1 => color == 0 && size == 0,
        2 => color == 1 || shape == 0,
        _ => size == 1 || size == 2,
    };
    Ok(if positive { 1.0 } else { 0.0 })
}

fn stagger_features<R: Rng + ?Sized>(rng: &mut R) -> Vec<FeatureValue> {
    (0..3)
        .map(|_| FeatureValue::Categorical(rng.gen_range(0..3)))
        .collect()
}

pub fn stagger_next<R: Rng + ?Sized>(rng: &mut R, concept: u32, timestamp: u64) -> Result<Instance> {
    check_concept(concept)?;
    let features = stagger_features(rng);
    let target = stagger_classify(concept, &features)?;
    Ok(Instance::new(features, target, timestamp))
}

#[derive(Debug, Clone)]
pub struct StaggerStream {
    schema: Schema,
    concept: u32,
    rng: ChaCha8Rng,
    t: u64,
}

impl StaggerStream {
    pub fn new(concept: u32, seed: u64) -> Result<Self> {
        check_concept(concept)?;
        Ok(StaggerStream {
            schema: stagger_schema(),
            concept,
            rng: ChaCha8Rng::seed_from_u64(seed),
            t: 0,
        })
    }
}

impl Iterator for StaggerStream {
    type Item = Instance;

    fn next(&mut self) -> Option<Instance> {
        let features = stagger_features(&mut self.rng);
        let target = stagger_classify(self.concept, &features).expect("concept checked");
        let instance = Instance::new(features, target, self.t);
        self.t += 1;
        Some(instance)
    }
}

impl InstanceStream for StaggerStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_instance(&mut self) -> Option<Result<Instance>> {
        self.next().map(Ok)
    }

    fn relabel(&self, features: &[FeatureValue], concept: u32) -> Option<Result<f64>> {
        Some(stagger_classify(concept, features))
    }
}
