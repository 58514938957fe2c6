//! Concept drift injection on top of any [`InstanceStream`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureValue, Instance, InstanceStream, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriftKind {
    /// Relabel with another concept of the same generator.
    FunctionSwitch { from_concept: u32, to_concept: u32 },
    /// Exchange the values of feature columns pairwise.
    FeatureSwap { pairs: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DriftProfile {
    Sudden,
    /// The probability of the new concept ramps linearly from 0 at the drift
    /// position to 1 at `position + width`.
    Gradual { width: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub kind: DriftKind,
    /// Sample index (0-based, counted by the drift stream) where drift begins.
    pub position: u64,
    pub profile: DriftProfile,
}

impl DriftSpec {
    pub fn sudden(kind: DriftKind, position: u64) -> Self {
        DriftSpec {
            kind,
            position,
            profile: DriftProfile::Sudden,
        }
    }

    /// Probability that sample `index` follows the new concept.
    pub fn new_concept_probability(&self, index: u64) -> f64 {
        if index < self.position {
            return 0.0;
        }
        match self.profile {
            DriftProfile::Sudden => 1.0,
            DriftProfile::Gradual { width } => ((index - self.position) as f64 / width as f64).min(1.0),
        }
    }

    /// Check the spec against a stream schema and return the schema of the
    /// drifted stream.
    pub fn drifted_schema(&self, schema: &Schema) -> Result<Schema> {
        if let DriftProfile::Gradual { width: 0 } = self.profile {
            return Err(Error::config("gradual drift width must be at least 1"));
        }
        let mut out = schema.clone();
        match &self.kind {
            DriftKind::FunctionSwitch { .. } => {}
            DriftKind::FeatureSwap { pairs } => {
                if pairs.is_empty() {
                    return Err(Error::config("feature swap needs at least one pair"));
                }
                let mut used = Vec::new();
                for &(a, b) in pairs {
                    if a >= schema.arity() || b >= schema.arity() {
                        return Err(Error::config(format!(
                            "swap pair ({a}, {b}) is out of range for {} features",
                            schema.arity()
                        )));
                    }
                    if a == b || used.contains(&a) || used.contains(&b) {
                        return Err(Error::config(format!(
                            "swap pair ({a}, {b}) reuses a feature index"
                        )));
                    }
                    used.extend([a, b]);
                    let merged = match (schema.kind(a), schema.kind(b)) {
                        (FeatureKind::Numeric { range: ra }, FeatureKind::Numeric { range: rb }) => {
                            let range = match (ra, rb) {
                                (Some((la, ha)), Some((lb, hb))) => Some((la.min(*lb), ha.max(*hb))),
                                _ => None,
                            };
                            FeatureKind::Numeric { range }
                        }
                        (
                            FeatureKind::Categorical { cardinality: ca },
                            FeatureKind::Categorical { cardinality: cb },
                        ) => FeatureKind::Categorical {
                            cardinality: (*ca).max(*cb),
                        },
                        _ => {
                            return Err(Error::config(format!(
                                "cannot swap `{}` and `{}`: incompatible kinds",
                                schema.name(a),
                                schema.name(b)
                            )))
                        }
                    };
                    *out.kind_mut(a) = merged.clone();
                    *out.kind_mut(b) = merged;
                }
            }
        }
        Ok(out)
    }
}

/// A stream with a drift applied. See [`apply_drift`].
#[derive(Debug, Clone)]
pub struct DriftStream<S> {
    inner: S,
    spec: DriftSpec,
    schema: Schema,
    rng: ChaCha8Rng,
    index: u64,
}

/// Wrap `base` so that `spec` takes effect at its position.
///
/// Sudden drifts consume no randomness; gradual drifts draw one uniform per
/// sample from `position` on, from an RNG seeded with `seed`.
pub fn apply_drift<S: InstanceStream>(base: S, spec: DriftSpec, seed: u64) -> Result<DriftStream<S>> {
    let schema = spec.drifted_schema(base.schema())?;
    Ok(DriftStream {
        inner: base,
        spec,
        schema,
        rng: ChaCha8Rng::seed_from_u64(seed),
        index: 0,
    })
}

impl<S> DriftStream<S> {
    pub fn spec(&self) -> &DriftSpec {
        &self.spec
    }

    pub fn into_inner(self) -> S {
        self.inner
    }

    fn use_new_concept(&mut self, index: u64) -> bool {
        if index < self.spec.position {
            return false;
        }
        match self.spec.profile {
            DriftProfile::Sudden => true,
            DriftProfile::Gradual { .. } => {
                let p = self.spec.new_concept_probability(index);
                self.rng.gen::<f64>() < p
            }
        }
    }
}

impl<S: InstanceStream> InstanceStream for DriftStream<S> {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_instance(&mut self) -> Option<Result<Instance>> {
        let mut instance = match self.inner.next_instance()? {
            Ok(instance) => instance,
            Err(e) => return Some(Err(e)),
        };
        let index = self.index;
        self.index += 1;
        let drifted = self.use_new_concept(index);
        match &self.spec.kind {
            DriftKind::FunctionSwitch {
                from_concept,
                to_concept,
            } => {
                let concept = if drifted { *to_concept } else { *from_concept };
                match self.inner.relabel(&instance.features, concept) {
                    Some(Ok(y)) => instance.target = y,
                    Some(Err(e)) => return Some(Err(e)),
                    None => {
                        return Some(Err(Error::config(
                            "function-switch drift needs a generator stream that can relabel",
                        )))
                    }
                }
            }
            DriftKind::FeatureSwap { pairs } => {
                if drifted {
                    for &(a, b) in pairs {
                        instance.features.swap(a, b);
                    }
                }
            }
        }
        Some(Ok(instance))
    }

    fn relabel(&self, features: &[FeatureValue], concept: u32) -> Option<Result<f64>> {
        self.inner.relabel(features, concept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastream::{agrawal_classify, take_instances, AgrawalStream, StaggerStream};

    fn swap(pairs: Vec<(usize, usize)>, position: u64) -> DriftSpec {
        DriftSpec::sudden(DriftKind::FeatureSwap { pairs }, position)
    }

    #[test]
    fn sudden_swap_takes_effect_at_position() {
        let base = take_instances(&mut AgrawalStream::new(1, 1).unwrap(), 10).unwrap();
        let mut drifted = apply_drift(AgrawalStream::new(1, 1).unwrap(), swap(vec![(0, 2)], 5), 0).unwrap();
        let out = take_instances(&mut drifted, 10).unwrap();
        assert_eq!(out[4], base[4]);
        assert_eq!(out[5].features[0], base[5].features[2]);
        assert_eq!(out[5].features[2], base[5].features[0]);
        assert_eq!(out[5].target, base[5].target);
    }

    #[test]
    fn function_switch_relabels_after_position() {
        let spec = DriftSpec::sudden(
            DriftKind::FunctionSwitch {
                from_concept: 1,
                to_concept: 2,
            },
            10_000,
        );
        let mut s = apply_drift(AgrawalStream::new(1, 4).unwrap(), spec, 0).unwrap();
        let out = take_instances(&mut s, 12_000).unwrap();
        for inst in &out[..10_000] {
            assert_eq!(inst.target, agrawal_classify(1, &inst.features).unwrap());
        }
        for inst in &out[10_000..] {
            assert_eq!(inst.target, agrawal_classify(2, &inst.features).unwrap());
        }
    }

    #[test]
    fn gradual_ramp_reaches_new_concept() {
        let spec = DriftSpec {
            kind: DriftKind::FeatureSwap { pairs: vec![(0, 1)] },
            position: 100,
            profile: DriftProfile::Gradual { width: 50 },
        };
        assert_eq!(spec.new_concept_probability(99), 0.0);
        assert_eq!(spec.new_concept_probability(125), 0.5);
        assert_eq!(spec.new_concept_probability(150), 1.0);
        let base = take_instances(&mut StaggerStream::new(1, 9).unwrap(), 400).unwrap();
        let mut s = apply_drift(StaggerStream::new(1, 9).unwrap(), spec, 3).unwrap();
        let out = take_instances(&mut s, 400).unwrap();
        for (a, b) in base.iter().zip(&out).skip(150) {
            assert_eq!(a.features[0], b.features[1]);
            assert_eq!(a.features[1], b.features[0]);
        }
        assert_eq!(&base[..100], &out[..100]);
    }

    #[test]
    fn incompatible_or_invalid_pairs_rejected() {
        let schema = crate::datastream::agrawal_schema();
        // salary (numeric) with elevel (categorical)
        assert!(swap(vec![(0, 3)], 0).drifted_schema(&schema).is_err());
        assert!(swap(vec![(0, 0)], 0).drifted_schema(&schema).is_err());
        assert!(swap(vec![(0, 9)], 0).drifted_schema(&schema).is_err());
        assert!(swap(vec![(0, 2), (2, 8)], 0).drifted_schema(&schema).is_err());
        let bad_width = DriftSpec {
            kind: DriftKind::FeatureSwap { pairs: vec![(0, 2)] },
            position: 0,
            profile: DriftProfile::Gradual { width: 0 },
        };
        assert!(bad_width.drifted_schema(&schema).is_err());
    }

    #[test]
    fn categorical_swap_widens_cardinality() {
        let schema = crate::datastream::agrawal_schema();
        let out = swap(vec![(3, 4)], 0).drifted_schema(&schema).unwrap();
        assert_eq!(out.kind(3), &FeatureKind::Categorical { cardinality: 20 });
        assert_eq!(out.kind(4), &FeatureKind::Categorical { cardinality: 20 });
        let mut s = apply_drift(AgrawalStream::new(2, 2).unwrap(), swap(vec![(3, 4)], 10), 0).unwrap();
        for inst in take_instances(&mut s, 100).unwrap() {
            s.schema().validate_instance(&inst).unwrap();
        }
    }

    #[test]
    fn function_switch_needs_relabel_support() {
        let schema = crate::datastream::stagger_schema();
        let rows = take_instances(&mut StaggerStream::new(1, 0).unwrap(), 3).unwrap();
        let base = crate::datastream::VecStream::new(schema, rows);
        let spec = DriftSpec::sudden(
            DriftKind::FunctionSwitch {
                from_concept: 1,
                to_concept: 2,
            },
            1,
        );
        let mut s = apply_drift(base, spec, 0).unwrap();
        assert!(matches!(s.next_instance(), Some(Err(Error::Config(_)))));
    }
}
