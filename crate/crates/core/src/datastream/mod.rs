//! Labeled instance streams: synthetic generators, CSV ingestion and drift
//! injection.
//!
//! Every stream implements [`InstanceStream`]. Generators are infinite and
//! seed-deterministic; CSV streams end at EOF.

mod agrawal;
mod drift;
mod stagger;
mod tabular;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use agrawal::{agrawal_classify, agrawal_next, agrawal_schema, AgrawalStream};
pub use drift::{apply_drift, DriftKind, DriftProfile, DriftSpec, DriftStream};
pub use stagger::{stagger_classify, stagger_next, stagger_schema, StaggerStream};
pub use tabular::{csv_stream, CsvStream, SchemaHints};

/// Column positions of the agrawal generator.
pub mod agrawal_features {
    pub const SALARY: usize = 0;
    pub const COMMISSION: usize = 1;
    pub const AGE: usize = 2;
    pub const ELEVEL: usize = 3;
    pub const CAR: usize = 4;
    pub const ZIPCODE: usize = 5;
    pub const HVALUE: usize = 6;
    pub const HYEARS: usize = 7;
    pub const LOAN: usize = 8;
}

/// One component of a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Numeric(f64),
    /// 0-based symbol index; the cardinality lives in the [`Schema`].
    Categorical(u32),
}

impl FeatureValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            FeatureValue::Numeric(v) => Some(v),
            FeatureValue::Categorical(_) => None,
        }
    }

    pub fn as_category(&self) -> Option<u32> {
        match *self {
            FeatureValue::Categorical(c) => Some(c),
            FeatureValue::Numeric(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric { range: Option<(f64, f64)> },
    Categorical { cardinality: u32 },
}

impl FeatureKind {
    pub fn is_numeric(&self) -> bool {
        matches!(self, FeatureKind::Numeric { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetKind {
    /// Class indices `0..classes`.
    Classification { classes: u32 },
    Regression,
}

/// Feature names and kinds, plus the target kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    names: Vec<String>,
    kinds: Vec<FeatureKind>,
    target: TargetKind,
    /// Symbol labels per categorical column, indexed by symbol. Empty for
    /// numeric columns.
    labels: Vec<Vec<String>>,
}

impl Schema {
    pub fn new(features: Vec<(String, FeatureKind)>, target: TargetKind) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::schema("a schema needs at least one feature"));
        }
        let mut seen = HashSet::new();
        for (name, kind) in &features {
            if !seen.insert(name.as_str()) {
                return Err(Error::schema(format!("duplicate feature name `{name}`")));
            }
            if let FeatureKind::Categorical { cardinality: 0 } = kind {
                return Err(Error::schema(format!("categorical `{name}` has no symbols")));
            }
        }
        let labels = vec![Vec::new(); features.len()];
        let (names, kinds) = features.into_iter().unzip();
        Ok(Schema {
            names,
            kinds,
            target,
            labels,
        })
    }

    pub(crate) fn with_labels(mut self, column: usize, labels: Vec<String>) -> Self {
        self.labels[column] = labels;
        self
    }

    pub fn arity(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, j: usize) -> &str {
        &self.names[j]
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn kind(&self, j: usize) -> &FeatureKind {
        &self.kinds[j]
    }

    pub(crate) fn kind_mut(&mut self, j: usize) -> &mut FeatureKind {
        &mut self.kinds[j]
    }

    pub fn target(&self) -> TargetKind {
        self.target
    }

    /// Symbol label of a categorical value, when the source recorded one.
    pub fn label(&self, j: usize, symbol: u32) -> Option<&str> {
        self.labels.get(j)?.get(symbol as usize).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn validate(&self, features: &[FeatureValue]) -> Result<()> {
        if features.len() != self.arity() {
            return Err(Error::schema(format!(
                "expected {} features, got {}",
                self.arity(),
                features.len()
            )));
        }
        for (j, (value, kind)) in features.iter().zip(&self.kinds).enumerate() {
            match (value, kind) {
                (FeatureValue::Numeric(v), FeatureKind::Numeric { .. }) if v.is_finite() => {}
                (FeatureValue::Numeric(v), FeatureKind::Numeric { .. }) => {
                    return Err(Error::schema(format!(
                        "feature `{}` is not finite: {v}",
                        self.names[j]
                    )))
                }
                (FeatureValue::Categorical(c), FeatureKind::Categorical { cardinality })
                    if c < cardinality => {}
                (FeatureValue::Categorical(c), FeatureKind::Categorical { cardinality }) => {
                    return Err(Error::schema(format!(
                        "feature `{}` has symbol {c} but cardinality {cardinality}",
                        self.names[j]
                    )))
                }
                _ => {
                    return Err(Error::schema(format!(
                        "feature `{}` has the wrong kind",
                        self.names[j]
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn validate_target(&self, target: f64) -> Result<()> {
        match self.target {
            TargetKind::Classification { classes } => {
                if target.fract() != 0.0 || target < 0.0 || target >= classes as f64 {
                    return Err(Error::schema(format!(
                        "target {target} is not a class index below {classes}"
                    )));
                }
            }
            TargetKind::Regression => {
                if !target.is_finite() {
                    return Err(Error::schema(format!("target {target} is not finite")));
                }
            }
        }
        Ok(())
    }

    pub fn validate_instance(&self, instance: &Instance) -> Result<()> {
        self.validate(&instance.features)?;
        self.validate_target(instance.target)
    }
}

/// One stream observation `z_t = (x_t, y_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<FeatureValue>,
    /// Class index (as a float) or regression value.
    pub target: f64,
    pub timestamp: u64,
}

impl Instance {
    pub fn new(features: Vec<FeatureValue>, target: f64, timestamp: u64) -> Self {
        Instance {
            features,
            target,
            timestamp,
        }
    }
}

/// A source of instances with a fixed schema.
pub trait InstanceStream {
    fn schema(&self) -> &Schema;

    /// Next instance, `None` at end of stream.
    fn next_instance(&mut self) -> Option<Result<Instance>>;

    /// Label `features` under another concept of the same generator.
    ///
    /// Streams without a notion of concepts return `None`.
    fn relabel(&self, _features: &[FeatureValue], _concept: u32) -> Option<Result<f64>> {
        None
    }
}

impl<S: InstanceStream + ?Sized> InstanceStream for Box<S> {
    fn schema(&self) -> &Schema {
        (**self).schema()
    }

    fn next_instance(&mut self) -> Option<Result<Instance>> {
        (**self).next_instance()
    }

    fn relabel(&self, features: &[FeatureValue], concept: u32) -> Option<Result<f64>> {
        (**self).relabel(features, concept)
    }
}

/// Pull up to `n` instances from a stream.
pub fn take_instances<S: InstanceStream + ?Sized>(stream: &mut S, n: usize) -> Result<Vec<Instance>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        match stream.next_instance() {
            Some(instance) => out.push(instance?),
            None => break,
        }
    }
    Ok(out)
}

/// A fixed list of instances replayed as a stream.
#[derive(Debug, Clone)]
pub struct VecStream {
    schema: Schema,
    instances: std::vec::IntoIter<Instance>,
}

impl VecStream {
    pub fn new(schema: Schema, instances: Vec<Instance>) -> Self {
        VecStream {
            schema,
            instances: instances.into_iter(),
        }
    }
}

impl InstanceStream for VecStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_instance(&mut self) -> Option<Result<Instance>> {
        self.instances.next().map(Ok)
    }
}
