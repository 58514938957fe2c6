use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datastream::{DriftKind, DriftProfile, DriftSpec, Schema};
use crate::error::{Error, Result};
use crate::importance::Initialization;
use crate::sampling::SamplerKind;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    /// Static model: iPFI against batch PFI over shuffled replays.
    #[default]
    A,
    /// Prequential run with drift and an interval-PFI baseline.
    B,
    /// Like `B`, scored by the error of each sampler against the baseline.
    C,
    #[serde(rename = "theory-bias")]
    TheoryBias,
    #[serde(rename = "theory-variance")]
    TheoryVariance,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::A => "A",
            Experiment::B => "B",
            Experiment::C => "C",
            Experiment::TheoryBias => "theory-bias",
            Experiment::TheoryVariance => "theory-variance",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Experiment::A),
            "B" | "b" => Ok(Experiment::B),
            "C" | "c" => Ok(Experiment::C),
            "theory-bias" => Ok(Experiment::TheoryBias),
            "theory-variance" => Ok(Experiment::TheoryVariance),
            other => Err(Error::config(format!("unknown experiment `{other}`"))),
        }
    }
}

/// A feature given by position or by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureRef {
    Index(usize),
    Name(String),
}

impl FeatureRef {
    pub fn resolve(&self, schema: &Schema) -> Result<usize> {
        match self {
            FeatureRef::Index(j) if *j < schema.arity() => Ok(*j),
            FeatureRef::Index(j) => Err(Error::config(format!(
                "feature index {j} out of range for {} features",
                schema.arity()
            ))),
            FeatureRef::Name(name) => schema
                .index_of(name)
                .ok_or_else(|| Error::UnknownColumn(name.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum StreamConfig {
    Agrawal {
        #[serde(default = "one")]
        concept: u32,
    },
    Stagger {
        #[serde(default = "one")]
        concept: u32,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        target: Option<String>,
        #[serde(default)]
        categorical: Vec<String>,
        #[serde(default)]
        numeric: Vec<String>,
    },
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig::Agrawal { concept: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftKindConfig {
    FunctionSwitch { from_concept: u32, to_concept: u32 },
    FeatureSwap { pairs: Vec<(FeatureRef, FeatureRef)> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileName {
    #[default]
    Sudden,
    Gradual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    #[serde(flatten)]
    pub kind: DriftKindConfig,
    pub position: u64,
    #[serde(default)]
    pub profile: ProfileName,
    /// Ramp length of a gradual drift.
    #[serde(default = "default_width")]
    pub width: u64,
}

impl DriftConfig {
    pub fn to_spec(&self, schema: &Schema) -> Result<DriftSpec> {
        let kind = match &self.kind {
            DriftKindConfig::FunctionSwitch {
                from_concept,
                to_concept,
            } => DriftKind::FunctionSwitch {
                from_concept: *from_concept,
                to_concept: *to_concept,
            },
            DriftKindConfig::FeatureSwap { pairs } => DriftKind::FeatureSwap {
                pairs: pairs
                    .iter()
                    .map(|(a, b)| Ok((a.resolve(schema)?, b.resolve(schema)?)))
                    .collect::<Result<_>>()?,
            },
        };
        let profile = match self.profile {
            ProfileName::Sudden => DriftProfile::Sudden,
            ProfileName::Gradual => DriftProfile::Gradual { width: self.width },
        };
        let spec = DriftSpec {
            kind,
            position: self.position,
            profile,
        };
        spec.drifted_schema(schema)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    /// The labelling rule of the stream's generator, frozen.
    Oracle {
        #[serde(default)]
        concept: Option<u32>,
    },
    NaiveBayes {
        #[serde(default = "one_f64")]
        laplace: f64,
        /// Per-observation decay of the sufficient statistics; 1 keeps all.
        #[serde(default = "one_f64")]
        forgetting: f64,
        #[serde(default)]
        pretrain: u64,
    },
    Logistic {
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default)]
        l2: f64,
        #[serde(default)]
        pretrain: u64,
    },
}

impl ModelConfig {
    pub fn pretrain(&self) -> u64 {
        match self {
            ModelConfig::Oracle { .. } => 0,
            ModelConfig::NaiveBayes { pretrain, .. } | ModelConfig::Logistic { pretrain, .. } => *pretrain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerName {
    /// Every past observation equally likely.
    Uniform,
    /// Uniform over a Vitter reservoir of `L` observations.
    UniformReservoir,
    Geometric,
}

impl SamplerName {
    pub fn kind(&self, capacity: usize) -> SamplerKind {
        match self {
            SamplerName::Uniform => SamplerKind::UniformFull,
            SamplerName::UniformReservoir => SamplerKind::UniformReservoir { capacity },
            SamplerName::Geometric => SamplerKind::Geometric { capacity },
        }
    }

    /// Estimator label in `importance.csv`.
    pub fn estimator(&self) -> &'static str {
        match self {
            SamplerName::Uniform | SamplerName::UniformReservoir => "ipfi_uniform",
            SamplerName::Geometric => "ipfi_geometric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(SamplerName),
    Many(Vec<SamplerName>),
}

mod samplers {
    use super::{OneOrMany, SamplerName};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[SamplerName], s: S) -> Result<S::Ok, S::Error> {
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<SamplerName>, D::Error> {
        Ok(match OneOrMany::deserialize(d)? {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitName {
    FirstIncrement,
    #[default]
    Zero,
}

impl From<InitName> for Initialization {
    fn from(n: InitName) -> Self {
        match n {
            InitName::FirstIncrement => Initialization::FirstIncrement,
            InitName::Zero => Initialization::Zero,
        }
    }
}

/// Settings of the theory runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub feature: FeatureRef,
    pub replications: usize,
    /// Increment counts at which the bias study reads the estimate.
    pub checkpoints: Vec<u64>,
    /// Smoothing grid of the variance study, strictly decreasing.
    pub alphas: Vec<f64>,
    /// Reservoir sizes crossed with the grid for geometric sampling.
    pub capacities: Vec<usize>,
    /// Run length of the variance study; `ceil(50/α)` if unset.
    pub length: Option<u64>,
    pub init: InitName,
    pub epsilon: f64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            feature: FeatureRef::Name("salary".into()),
            replications: 100,
            checkpoints: vec![50, 100, 460],
            alphas: vec![0.05, 0.02, 0.01, 0.005],
            capacities: vec![2, 8, 32],
            length: None,
            init: InitName::Zero,
            epsilon: 0.05,
        }
    }
}

/// Everything one `driftwise run` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub experiment: Experiment,
    #[serde(default)]
    pub stream: StreamConfig,
    #[serde(default)]
    pub drift: Option<DriftConfig>,
    /// Defaults to the oracle for A and the theory runs, naive Bayes otherwise.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default = "default_samplers", with = "samplers")]
    pub sampler: Vec<SamplerName>,
    #[serde(rename = "L", default = "default_capacity")]
    pub capacity: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(rename = "M", default = "default_realizations")]
    pub realizations: usize,
    /// Window of the interval-PFI baseline.
    #[serde(default = "default_interval")]
    pub interval: usize,
    /// Permutations per batch or interval PFI.
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_stream_length")]
    pub stream_length: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Replays of experiment A.
    #[serde(default = "default_shuffles")]
    pub shuffles: usize,
    /// Write every n-th iPFI step to `importance.csv`.
    #[serde(default = "one_u64")]
    pub report_every: u64,
    /// Also write each realization, not only the ensemble mean.
    #[serde(default)]
    pub report_realizations: bool,
    #[serde(default)]
    pub theory: TheoryConfig,
}

fn one() -> u32 {
    1
}
fn one_u64() -> u64 {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn default_width() -> u64 {
    1000
}
fn default_learning_rate() -> f64 {
    0.05
}
fn default_samplers() -> Vec<SamplerName> {
    vec![SamplerName::Uniform, SamplerName::Geometric]
}
fn default_capacity() -> usize {
    100
}
fn default_alpha() -> f64 {
    0.001
}
fn default_realizations() -> usize {
    10
}
fn default_interval() -> usize {
    1000
}
fn default_permutations() -> usize {
    10
}
fn default_stream_length() -> u64 {
    20_000
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_shuffles() -> usize {
    10
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("every key has a default")
    }
}

impl RunConfig {
    /// Parse TOML text, then apply `key=value` overrides. Values are read as
    /// TOML (`alpha=0.01`, `sampler=["geometric"]`) and fall back to plain
    /// strings; dotted keys reach into tables (`drift.position=5000`).
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        for (key, value) in overrides {
            set_dotted(&mut table, key, parse_value(value))?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, overrides)
    }

    pub fn model(&self) -> ModelConfig {
        self.model.clone().unwrap_or(match self.experiment {
            Experiment::B | Experiment::C => ModelConfig::NaiveBayes {
                laplace: 1.0,
                forgetting: 1.0,
                pretrain: 0,
            },
            _ => ModelConfig::Oracle { concept: None },
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.realizations == 0 {
            return Err(Error::config("M must be at least 1"));
        }
        if self.stream_length == 0 {
            return Err(Error::config("stream_length must be positive"));
        }
        if self.capacity == 0 {
            return Err(Error::config("L must be at least 1"));
        }
        if self.interval < 2 {
            return Err(Error::config("interval must be at least 2"));
        }
        if self.permutations == 0 || self.shuffles == 0 || self.report_every == 0 {
            return Err(Error::config("permutations, shuffles and report_every must be positive"));
        }
        if self.sampler.is_empty() {
            return Err(Error::config("at least one sampler is required"));
        }
        let mut estimators: Vec<_> = self.sampler.iter().map(SamplerName::estimator).collect();
        estimators.sort_unstable();
        if estimators.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("at most one uniform and one geometric sampler"));
        }
        if let StreamConfig::Csv { path, .. } = &self.stream {
            if !path.exists() {
                return Err(Error::config(format!("stream file {} does not exist", path.display())));
            }
        }
        match self.experiment {
            Experiment::A if self.drift.is_some() => {
                return Err(Error::config("experiment A explains a static model and takes no drift"))
            }
            Experiment::C => match &self.drift {
                Some(DriftConfig {
                    kind: DriftKindConfig::FeatureSwap { .. },
                    ..
                }) => {}
                _ => return Err(Error::config("experiment C needs a feature-swap drift")),
            },
            Experiment::TheoryBias | Experiment::TheoryVariance => {
                if !matches!(self.stream, StreamConfig::Agrawal { .. }) {
                    return Err(Error::config("theory runs use the agrawal generator"));
                }
                if self.drift.is_some() || !matches!(self.model(), ModelConfig::Oracle { .. }) {
                    return Err(Error::config("theory runs need a static oracle and no drift"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::config("empty override key"))?;
    let mut current = table;
    for part in parts {
        current = current
            .entry(part)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.experiment, Experiment::A);
        assert_eq!(c.alpha, 0.001);
        assert_eq!(c.realizations, 10);
        assert_eq!(c.permutations, 10);
        assert_eq!(c.capacity, 100);
        assert_eq!(c.sampler, vec![SamplerName::Uniform, SamplerName::Geometric]);
        assert_eq!(c.model(), ModelConfig::Oracle { concept: None });
    }

    #[test]
    fn full_file() {
        let text = r#"
            experiment = "C"
            sampler = "geometric"
            L = 50
            M = 3
            alpha = 0.01
            stream_length = 5000
            seed = 7

            [stream]
            generator = "agrawal"
            concept = 1

            [drift]
            kind = "feature-swap"
            pairs = [["salary", 8]]
            position = 2500

            [model]
            kind = "naive-bayes"
            forgetting = 0.999
        "#;
        let c = RunConfig::from_toml(text, &[]).unwrap();
        assert_eq!(c.sampler, vec![SamplerName::Geometric]);
        assert_eq!((c.capacity, c.realizations, c.seed), (50, 3, 7));
        let schema = crate::datastream::agrawal_schema();
        let spec = c.drift.unwrap().to_spec(&schema).unwrap();
        assert_eq!(spec.kind, DriftKind::FeatureSwap { pairs: vec![(0, 8)] });
        assert_eq!(spec.profile, DriftProfile::Sudden);
    }

    #[test]
    fn overrides_win() {
        let c = RunConfig::from_toml(
            "alpha = 0.5\nexperiment = \"B\"\n[drift]\nkind = \"function-switch\"\nfrom_concept = 1\nto_concept = 2\nposition = 10\n",
            &[
                ("alpha".into(), "0.01".into()),
                ("drift.position".into(), "99".into()),
                ("output".into(), "some/dir".into()),
                ("sampler".into(), "[\"uniform\"]".into()),
            ],
        )
        .unwrap();
        assert_eq!(c.alpha, 0.01);
        assert_eq!(c.drift.unwrap().position, 99);
        assert_eq!(c.output, PathBuf::from("some/dir"));
        assert_eq!(c.sampler, vec![SamplerName::Uniform]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_toml("stream_length = 0", &[]).is_err());
        assert!(RunConfig::from_toml("alpha = 1.0", &[]).is_err());
        assert!(RunConfig::from_toml("M = 0", &[]).is_err());
        assert!(RunConfig::from_toml("colour = 1", &[]).is_err());
        assert!(RunConfig::from_toml("sampler = [\"uniform\", \"uniform-reservoir\"]", &[]).is_err());
        assert!(RunConfig::from_toml(
            "[drift]\nkind = \"function-switch\"\nfrom_concept = 1\nto_concept = 2\nposition = 10",
            &[]
        )
        .is_err());
        assert!(RunConfig::from_toml("experiment = \"C\"", &[]).is_err());
        assert!(RunConfig::from_toml("[stream]\ngenerator = \"csv\"\npath = \"/no/such/file.csv\"", &[]).is_err());
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in [
            Experiment::A,
            Experiment::B,
            Experiment::C,
            Experiment::TheoryBias,
            Experiment::TheoryVariance,
        ] {
            assert_eq!(e.as_str().parse::<Experiment>().unwrap(), e);
        }
        assert!("D".parse::<Experiment>().is_err());
    }
}
