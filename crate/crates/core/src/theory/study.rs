use std::io::Write;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::static_bias;
use crate::datastream::AgrawalStream;
use crate::error::{Error, Result};
use crate::importance::{Initialization, IpfiConfig, IpfiEnsemble};
use crate::learners::Model;
use crate::sampling::{collision_probability, SamplerKind};

/// Repeated single-realization runs of one explained feature on an iid
/// agrawal stream.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasStudyConfig {
    pub alpha: f64,
    pub sampler: SamplerKind,
    pub replications: usize,
    /// Numbers of increments `t − t0 + 1` at which the estimate is read.
    pub checkpoints: Vec<u64>,
    pub feature: usize,
    pub concept: u32,
    /// True importance of `feature`.
    pub phi: f64,
    pub init: Initialization,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub steps: u64,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    /// `E[φ̂]` predicted for this initialization.
    pub expected: f64,
    pub analytic_bias: f64,
    /// `(mean − expected) / std_error`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub alpha: f64,
    pub sampler: SamplerKind,
    pub phi: f64,
    pub rows: Vec<BiasRow>,
}

impl BiasReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }
}

/// One row per `(alpha, sampler)` of a variance study.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceStudyConfig {
    pub samplers: Vec<SamplerKind>,
    /// Strictly decreasing.
    pub alphas: Vec<f64>,
    pub replications: usize,
    /// Stream length; `None` runs `ceil(50/α)` steps.
    pub length: Option<u64>,
    pub feature: usize,
    pub concept: u32,
    pub phi: f64,
    pub init: Initialization,
    /// Tolerance for the reported Chebyshev bound `variance / ε²`.
    pub epsilon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRow {
    pub alpha: f64,
    pub sampler: SamplerKind,
    pub length: u64,
    /// Mean estimate over the tail and all replications.
    pub mean: f64,
    /// Across-replication variance, averaged over the tail steps.
    pub variance: f64,
    /// Collision probability of the sampler at the last step.
    pub collision: f64,
    /// Chebyshev bound on `P(|φ̂ − E φ̂| ≥ ε)`.
    pub chebyshev: f64,
    pub analytic_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub rows: Vec<VarianceRow>,
}

impl VarianceReport {
    /// Rows of the given sampler kind, in study order.
    pub fn rows_for(&self, sampler: SamplerKind) -> impl Iterator<Item = &VarianceRow> {
        self.rows.iter().filter(move |r| r.sampler == sampler)
    }

    /// Rows at `alpha`, in study order.
    pub fn rows_at(&self, alpha: f64) -> impl Iterator<Item = &VarianceRow> {
        self.rows.iter().filter(move |r| r.alpha == alpha)
    }
}

/// Whether every value is strictly below its predecessor.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

fn check_common(alpha: f64, replications: usize, feature: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if replications < 2 {
        return Err(Error::config("need at least two replications"));
    }
    if feature >= 9 {
        return Err(Error::config(format!("agrawal has 9 features, got index {feature}")));
    }
    Ok(())
}

/// Seeds for replication `r`: one for the stream, one for the sampler.
fn replication_seeds(seed: u64, replications: usize) -> Vec<(u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..replications).map(|_| (rng.next_u64(), rng.next_u64())).collect()
}

/// Run one replication for `length` steps, calling `visit(k, value)` after
/// the `k`-th increment (1-based).
fn run_replication(
    model: &dyn Model,
    concept: u32,
    feature: usize,
    config: IpfiConfig,
    (stream_seed, sampler_seed): (u64, u64),
    length: u64,
    mut visit: impl FnMut(u64, f64),
) -> Result<()> {
    let mut ensemble = IpfiEnsemble::with_features(9, vec![feature], config, sampler_seed)?;
    let mut steps = 0;
    for instance in AgrawalStream::new(concept, stream_seed)?.take(length as usize) {
        if let Some(v) = ensemble.observe(model, &Arc::new(instance))? {
            steps += 1;
            visit(steps, v[0]);
        }
    }
    Ok(())
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Mean estimate at each checkpoint against `φ(1 − (1−α)^steps)` (zero
/// start) or `φ` (first-increment start).
pub fn run_bias_study(config: &BiasStudyConfig, model: &dyn Model) -> Result<BiasReport> {
    check_common(config.alpha, config.replications, config.feature)?;
    if config.checkpoints.is_empty() || config.checkpoints.contains(&0) {
        return Err(Error::config("checkpoints must be non-empty and positive"));
    }
    let last = *config.checkpoints.iter().max().expect("non-empty");
    let length = last + config.sampler.warm_up();
    let ipfi = IpfiConfig::new(config.alpha, config.sampler, 1).with_init(config.init);

    let mut samples = vec![Vec::with_capacity(config.replications); config.checkpoints.len()];
    for seeds in replication_seeds(config.seed, config.replications) {
        run_replication(model, config.concept, config.feature, ipfi, seeds, length, |k, v| {
            for (slot, &c) in samples.iter_mut().zip(&config.checkpoints) {
                if c == k {
                    slot.push(v);
                }
            }
        })?;
    }

    let rows = config
        .checkpoints
        .iter()
        .zip(&samples)
        .map(|(&steps, values)| {
            let (mean, variance) = mean_var(values);
            let std_error = (variance / values.len() as f64).sqrt();
            let analytic_bias = match config.init {
                Initialization::Zero => static_bias(config.alpha, steps, config.phi)?,
                Initialization::FirstIncrement => 0.0,
            };
            let expected = config.phi - analytic_bias;
            let z = if std_error > 0.0 {
                (mean - expected) / std_error
            } else if mean == expected {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(BiasRow {
                steps,
                mean,
                variance,
                std_error,
                expected,
                analytic_bias,
                z,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BiasReport {
        alpha: config.alpha,
        sampler: config.sampler,
        phi: config.phi,
        rows,
    })
}

/// Across-replication variance of the estimate over the final 10% of each
/// run, for every `(alpha, sampler)` pair. All pairs see the same streams.
pub fn run_variance_study(config: &VarianceStudyConfig, model: &dyn Model) -> Result<VarianceReport> {
    if config.replications < 30 {
        return Err(Error::config(format!(
            "variance study needs at least 30 replications, got {}",
            config.replications
        )));
    }
    if config.alphas.is_empty() || !strictly_decreasing(&config.alphas) {
        return Err(Error::config("alpha grid must be non-empty and strictly decreasing"));
    }
    if config.samplers.is_empty() {
        return Err(Error::config("no samplers given"));
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::config("epsilon must be positive"));
    }
    let seeds = replication_seeds(config.seed, config.replications);
    let mut rows = Vec::new();
    for &alpha in &config.alphas {
        check_common(alpha, config.replications, config.feature)?;
        let length = config.length.unwrap_or((50.0 / alpha).ceil() as u64);
        for &sampler in &config.samplers {
            let t0 = sampler.warm_up();
            let steps = length.saturating_sub(t0);
            let tail = (steps / 10).max(1);
            let first_tail = steps - tail + 1;
            if steps < 2 {
                return Err(Error::config(format!("stream of {length} is too short for {sampler:?}")));
            }
            let ipfi = IpfiConfig::new(alpha, sampler, 1).with_init(config.init);
            // per tail step: sum and sum of squares across replications
            let mut sums = vec![(0.0f64, 0.0f64); tail as usize];
            for &s in &seeds {
                run_replication(model, config.concept, config.feature, ipfi, s, length, |k, v| {
                    if k >= first_tail {
                        let slot = &mut sums[(k - first_tail) as usize];
                        slot.0 += v;
                        slot.1 += v * v;
                    }
                })?;
            }
            let r = config.replications as f64;
            let (mut mean, mut variance) = (0.0, 0.0);
            for &(sum, squares) in &sums {
                mean += sum / r / tail as f64;
                variance += ((squares - sum * sum / r) / (r - 1.0)).max(0.0) / tail as f64;
            }
            let analytic_bias = match config.init {
                Initialization::Zero => static_bias(alpha, steps, config.phi)?,
                Initialization::FirstIncrement => 0.0,
            };
            rows.push(VarianceRow {
                alpha,
                sampler,
                length,
                mean,
                variance,
                collision: collision_probability(sampler.law(), length, t0)?,
                chebyshev: (variance / config.epsilon.powi(2)).min(1.0),
                analytic_bias,
            });
        }
    }
    Ok(VarianceReport { rows })
}

/// One line of `study.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub alpha: f64,
    pub sampler: String,
    #[serde(rename = "L")]
    pub capacity: Option<usize>,
    pub checkpoint: u64,
    pub mean: f64,
    pub variance: f64,
    pub analytic_bias: f64,
}

impl From<&BiasReport> for Vec<StudyRow> {
    fn from(report: &BiasReport) -> Self {
        report
            .rows
            .iter()
            .map(|r| StudyRow {
                alpha: report.alpha,
                sampler: report.sampler.family().to_string(),
                capacity: report.sampler.capacity(),
                checkpoint: r.steps,
                mean: r.mean,
                variance: r.variance,
                analytic_bias: r.analytic_bias,
            })
            .collect()
    }
}

impl From<&VarianceReport> for Vec<StudyRow> {
    fn from(report: &VarianceReport) -> Self {
        report
            .rows
            .iter()
            .map(|r| StudyRow {
                alpha: r.alpha,
                sampler: r.sampler.family().to_string(),
                capacity: r.sampler.capacity(),
                checkpoint: r.length,
                mean: r.mean,
                variance: r.variance,
                analytic_bias: r.analytic_bias,
            })
            .collect()
    }
}

/// Write rows as CSV with header `alpha,sampler,L,checkpoint,mean,variance,analytic_bias`.
pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
