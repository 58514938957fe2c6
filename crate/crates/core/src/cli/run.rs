use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Experiment, ModelConfig, RunConfig, SamplerName, StreamConfig};
use crate::datastream::{
    apply_drift, csv_stream, take_instances, AgrawalStream, DriftKind, DriftSpec, Instance, InstanceStream, Schema,
    SchemaHints, StaggerStream,
};
use crate::error::{Error, Result};
use crate::importance::{
    batch_pfi_vector, random_permutation, expected_pfi, normalized_error, ImportanceVector, IntervalPoint,
    IntervalTracker, IpfiConfig, IpfiEnsemble, Loss,
};
use crate::learners::{FrozenOracle, Model, OnlineLogisticRegression, OnlineNaiveBayes};
use crate::theory::{
    agrawal_ground_truth, run_bias_study, run_variance_study, write_study_csv, BiasStudyConfig, StudyRow,
    VarianceStudyConfig,
};

const ACCURACY_WINDOW: usize = 1000;

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Value,
    pub files: Vec<PathBuf>,
}

/// A seed for one named purpose, independent of every other purpose.
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    // FNV-1a picks the ChaCha stream, so seeds depend on the name only
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in purpose.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng.next_u64()
}

fn rng_for(seed: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose))
}

fn stream_concept(config: &RunConfig) -> Option<u32> {
    match &config.stream {
        StreamConfig::Agrawal { concept } | StreamConfig::Stagger { concept } => Some(*concept),
        StreamConfig::Csv { .. } => None,
    }
}

/// The configured stream, with drift applied if any.
pub fn build_stream(config: &RunConfig) -> Result<Box<dyn InstanceStream>> {
    let seed = derive_seed(config.seed, "stream");
    let base: Box<dyn InstanceStream> = match &config.stream {
        StreamConfig::Agrawal { concept } => Box::new(AgrawalStream::new(*concept, seed)?),
        StreamConfig::Stagger { concept } => Box::new(StaggerStream::new(*concept, seed)?),
        StreamConfig::Csv {
            path,
            target,
            categorical,
            numeric,
        } => {
            let hints = SchemaHints {
                categorical: categorical.clone(),
                numeric: numeric.clone(),
            };
            Box::new(csv_stream(path, target.as_deref(), &hints)?)
        }
    };
    match &config.drift {
        None => Ok(base),
        Some(drift) => {
            let spec = drift.to_spec(base.schema())?;
            Ok(Box::new(apply_drift(base, spec, derive_seed(config.seed, "drift"))?))
        }
    }
}

/// The configured model for a stream with `schema`.
pub fn build_model(config: &RunConfig, schema: &Schema) -> Result<Box<dyn Model>> {
    Ok(match config.model() {
        ModelConfig::Oracle { concept } => {
            let concept = concept
                .or_else(|| stream_concept(config))
                .ok_or_else(|| Error::config("an oracle model needs a generator stream"))?;
            match &config.stream {
                StreamConfig::Stagger { .. } => Box::new(FrozenOracle::stagger(concept)?),
                _ => Box::new(FrozenOracle::agrawal(concept)?),
            }
        }
        ModelConfig::NaiveBayes {
            laplace, forgetting, ..
        } => Box::new(
            OnlineNaiveBayes::new(schema)?
                .with_laplace(laplace)?
                .with_forgetting(forgetting)?,
        ),
        ModelConfig::Logistic { learning_rate, l2, .. } => {
            Box::new(OnlineLogisticRegression::new(schema, learning_rate)?.with_l2(l2)?)
        }
    })
}

/// Samplers in a fixed order so results do not depend on how they are listed.
fn samplers(config: &RunConfig) -> Vec<SamplerName> {
    let mut v = config.sampler.clone();
    v.sort();
    v.dedup();
    v
}

/// One prequential step as seen by [`run_prequential`]'s callback.
#[derive(Debug)]
pub struct StepRecord<'a> {
    pub instance: &'a Instance,
    /// Model output on the instance before learning it.
    pub prediction: f64,
    /// Ensemble estimates after this step, `None` while warming up.
    pub estimates: &'a [Option<ImportanceVector>],
    /// The ensembles after this step, for per-realization detail.
    pub ensembles: &'a [IpfiEnsemble],
    pub interval: Option<&'a IntervalPoint>,
}

/// Test-then-train loop: each instance is predicted and explained with the
/// current model, handed to `on_step`, and only then learned.
///
/// Stops after `length` steps or at the end of the stream; returns the
/// number of steps run.
pub fn run_prequential(
    model: &mut dyn Model,
    stream: &mut dyn InstanceStream,
    length: u64,
    ensembles: &mut [IpfiEnsemble],
    mut tracker: Option<&mut IntervalTracker>,
    mut on_step: impl FnMut(StepRecord<'_>) -> Result<()>,
) -> Result<u64> {
    let mut estimates = Vec::with_capacity(ensembles.len());
    for step in 0..length {
        let Some(next) = stream.next_instance() else {
            return Ok(step);
        };
        let instance = Arc::new(next?);
        let prediction = model.predict(&instance.features)?;
        estimates.clear();
        for e in ensembles.iter_mut() {
            estimates.push(e.observe(&*model, &instance)?);
        }
        let interval = match tracker.as_deref_mut() {
            Some(t) => t.observe(&*model, Instance::clone(&instance))?,
            None => None,
        };
        on_step(StepRecord {
            instance: &instance,
            prediction,
            estimates: &estimates,
            ensembles: &*ensembles,
            interval: interval.as_ref(),
        })?;
        model.learn_one(&instance.features, instance.target)?;
    }
    Ok(length)
}

#[derive(Serialize)]
struct ImportanceRow<'a> {
    t: u64,
    feature: &'a str,
    estimator: &'a str,
    realization: &'a str,
    value: f64,
}

struct ImportanceWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl ImportanceWriter {
    fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(ImportanceWriter {
            inner: csv::Writer::from_writer(BufWriter::new(file)),
        })
    }

    fn write(&mut self, t: u64, names: &[String], estimator: &str, realization: &str, values: &[f64]) -> Result<()> {
        for (name, &value) in names.iter().zip(values) {
            self.inner.serialize(ImportanceRow {
                t,
                feature: name,
                estimator,
                realization,
                value,
            })?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn distribution(values: &[f64]) -> Value {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
    json!({
        "n": values.len(),
        "median": quantile(&sorted, 0.5),
        "q1": q1,
        "q3": q3,
        "iqr": q3 - q1,
        "values": values,
    })
}

fn pretrain(model: &mut dyn Model, stream: &mut dyn InstanceStream, n: u64) -> Result<()> {
    for instance in take_instances(stream, n as usize)? {
        model.learn_one(&instance.features, instance.target)?;
    }
    Ok(())
}

fn ensemble_for(config: &RunConfig, sampler: SamplerName, arity: usize, purpose: &str) -> Result<IpfiEnsemble> {
    let ipfi = IpfiConfig::new(config.alpha, sampler.kind(config.capacity), config.realizations);
    IpfiEnsemble::new(arity, ipfi, derive_seed(config.seed, purpose))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Run the configured experiment and write its outputs to `config.output`.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    fs::create_dir_all(&config.output).map_err(|source| Error::Io {
        path: config.output.clone(),
        source,
    })?;
    log::info!("running experiment {} with seed {}", config.experiment, config.seed);
    let (summary, mut files) = match config.experiment {
        Experiment::A => run_static(config)?,
        Experiment::B | Experiment::C => run_drifting(config)?,
        Experiment::TheoryBias | Experiment::TheoryVariance => run_theory(config)?,
    };
    let path = config.output.join("summary.json");
    write_json(&path, &summary)?;
    files.push(path);
    Ok(RunOutcome { summary, files })
}

/// Experiment A: a static model explained over shuffled replays of one
/// dataset and compared with batch PFI on the same data.
fn run_static(config: &RunConfig) -> Result<(Value, Vec<PathBuf>)> {
    let mut stream = build_stream(config)?;
    let schema = stream.schema().clone();
    let mut model = build_model(config, &schema)?;
    pretrain(model.as_mut(), stream.as_mut(), config.model().pretrain())?;
    let frozen = model.snapshot();
    let data = take_instances(stream.as_mut(), config.stream_length as usize)?;
    let n = data.len();
    if n < 2 {
        return Err(Error::config(format!("experiment A needs at least 2 observations, got {n}")));
    }
    let names = schema.names();
    let last = (n - 1) as u64;

    let path = config.output.join("importance.csv");
    let mut out = ImportanceWriter::create(&path)?;
    let mut batch_rng = rng_for(config.seed, "batch");
    let reference = batch_pfi_vector(&frozen, &data, config.permutations, &mut batch_rng, Loss::Absolute)?;
    out.write(last, names, "interval_pfi", "mean", reference.values())?;

    let mut shuffle_rng = rng_for(config.seed, "shuffle");
    let orders: Vec<Vec<usize>> = (0..config.shuffles)
        .map(|_| random_permutation(n, &mut shuffle_rng))
        .collect();
    let mut per_sampler = serde_json::Map::new();
    for sampler in samplers(config) {
        let mut errors = Vec::with_capacity(config.shuffles);
        let mut finals = Vec::with_capacity(config.shuffles);
        for (k, order) in orders.iter().enumerate() {
            let mut ensemble = ensemble_for(config, sampler, schema.arity(), &format!("{}/{k}", sampler.estimator()))?;
            for (step, &i) in order.iter().enumerate() {
                let mut x = data[i].clone();
                x.timestamp = step as u64;
                ensemble.observe(&frozen, &Arc::new(x))?;
            }
            let estimate = ensemble.current().ok_or_else(|| {
                Error::config(format!("{n} observations never warm up the {:?} sampler", sampler))
            })?;
            out.write(last, names, sampler.estimator(), &k.to_string(), estimate.values())?;
            errors.push(normalized_error(&estimate, &reference)?);
            finals.push(estimate.into_inner());
        }
        log::info!("{}: errors {:?}", sampler.estimator(), errors);
        per_sampler.insert(
            sampler.estimator().to_string(),
            json!({ "error": distribution(&errors), "estimates": finals }),
        );
    }
    out.finish()?;
    let summary = json!({
        "experiment": "A",
        "seed": config.seed,
        "observations": n,
        "features": names,
        "batch_pfi": reference.values(),
        "samplers": per_sampler,
    });
    Ok((summary, vec![path]))
}

/// Drift reaction on a feature-swap pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwapReaction {
    /// Pair member that was more important just before the drift.
    pub swapped_out: usize,
    pub swapped_in: usize,
    /// Steps after the drift until `swapped_in` first exceeds `swapped_out`.
    pub steps: Option<u64>,
}

/// `history` holds `(t, estimate)` in time order.
pub fn swap_reaction(history: &[(u64, Vec<f64>)], position: u64, pair: (usize, usize)) -> Option<SwapReaction> {
    let before = history.iter().rev().find(|(t, _)| *t < position)?;
    let (a, b) = pair;
    let (out, inn) = if before.1[a] >= before.1[b] { (a, b) } else { (b, a) };
    let steps = history
        .iter()
        .find(|(t, v)| *t >= position && v[inn] > v[out])
        .map(|(t, _)| t - position);
    Some(SwapReaction {
        swapped_out: out,
        swapped_in: inn,
        steps,
    })
}

/// Changes of the top-ranked feature that then hold for at least
/// `min_hold` steps, as `(t, feature)`.
pub fn lasting_top_changes(history: &[(u64, Vec<f64>)], min_hold: u64) -> Vec<(u64, usize)> {
    let top = |v: &[f64]| ImportanceVector::new(v.to_vec()).ok().and_then(|v| v.argmax());
    let mut changes = Vec::new();
    let mut current = history.first().and_then(|(_, v)| top(v));
    let mut candidate: Option<(u64, usize)> = None;
    for (t, v) in history {
        let now = top(v);
        match (candidate, now) {
            (Some((since, f)), Some(g)) if f == g => {
                if t - since >= min_hold {
                    changes.push((since, f));
                    current = Some(f);
                    candidate = None;
                }
            }
            _ if now != current => candidate = now.map(|g| (*t, g)),
            _ => candidate = None,
        }
    }
    changes
}

/// Experiments B and C: prequential learning on a (possibly drifting)
/// stream with iPFI per sampler and the interval-PFI baseline.
fn run_drifting(config: &RunConfig) -> Result<(Value, Vec<PathBuf>)> {
    let mut stream = build_stream(config)?;
    let schema = stream.schema().clone();
    let names = schema.names().to_vec();
    let d = schema.arity();
    let classification = matches!(schema.target(), crate::datastream::TargetKind::Classification { .. });
    let mut model = build_model(config, &schema)?;
    pretrain(model.as_mut(), stream.as_mut(), config.model().pretrain())?;
    let drift: Option<DriftSpec> = match &config.drift {
        Some(drift) => Some(drift.to_spec(&schema)?),
        None => None,
    };

    let order = samplers(config);
    let mut ensembles = order
        .iter()
        .map(|s| ensemble_for(config, *s, d, s.estimator()))
        .collect::<Result<Vec<_>>>()?;
    let mut tracker = IntervalTracker::new(config.interval, config.permutations, rng_for(config.seed, "interval"))?;

    let path = config.output.join("importance.csv");
    let mut out = ImportanceWriter::create(&path)?;
    let mut histories: Vec<Vec<(u64, Vec<f64>)>> = vec![Vec::new(); order.len()];
    let mut points: Vec<IntervalPoint> = Vec::new();
    let mut window: VecDeque<bool> = VecDeque::with_capacity(ACCURACY_WINDOW);
    let mut accuracy = Vec::new();
    let mut step: u64 = 0;

    let steps = {
        let mut on_step = |rec: StepRecord<'_>| -> Result<()> {
            let t = rec.instance.timestamp;
            if classification {
                if window.len() == ACCURACY_WINDOW {
                    window.pop_front();
                }
                window.push_back((rec.prediction >= 0.5) == (rec.instance.target == 1.0));
                if (step + 1) % ACCURACY_WINDOW as u64 == 0 {
                    let acc = window.iter().filter(|&&c| c).count() as f64 / window.len() as f64;
                    log::info!("t={t} rolling accuracy {acc:.4}");
                    accuracy.push(json!({ "t": t, "accuracy": acc }));
                }
            }
            let report = step % config.report_every == 0;
            for (k, estimate) in rec.estimates.iter().enumerate() {
                if let Some(v) = estimate {
                    histories[k].push((t, v.values().to_vec()));
                    if report {
                        out.write(t, &names, order[k].estimator(), "mean", v.values())?;
                    }
                }
            }
            if report && config.report_realizations {
                for (k, e) in rec.ensembles.iter().enumerate() {
                    for i in 0..e.len() {
                        if let Some(v) = e.realization(i) {
                            out.write(t, &names, order[k].estimator(), &i.to_string(), v.values())?;
                        }
                    }
                }
            }
            if let Some(p) = rec.interval {
                out.write(p.t, &names, "interval_pfi", "mean", p.values.values())?;
                points.push(p.clone());
            }
            step += 1;
            Ok(())
        };
        run_prequential(
            model.as_mut(),
            stream.as_mut(),
            config.stream_length,
            &mut ensembles,
            Some(&mut tracker),
            &mut on_step,
        )?
    };
    out.finish()?;

    let mut per_sampler = serde_json::Map::new();
    for (k, sampler) in order.iter().enumerate() {
        let history = &histories[k];
        let mut entry = serde_json::Map::new();
        let mut all = Vec::new();
        let mut before = Vec::new();
        let mut after = Vec::new();
        for p in &points {
            let Some((_, v)) = history.iter().find(|(t, _)| *t == p.t) else {
                continue;
            };
            let estimate = ImportanceVector::new(v.clone())?;
            let Ok(e) = normalized_error(&estimate, &p.values) else {
                continue;
            };
            all.push(e);
            if let Some(spec) = &drift {
                let start = p.t + 1 - config.interval as u64;
                if p.t < spec.position {
                    before.push(e);
                } else if start >= spec.position {
                    after.push(e);
                }
            }
        }
        entry.insert("error".into(), distribution(&all));
        if let Some(spec) = &drift {
            entry.insert("error_before_drift".into(), distribution(&before));
            entry.insert("error_after_drift".into(), distribution(&after));
            match &spec.kind {
                DriftKind::FeatureSwap { pairs } => {
                    let reactions: Vec<_> = pairs
                        .iter()
                        .map(|&pair| swap_reaction(history, spec.position, pair))
                        .collect();
                    entry.insert("swap_reaction".into(), serde_json::to_value(reactions)?);
                }
                DriftKind::FunctionSwitch { .. } => {
                    let top_before = history
                        .iter()
                        .rev()
                        .find(|(t, _)| *t < spec.position)
                        .and_then(|(_, v)| ImportanceVector::new(v.clone()).ok()?.argmax());
                    let first_change = history
                        .iter()
                        .filter(|(t, _)| *t >= spec.position)
                        .find(|(_, v)| ImportanceVector::new(v.clone()).ok().and_then(|v| v.argmax()) != top_before)
                        .map(|(t, _)| t - spec.position);
                    entry.insert("top_before_drift".into(), json!(top_before));
                    entry.insert("top_change_steps".into(), json!(first_change));
                }
            }
        }
        entry.insert("top_changes".into(), json!(lasting_top_changes(history, 500)));
        entry.insert("final".into(), json!(history.last().map(|(_, v)| v)));
        per_sampler.insert(sampler.estimator().to_string(), Value::Object(entry));
    }

    let summary = json!({
        "experiment": config.experiment.as_str(),
        "seed": config.seed,
        "steps": steps,
        "features": names,
        "drift": drift,
        "accuracy": accuracy,
        "interval_points": points.len(),
        "samplers": per_sampler,
    });
    Ok((summary, vec![path]))
}

fn theory_phi(config: &RunConfig, concept: u32, feature: usize) -> Result<f64> {
    if concept == 1 {
        return Ok(agrawal_ground_truth(1)?[feature]);
    }
    // no closed form; estimate on a sample
    let data: Vec<_> = AgrawalStream::new(concept, derive_seed(config.seed, "phi"))?.take(3000).collect();
    expected_pfi(&FrozenOracle::agrawal(concept)?, &data, feature, Loss::Absolute)
}

fn run_theory(config: &RunConfig) -> Result<(Value, Vec<PathBuf>)> {
    let concept = stream_concept(config).expect("validated agrawal stream");
    let schema = crate::datastream::agrawal_schema();
    let feature = config.theory.feature.resolve(&schema)?;
    let phi = theory_phi(config, concept, feature)?;
    let model = build_model(config, &schema)?;
    let theory = &config.theory;
    let mut rows: Vec<StudyRow> = Vec::new();
    let mut studies = serde_json::Map::new();

    match config.experiment {
        Experiment::TheoryBias => {
            for sampler in samplers(config) {
                let study = BiasStudyConfig {
                    alpha: config.alpha,
                    sampler: sampler.kind(config.capacity),
                    replications: theory.replications,
                    checkpoints: theory.checkpoints.clone(),
                    feature,
                    concept,
                    phi,
                    init: theory.init.into(),
                    seed: derive_seed(config.seed, sampler.estimator()),
                };
                let report = run_bias_study(&study, model.as_ref())?;
                rows.extend(Vec::<StudyRow>::from(&report));
                studies.insert(
                    sampler.estimator().to_string(),
                    json!({
                        "max_abs_z": report.max_abs_z(),
                        "within_3_se": report.max_abs_z() <= 3.0,
                        "rows": report.rows,
                    }),
                );
            }
        }
        _ => {
            let mut kinds = Vec::new();
            for sampler in samplers(config) {
                match sampler {
                    SamplerName::Geometric => kinds.extend(theory.capacities.iter().map(|&l| sampler.kind(l))),
                    other => kinds.push(other.kind(config.capacity)),
                }
            }
            let study = VarianceStudyConfig {
                samplers: kinds.clone(),
                alphas: theory.alphas.clone(),
                replications: theory.replications,
                length: theory.length,
                feature,
                concept,
                phi,
                init: theory.init.into(),
                epsilon: theory.epsilon,
                seed: derive_seed(config.seed, "variance"),
            };
            let report = run_variance_study(&study, model.as_ref())?;
            rows.extend(Vec::<StudyRow>::from(&report));
            let mut by_alpha = Vec::new();
            for kind in &kinds {
                let v: Vec<f64> = report.rows_for(*kind).map(|r| r.variance).collect();
                by_alpha.push(json!({
                    "sampler": kind,
                    "variance": v,
                    "decreasing_in_alpha": crate::theory::strictly_decreasing(&v),
                }));
            }
            let mut by_capacity = Vec::new();
            for &alpha in &theory.alphas {
                let v: Vec<f64> = report
                    .rows_at(alpha)
                    .filter(|r| matches!(r.sampler, crate::sampling::SamplerKind::Geometric { .. }))
                    .map(|r| r.variance)
                    .collect();
                if v.len() > 1 {
                    by_capacity.push(json!({
                        "alpha": alpha,
                        "capacities": theory.capacities,
                        "variance": v,
                        "decreasing_in_L": crate::theory::strictly_decreasing(&v),
                    }));
                }
            }
            studies.insert("alpha_grid".into(), Value::Array(by_alpha));
            studies.insert("capacity_grid".into(), Value::Array(by_capacity));
            studies.insert("rows".into(), serde_json::to_value(&report.rows)?);
        }
    }

    let path = config.output.join("study.csv");
    let file = File::create(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    write_study_csv(&rows, &mut w)?;
    w.flush().map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let summary = json!({
        "experiment": config.experiment.as_str(),
        "seed": config.seed,
        "feature": schema.name(feature),
        "phi": phi,
        "study": studies,
    });
    Ok((summary, vec![path]))
}
