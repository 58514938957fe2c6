use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ImportanceVector, Initialization, Loss, SmoothedImportance};
use crate::datastream::{FeatureValue, Instance};
use crate::error::{Error, Result};
use crate::learners::Model;
use crate::sampling::{Sampler, SamplerKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpfiConfig {
    pub alpha: f64,
    pub sampler: SamplerKind,
    /// Number of independent realizations averaged into the report.
    pub realizations: usize,
    pub init: Initialization,
    pub loss: Loss,
}

impl IpfiConfig {
    pub fn new(alpha: f64, sampler: SamplerKind, realizations: usize) -> Self {
        IpfiConfig {
            alpha,
            sampler,
            realizations,
            init: Initialization::default(),
            loss: Loss::default(),
        }
    }

    pub fn with_init(mut self, init: Initialization) -> Self {
        self.init = init;
        self
    }
}

#[derive(Debug, Clone)]
struct Realization {
    sampler: Sampler,
    smoothed: SmoothedImportance,
}

/// `M` independent incremental-PFI realizations over one stream.
///
/// Each realization owns its sampler and RNG stream; the reported estimate is
/// the arithmetic mean across realizations.
#[derive(Debug, Clone)]
pub struct IpfiEnsemble {
    config: IpfiConfig,
    features: Vec<usize>,
    arity: usize,
    realizations: Vec<Realization>,
    scratch: Vec<FeatureValue>,
}

impl IpfiEnsemble {
    /// Explain every one of `arity` features. Realization `i` draws from
    /// stream `i` of a ChaCha generator seeded with `seed`.
    pub fn new(arity: usize, config: IpfiConfig, seed: u64) -> Result<Self> {
        Self::with_features(arity, (0..arity).collect(), config, seed)
    }

    /// Explain only the listed features; reports follow that order.
    pub fn with_features(arity: usize, features: Vec<usize>, config: IpfiConfig, seed: u64) -> Result<Self> {
        if config.realizations == 0 {
            return Err(Error::config("need at least one realization"));
        }
        if features.is_empty() || features.iter().any(|&j| j >= arity) {
            return Err(Error::config("explained features must be valid, non-empty"));
        }
        let realizations = (0..config.realizations)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                Ok(Realization {
                    sampler: Sampler::new(config.sampler, rng)?,
                    smoothed: SmoothedImportance::new(features.len(), config.alpha, config.init)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IpfiEnsemble {
            config,
            features,
            arity,
            realizations,
            scratch: Vec::with_capacity(arity),
        })
    }

    pub fn config(&self) -> &IpfiConfig {
        &self.config
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn is_warm(&self) -> bool {
        self.realizations.iter().all(|r| r.sampler.is_warm())
    }

    /// Feed an observation to the samplers without explaining it.
    pub fn warm_up(&mut self, instance: Arc<Instance>) {
        for r in &mut self.realizations {
            r.sampler.update(Arc::clone(&instance));
        }
    }

    /// One explanation step: for every realization and feature draw a
    /// replacement, compute λ with two model calls and smooth it; then store
    /// the instance in each sampler. Fails before warm-up.
    pub fn explain_one(&mut self, model: &dyn Model, instance: &Arc<Instance>) -> Result<ImportanceVector> {
        if instance.features.len() != self.arity {
            return Err(Error::schema(format!(
                "instance has {} features, ensemble expects {}",
                instance.features.len(),
                self.arity
            )));
        }
        let loss = self.config.loss;
        let y = instance.target;
        for r in &mut self.realizations {
            for (k, &j) in self.features.iter().enumerate() {
                let donor = Arc::clone(&r.sampler.draw()?.instance);
                self.scratch.clear();
                self.scratch.extend_from_slice(&instance.features);
                let original = loss.eval(model.predict(&self.scratch)?, y);
                self.scratch[j] = donor.features[j];
                let switched = loss.eval(model.predict(&self.scratch)?, y);
                r.smoothed.update(k, switched - original);
            }
            r.sampler.update(Arc::clone(instance));
        }
        Ok(self.current().expect("every feature was just updated"))
    }

    /// Warm up or explain, whichever applies. `None` while warming up.
    pub fn observe(&mut self, model: &dyn Model, instance: &Arc<Instance>) -> Result<Option<ImportanceVector>> {
        if self.is_warm() {
            self.explain_one(model, instance).map(Some)
        } else {
            self.warm_up(Arc::clone(instance));
            Ok(None)
        }
    }

    /// Mean estimate across realizations, once initialized.
    pub fn current(&self) -> Option<ImportanceVector> {
        let m = self.realizations.len() as f64;
        let mut mean = vec![0.0; self.features.len()];
        for r in &self.realizations {
            for (k, slot) in mean.iter_mut().enumerate() {
                *slot += r.smoothed.value(k)? / m;
            }
        }
        ImportanceVector::new(mean).ok()
    }

    /// Estimate of a single realization.
    pub fn realization(&self, i: usize) -> Option<ImportanceVector> {
        self.realizations.get(i)?.smoothed.vector()
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastream::{AgrawalStream, FeatureValue};
    use crate::learners::{FrozenOracle, Snapshot};
    use std::sync::atomic::{AtomicU64, Ordering};

    struct Counting {
        predicts: AtomicU64,
        learns: u64,
    }

    impl Model for Counting {
        fn predict(&self, _features: &[FeatureValue]) -> Result<f64> {
            self.predicts.fetch_add(1, Ordering::Relaxed);
            Ok(0.5)
        }

        fn learn_one(&mut self, _features: &[FeatureValue], _target: f64) -> Result<()> {
            self.learns += 1;
            Ok(())
        }

        fn snapshot(&self) -> Snapshot {
            Snapshot::new(FrozenOracle::constant(0.5))
        }
    }

    #[test]
    fn two_predictions_per_feature_and_realization() {
        let model = Counting {
            predicts: AtomicU64::new(0),
            learns: 0,
        };
        let config = IpfiConfig::new(0.01, SamplerKind::Geometric { capacity: 5 }, 3);
        let mut e = IpfiEnsemble::new(9, config, 0).unwrap();
        let mut stream = AgrawalStream::new(1, 0).unwrap();
        for inst in stream.by_ref().take(5) {
            assert!(e.observe(&model, &Arc::new(inst)).unwrap().is_none());
        }
        assert_eq!(model.predicts.load(Ordering::Relaxed), 0);
        for inst in stream.take(10) {
            let before = model.predicts.load(Ordering::Relaxed);
            e.explain_one(&model, &Arc::new(inst)).unwrap();
            assert_eq!(model.predicts.load(Ordering::Relaxed) - before, 2 * 9 * 3);
        }
        assert_eq!(model.learns, 0);
    }

    #[test]
    fn cold_ensemble_refuses_to_explain() {
        let config = IpfiConfig::new(0.01, SamplerKind::Geometric { capacity: 5 }, 1);
        let mut e = IpfiEnsemble::new(9, config, 0).unwrap();
        let x = Arc::new(AgrawalStream::new(1, 0).unwrap().next().unwrap());
        let h = FrozenOracle::agrawal(1).unwrap();
        assert!(matches!(e.explain_one(&h, &x), Err(Error::NotWarm { .. })));
        assert!(e.current().is_none());
    }

    #[test]
    fn report_is_realization_mean() {
        let config = IpfiConfig::new(0.05, SamplerKind::UniformFull, 4);
        let mut e = IpfiEnsemble::new(9, config, 7).unwrap();
        let h = FrozenOracle::agrawal(1).unwrap();
        for inst in AgrawalStream::new(1, 1).unwrap().take(200) {
            e.observe(&h, &Arc::new(inst)).unwrap();
        }
        let mean = e.current().unwrap();
        for j in 0..9 {
            let direct: f64 = (0..4).map(|i| e.realization(i).unwrap()[j]).sum::<f64>() / 4.0;
            assert!((mean[j] - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn realizations_are_independent() {
        let config = IpfiConfig::new(0.05, SamplerKind::UniformFull, 2);
        let mut e = IpfiEnsemble::new(9, config, 7).unwrap();
        let h = FrozenOracle::agrawal(1).unwrap();
        for inst in AgrawalStream::new(1, 1).unwrap().take(300) {
            e.observe(&h, &Arc::new(inst)).unwrap();
        }
        assert_ne!(e.realization(0), e.realization(1));
    }

    #[test]
    fn subset_reports_follow_requested_order() {
        let config = IpfiConfig::new(0.05, SamplerKind::UniformFull, 1);
        let mut e = IpfiEnsemble::with_features(9, vec![2, 0], config, 1).unwrap();
        let h = FrozenOracle::agrawal(1).unwrap();
        for inst in AgrawalStream::new(1, 1).unwrap().take(50) {
            e.observe(&h, &Arc::new(inst)).unwrap();
        }
        assert_eq!(e.current().unwrap().len(), 2);
        assert!(IpfiEnsemble::with_features(9, vec![9], config, 1).is_err());
        assert!(IpfiEnsemble::new(9, IpfiConfig::new(0.05, SamplerKind::UniformFull, 0), 1).is_err());
    }
}
