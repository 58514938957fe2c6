//! Sampling strategies that pick a past observation to borrow a feature
//! value from, and their analytic laws.
//!
//! At step `s` a sampler has seen observations `0..s` and draws one of them.
//! Within a step the draw happens first and the new observation is stored
//! afterwards, so a draw never returns the instance being explained.
//!
//! | strategy            | warm-up `t0` | `P(draw = r)` at step `s`                          |
//! |---------------------|--------------|----------------------------------------------------|
//! | uniform, full store | 1            | `1/s`                                              |
//! | uniform reservoir   | `L`          | `1/s`                                              |
//! | geometric reservoir | `L`          | `p(1-p)^(s-r-1)` for `r >= t0`, `p(1-p)^(s-t0)` else |
//!
//! with `p = 1/L`.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datastream::Instance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerKind {
    /// Keep every observation.
    UniformFull,
    /// Vitter's algorithm R with `capacity` slots.
    UniformReservoir { capacity: usize },
    /// Every step one uniformly chosen slot is overwritten.
    Geometric { capacity: usize },
}

impl SamplerKind {
    /// First step at which a draw is possible.
    pub fn warm_up(&self) -> u64 {
        match *self {
            SamplerKind::UniformFull => 1,
            SamplerKind::UniformReservoir { capacity } | SamplerKind::Geometric { capacity } => {
                capacity as u64
            }
        }
    }

    pub fn law(&self) -> SamplingLaw {
        match *self {
            SamplerKind::UniformFull | SamplerKind::UniformReservoir { .. } => SamplingLaw::Uniform,
            SamplerKind::Geometric { capacity } => SamplingLaw::Geometric { capacity },
        }
    }

    /// `"uniform"` or `"geometric"`.
    pub fn family(&self) -> &'static str {
        match self.law() {
            SamplingLaw::Uniform => "uniform",
            SamplingLaw::Geometric { .. } => "geometric",
        }
    }

    pub fn capacity(&self) -> Option<usize> {
        match *self {
            SamplerKind::UniformFull => None,
            SamplerKind::UniformReservoir { capacity } | SamplerKind::Geometric { capacity } => {
                Some(capacity)
            }
        }
    }
}

/// Marginal law of a sampling strategy over past indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingLaw {
    Uniform,
    Geometric { capacity: usize },
}

/// A stored past observation and its stream position.
#[derive(Debug, Clone)]
pub struct Stored {
    pub position: u64,
    pub instance: Arc<Instance>,
}

/// Storage backing one sampling strategy.
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplerKind,
    slots: Vec<Stored>,
    seen: u64,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(kind: SamplerKind, rng: ChaCha8Rng) -> Result<Self> {
        if kind.capacity() == Some(0) {
            return Err(Error::config("reservoir capacity must be at least 1"));
        }
        let slots = Vec::with_capacity(kind.capacity().unwrap_or(1024));
        Ok(Sampler {
            kind,
            slots,
            seen: 0,
            rng,
        })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    /// Observations fed so far.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn is_warm(&self) -> bool {
        self.seen >= self.kind.warm_up()
    }

    pub fn stored(&self) -> &[Stored] {
        &self.slots
    }

    /// Store a new observation according to the strategy.
    pub fn update(&mut self, instance: Arc<Instance>) {
        let stored = Stored {
            position: self.seen,
            instance,
        };
        match self.kind {
            SamplerKind::UniformFull => self.slots.push(stored),
            SamplerKind::UniformReservoir { capacity } => {
                if self.slots.len() < capacity {
                    self.slots.push(stored);
                } else {
                    let j = self.rng.gen_range(0..=self.seen) as usize;
                    if j < capacity {
                        self.slots[j] = stored;
                    }
                }
            }
            SamplerKind::Geometric { capacity } => {
                if self.slots.len() < capacity {
                    self.slots.push(stored);
                } else {
                    let j = self.rng.gen_range(0..capacity);
                    self.slots[j] = stored;
                }
            }
        }
        self.seen += 1;
    }

    /// Draw one stored observation uniformly from the slots.
    pub fn draw(&mut self) -> Result<&Stored> {
        if !self.is_warm() {
            return Err(Error::NotWarm {
                seen: self.seen,
                required: self.kind.warm_up(),
            });
        }
        let j = self.rng.gen_range(0..self.slots.len());
        Ok(&self.slots[j])
    }
}

fn check_step(law: SamplingLaw, s: u64, t0: u64) -> Result<()> {
    if t0 == 0 {
        return Err(Error::domain("warm-up t0 must be at least 1"));
    }
    if s < t0 {
        return Err(Error::domain(format!("step {s} precedes warm-up {t0}")));
    }
    if let SamplingLaw::Geometric { capacity } = law {
        if capacity == 0 {
            return Err(Error::domain("capacity must be at least 1"));
        }
        // The first L observations fill the reservoir, so p * t0 = 1 is what
        // makes the marginals a distribution.
        if capacity as u64 != t0 {
            return Err(Error::domain(format!(
                "geometric sampling needs t0 = L, got t0 = {t0}, L = {capacity}"
            )));
        }
    }
    Ok(())
}

/// `P(draw at step s = r)`.
pub fn marginal_probability(law: SamplingLaw, s: u64, r: u64, t0: u64) -> Result<f64> {
    check_step(law, s, t0)?;
    if r >= s {
        return Err(Error::domain(format!("index {r} is not before step {s}")));
    }
    Ok(match law {
        SamplingLaw::Uniform => 1.0 / s as f64,
        SamplingLaw::Geometric { capacity } => {
            let p = 1.0 / capacity as f64;
            let exponent = if r >= t0 { s - r - 1 } else { s - t0 };
            p * (1.0 - p).powf(exponent as f64)
        }
    })
}

/// Probability that two independent draws at step `s` pick the same index,
/// `sum_r P(draw = r)^2`, in closed form.
pub fn collision_probability(law: SamplingLaw, s: u64, t0: u64) -> Result<f64> {
    check_step(law, s, t0)?;
    Ok(match law {
        SamplingLaw::Uniform => 1.0 / s as f64,
        SamplingLaw::Geometric { capacity } => {
            let p = 1.0 / capacity as f64;
            let k = (s - t0) as f64;
            p / (2.0 - p) * (1.0 + (1.0 - p).powf(2.0 * k + 1.0))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn dummy(t: u64) -> Arc<Instance> {
        Arc::new(Instance::new(vec![], 0.0, t))
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn direct_collision(law: SamplingLaw, s: u64, t0: u64) -> f64 {
        (0..s)
            .map(|r| marginal_probability(law, s, r, t0).unwrap().powi(2))
            .sum()
    }

    #[test]
    fn geometric_single_slot_keeps_latest() {
        let mut s = Sampler::new(SamplerKind::Geometric { capacity: 1 }, rng(0)).unwrap();
        for t in 0..50 {
            s.update(dummy(t));
            assert_eq!(s.stored().len(), 1);
            assert_eq!(s.stored()[0].position, t);
            assert_eq!(s.draw().unwrap().position, t);
        }
    }

    #[test]
    fn full_store_keeps_everything() {
        let mut s = Sampler::new(SamplerKind::UniformFull, rng(0)).unwrap();
        assert!(matches!(s.draw(), Err(Error::NotWarm { seen: 0, required: 1 })));
        for t in 0..37 {
            s.update(dummy(t));
        }
        assert_eq!(s.stored().len(), 37);
    }

    #[test]
    fn reservoirs_hold_capacity_once_warm() {
        for kind in [
            SamplerKind::Geometric { capacity: 8 },
            SamplerKind::UniformReservoir { capacity: 8 },
        ] {
            let mut s = Sampler::new(kind, rng(1)).unwrap();
            for t in 0..7 {
                s.update(dummy(t));
                assert!(s.draw().is_err());
            }
            for t in 7..100 {
                s.update(dummy(t));
                assert!(s.is_warm());
                assert_eq!(s.stored().len(), 8);
                assert!(s.stored().iter().all(|x| x.position <= t));
            }
        }
        assert!(Sampler::new(SamplerKind::Geometric { capacity: 0 }, rng(0)).is_err());
    }

    #[test]
    fn geometric_slots_replaced_uniformly() {
        let mut s = Sampler::new(SamplerKind::Geometric { capacity: 4 }, rng(2)).unwrap();
        for t in 0..4 {
            s.update(dummy(t));
        }
        let runs = 100_000;
        let mut hits = [0usize; 4];
        for t in 4..4 + runs {
            let before: Vec<u64> = s.stored().iter().map(|x| x.position).collect();
            s.update(dummy(t as u64));
            let j = s
                .stored()
                .iter()
                .zip(&before)
                .position(|(now, old)| now.position != *old)
                .unwrap();
            hits[j] += 1;
        }
        for h in hits {
            assert!((h as f64 / runs as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn full_store_draws_uniformly() {
        let mut s = Sampler::new(SamplerKind::UniformFull, rng(3)).unwrap();
        for t in 0..4 {
            s.update(dummy(t));
        }
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[s.draw().unwrap().position as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
    }

    /// Empirical law of the draw at step `s`, one fresh sampler per trial.
    fn empirical_law(kind: SamplerKind, s: u64, trials: u64, seed: u64) -> Vec<u64> {
        let mut counts = vec![0u64; s as usize];
        for trial in 0..trials {
            let mut g = rng(seed);
            g.set_stream(trial);
            let mut sampler = Sampler::new(kind, g).unwrap();
            for t in 0..s {
                sampler.update(dummy(t));
            }
            counts[sampler.draw().unwrap().position as usize] += 1;
        }
        counts
    }

    #[test]
    fn geometric_draws_match_marginals() {
        let (l, s, trials) = (4usize, 16u64, 100_000u64);
        let kind = SamplerKind::Geometric { capacity: l };
        let counts = empirical_law(kind, s, trials, 4);
        for (r, &c) in counts.iter().enumerate() {
            let p = marginal_probability(kind.law(), s, r as u64, l as u64).unwrap();
            let freq = c as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * se, "r = {r}: {freq} vs {p}");
        }
    }

    #[test]
    fn draw_histograms_pass_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let trials = 100_000u64;
        for (kind, s) in [
            (SamplerKind::Geometric { capacity: 3 }, 12u64),
            (SamplerKind::UniformReservoir { capacity: 3 }, 9),
            (SamplerKind::UniformFull, 6),
        ] {
            let counts = empirical_law(kind, s, trials, 5);
            let t0 = kind.warm_up();
            let stat: f64 = counts
                .iter()
                .enumerate()
                .map(|(r, &c)| {
                    let e = trials as f64 * marginal_probability(kind.law(), s, r as u64, t0).unwrap();
                    (c as f64 - e).powi(2) / e
                })
                .sum();
            let p_value = 1.0 - ChiSquared::new((s - 1) as f64).unwrap().cdf(stat);
            assert!(p_value > 0.01, "{kind:?}: chi2 = {stat}, p = {p_value}");
        }
    }

    #[test]
    fn analytic_examples() {
        let geo2 = SamplingLaw::Geometric { capacity: 2 };
        assert_eq!(marginal_probability(SamplingLaw::Uniform, 5, 3, 1).unwrap(), 0.2);
        assert_eq!(marginal_probability(geo2, 3, 2, 2).unwrap(), 0.5);
        assert_eq!(collision_probability(SamplingLaw::Uniform, 4, 1).unwrap(), 0.25);
        assert!((collision_probability(geo2, 3, 2).unwrap() - 0.375).abs() < 1e-15);
        assert!((direct_collision(geo2, 3, 2) - 0.375).abs() < 1e-15);
        let limit = collision_probability(geo2, 2 + 10_000, 2).unwrap();
        assert!((limit - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let geo = SamplingLaw::Geometric { capacity: 4 };
        assert!(marginal_probability(SamplingLaw::Uniform, 5, 5, 1).is_err());
        assert!(marginal_probability(geo, 3, 0, 4).is_err());
        assert!(marginal_probability(geo, 10, 0, 3).is_err());
        assert!(collision_probability(SamplingLaw::Uniform, 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn marginals_sum_to_one(l in 1usize..40, extra in 0u64..300, uniform in any::<bool>()) {
            let (law, t0) = if uniform { (SamplingLaw::Uniform, 1) } else { (SamplingLaw::Geometric { capacity: l }, l as u64) };
            let s = t0 + extra;
            let total: f64 = (0..s).map(|r| marginal_probability(law, s, r, t0).unwrap()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn closed_form_collision_matches_direct_sum(l in prop::sample::select(vec![2usize, 4, 10, 100]), s in 1u64..=200) {
            let law = SamplingLaw::Geometric { capacity: l };
            let t0 = l as u64;
            if s >= t0 {
                let closed = collision_probability(law, s, t0).unwrap();
                prop_assert!((closed - direct_collision(law, s, t0)).abs() < 1e-12);
            }
            let u = collision_probability(SamplingLaw::Uniform, s, 1).unwrap();
            prop_assert!((u - direct_collision(SamplingLaw::Uniform, s, 1)).abs() < 1e-12);
        }

        #[test]
        fn geometric_prefers_recent(l in 1usize..20, extra in 1u64..100) {
            let law = SamplingLaw::Geometric { capacity: l };
            let t0 = l as u64;
            let s = t0 + extra;
            for r in t0..s - 1 {
                prop_assert!(marginal_probability(law, s, r, t0).unwrap() <= marginal_probability(law, s, r + 1, t0).unwrap());
            }
        }

        #[test]
        fn resampling_probability_never_increases(l in 1usize..20, extra in 0u64..100, uniform in any::<bool>()) {
            let (law, t0) = if uniform { (SamplingLaw::Uniform, 1) } else { (SamplingLaw::Geometric { capacity: l }, l as u64) };
            let s_old = t0 + extra;
            for r in 0..s_old {
                let older = marginal_probability(law, s_old, r, t0).unwrap();
                let newer = marginal_probability(law, s_old + 1, r, t0).unwrap();
                prop_assert!(newer <= older + 1e-15);
            }
        }
    }
}
