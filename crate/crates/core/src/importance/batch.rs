use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ImportanceVector, Loss};
use crate::datastream::{FeatureValue, Instance};
use crate::error::{Error, Result};
use crate::learners::Model;

fn check_data(data: &[Instance], subset: &[usize]) -> Result<usize> {
    let n = data.len();
    if n < 2 {
        return Err(Error::domain(format!("need at least 2 observations, got {n}")));
    }
    let d = data[0].features.len();
    if data.iter().any(|x| x.features.len() != d) {
        return Err(Error::schema("observations differ in arity"));
    }
    if subset.is_empty() {
        return Err(Error::config("empty feature subset"));
    }
    if let Some(j) = subset.iter().find(|&&j| j >= d) {
        return Err(Error::schema(format!("feature index {j} out of range for {d} features")));
    }
    Ok(n)
}

fn base_losses(model: &dyn Model, data: &[Instance], loss: Loss) -> Result<Vec<f64>> {
    data.iter()
        .map(|x| Ok(loss.eval(model.predict(&x.features)?, x.target)))
        .collect()
}

/// Loss of `x` with the features in `subset` taken from `donor`.
#[inline]
fn switched_loss(
    model: &dyn Model,
    scratch: &mut Vec<FeatureValue>,
    x: &Instance,
    donor: &Instance,
    subset: &[usize],
    loss: Loss,
) -> Result<f64> {
    scratch.clear();
    scratch.extend_from_slice(&x.features);
    for &j in subset {
        scratch[j] = donor.features[j];
    }
    Ok(loss.eval(model.predict(scratch)?, x.target))
}

fn estimate_with_base(
    model: &dyn Model,
    data: &[Instance],
    base: &[f64],
    subset: &[usize],
    perm: &[usize],
    loss: Loss,
) -> Result<f64> {
    let mut scratch = Vec::with_capacity(data[0].features.len());
    let mut sum = 0.0;
    for (n, &m) in perm.iter().enumerate() {
        // fixed points contribute exactly zero
        if m != n {
            sum += switched_loss(model, &mut scratch, &data[n], &data[m], subset, loss)? - base[n];
        }
    }
    Ok(sum / data.len() as f64)
}

/// Unscaled single-permutation estimate `(1/N) Σ_n λ(x_n, x_perm(n), y_n)`.
pub fn permutation_estimate(
    model: &dyn Model,
    data: &[Instance],
    subset: &[usize],
    perm: &[usize],
    loss: Loss,
) -> Result<f64> {
    let n = check_data(data, subset)?;
    if perm.len() != n {
        return Err(Error::domain(format!("permutation of length {} for {n} observations", perm.len())));
    }
    let mut seen = vec![false; n];
    for &m in perm {
        if m >= n || std::mem::replace(&mut seen[m], true) {
            return Err(Error::domain("not a permutation"));
        }
    }
    let base = base_losses(model, data, loss)?;
    estimate_with_base(model, data, &base, subset, perm, loss)
}

/// Batch PFI of a feature subset: the mean over `permutations` uniform
/// permutations of [`permutation_estimate`], scaled by `N/(N−1)`.
pub fn batch_pfi_subset(
    model: &dyn Model,
    data: &[Instance],
    subset: &[usize],
    permutations: usize,
    rng: &mut ChaCha8Rng,
    loss: Loss,
) -> Result<f64> {
    let n = check_data(data, subset)?;
    if permutations == 0 {
        return Err(Error::config("need at least one permutation"));
    }
    let base = base_losses(model, data, loss)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for _ in 0..permutations {
        perm.shuffle(rng);
        total += estimate_with_base(model, data, &base, subset, &perm, loss)?;
    }
    Ok(total / permutations as f64 * n as f64 / (n - 1) as f64)
}

pub fn batch_pfi(
    model: &dyn Model,
    data: &[Instance],
    feature: usize,
    permutations: usize,
    rng: &mut ChaCha8Rng,
    loss: Loss,
) -> Result<f64> {
    batch_pfi_subset(model, data, &[feature], permutations, rng, loss)
}

/// Batch PFI of every feature. Each permutation is shared by all features.
pub fn batch_pfi_vector(
    model: &dyn Model,
    data: &[Instance],
    permutations: usize,
    rng: &mut ChaCha8Rng,
    loss: Loss,
) -> Result<ImportanceVector> {
    let n = check_data(data, &[0])?;
    if permutations == 0 {
        return Err(Error::config("need at least one permutation"));
    }
    let d = data[0].features.len();
    let base = base_losses(model, data, loss)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut totals = vec![0.0; d];
    for _ in 0..permutations {
        perm.shuffle(rng);
        for (j, total) in totals.iter_mut().enumerate() {
            *total += estimate_with_base(model, data, &base, &[j], &perm, loss)?;
        }
    }
    let scale = n as f64 / (n - 1) as f64 / permutations as f64;
    ImportanceVector::new(totals.into_iter().map(|t| t * scale).collect())
}

/// Distinct values of the `subset` columns with their multiplicities, in
/// first-seen order.
fn donor_groups(data: &[Instance], subset: &[usize]) -> Vec<(usize, usize)> {
    let key = |x: &Instance| -> Vec<u64> {
        subset
            .iter()
            .map(|&j| match x.features[j] {
                FeatureValue::Numeric(v) => v.to_bits(),
                FeatureValue::Categorical(c) => u64::from(c) | 1 << 63,
            })
            .collect()
    };
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for (i, x) in data.iter().enumerate() {
        let slot = *index.entry(key(x)).or_insert_with(|| {
            groups.push((i, 0));
            groups.len() - 1
        });
        groups[slot].1 += 1;
    }
    groups
}

/// Model reliance `ê_switch − ê_orig`, with `ê_switch` averaged over all
/// ordered pairs `n ≠ m`.
///
/// Donors sharing the values of `subset` are evaluated once, so the cost is
/// `N · (distinct donor values)` predictions.
pub fn expected_pfi_subset(model: &dyn Model, data: &[Instance], subset: &[usize], loss: Loss) -> Result<f64> {
    let n = check_data(data, subset)?;
    let base = base_losses(model, data, loss)?;
    let groups = donor_groups(data, subset);
    let mut scratch = data[0].features.clone();
    let mut total = 0.0;
    for (i, x) in data.iter().enumerate() {
        scratch.clone_from(&x.features);
        let mut row = 0.0;
        for &(donor, count) in &groups {
            for &j in subset {
                scratch[j] = data[donor].features[j];
            }
            // x's own group includes m = n, whose switched loss is base[i]
            row += count as f64 * (loss.eval(model.predict(&scratch)?, x.target) - base[i]);
        }
        total += row;
    }
    // summed pairwise so a constant model gives exactly 0
    Ok(total / (n * (n - 1)) as f64)
}

pub fn expected_pfi(model: &dyn Model, data: &[Instance], feature: usize, loss: Loss) -> Result<f64> {
    expected_pfi_subset(model, data, &[feature], loss)
}

pub fn expected_pfi_vector(model: &dyn Model, data: &[Instance], loss: Loss) -> Result<ImportanceVector> {
    check_data(data, &[0])?;
    let d = data[0].features.len();
    let values = (0..d)
        .map(|j| expected_pfi(model, data, j, loss))
        .collect::<Result<Vec<_>>>()?;
    ImportanceVector::new(values)
}

/// One interval-PFI report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalPoint {
    /// Timestamp of the last observation in the window.
    pub t: u64,
    pub values: ImportanceVector,
}

/// Batch PFI over disjoint windows of `interval` observations, reported
/// at each window's last timestamp. A trailing partial window is dropped.
pub fn interval_pfi(
    model: &dyn Model,
    buffer: &[Instance],
    interval: usize,
    permutations: usize,
    rng: &mut ChaCha8Rng,
    loss: Loss,
) -> Result<Vec<IntervalPoint>> {
    if interval < 2 {
        return Err(Error::config(format!("interval must be at least 2, got {interval}")));
    }
    if interval > buffer.len() {
        log::warn!("interval {interval} exceeds the {} buffered observations, skipping", buffer.len());
        return Ok(Vec::new());
    }
    buffer
        .chunks_exact(interval)
        .map(|window| {
            Ok(IntervalPoint {
                t: window[interval - 1].timestamp,
                values: batch_pfi_vector(model, window, permutations, rng, loss)?,
            })
        })
        .collect()
}

/// Online interval PFI: buffers observations and, every `interval` steps,
/// computes batch PFI of the window with the model as it is at that moment.
#[derive(Debug, Clone)]
pub struct IntervalTracker {
    interval: usize,
    permutations: usize,
    loss: Loss,
    rng: ChaCha8Rng,
    window: Vec<Instance>,
}

impl IntervalTracker {
    pub fn new(interval: usize, permutations: usize, rng: ChaCha8Rng) -> Result<Self> {
        if interval < 2 {
            return Err(Error::config(format!("interval must be at least 2, got {interval}")));
        }
        if permutations == 0 {
            return Err(Error::config("need at least one permutation"));
        }
        Ok(IntervalTracker {
            interval,
            permutations,
            loss: Loss::default(),
            rng,
            window: Vec::with_capacity(interval),
        })
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    /// Buffer `instance`; on a boundary, evaluate `model` on the window.
    pub fn observe(&mut self, model: &dyn Model, instance: Instance) -> Result<Option<IntervalPoint>> {
        self.window.push(instance);
        if self.window.len() < self.interval {
            return Ok(None);
        }
        let values = batch_pfi_vector(model, &self.window, self.permutations, &mut self.rng, self.loss)?;
        let t = self.window[self.interval - 1].timestamp;
        self.window.clear();
        Ok(Some(IntervalPoint { t, values }))
    }
}

/// Uniformly random permutation of `0..n` (Fisher–Yates).
pub fn random_permutation(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastream::AgrawalStream;
    use crate::learners::FrozenOracle;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn agrawal(n: usize, seed: u64) -> Vec<Instance> {
        AgrawalStream::new(1, seed).unwrap().take(n).collect()
    }

    fn all_permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in all_permutations(n - 1) {
            for k in 0..n {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn constant_model_is_zero() {
        let h = FrozenOracle::constant(0.7);
        let data = agrawal(50, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(batch_pfi(&h, &data, 0, 3, &mut rng, Loss::Absolute).unwrap(), 0.0);
        assert_eq!(expected_pfi(&h, &data, 0, Loss::Absolute).unwrap(), 0.0);
    }

    #[test]
    fn identity_permutation_contributes_nothing() {
        let h = FrozenOracle::agrawal(1).unwrap();
        let data = agrawal(30, 2);
        let id: Vec<usize> = (0..30).collect();
        for j in 0..9 {
            assert_eq!(permutation_estimate(&h, &data, &[j], &id, Loss::Absolute).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_points_swap_equals_expected() {
        let h = FrozenOracle::agrawal(1).unwrap();
        let data = agrawal(2, 9);
        let swap = permutation_estimate(&h, &data, &[0], &[1, 0], Loss::Absolute).unwrap();
        let expected = expected_pfi(&h, &data, 0, Loss::Absolute).unwrap();
        // identity contributes 0; mean over both permutations times 2 is the swap value
        assert!((swap - expected).abs() < 1e-15);
    }

    #[test]
    fn exhaustive_permutations_match_expected() {
        let h = FrozenOracle::agrawal(1).unwrap();
        for n in 2..=6 {
            let data = agrawal(n, n as u64 + 40);
            for j in [0, 2] {
                let perms = all_permutations(n);
                let mean: f64 = perms
                    .iter()
                    .map(|p| permutation_estimate(&h, &data, &[j], p, Loss::Absolute).unwrap())
                    .sum::<f64>()
                    / perms.len() as f64;
                let scaled = mean * n as f64 / (n - 1) as f64;
                let expected = expected_pfi(&h, &data, j, Loss::Absolute).unwrap();
                assert!((scaled - expected).abs() < 1e-10, "n={n} j={j}: {scaled} vs {expected}");
            }
        }
    }

    #[test]
    fn too_little_data() {
        let h = FrozenOracle::constant(0.0);
        let data = agrawal(1, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(batch_pfi(&h, &data, 0, 1, &mut rng, Loss::Absolute).is_err());
        assert!(expected_pfi(&h, &data, 0, Loss::Absolute).is_err());
        let data = agrawal(5, 0);
        assert!(batch_pfi(&h, &data, 0, 0, &mut rng, Loss::Absolute).is_err());
        assert!(permutation_estimate(&h, &data, &[0], &[0, 0, 1, 2, 3], Loss::Absolute).is_err());
    }

    #[test]
    fn interval_covering_everything_is_batch() {
        let h = FrozenOracle::agrawal(1).unwrap();
        let data = agrawal(200, 5);
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let series = interval_pfi(&h, &data, 200, 4, &mut a, Loss::Absolute).unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].t, 199);
        let batch = batch_pfi_vector(&h, &data, 4, &mut b, Loss::Absolute).unwrap();
        assert_eq!(series[0].values, batch);
    }

    #[test]
    fn interval_edge_cases() {
        let h = FrozenOracle::constant(1.0);
        let data = agrawal(100, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(interval_pfi(&h, &data, 1, 4, &mut rng, Loss::Absolute).is_err());
        assert!(interval_pfi(&h, &data, 101, 4, &mut rng, Loss::Absolute).unwrap().is_empty());
        let series = interval_pfi(&h, &data, 30, 2, &mut rng, Loss::Absolute).unwrap();
        assert_eq!(series.iter().map(|p| p.t).collect::<Vec<_>>(), vec![29, 59, 89]);
        assert!(series.iter().all(|p| p.values.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn static_interval_series_is_stable() {
        let h = FrozenOracle::agrawal(1).unwrap();
        let data = agrawal(10_000, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let series = interval_pfi(&h, &data, 1000, 10, &mut rng, Loss::Absolute).unwrap();
        assert_eq!(series.len(), 10);
        for j in [0, 2] {
            let v: Vec<f64> = series.iter().map(|p| p.values[j]).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
            assert!(sd < 0.05, "feature {j}: sd {sd}");
        }
    }

    #[test]
    fn tracker_matches_offline_series() {
        let h = FrozenOracle::agrawal(1).unwrap();
        let data = agrawal(250, 6);
        let mut offline_rng = ChaCha8Rng::seed_from_u64(9);
        let offline = interval_pfi(&h, &data, 100, 3, &mut offline_rng, Loss::Absolute).unwrap();
        let mut tracker = IntervalTracker::new(100, 3, ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut online = Vec::new();
        for x in data {
            online.extend(tracker.observe(&h, x).unwrap());
        }
        assert_eq!(online, offline);
    }

    #[test]
    fn many_permutations_approach_expected() {
        let h = FrozenOracle::agrawal(1).unwrap();
        let data = agrawal(300, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = batch_pfi(&h, &data, 0, 200, &mut rng, Loss::Absolute).unwrap();
        let expected = expected_pfi(&h, &data, 0, Loss::Absolute).unwrap();
        assert!((batch - expected).abs() < 0.02, "{batch} vs {expected}");
    }

    proptest! {
        #[test]
        fn expected_pfi_ignores_order(seed in 0u64..1000, n in 2usize..40) {
            let h = FrozenOracle::agrawal(1).unwrap();
            let data = agrawal(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shuffled: Vec<Instance> = random_permutation(n, &mut rng).into_iter().map(|i| data[i].clone()).collect();
            for j in [0, 2, 5] {
                let a = expected_pfi(&h, &data, j, Loss::Absolute).unwrap();
                let b = expected_pfi(&h, &shuffled, j, Loss::Absolute).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
