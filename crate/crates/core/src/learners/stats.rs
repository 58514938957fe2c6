/// Weighted running mean and variance (West's update of Welford's method).
///
/// With unit weights and no decay this is plain Welford and `variance`
/// returns the unbiased sample variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WeightedMoments {
    weight: f64,
    mean: f64,
    m2: f64,
}

impl WeightedMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64, w: f64) {
        self.weight += w;
        let delta = x - self.mean;
        self.mean += delta * w / self.weight;
        self.m2 += w * delta * (x - self.mean);
    }

    /// Scale all past weights by `factor`; the mean is unchanged.
    pub fn decay(&mut self, factor: f64) {
        self.weight *= factor;
        self.m2 *= factor;
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.weight > 1.0 {
            self.m2 / (self.weight - 1.0)
        } else {
            0.0
        }
    }
}
