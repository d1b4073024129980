use statrs::distribution::{ContinuousCDF, Normal};

/// Probability mass over termination horizons `0..=K` plus the overflow
/// beyond `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminationDistribution {
    masses: Vec<f64>,
    overflow: f64,
}

impl TerminationDistribution {
    pub fn point(k: usize, horizons: usize) -> Self {
        let mut masses = vec![0.0; horizons + 1];
        if k <= horizons {
            masses[k] = 1.0;
            Self { masses, overflow: 0.0 }
        } else {
            Self { masses, overflow: 1.0 }
        }
    }

    /// Builds a distribution from raw non-negative weights, normalized.
    pub fn from_weights(mut masses: Vec<f64>, overflow: f64) -> Self {
        let total = masses.iter().sum::<f64>() + overflow;
        masses.iter_mut().for_each(|m| *m /= total);
        Self {
            masses,
            overflow: overflow / total,
        }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn overflow(&self) -> f64 {
        self.overflow
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.overflow
    }
}

/// Horizon bin of a time-to-go; `None` past the last horizon.
pub fn horizon_bin(time_to_go: f64, horizon_dt: f64, horizons: usize) -> Option<usize> {
    let k = (time_to_go / horizon_dt).round();
    if k <= 0.0 {
        Some(0)
    } else if k > horizons as f64 {
        None
    } else {
        Some(k as usize)
    }
}

/// Standard-normal quantiles at probabilities `(i + 0.5) / n`, reused
/// across many distribution builds.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    z: Vec<f64>,
}

impl QuantileTable {
    pub fn new(samples: usize) -> Self {
        let n = samples.max(1);
        let normal = Normal::standard();
        Self {
            z: (0..n).map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64)).collect(),
        }
    }

    pub fn samples(&self) -> usize {
        self.z.len()
    }

    /// Bins the quantiles of `N(eta_minus_t, sigma)` into horizons.
    pub fn distribution(&self, eta_minus_t: f64, sigma: f64, horizons: usize, horizon_dt: f64) -> TerminationDistribution {
        let mut counts = vec![0usize; horizons + 1];
        let mut over = 0usize;
        for &z in &self.z {
            match horizon_bin(eta_minus_t + sigma * z, horizon_dt, horizons) {
                Some(k) => counts[k] += 1,
                None => over += 1,
            }
        }
        let n = self.z.len() as f64;
        TerminationDistribution {
            masses: counts.into_iter().map(|c| c as f64 / n).collect(),
            overflow: over as f64 / n,
        }
    }
}

/// Bins `samples` quantiles of `N(eta_minus_t, sigma)` into horizons.
///
/// The quantiles sit at probabilities `(i + 0.5) / samples`, which keeps the
/// result deterministic.
pub fn termination_distribution(
    eta_minus_t: f64,
    sigma: f64,
    horizons: usize,
    horizon_dt: f64,
    samples: usize,
) -> TerminationDistribution {
    QuantileTable::new(samples).distribution(eta_minus_t, sigma.max(0.0), horizons, horizon_dt)
}

/// Running mean and standard deviation of the ETAs observed for one
/// waypoint.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EtaHistory {
    count: u64,
    mean: f64,
    m2: f64,
}

impl EtaHistory {
    /// Spread assumed before two observations exist.
    pub const SIGMA_FLOOR: f64 = 0.5;

    pub fn observe(&mut self, eta: f64) {
        self.count += 1;
        let delta = eta - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (eta - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sigma(&self) -> f64 {
        if self.count < 2 {
            Self::SIGMA_FLOOR
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn point_mass_without_spread() {
        let d = termination_distribution(15.0, 0.0, 60, 5.0, 100);
        assert_eq!(d.masses()[3], 1.0);
        assert_eq!(d.total(), 1.0);
        let far = termination_distribution(400.0, 0.0, 60, 5.0, 100);
        assert_eq!(far.overflow(), 1.0);
        let past = termination_distribution(-7.0, 0.0, 60, 5.0, 100);
        assert_eq!(past.masses()[0], 1.0);
    }

    #[test]
    fn spread_is_centred() {
        let d = termination_distribution(100.0, 6.0, 60, 5.0, 100);
        let mean: f64 = d.masses().iter().enumerate().map(|(k, m)| k as f64 * m).sum();
        assert!((mean - 20.0).abs() < 0.05, "{mean}");
        assert!(d.masses()[20] > d.masses()[18]);
    }

    #[test]
    fn eta_history_statistics() {
        let mut h = EtaHistory::default();
        assert_eq!(h.sigma(), EtaHistory::SIGMA_FLOOR);
        for x in [10.0, 12.0, 14.0] {
            h.observe(x);
        }
        assert!((h.sigma() - 2.0).abs() < 1e-12);
        let mut flat = EtaHistory::default();
        flat.observe(3.0);
        flat.observe(3.0);
        assert_eq!(flat.sigma(), 0.0);
    }

    proptest! {
        #[test]
        fn masses_sum_to_one(eta in -100.0f64..500.0, sigma in 0.0f64..50.0, k in 1usize..80, n in 1usize..300) {
            let d = termination_distribution(eta, sigma, k, 5.0, n);
            prop_assert!((d.total() - 1.0).abs() < 1e-9);
            prop_assert!(d.masses().iter().all(|&m| m >= 0.0) && d.overflow() >= 0.0);
        }
    }
}
