use serde::{Deserialize, Serialize};

pub const DEFAULT_BINS: usize = 360;
pub const DEFAULT_KAPPA: f64 = 10.0;
/// Added to every estimated bin before KL when the estimate lacks support.
pub const KL_SMOOTHING: f64 = 1e-8;

/// Discrete distribution over `B` azimuth bins; bin `i` is centered at `i · 360 / B` degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AzimuthDistribution {
    probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistributionError {
    #[error("distribution needs at least one bin")]
    Empty,
    #[error("bin {0} is negative or not finite")]
    BadEntry(usize),
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
}

impl AzimuthDistribution {
    /// Checks non-negativity and unit mass within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self, DistributionError> {
        if probs.is_empty() {
            return Err(DistributionError::Empty);
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(DistributionError::BadEntry(i));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(DistributionError::NotNormalized(total));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, DistributionError> {
        if weights.is_empty() {
            return Err(DistributionError::Empty);
        }
        if let Some(i) = weights.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(DistributionError::BadEntry(i));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(DistributionError::NotNormalized(total));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(bins: usize) -> Self {
        Self {
            probs: vec![1.0 / bins as f64; bins],
        }
    }

    pub fn one_hot(bins: usize, index: usize) -> Self {
        let mut probs = vec![0.0; bins];
        probs[index % bins] = 1.0;
        Self { probs }
    }

    pub fn bins(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Circular indexing.
    pub fn get(&self, index: isize) -> f64 {
        let b = self.probs.len() as isize;
        self.probs[index.rem_euclid(b) as usize]
    }

    pub fn bin_width(&self) -> f64 {
        360.0 / self.bins() as f64
    }

    /// Nearest bin to an azimuth in degrees.
    pub fn bin_of(bins: usize, azimuth_deg: f64) -> usize {
        let w = 360.0 / bins as f64;
        ((wrap_degrees(azimuth_deg) / w).round() as usize) % bins
    }

    /// Center of the most probable bin, in degrees.
    pub fn mode_degrees(&self) -> f64 {
        let (i, _) = self
            .probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best });
        i as f64 * self.bin_width()
    }
}

/// Maps any angle in degrees to `[0, 360)`.
pub fn wrap_degrees(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Absolute circular difference in degrees, in `[0, 180]`.
pub fn circular_difference(a: f64, b: f64) -> f64 {
    let d = (wrap_degrees(a) - wrap_degrees(b)).abs();
    d.min(360.0 - d)
}

/// Signed offset from `center` to `a` in degrees, in `(-180, 180]`.
fn signed_offset(a: f64, center: f64) -> f64 {
    let d = wrap_degrees(a - center);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Discretized von Mises distribution centered on `azimuth_deg`.
///
/// `kappa = 0` is uniform, `kappa = ∞` is one-hot at the nearest bin.
pub fn target_distribution(azimuth_deg: f64, kappa: f64, bins: usize) -> AzimuthDistribution {
    assert!(bins > 0, "need at least one bin");
    assert!(kappa >= 0.0, "concentration must be non-negative");
    if kappa.is_infinite() {
        return AzimuthDistribution::one_hot(bins, AzimuthDistribution::bin_of(bins, azimuth_deg));
    }
    if kappa == 0.0 {
        return AzimuthDistribution::uniform(bins);
    }
    let w = 360.0 / bins as f64;
    let weights: Vec<f64> = (0..bins)
        .map(|i| {
            let d = signed_offset(i as f64 * w, azimuth_deg).to_radians();
            (kappa * (d.cos() - 1.0)).exp()
        })
        .collect();
    AzimuthDistribution::from_weights(weights).expect("von Mises weights are positive")
}

/// `KL(target ‖ estimated) = Σ t log(t / e)`, with `0 log 0 = 0`.
///
/// If the estimate is zero on a bin where the target has mass, the estimate
/// is ε-smoothed (`(e + ε) / (1 + Bε)`) first so the result stays finite.
pub fn kl_divergence(target: &AzimuthDistribution, estimated: &AzimuthDistribution) -> f64 {
    assert_eq!(target.bins(), estimated.bins(), "bin counts differ");
    let needs_smoothing = target
        .probs
        .iter()
        .zip(&estimated.probs)
        .any(|(t, e)| *t > 0.0 && *e <= 0.0);
    let denom = 1.0 + target.bins() as f64 * KL_SMOOTHING;
    let kl: f64 = target
        .probs
        .iter()
        .zip(&estimated.probs)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, e)| {
            let e = if needs_smoothing { (e + KL_SMOOTHING) / denom } else { *e };
            t * (t / e).ln()
        })
        .sum();
    kl.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn infinite_kappa_is_one_hot() {
        let d = target_distribution(90.0, f64::INFINITY, 360);
        assert_eq!(d.probs()[90], 1.0);
        assert_eq!(d.probs().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn zero_kappa_is_uniform() {
        let d = target_distribution(123.0, 0.0, 360);
        assert!(d.probs().iter().all(|p| *p == 1.0 / 360.0));
    }

    #[test]
    fn von_mises_is_symmetric_about_center() {
        let d = target_distribution(90.0, 4.0, 360);
        for k in 1..180 {
            assert!((d.get(90 + k) - d.get(90 - k)).abs() < 1e-12);
        }
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(d.mode_degrees(), 90.0);
    }

    #[test]
    fn wraps_around_zero() {
        let d = target_distribution(0.0, 10.0, 360);
        assert!((d.get(-5) - d.get(5)).abs() < 1e-12);
        assert_eq!(AzimuthDistribution::bin_of(360, 359.7), 0);
    }

    #[test]
    fn kl_examples() {
        let p = target_distribution(30.0, 10.0, 360);
        assert_eq!(kl_divergence(&p, &p), 0.0);
        let hot = AzimuthDistribution::one_hot(360, 90);
        let uni = AzimuthDistribution::uniform(360);
        assert!((kl_divergence(&hot, &uni) - 360f64.ln()).abs() < 1e-12);
        assert!((360f64.ln() - 5.886).abs() < 1e-3);
    }

    #[test]
    fn kl_is_finite_without_support() {
        let hot = AzimuthDistribution::one_hot(360, 90);
        let other = AzimuthDistribution::one_hot(360, 270);
        let kl = kl_divergence(&hot, &other);
        assert!(kl.is_finite() && kl > 10.0);
    }

    #[test]
    fn circular_difference_wraps() {
        assert_eq!(circular_difference(350.0, 10.0), 20.0);
        assert_eq!(circular_difference(-10.0, 10.0), 20.0);
        assert_eq!(circular_difference(0.0, 180.0), 180.0);
    }

    #[test]
    fn validates_entries() {
        assert!(AzimuthDistribution::new(vec![]).is_err());
        assert!(AzimuthDistribution::new(vec![0.5, -0.1, 0.6]).is_err());
        assert!(AzimuthDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(AzimuthDistribution::new(vec![0.5, 0.5]).is_ok());
    }

    fn dist(bins: usize) -> impl Strategy<Value = AzimuthDistribution> {
        prop::collection::vec(0.0..1.0f64, bins)
            .prop_filter("positive mass", |w| w.iter().sum::<f64>() > 1e-3)
            .prop_map(|w| AzimuthDistribution::from_weights(w).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn gibbs_inequality(p in dist(36), q in dist(36)) {
            let kl = kl_divergence(&p, &q);
            prop_assert!(kl >= 0.0);
            if p != q {
                prop_assert!(kl > 0.0);
            }
            prop_assert_eq!(kl_divergence(&p, &p), 0.0);
        }
    }
}
