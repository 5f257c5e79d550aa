//! Truncated rollouts for reward finetuning.
//!
//! A rollout samples a stopping step `T1` and a gradient start `T0`, runs the
//! sampler from noise to `x_{T1}`, and reconstructs a coarse clean sample
//! `x̂ = (x_{T1} − τ ε) / (1 − τ)` with `τ = τ_{T1}`. Steps in `[T0, T1)` are
//! the ones a training loop would differentiate through; nothing here trains.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::{Condition, StepInfo, VelocityField};
use super::sampler::{advance, Latent, Schedule};
use super::FlowError;

/// Largest `τ` accepted by [`coarse_estimate`].
pub const MAX_COARSE_TAU: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub steps: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub truncation: usize,
    /// Weight of the reward term in the finetuning loss.
    pub beta: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            t_min: 6,
            t_max: 16,
            truncation: 2,
            beta: 5e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationWindow {
    pub t0: usize,
    pub t1: usize,
}

/// `T1 ~ U{t_min..=t_max}`, then `T0 ~ U{T1 − k..=T1 − 1}`.
pub fn sample_truncation_window<R: Rng + ?Sized>(
    t_min: usize,
    t_max: usize,
    k: usize,
    rng: &mut R,
) -> Result<TruncationWindow, FlowError> {
    if k < 1 || k > t_min || t_min > t_max {
        return Err(FlowError::InvalidWindow(format!(
            "need 1 ≤ K ≤ T_min ≤ T_max, got K={k}, T_min={t_min}, T_max={t_max}"
        )));
    }
    let t1 = rng.random_range(t_min..=t_max);
    let t0 = rng.random_range(t1 - k..=t1 - 1);
    Ok(TruncationWindow { t0, t1 })
}

/// `(1 − τ) x + τ ε`.
pub fn interpolate(x: &Latent, eps: &Latent, tau: f64) -> Result<Latent, FlowError> {
    check_shapes(x, eps)?;
    let mut out = x.clone();
    ndarray::Zip::from(&mut out)
        .and(eps)
        .for_each(|o, &e| *o = (1.0 - tau) * *o + tau * e);
    Ok(out)
}

/// `(x_τ − τ ε) / (1 − τ)`.
pub fn coarse_estimate(x_at: &Latent, tau: f64, eps: &Latent) -> Result<Latent, FlowError> {
    if !(0.0..=MAX_COARSE_TAU).contains(&tau) {
        return Err(FlowError::TauOutOfRange(tau));
    }
    check_shapes(x_at, eps)?;
    let mut out = x_at.clone();
    ndarray::Zip::from(&mut out)
        .and(eps)
        .for_each(|o, &e| *o = (*o - tau * e) / (1.0 - tau));
    Ok(out)
}

fn check_shapes(a: &Latent, b: &Latent) -> Result<(), FlowError> {
    if a.shape() != b.shape() {
        return Err(FlowError::ShapeMismatch {
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    NoGrad,
    WithGrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub tau: f64,
    pub grad: GradMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub window: TruncationWindow,
    /// One record per executed step, `0..T1`.
    pub steps: Vec<StepRecord>,
    pub x_t1: Latent,
    pub tau_t1: f64,
    pub x_hat: Latent,
}

impl Rollout {
    /// Steps annotated for gradient computation.
    pub fn grad_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().filter(|s| s.grad == GradMode::WithGrad).map(|s| s.index)
    }
}

/// Runs `T1` Euler steps from `ε` on the `steps`-step grid.
pub fn truncated_rollout<F: VelocityField + ?Sized>(
    eps: &Latent,
    field: &F,
    cond: &Condition<'_>,
    schedule: &Schedule,
    window: TruncationWindow,
) -> Result<Rollout, FlowError> {
    if window.t0 >= window.t1 || window.t1 >= schedule.steps() {
        return Err(FlowError::InvalidWindow(format!(
            "window [{}, {}) does not fit a {}-step schedule",
            window.t0,
            window.t1,
            schedule.steps()
        )));
    }
    let mut x = eps.clone();
    let mut steps = Vec::with_capacity(window.t1);
    for k in 0..window.t1 {
        let tau = schedule.tau(k);
        let v = field.velocity(&x, StepInfo { index: k, tau }, cond)?;
        x = advance(&x, &v, schedule.dt(k))?;
        steps.push(StepRecord {
            index: k,
            tau,
            grad: if k >= window.t0 { GradMode::WithGrad } else { GradMode::NoGrad },
        });
    }
    let tau_t1 = schedule.tau(window.t1);
    let x_hat = coarse_estimate(&x, tau_t1, eps)?;
    Ok(Rollout {
        window,
        steps,
        x_t1: x,
        tau_t1,
        x_hat,
    })
}

/// Outcome of one reward-scoring iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardProbe {
    pub rollout: Rollout,
    pub reward: f64,
    /// `−β r`, the reward part of the finetuning objective.
    pub loss: f64,
}

/// Samples a window, rolls out, and scores `x̂` with `reward`.
pub fn reward_probe<F, R, S>(
    eps: &Latent,
    field: &F,
    cond: &Condition<'_>,
    config: &RolloutConfig,
    rng: &mut R,
    reward: S,
) -> Result<RewardProbe, FlowError>
where
    F: VelocityField + ?Sized,
    R: Rng + ?Sized,
    S: FnOnce(&Latent) -> f64,
{
    let window = sample_truncation_window(config.t_min, config.t_max, config.truncation, rng)?;
    let schedule = Schedule::uniform(config.steps)?;
    let rollout = truncated_rollout(eps, field, cond, &schedule, window)?;
    let r = reward(&rollout.x_hat);
    Ok(RewardProbe {
        loss: -config.beta * r,
        reward: r,
        rollout,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::flow::field::ZeroField;
    use crate::flow::sampler::gaussian_noise;

    #[test]
    fn window_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let w = sample_truncation_window(6, 16, 2, &mut rng).unwrap();
            assert!((6..=16).contains(&w.t1));
            assert!(w.t1 - w.t0 >= 1 && w.t1 - w.t0 <= 2);
            let w = sample_truncation_window(6, 16, 1, &mut rng).unwrap();
            assert_eq!(w.t0, w.t1 - 1);
        }
        assert!(sample_truncation_window(6, 16, 0, &mut rng).is_err());
        assert!(sample_truncation_window(2, 16, 3, &mut rng).is_err());
        assert!(sample_truncation_window(7, 6, 2, &mut rng).is_err());
    }

    #[test]
    fn coarse_estimate_inverts_interpolation() {
        let x = gaussian_noise((2, 3, 3), 1);
        let eps = gaussian_noise((2, 3, 3), 2);
        let xt = interpolate(&x, &eps, 0.35).unwrap();
        let back = coarse_estimate(&xt, 0.35, &eps).unwrap();
        assert!(back.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(coarse_estimate(&x, 0.0, &eps).unwrap(), x);
        assert!(matches!(coarse_estimate(&x, 1.0, &eps), Err(FlowError::TauOutOfRange(_))));
        assert!(coarse_estimate(&x, -0.1, &eps).is_err());
    }

    #[test]
    fn grad_annotations_cover_window() {
        let eps = gaussian_noise((1, 2, 2), 3);
        let schedule = Schedule::uniform(20).unwrap();
        let w = TruncationWindow { t0: 8, t1: 10 };
        let r = truncated_rollout(&eps, &ZeroField, &Condition::new("p", None), &schedule, w).unwrap();
        assert_eq!(r.steps.len(), 10);
        assert_eq!(r.grad_steps().collect::<Vec<_>>(), vec![8, 9]);
        assert_eq!(r.tau_t1, 0.5);
        let bad = TruncationWindow { t0: 5, t1: 20 };
        assert!(truncated_rollout(&eps, &ZeroField, &Condition::new("p", None), &schedule, bad).is_err());
    }

    #[test]
    fn probe_scales_reward() {
        let eps = gaussian_noise((1, 2, 2), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = reward_probe(&eps, &ZeroField, &Condition::new("p", None), &RolloutConfig::default(), &mut rng, |_| 2.0)
            .unwrap();
        assert_eq!(p.reward, 2.0);
        assert_eq!(p.loss, -0.01);
    }
}
