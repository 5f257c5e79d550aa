//! Time grid, latent state and the Euler update.
//!
//! Time runs from `τ = 1` (pure noise) down to `τ = 0` (data), matching the
//! interpolation `x_τ = (1 − τ) x + τ ε`. A velocity `v ≈ ε − x` integrated
//! with `x ← x + v (τ_{k+1} − τ_k)` therefore moves noise toward data.

use ndarray::{Array3, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::FlowError;

/// Latent tensor, `(channels, height, width)`.
pub type Latent = Array3<f64>;

/// Strictly decreasing times `τ_0 = 1 > … > τ_T = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    taus: Vec<f64>,
}

impl Schedule {
    /// `τ_k = 1 − k / T`, computed as `(T − k) / T` so the endpoints are exact.
    pub fn uniform(steps: usize) -> Result<Self, FlowError> {
        if steps == 0 {
            return Err(FlowError::InvalidSchedule("need at least one step".into()));
        }
        let t = steps as f64;
        Ok(Self {
            taus: (0..=steps).map(|k| (steps - k) as f64 / t).collect(),
        })
    }

    pub fn from_taus(taus: Vec<f64>) -> Result<Self, FlowError> {
        if taus.len() < 2 {
            return Err(FlowError::InvalidSchedule("need at least two times".into()));
        }
        if taus[0] != 1.0 || *taus.last().unwrap() != 0.0 {
            return Err(FlowError::InvalidSchedule("schedule must run from 1 to 0".into()));
        }
        if taus.windows(2).any(|w| w[1] >= w[0]) {
            return Err(FlowError::InvalidSchedule("schedule must be strictly decreasing".into()));
        }
        Ok(Self { taus })
    }

    pub fn steps(&self) -> usize {
        self.taus.len() - 1
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.taus[k]
    }

    /// `τ_{k+1} − τ_k` (negative).
    pub fn dt(&self, k: usize) -> f64 {
        self.taus[k + 1] - self.taus[k]
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }
}

/// Where a sampler is along its schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub x: Latent,
    pub step: usize,
    pub schedule: Schedule,
    /// The starting noise `ε`.
    pub noise: Latent,
}

impl LatentState {
    pub fn start(noise: Latent, schedule: Schedule) -> Self {
        Self {
            x: noise.clone(),
            step: 0,
            schedule,
            noise,
        }
    }

    pub fn tau(&self) -> f64 {
        self.schedule.tau(self.step)
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.schedule.steps()
    }
}

/// `x + v · dt`, elementwise. Every update in this module goes through here.
pub(crate) fn advance(x: &Latent, v: &Latent, dt: f64) -> Result<Latent, FlowError> {
    if x.shape() != v.shape() {
        return Err(FlowError::ShapeMismatch {
            expected: x.shape().to_vec(),
            got: v.shape().to_vec(),
        });
    }
    let mut out = x.clone();
    Zip::from(&mut out).and(v).for_each(|o, &vi| *o += vi * dt);
    Ok(out)
}

/// One Euler step: `x ← x + v (τ_{k+1} − τ_k)`, `k ← k + 1`.
pub fn euler_step(state: LatentState, v: &Latent) -> Result<LatentState, FlowError> {
    if state.is_done() {
        return Err(FlowError::InvalidSchedule("schedule already exhausted".into()));
    }
    let x = advance(&state.x, v, state.schedule.dt(state.step))?;
    Ok(LatentState {
        x,
        step: state.step + 1,
        ..state
    })
}

/// Standard-normal latent from a seed (ChaCha8).
pub fn gaussian_noise(shape: (usize, usize, usize), seed: u64) -> Latent {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Latent::from_shape_simple_fn(shape, || StandardNormal.sample(&mut rng))
}
