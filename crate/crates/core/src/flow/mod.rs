//! Flow-matching sampling over an abstract velocity field.

pub mod dos;
pub mod field;
pub mod rollout;
pub mod sampler;

pub use dos::{
    dos_sample, dos_trajectory, plain_sample, DosConfig, LatentGeometry, ObjectCondition, DEFAULT_INJECTION_STEPS,
    DEFAULT_LATENT_CHANNELS, DEFAULT_LATENT_FACTOR, DEFAULT_STEPS,
};
pub use field::{Condition, FieldSpec, LinearToTarget, SeededRandom, StepInfo, ToyField, VelocityField, ZeroField};
pub use rollout::{
    coarse_estimate, interpolate, reward_probe, sample_truncation_window, truncated_rollout, GradMode, RewardProbe,
    Rollout, RolloutConfig, StepRecord, TruncationWindow,
};
pub use sampler::{euler_step, gaussian_noise, Latent, LatentState, Schedule};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("mask for object {object} is {got:?}, latent is {expected:?}")]
    MaskShape {
        object: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("no target for condition `{0}`")]
    UnknownCondition(String),
    #[error("τ = {0} is outside [0, 1 − 1e-6]")]
    TauOutOfRange(f64),
    #[error("invalid truncation window: {0}")]
    InvalidWindow(String),
    #[error("field error: {0}")]
    Field(String),
}
